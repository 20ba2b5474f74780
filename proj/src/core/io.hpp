#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "core/image.hpp"
#include "core/tensor.hpp"

namespace lb {

// PFM: "PF\n<w> <h>\n<scale>\n" then rows bottom-to-top as 32-bit floats,
// negative scale marking little-endian payload. Values pass through float
// precision; read(write(x)) is bit-identical at that precision.
void pfm_write(const std::string& path, const Image& img, bool little_endian = true);
Image pfm_read(const std::string& path);

// 16-bit binary PPM (P6, maxval 65535, big-endian samples, rows top-down).
// Values must lie in [0,1]; quantization is round-half-to-even.
void ppm16_write(const std::string& path, const Image& display);
Image ppm16_read(const std::string& path);

// Flat "key = value" config text: '#' comments, blank lines, duplicate keys
// rejected. Returns pairs in file order.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text);
std::vector<std::pair<std::string, std::string>> parse_config_file(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// Checkpoint: phase/step markers, the config echo that produced the run, and
// named f64 tensors (parameters and optimizer moments) in insertion order.
struct Checkpoint {
  uint32_t phase = 0;
  uint64_t step = 0;
  std::string config_echo;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void checkpoint_write(const std::string& path, const Checkpoint& ck);
Checkpoint checkpoint_read(const std::string& path);

}  // namespace lb
