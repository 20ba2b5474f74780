#include "core/io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lb {

namespace {

bool host_is_little_endian() {
  const uint16_t probe = 1;
  uint8_t b;
  std::memcpy(&b, &probe, 1);
  return b == 1;
}

void byteswap32(char* p) {
  std::swap(p[0], p[3]);
  std::swap(p[1], p[2]);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  return f;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  return f;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <typename T>
void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f, const char* what) {
  T v;
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw std::runtime_error(std::string("checkpoint truncated at ") + what);
  return v;
}

}  // namespace

void pfm_write(const std::string& path, const Image& img, bool little_endian) {
  if (img.width <= 0 || img.height <= 0) throw std::runtime_error("pfm_write: empty image");
  if (img.rgb.size() != (size_t)img.width * img.height * 3)
    throw std::runtime_error("pfm_write: payload size mismatch");
  for (double v : img.rgb)
    if (std::isnan(v)) throw std::runtime_error("pfm_write: NaN in payload");
  std::ofstream f = open_out(path);
  f << "PF\n" << img.width << " " << img.height << "\n"
    << (little_endian ? "-1.0" : "1.0") << "\n";
  const bool swap = little_endian != host_is_little_endian();
  std::vector<char> row((size_t)img.width * 3 * 4);
  // bottom row first
  for (int y = img.height - 1; y >= 0; --y) {
    char* out = row.data();
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = (float)img.at(y, x, c);
        std::memcpy(out, &v, 4);
        if (swap) byteswap32(out);
        out += 4;
      }
    f.write(row.data(), (std::streamsize)row.size());
  }
  if (!f) throw std::runtime_error("pfm_write: write failed: " + path);
}

Image pfm_read(const std::string& path) {
  std::ifstream f = open_in(path);
  std::string magic;
  f >> magic;
  if (magic != "PF") throw std::runtime_error("pfm_read: not a 3-channel PFM: " + path);
  int w = 0, h = 0;
  double scale = 0.0;
  f >> w >> h >> scale;
  if (!f || w <= 0 || h <= 0 || scale == 0.0)
    throw std::runtime_error("pfm_read: malformed header: " + path);
  f.get();  // single whitespace after the scale token
  const bool little = scale < 0.0;
  const bool swap = little != host_is_little_endian();
  Image img = Image::create(w, h);
  std::vector<char> row((size_t)w * 3 * 4);
  for (int y = h - 1; y >= 0; --y) {
    f.read(row.data(), (std::streamsize)row.size());
    if (!f) throw std::runtime_error("pfm_read: truncated payload: " + path);
    const char* in = row.data();
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        char buf[4];
        std::memcpy(buf, in, 4);
        if (swap) byteswap32(buf);
        float v;
        std::memcpy(&v, buf, 4);
        img.at(y, x, c) = (double)v;
        in += 4;
      }
  }
  return img;
}

void ppm16_write(const std::string& path, const Image& display) {
  if (display.width <= 0 || display.height <= 0)
    throw std::runtime_error("ppm16_write: empty image");
  for (double v : display.rgb)
    if (!(v >= 0.0 && v <= 1.0)) throw std::runtime_error("ppm16_write: value outside [0,1]");
  std::ofstream f = open_out(path);
  f << "P6\n" << display.width << " " << display.height << "\n65535\n";
  std::vector<unsigned char> row((size_t)display.width * 6);
  for (int y = 0; y < display.height; ++y) {
    unsigned char* out = row.data();
    for (int x = 0; x < display.width; ++x)
      for (int c = 0; c < 3; ++c) {
        // round half to even via the default FE_TONEAREST mode
        const auto q = (uint16_t)std::nearbyint(display.at(y, x, c) * 65535.0);
        *out++ = (unsigned char)(q >> 8);
        *out++ = (unsigned char)(q & 0xff);
      }
    f.write(reinterpret_cast<const char*>(row.data()), (std::streamsize)row.size());
  }
  if (!f) throw std::runtime_error("ppm16_write: write failed: " + path);
}

Image ppm16_read(const std::string& path) {
  std::ifstream f = open_in(path);
  std::string magic;
  f >> magic;
  if (magic != "P6") throw std::runtime_error("ppm16_read: not a binary PPM: " + path);
  int w = 0, h = 0, maxval = 0;
  f >> w >> h >> maxval;
  if (!f || w <= 0 || h <= 0 || maxval != 65535)
    throw std::runtime_error("ppm16_read: unsupported header (need maxval 65535): " + path);
  f.get();
  Image img = Image::create(w, h);
  std::vector<unsigned char> row((size_t)w * 6);
  for (int y = 0; y < h; ++y) {
    f.read(reinterpret_cast<char*>(row.data()), (std::streamsize)row.size());
    if (!f) throw std::runtime_error("ppm16_read: truncated payload: " + path);
    const unsigned char* in = row.data();
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const uint16_t q = (uint16_t)((in[0] << 8) | in[1]);
        img.at(y, x, c) = (double)q / 65535.0;
        in += 2;
      }
  }
  return img;
}

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) + ": missing '='");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key");
    for (const auto& kv : out)
      if (kv.first == key)
        throw std::runtime_error("config line " + std::to_string(lineno) + ": duplicate key '" +
                                 key + "'");
    out.emplace_back(key, value);
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_config_file(const std::string& path) {
  return parse_config_text(read_text_file(path));
}

std::string read_text_file(const std::string& path) {
  std::ifstream f = open_in(path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f = open_out(path);
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path);
}

void checkpoint_write(const std::string& path, const Checkpoint& ck) {
  std::ofstream f = open_out(path);
  f.write("LBCK", 4);
  write_pod(f, (uint32_t)1);  // format version
  write_pod(f, ck.phase);
  write_pod(f, ck.step);
  write_pod(f, (uint64_t)ck.config_echo.size());
  f.write(ck.config_echo.data(), (std::streamsize)ck.config_echo.size());
  write_pod(f, (uint64_t)ck.tensors.size());
  for (const auto& [name, t] : ck.tensors) {
    write_pod(f, (uint32_t)name.size());
    f.write(name.data(), (std::streamsize)name.size());
    write_pod(f, (uint32_t)t.ndim());
    for (int i = 0; i < t.ndim(); ++i) write_pod(f, (uint64_t)t.dim(i));
    f.write(reinterpret_cast<const char*>(t.data()), (std::streamsize)(t.numel() * 8));
  }
  if (!f) throw std::runtime_error("checkpoint_write: write failed: " + path);
}

Checkpoint checkpoint_read(const std::string& path) {
  std::ifstream f = open_in(path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "LBCK", 4) != 0)
    throw std::runtime_error("checkpoint_read: bad magic: " + path);
  const auto version = read_pod<uint32_t>(f, "version");
  if (version != 1) throw std::runtime_error("checkpoint_read: unsupported version");
  Checkpoint ck;
  ck.phase = read_pod<uint32_t>(f, "phase");
  ck.step = read_pod<uint64_t>(f, "step");
  const auto echo_len = read_pod<uint64_t>(f, "config length");
  ck.config_echo.resize(echo_len);
  f.read(ck.config_echo.data(), (std::streamsize)echo_len);
  if (!f) throw std::runtime_error("checkpoint truncated at config echo");
  const auto count = read_pod<uint64_t>(f, "tensor count");
  for (uint64_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<uint32_t>(f, "name length");
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const auto rank = read_pod<uint32_t>(f, "rank");
    if (rank > 8) throw std::runtime_error("checkpoint_read: implausible tensor rank");
    std::vector<int> shape;
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      const auto e = read_pod<uint64_t>(f, "extent");
      shape.push_back((int)e);
      numel *= (int64_t)e;
    }
    std::vector<double> data((size_t)numel);
    f.read(reinterpret_cast<char*>(data.data()), (std::streamsize)(numel * 8));
    if (!f) throw std::runtime_error("checkpoint truncated in tensor '" + name + "'");
    ck.tensors.emplace_back(std::move(name), Tensor::from_data(shape, std::move(data)));
  }
  return ck;
}

}  // namespace lb
