#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/image.hpp"
#include "core/rng.hpp"

namespace lb {

// Procedural training scenes: each layout guarantees a highlight region that
// clips at EV+2 and a shadow region below 2^-6 at EV-4, so every bracket
// carries distinct information. Images are emitted pre-normalized (radiance
// scale 1 by construction); the generative log10 scale is kept as the label.

enum class Layout { SkyGradient, LightDisks, IndoorWindow, NightLamps };

Layout layout_from_string(const std::string& s);
std::string layout_to_string(Layout l);

// 16-word vocabulary: ids 0..7 are brightness words tied to s_l bands,
// ids 8..15 are content words tied to layouts.
const std::vector<std::string>& vocab();
int word_id(const std::string& word);

// [lo, hi] of the s_l band for a brightness word id.
std::pair<double, double> brightness_band(int word);

struct SceneSpec {
  uint64_t seed = 0;
  Layout layout = Layout::SkyGradient;
  int brightness_word = 6;
  double s_l = 0.0;  // log10 radiance scale label, inside the word's band
};

// spec for record `index` of the dataset stream; prefix-stable in `index`
SceneSpec make_spec(uint64_t dataset_seed, uint64_t index);

struct DatasetRecord {
  uint64_t seed = 0;
  Image image;  // normalized linear image
  double s_l = 0.0;
  std::vector<int> caption;  // [brightness word, content words...]
  BracketSet brackets;
  bool held_out = false;
};

DatasetRecord generate_scene(const SceneSpec& spec, const std::vector<double>& ev_list,
                             int image_size);

// First n records of the deterministic stream; record i is held out iff
// i % 5 == 4. Prefix-stable: dataset_iter(n) is a prefix of dataset_iter(m>n).
std::vector<DatasetRecord> dataset_iter(int n, uint64_t seed, const std::vector<double>& ev_list,
                                        int image_size);

}  // namespace lb
