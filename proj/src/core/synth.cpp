#include "core/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lb {

namespace {

// brightness word -> s_l band; bands overlap and jointly span [-6, 4]
constexpr double kBands[8][2] = {
    {-6.0, -4.5},  // midnight
    {-5.0, -3.5},  // night
    {-3.5, -2.0},  // dusk
    {-2.5, -1.0},  // dim
    {-1.0, 0.5},   // indoor
    {0.0, 1.5},    // overcast
    {1.5, 3.0},    // daylight
    {2.5, 4.0},    // sunlit
};

const std::vector<std::string> kVocab = {
    "midnight", "night", "dusk", "dim", "indoor", "overcast", "daylight", "sunlit",
    "sky",      "gradient", "disks", "lamps", "window", "room", "sun", "stars",
};

// layouts pick brightness words consistent with their physical setting
const std::vector<int> kLayoutBrightness[4] = {
    {2, 5, 6},  // sky-gradient: dusk | overcast | daylight
    {6, 7},     // light-disks: daylight | sunlit
    {3, 4},     // indoor-window: dim | indoor
    {0, 1},     // night-lamps: midnight | night
};
const std::vector<int> kLayoutContent[4] = {
    {8, 9, 14},    // sky, gradient, sun
    {10, 14},      // disks, sun
    {12, 13},      // window, room
    {11, 15},      // lamps, stars
};

double smoothstep01(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

void add_disk(Image& img, double cx, double cy, double radius, const double value[3]) {
  const double feather = std::max(1.0, 0.25 * radius);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double d = std::hypot(x - cx, y - cy);
      const double w = 1.0 - smoothstep01((d - (radius - feather)) / (2.0 * feather));
      if (w <= 0.0) continue;
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = std::max(img.at(y, x, c), w * value[c]);
    }
}

void tint(Rng& rng, double base, double out[3]) {
  for (int c = 0; c < 3; ++c) out[c] = base * rng.uniform(0.9, 1.1);
}

Image build_sky_gradient(Rng& rng, int n) {
  Image img = Image::create(n, n);
  const double b_bot = rng.uniform(0.15, 0.35);
  const double b_top = b_bot * rng.uniform(0.08, 0.2);
  double tint_c[3];
  tint(rng, 1.0, tint_c);
  tint_c[2] *= 1.05;  // cool sky
  const int ground_y = (int)std::floor(0.85 * n);
  const double ground = b_bot * rng.uniform(0.002, 0.01);
  for (int y = 0; y < n; ++y) {
    const double v = y >= ground_y ? ground : b_top + (b_bot - b_top) * (double)y / (n - 1);
    for (int x = 0; x < n; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = v * tint_c[c];
  }
  const double hv = b_bot * rng.uniform(3.0, 14.0);
  double sun[3] = {hv * 1.05, hv, hv * 0.9};  // warm highlight
  add_disk(img, rng.uniform(0.2, 0.8) * n, rng.uniform(0.1, 0.4) * n,
           rng.uniform(0.06, 0.12) * n, sun);
  return img;
}

Image build_light_disks(Rng& rng, int n) {
  const double b = rng.uniform(0.04, 0.12);
  Image img = Image::create(n, n);
  double tint_c[3];
  tint(rng, b, tint_c);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double g = 1.0 + 0.2 * ((double)x / (n - 1) - 0.5);
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = tint_c[c] * g;
    }
  const int nd = 3 + (int)rng.below(4);
  for (int d = 0; d < nd; ++d) {
    double v[3];
    tint(rng, b * rng.uniform(8.0, 40.0), v);
    add_disk(img, rng.uniform(0.1, 0.9) * n, rng.uniform(0.1, 0.9) * n,
             rng.uniform(0.05, 0.12) * n, v);
  }
  double dark[3] = {b * 0.003, b * 0.003, b * 0.003};
  add_disk(img, rng.uniform(0.1, 0.9) * n, rng.uniform(0.7, 0.9) * n,
           rng.uniform(0.05, 0.1) * n, dark);
  // force the shadow floor: overwrite the disk minimum (add_disk maxes)
  const int sy = (int)(0.95 * n), sx = (int)(0.05 * n);
  for (int c = 0; c < 3; ++c) img.at(sy, sx, c) = b * 0.003;
  return img;
}

Image build_indoor_window(Rng& rng, int n) {
  const double b = rng.uniform(0.01, 0.04);
  Image img = Image::create(n, n);
  double tint_c[3];
  tint(rng, b, tint_c);
  const double cx = 0.5 * n, cy = 0.5 * n;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double r = std::hypot(x - cx, y - cy) / (0.75 * n);
      const double vig = 1.0 - 0.5 * smoothstep01(r);
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = tint_c[c] * vig;
    }
  const int x0 = (int)(rng.uniform(0.5, 0.6) * n), x1 = (int)(rng.uniform(0.8, 0.95) * n);
  const int y0 = (int)(rng.uniform(0.1, 0.2) * n), y1 = (int)(rng.uniform(0.5, 0.65) * n);
  const double wv = b * rng.uniform(12.0, 45.0);
  double win[3] = {wv * 0.95, wv, wv * 1.08};
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = win[c];
  for (int y = (int)(0.9 * n); y < n; ++y)
    for (int x = 0; x < (int)(0.1 * n) + 1; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = b * 0.005;
  return img;
}

Image build_night_lamps(Rng& rng, int n) {
  const double b = rng.uniform(0.002, 0.01);
  Image img = Image::create(n, n);
  double tint_c[3];
  tint(rng, b, tint_c);
  tint_c[2] *= 1.1;
  for (int y = 0; y < n; ++y) {
    const double g = 0.6 + 0.4 * (double)y / (n - 1);
    for (int x = 0; x < n; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = tint_c[c] * g;
  }
  for (int s = 0; s < 20; ++s) {
    const int x = (int)rng.below((uint64_t)n), y = (int)rng.below((uint64_t)n / 2);
    const double v = b * rng.uniform(2.0, 5.0);
    for (int c = 0; c < 3; ++c) img.at(y, x, c) = std::max(img.at(y, x, c), v);
  }
  const int nl = 2 + (int)rng.below(3);
  for (int l = 0; l < nl; ++l) {
    const double lv = b * rng.uniform(16.0, 42.0);
    double lamp[3] = {lv * 1.1, lv, lv * 0.8};  // warm lamps
    add_disk(img, rng.uniform(0.1, 0.9) * n, rng.uniform(0.5, 0.9) * n,
             rng.uniform(0.03, 0.06) * n, lamp);
  }
  for (int x = 0; x < n; ++x)
    for (int c = 0; c < 3; ++c) img.at(n - 1, x, c) = b * 0.004;
  return img;
}

}  // namespace

Layout layout_from_string(const std::string& s) {
  if (s == "sky-gradient") return Layout::SkyGradient;
  if (s == "light-disks") return Layout::LightDisks;
  if (s == "indoor-window") return Layout::IndoorWindow;
  if (s == "night-lamps") return Layout::NightLamps;
  throw std::runtime_error("unknown layout kind: " + s);
}

std::string layout_to_string(Layout l) {
  switch (l) {
    case Layout::SkyGradient: return "sky-gradient";
    case Layout::LightDisks: return "light-disks";
    case Layout::IndoorWindow: return "indoor-window";
    case Layout::NightLamps: return "night-lamps";
  }
  throw std::runtime_error("unknown layout kind");
}

const std::vector<std::string>& vocab() { return kVocab; }

int word_id(const std::string& word) {
  for (size_t i = 0; i < kVocab.size(); ++i)
    if (kVocab[i] == word) return (int)i;
  throw std::runtime_error("word not in vocabulary: " + word);
}

std::pair<double, double> brightness_band(int word) {
  if (word < 0 || word >= 8) throw std::runtime_error("not a brightness word id");
  return {kBands[word][0], kBands[word][1]};
}

SceneSpec make_spec(uint64_t dataset_seed, uint64_t index) {
  Rng rng = Rng::stream(dataset_seed, 0x5ce9e, index);
  SceneSpec spec;
  spec.seed = rng.next_u64();
  spec.layout = (Layout)rng.below(4);
  const auto& allowed = kLayoutBrightness[(int)spec.layout];
  spec.brightness_word = allowed[rng.below(allowed.size())];
  const auto band = brightness_band(spec.brightness_word);
  spec.s_l = rng.uniform(band.first, band.second);
  return spec;
}

DatasetRecord generate_scene(const SceneSpec& spec, const std::vector<double>& ev_list,
                             int image_size) {
  if (image_size < 8) throw std::runtime_error("generate_scene: image too small");
  const auto band = brightness_band(spec.brightness_word);
  if (!(spec.s_l >= band.first && spec.s_l <= band.second))
    throw std::runtime_error("generate_scene: s_l outside the brightness word's band");
  Rng rng = Rng::stream(spec.seed, 0x1a40, (uint64_t)spec.layout);
  Image raw;
  switch (spec.layout) {
    case Layout::SkyGradient: raw = build_sky_gradient(rng, image_size); break;
    case Layout::LightDisks: raw = build_light_disks(rng, image_size); break;
    case Layout::IndoorWindow: raw = build_indoor_window(rng, image_size); break;
    case Layout::NightLamps: raw = build_night_lamps(rng, image_size); break;
  }
  DatasetRecord rec;
  rec.seed = spec.seed;
  rec.s_l = spec.s_l;
  rec.image = normalize(raw, compute_radiance_scale(raw));
  rec.brackets = bracket_decompose(rec.image, ev_list);
  rec.caption.push_back(spec.brightness_word);
  const auto& content = kLayoutContent[(int)spec.layout];
  rec.caption.push_back(content[rng.below(content.size())]);
  if (rng.uniform() < 0.5) {
    int second = content[rng.below(content.size())];
    if (second != rec.caption.back()) rec.caption.push_back(second);
  }
  return rec;
}

std::vector<DatasetRecord> dataset_iter(int n, uint64_t seed, const std::vector<double>& ev_list,
                                        int image_size) {
  if (n < 1) throw std::runtime_error("dataset_iter: n must be >= 1");
  std::vector<DatasetRecord> out;
  out.reserve((size_t)n);
  for (int i = 0; i < n; ++i) {
    DatasetRecord rec = generate_scene(make_spec(seed, (uint64_t)i), ev_list, image_size);
    rec.held_out = (i % 5 == 4);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace lb
