#pragma once

#include <cstdint>
#include <vector>

namespace lb {

// Scene-referred RGB raster, row-major (y, x, c), f64. Values are
// non-negative and finite; linear images may exceed 1 in highlights.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;

  static Image create(int width, int height, double fill = 0.0);
  int64_t pixels() const { return (int64_t)width * height; }
  int64_t values() const { return (int64_t)width * height * 3; }
  double& at(int y, int x, int c) { return rgb[(((int64_t)y * width) + x) * 3 + c]; }
  double at(int y, int x, int c) const { return rgb[(((int64_t)y * width) + x) * 3 + c]; }
  void validate(const char* who) const;  // shape/size/finite/non-negative
};

// Pre-normalization radiance lives in the same layout.
using RadianceMap = Image;
using LinearImage = Image;

struct SensorMeta {
  double exposure_time = 1.0;  // seconds
  double iso = 1.0;
  double f_number = 1.0;
  double ev_comp = 0.0;  // stops
};

// Clipped exposure stack. ev_list is strictly increasing and contains 0,
// every frame value lies in [0,1].
struct BracketSet {
  std::vector<double> ev_list;
  std::vector<Image> frames;

  int base_index() const;  // index of ev == 0
  void validate(const char* who) const;
};

Image invert_exposure(const Image& sensor_signal, const SensorMeta& meta);

// Linear-interpolated order statistic at rank q*(n-1), q in [0,1].
double percentile(std::vector<double> values, double q);
// Percentiles over the flattened values of all three channels jointly.
double percentile_image(const Image& img, double q);

// s = max(P50/0.18, P90/0.8); errors on an all-zero image.
double compute_radiance_scale(const Image& radiance);

Image normalize(const Image& radiance, double s);
Image denormalize(const Image& linear, double s);

BracketSet bracket_decompose(const Image& linear, const std::vector<double>& ev_list);

// Global Reinhard: x -> (x/(1+x))^(1/gamma).
Image tonemap_display(const Image& linear, double gamma);

}  // namespace lb
