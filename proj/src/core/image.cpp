#include "core/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lb {

Image Image::create(int width, int height, double fill) {
  if (width <= 0 || height <= 0)
    throw std::runtime_error("image: non-positive size " + std::to_string(width) + "x" +
                             std::to_string(height));
  Image img;
  img.width = width;
  img.height = height;
  img.rgb.assign((size_t)width * height * 3, fill);
  return img;
}

void Image::validate(const char* who) const {
  if (width <= 0 || height <= 0 || (int64_t)rgb.size() != values())
    throw std::runtime_error(std::string(who) + ": malformed image buffer");
  for (double v : rgb) {
    if (!std::isfinite(v)) throw std::runtime_error(std::string(who) + ": non-finite value");
    if (v < 0.0) throw std::runtime_error(std::string(who) + ": negative radiance");
  }
}

int BracketSet::base_index() const {
  for (size_t k = 0; k < ev_list.size(); ++k)
    if (ev_list[k] == 0.0) return (int)k;
  throw std::runtime_error("bracket_set: ev_list has no base exposure 0");
}

void BracketSet::validate(const char* who) const {
  if (ev_list.size() < 2) throw std::runtime_error(std::string(who) + ": need K >= 2 exposures");
  if (ev_list.size() != frames.size())
    throw std::runtime_error(std::string(who) + ": ev/frame count mismatch");
  for (size_t k = 1; k < ev_list.size(); ++k)
    if (!(ev_list[k] > ev_list[k - 1]))
      throw std::runtime_error(std::string(who) + ": ev_list not strictly increasing");
  (void)base_index();
  for (const auto& f : frames) {
    f.validate(who);
    for (double v : f.rgb)
      if (v > 1.0) throw std::runtime_error(std::string(who) + ": bracket value above 1");
  }
}

Image invert_exposure(const Image& sensor_signal, const SensorMeta& meta) {
  sensor_signal.validate("invert_exposure");
  if (!(meta.exposure_time > 0.0) || !(meta.iso > 0.0) || !(meta.f_number > 0.0))
    throw std::runtime_error("invert_exposure: exposure_time, iso and f_number must be > 0");
  const double coeff = meta.f_number * meta.f_number / (meta.exposure_time * meta.iso) *
                       std::exp2(-meta.ev_comp);
  Image out = sensor_signal;
  for (auto& v : out.rgb) v *= coeff;
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::runtime_error("percentile: empty input");
  if (!(q >= 0.0 && q <= 1.0)) throw std::runtime_error("percentile: q outside [0,1]");
  std::sort(values.begin(), values.end());
  const double rank = q * (double)(values.size() - 1);
  const size_t lo = (size_t)rank;
  const double frac = rank - (double)lo;
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

double percentile_image(const Image& img, double q) { return percentile(img.rgb, q); }

double compute_radiance_scale(const Image& radiance) {
  radiance.validate("compute_radiance_scale");
  bool any_positive = false;
  for (double v : radiance.rgb)
    if (v > 0.0) {
      any_positive = true;
      break;
    }
  if (!any_positive)
    throw std::runtime_error("compute_radiance_scale: all-zero image, scale undefined");
  const double m = percentile_image(radiance, 0.50);
  const double h = percentile_image(radiance, 0.90);
  return std::max(m / 0.18, h / 0.8);
}

Image normalize(const Image& radiance, double s) {
  if (!(s > 0.0)) throw std::runtime_error("normalize: scale must be > 0");
  Image out = radiance;
  const double inv = 1.0 / s;
  for (auto& v : out.rgb) v *= inv;
  return out;
}

Image denormalize(const Image& linear, double s) {
  if (!(s > 0.0)) throw std::runtime_error("denormalize: scale must be > 0");
  Image out = linear;
  for (auto& v : out.rgb) v *= s;
  return out;
}

BracketSet bracket_decompose(const Image& linear, const std::vector<double>& ev_list) {
  linear.validate("bracket_decompose");
  BracketSet set;
  set.ev_list = ev_list;
  set.frames.reserve(ev_list.size());
  for (double ev : ev_list) {
    const double gain = std::exp2(ev);
    Image frame = linear;
    for (auto& v : frame.rgb) v = std::clamp(v * gain, 0.0, 1.0);
    set.frames.push_back(std::move(frame));
  }
  set.validate("bracket_decompose");
  return set;
}

Image tonemap_display(const Image& linear, double gamma) {
  linear.validate("tonemap_display");
  if (!(gamma > 0.0)) throw std::runtime_error("tonemap_display: gamma must be > 0");
  Image out = linear;
  const double inv_gamma = 1.0 / gamma;
  for (auto& v : out.rgb) v = std::pow(v / (1.0 + v), inv_gamma);
  return out;
}

}  // namespace lb
