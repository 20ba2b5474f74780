#include "core/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace lb {

namespace {

double mean_luminance(const Image& img) {
  double acc = 0.0;
  const int64_t n = (int64_t)img.width * img.height;
  for (int64_t p = 0; p < n; ++p)
    acc += luminance(img.rgb[(size_t)p * 3], img.rgb[(size_t)p * 3 + 1],
                     img.rgb[(size_t)p * 3 + 2]);
  return acc / (double)n;
}

}  // namespace

double luminance_scale(const BracketSet& brackets) {
  brackets.validate("luminance_scale");
  const double darkest = mean_luminance(brackets.frames.front());
  const double brightest = mean_luminance(brackets.frames.back());
  if (darkest <= 1e-9) return std::numeric_limits<double>::infinity();
  return brightest / darkest;
}

double bracket_consistency_error(const BracketSet& brackets) {
  brackets.validate("bracket_consistency_error");
  const Image& base = brackets.frames[(size_t)brackets.base_index()];
  double total = 0.0;
  for (size_t k = 0; k < brackets.frames.size(); ++k) {
    const double inv = std::exp2(-brackets.ev_list[k]);
    const Image& frame = brackets.frames[k];
    double acc = 0.0;
    for (size_t i = 0; i < base.rgb.size(); ++i) acc += std::fabs(frame.rgb[i] * inv - base.rgb[i]);
    total += acc / (double)base.rgb.size();
  }
  return total;
}

double exposure_monotonicity(const BracketSet& brackets) {
  if (brackets.frames.empty()) throw std::runtime_error("exposure_monotonicity: empty stack");
  if (brackets.frames.size() == 1) return 1.0;
  brackets.validate("exposure_monotonicity");
  const int64_t n = (int64_t)brackets.frames[0].width * brackets.frames[0].height;
  int64_t good = 0;
  for (int64_t p = 0; p < n; ++p) {
    bool mono = true;
    double prev = -std::numeric_limits<double>::infinity();
    for (const Image& f : brackets.frames) {
      const double lum = luminance(f.rgb[(size_t)p * 3], f.rgb[(size_t)p * 3 + 1],
                                   f.rgb[(size_t)p * 3 + 2]);
      if (lum < prev - 1e-9) {
        mono = false;
        break;
      }
      prev = lum;
    }
    if (mono) ++good;
  }
  return (double)good / (double)n;
}

double radiance_mae(const std::vector<double>& pred_s_l, const std::vector<double>& true_s_l) {
  if (pred_s_l.size() != true_s_l.size())
    throw std::runtime_error("radiance_mae: length mismatch");
  if (pred_s_l.empty()) throw std::runtime_error("radiance_mae: empty lists");
  double acc = 0.0;
  for (size_t i = 0; i < pred_s_l.size(); ++i) acc += std::fabs(pred_s_l[i] - true_s_l[i]);
  return acc / (double)pred_s_l.size();
}

}  // namespace lb
