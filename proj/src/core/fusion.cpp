#include "core/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lb {

namespace {

double smoothstep(double lo, double hi, double x) {
  const double t = std::clamp((x - lo) / (hi - lo), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

double max_channel(const Image& img, int y, int x) {
  return std::max({img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2)});
}

// box blur with edge clamping; kernel is (2r+1)^2 normalized by in-bounds count
std::vector<double> box_blur(const std::vector<double>& src, int w, int h, int r) {
  if (r <= 0) return src;
  std::vector<double> out((size_t)w * h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      int n = 0;
      for (int dy = -r; dy <= r; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -r; dx <= r; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= w) continue;
          acc += src[(size_t)yy * w + xx];
          ++n;
        }
      }
      out[(size_t)y * w + x] = acc / n;
    }
  return out;
}

}  // namespace

void FusionConfig::validate() const {
  if (!(feather_lo > 0.0 && feather_lo < feather_hi && feather_hi <= 1.0))
    throw std::runtime_error("fusion config: need 0 < feather_lo < feather_hi <= 1");
  if (!(saturation_hi > 0.0 && saturation_hi <= 1.0))
    throw std::runtime_error("fusion config: saturation threshold outside (0, 1]");
  if (blur_radius < 0) throw std::runtime_error("fusion config: negative blur radius");
  if (!(min_valid_fraction >= 0.0 && min_valid_fraction < 1.0))
    throw std::runtime_error("fusion config: min valid fraction outside [0, 1)");
}

ChannelRatio channel_ratio(const Image& darker, const Image& brighter, double nominal,
                           const FusionConfig& cfg) {
  cfg.validate();
  if (darker.width != brighter.width || darker.height != brighter.height)
    throw std::runtime_error("channel_ratio: frame shapes differ");
  if (!(nominal > 0.0) || !std::isfinite(nominal))
    throw std::runtime_error("channel_ratio: nominal ratio must be positive");
  double sum_d[3] = {0, 0, 0}, sum_b[3] = {0, 0, 0};
  int64_t valid = 0;
  const int64_t total = (int64_t)darker.width * darker.height;
  for (int y = 0; y < darker.height; ++y)
    for (int x = 0; x < darker.width; ++x) {
      bool ok = true;
      for (int c = 0; c < 3 && ok; ++c)
        ok = darker.at(y, x, c) < cfg.saturation_hi && brighter.at(y, x, c) < cfg.saturation_hi;
      if (!ok) continue;
      ++valid;
      for (int c = 0; c < 3; ++c) {
        sum_d[c] += darker.at(y, x, c);
        sum_b[c] += brighter.at(y, x, c);
      }
    }
  ChannelRatio out;
  const bool enough = valid >= std::max<int64_t>(1, (int64_t)(cfg.min_valid_fraction * total));
  bool degenerate = false;
  for (int c = 0; c < 3; ++c) degenerate = degenerate || !(sum_d[c] > 0.0);
  if (!enough || degenerate) {
    out.fallback = true;
    for (int c = 0; c < 3; ++c) out.r[c] = nominal;
    return out;
  }
  for (int c = 0; c < 3; ++c) {
    out.r[c] = sum_b[c] / sum_d[c];
    if (!(out.r[c] > 0.0) || !std::isfinite(out.r[c]))
      throw std::runtime_error("channel_ratio: non-positive or non-finite ratio");
  }
  return out;
}

Image soft_mask(const Image& frame, const Image& fused_ref, const FusionConfig& cfg) {
  cfg.validate();
  if (frame.width != fused_ref.width || frame.height != fused_ref.height)
    throw std::runtime_error("soft_mask: frame shapes differ");
  const int w = frame.width, h = frame.height;
  std::vector<double> raw((size_t)w * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double sat = smoothstep(cfg.feather_lo, cfg.feather_hi, max_channel(fused_ref, y, x));
      const double headroom =
          1.0 - smoothstep(cfg.feather_lo, cfg.feather_hi, max_channel(frame, y, x));
      raw[(size_t)y * w + x] = sat * headroom;
    }
  const std::vector<double> blurred = box_blur(raw, w, h, cfg.blur_radius);
  Image mask = Image::create(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double m = std::max(raw[(size_t)y * w + x], blurred[(size_t)y * w + x]);
      for (int c = 0; c < 3; ++c) mask.at(y, x, c) = m;
    }
  return mask;
}

FusionResult fuse(const BracketSet& brackets, const FusionConfig& cfg) {
  cfg.validate();
  brackets.validate("fuse");
  const int K = (int)brackets.frames.size();
  FusionResult res;
  res.fused = brackets.frames[(size_t)K - 1];
  res.ratios.resize((size_t)K - 1);
  double cum[3] = {1.0, 1.0, 1.0};
  for (int k = K - 2; k >= 0; --k) {
    const double nominal = std::exp2(brackets.ev_list[(size_t)k + 1] - brackets.ev_list[(size_t)k]);
    ChannelRatio r = channel_ratio(brackets.frames[(size_t)k], brackets.frames[(size_t)k + 1],
                                   nominal, cfg);
    res.ratios[(size_t)k] = r;
    if (r.fallback) ++res.fallback_count;
    for (int c = 0; c < 3; ++c) cum[c] *= r.r[c];
    const Image mask = soft_mask(brackets.frames[(size_t)k], res.fused, cfg);
    const Image& frame = brackets.frames[(size_t)k];
    for (int y = 0; y < res.fused.height; ++y)
      for (int x = 0; x < res.fused.width; ++x)
        for (int c = 0; c < 3; ++c) {
          const double m = mask.at(y, x, c);
          res.fused.at(y, x, c) =
              res.fused.at(y, x, c) * (1.0 - m) + frame.at(y, x, c) * cum[c] * m;
        }
  }
  res.fused.validate("fuse");
  return res;
}

Image to_linear(const Image& fused, double ev_max) {
  fused.validate("to_linear");
  Image out = fused;
  const double inv = std::exp2(-ev_max);
  for (double& v : out.rgb) v *= inv;
  return out;
}

}  // namespace lb
