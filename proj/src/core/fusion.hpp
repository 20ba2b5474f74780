#pragma once

#include <vector>

#include "core/image.hpp"

namespace lb {

struct FusionConfig {
  double saturation_hi = 0.98;   // validity ceiling for ratio estimation
  double feather_lo = 0.85;      // smoothstep band for soft masks
  double feather_hi = 0.98;
  int blur_radius = 2;           // box blur used to dilate masks
  double min_valid_fraction = 0.01;
  void validate() const;
};

struct ChannelRatio {
  double r[3];
  bool fallback = false;  // true when the nominal 2^dEv ratio was substituted
};

// Per-channel brightness ratio brighter/darker over pixels where both frames
// are below the saturation ceiling in all channels. Falls back to `nominal`
// when too few pixels qualify or a channel mean degenerates.
ChannelRatio channel_ratio(const Image& darker, const Image& brighter, double nominal,
                           const FusionConfig& cfg);

// Per-pixel weight in [0,1] (stored per channel, equal across channels):
// high where the fused reference is saturated and the darker frame still has
// headroom. Dilated by max(raw, blur(raw)) so saturated interiors are fully
// replaced while edges stay feathered outward.
Image soft_mask(const Image& frame, const Image& fused_ref, const FusionConfig& cfg);

struct FusionResult {
  Image fused;                       // brightest-frame reference, may exceed 1
  std::vector<ChannelRatio> ratios;  // one per adjacent pair, darkest first
  int fallback_count = 0;
};

// Hierarchical merge from the brightest frame down: saturated content is
// replaced by darker frames aligned through cumulative channel ratios.
FusionResult fuse(const BracketSet& brackets, const FusionConfig& cfg);

// Return from the brightest-frame reference to the normalized linear domain.
Image to_linear(const Image& fused, double ev_max);

}  // namespace lb
