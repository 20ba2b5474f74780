#pragma once

#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace lb {

// 20 uniform log10-radiance bins over [-6, 4], width 0.5.
struct RadianceBins {
  static constexpr double lo = -6.0;
  static constexpr double hi = 4.0;
  static constexpr int count = 20;
  static constexpr double width() { return (hi - lo) / count; }
  static double center(int i) { return lo + ((double)i + 0.5) * width(); }
};

// index = clamp(floor((s_l - lo)/width), 0, count-1); half-open bins
int quantize_bin(double s_l);
std::vector<double> one_hot(int bin);

// Token codec around a shared 20 x d projection W: encode selects a row,
// decode projects back through W^T and takes a softmax expectation over the
// bin centers. The text-aware decode mixes a mean-pooled text embedding into
// the token through a linear head before the tied projection; the head is
// initialized to pass the token through unchanged, so at init the two decode
// paths agree exactly.
class RadianceCodec {
 public:
  RadianceCodec(int dim, Rng& rng);

  int dim() const { return dim_; }

  Tensor embed_bin(int bin) const;  // [1, d]
  Tensor embed(double s_l) const { return embed_bin(quantize_bin(s_l)); }

  Tensor logits(const Tensor& token) const;             // [1, d] -> [1, 20]
  double expectation_decode(const Tensor& token) const;  // -> s_l estimate
  double decode_with_text(const Tensor& token, const Tensor& pooled_text) const;

  // parameters (trainable during the adapter phase)
  Tensor W;       // [20, d]
  Tensor head_w;  // [2d, d], init [0 ; I]
  Tensor head_b;  // [d], init 0

 private:
  Tensor head_token(const Tensor& token, const Tensor& pooled_text) const;
  int dim_;
};

}  // namespace lb
