#include "core/codec.hpp"

#include <cmath>
#include <stdexcept>

namespace lb {

int quantize_bin(double s_l) {
  if (!std::isfinite(s_l)) throw std::runtime_error("quantize: non-finite log radiance");
  const int idx = (int)std::floor((s_l - RadianceBins::lo) / RadianceBins::width());
  return idx < 0 ? 0 : (idx >= RadianceBins::count ? RadianceBins::count - 1 : idx);
}

std::vector<double> one_hot(int bin) {
  if (bin < 0 || bin >= RadianceBins::count)
    throw std::runtime_error("one_hot: bin out of range");
  std::vector<double> v(RadianceBins::count, 0.0);
  v[(size_t)bin] = 1.0;
  return v;
}

RadianceCodec::RadianceCodec(int dim, Rng& rng) : dim_(dim) {
  // rows orthogonalized (exact when dim >= bin count) and scaled so a clean
  // token's own-bin logit dominates every cross logit regardless of the seed
  constexpr double kRowNorm = 4.0;
  Tensor raw = Tensor::randn({RadianceBins::count, dim}, rng);
  std::vector<double> w(raw.data(), raw.data() + raw.numel());
  for (int i = 0; i < RadianceBins::count; ++i) {
    double* wi = &w[(size_t)i * dim];
    for (int j = 0; j < i; ++j) {
      const double* wj = &w[(size_t)j * dim];
      double dot = 0.0;
      for (int c = 0; c < dim; ++c) dot += wi[c] * wj[c];
      for (int c = 0; c < dim; ++c) wi[c] -= dot / (kRowNorm * kRowNorm) * wj[c];
    }
    double norm = 0.0;
    for (int c = 0; c < dim; ++c) norm += wi[c] * wi[c];
    norm = std::sqrt(norm);
    if (norm < 1e-8) {
      // dim < bin count exhausts the space; fall back to the raw direction
      const double* ri = raw.data() + (size_t)i * dim;
      norm = 0.0;
      for (int c = 0; c < dim; ++c) norm += ri[c] * ri[c];
      norm = std::sqrt(norm);
      for (int c = 0; c < dim; ++c) wi[c] = ri[c];
    }
    for (int c = 0; c < dim; ++c) wi[c] *= kRowNorm / norm;
  }
  W = Tensor::from_data({RadianceBins::count, dim}, std::move(w), true);
  std::vector<double> hw((size_t)2 * dim * dim, 0.0);
  for (int i = 0; i < dim; ++i) hw[(size_t)(dim + i) * dim + i] = 1.0;
  head_w = Tensor::from_data({2 * dim, dim}, std::move(hw), true);
  head_b = Tensor::zeros({dim}, true);
}

Tensor RadianceCodec::embed_bin(int bin) const {
  if (bin < 0 || bin >= RadianceBins::count)
    throw std::runtime_error("embed_bin: bin out of range");
  return slice_rows(W, bin, 1);
}

Tensor RadianceCodec::logits(const Tensor& token) const {
  if (token.ndim() != 2 || token.dim(0) != 1 || token.dim(1) != dim_)
    throw std::runtime_error("codec logits: token must be [1, d]");
  return matmul_nt(token, W);
}

namespace {

double expectation_from_logits(const Tensor& lg) {
  Tensor p = softmax(lg);
  double acc = 0.0;
  for (int i = 0; i < RadianceBins::count; ++i) acc += p.data()[i] * RadianceBins::center(i);
  return acc;
}

}  // namespace

double RadianceCodec::expectation_decode(const Tensor& token) const {
  return expectation_from_logits(logits(token));
}

Tensor RadianceCodec::head_token(const Tensor& token, const Tensor& pooled_text) const {
  Tensor joint = concat_cols({reshape(pooled_text, {1, dim_}), token});
  return add_rowvec(matmul(joint, head_w), head_b);
}

double RadianceCodec::decode_with_text(const Tensor& token, const Tensor& pooled_text) const {
  return expectation_from_logits(logits(head_token(token, pooled_text)));
}

}  // namespace lb
