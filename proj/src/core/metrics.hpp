#pragma once

#include <vector>

#include "core/image.hpp"

namespace lb {

struct EvalReport {
  double ls = 0.0;                // brightest/darkest mean-luminance ratio
  double bracket_l1 = 0.0;        // pixel-space bracket-consistency error
  double monotonicity_rate = 0.0; // fraction of pixels nondecreasing in EV
  double radiance_mae = 0.0;      // log10 units
};

// Rec.709 luma of a linear pixel.
inline double luminance(double r, double g, double b) {
  return 0.2126 * r + 0.7152 * g + 0.0722 * b;
}

// Mean luminance of the brightest frame over the darkest. Returns +inf when
// the darkest frame's mean luminance is <= 1e-9.
double luminance_scale(const BracketSet& brackets);

// Same formula as the training bracket-consistency loss, evaluated directly
// on images: sum over frames of mean |I_k * 2^-ev_k - I_base|. Deliberately
// an independent implementation; tests cross-check it against the loss.
double bracket_consistency_error(const BracketSet& brackets);

// Fraction of pixels whose luminance is nondecreasing along increasing EV
// (tolerance 1e-9 absolute, floating-point noise only). Single frame -> 1.
double exposure_monotonicity(const BracketSet& brackets);

double radiance_mae(const std::vector<double>& pred_s_l, const std::vector<double>& true_s_l);

}  // namespace lb
