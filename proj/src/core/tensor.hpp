#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "core/rng.hpp"

namespace lb {

// Dense row-major f64 tensor. Copies share storage; values are treated as
// immutable once an op has consumed them (the tape saves by reference).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> values,
                          bool requires_grad = false);
  static Tensor randn(std::vector<int> shape, Rng& rng, double stddev = 1.0,
                      bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const;
  int dim(int i) const;
  int ndim() const;
  int64_t numel() const;

  double* data();
  const double* data() const;
  double item() const;  // scalar only

  bool requires_grad() const;
  double* grad();              // lazily allocates zeroed storage
  const double* grad() const;  // nullptr if never allocated
  void zero_grad();

  // Same storage, new shape (numel must match).
  Tensor reshape(std::vector<int> new_shape) const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    std::vector<int> shape;
    std::shared_ptr<std::vector<double>> data;
    std::shared_ptr<std::vector<double>> grad;  // lazy
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

// Reverse-mode tape. One active tape per thread; ops record closures in
// creation order and backward() replays them in exact reverse order.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();
  void record(std::function<void()> backward_fn);
  size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = seed and accumulates into every reachable
  // requires_grad tensor. Single use; a second call throws.
  void backward(Tensor& loss, double seed = 1.0);

 private:
  std::vector<std::function<void()>> nodes_;
  bool consumed_ = false;
  Tape* prev_ = nullptr;
};

// ---- primitives -----------------------------------------------------------
// Every op validates shapes, checks outputs for NaN/Inf, and registers its
// backward closure when a tape is active and any input requires grad.

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]x[k,n] -> [m,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k]x[n,k] -> [m,n]
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor add_rowvec(const Tensor& x, const Tensor& v);  // x: [s,d], v: [d]
Tensor mul_rowvec(const Tensor& x, const Tensor& v);
Tensor clip01(const Tensor& x);         // subgradient 0 outside and at 0/1
Tensor softmax(const Tensor& x);        // last axis, max-subtracted
Tensor rms_normalize(const Tensor& x);  // last axis, eps 1e-8
Tensor silu(const Tensor& x);
Tensor mean_all(const Tensor& x);   // -> scalar
Tensor mean_rows(const Tensor& x);  // [s,d] -> [d]
Tensor l1_loss(const Tensor& a, const Tensor& b);
Tensor l2_loss(const Tensor& a, const Tensor& b);
// Pairwise rotation of (even, odd) lanes. cos/sin: same shape as x with
// per-pair angles duplicated across the pair, grads do not flow to them.
Tensor rope_rotate(const Tensor& x, const Tensor& cos_t, const Tensor& sin_t);
Tensor slice_rows(const Tensor& x, int row0, int rows);
Tensor slice_cols(const Tensor& x, int col0, int cols);
Tensor concat_rows(const std::vector<Tensor>& xs);
Tensor concat_cols(const std::vector<Tensor>& xs);
Tensor reshape(const Tensor& x, std::vector<int> new_shape);
// [h,w,3] image -> [L,p*p*3] tokens, pure permutation (p*p*3 is model dim)
Tensor patchify(const Tensor& img, int patch);
Tensor unpatchify(const Tensor& tokens, int h, int w, int patch);

double rmsnorm_eps();

// ---- gradient checking ----------------------------------------------------
// Central finite differences, h = 1e-5; returns the normwise relative error
// ||a - n||_2 / max(1e-8, ||a||_2 + ||n||_2), maximized over the checked
// tensors. Per-coordinate ratios drown in finite-difference noise.

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double h = 1e-5);
// f() must rebuild the graph reading `params` in place.
double grad_check_params(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                         double h = 1e-5);

}  // namespace lb
