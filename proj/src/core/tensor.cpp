#include "core/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace lb {

namespace {

constexpr double kRmsNormEps = 1e-8;

thread_local Tape* g_active_tape = nullptr;

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

int64_t numel_of(const std::vector<int>& s) {
  int64_t n = 1;
  for (int d : s) {
    if (d <= 0) throw std::runtime_error("tensor: non-positive dimension in " + shape_str(s));
    n *= d;
  }
  return n;
}

void check_finite(const char* op, const Tensor& t) {
  const double* p = t.data();
  const int64_t n = t.numel();
  for (int64_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i]))
      throw std::runtime_error(std::string(op) + ": non-finite value in output");
  }
}

// rows/cols of a 2d tensor; 1d is treated as [1,n] where noted
void require_2d(const char* op, const Tensor& t) {
  if (t.ndim() != 2) throw std::runtime_error(std::string(op) + ": expected 2d tensor, got " +
                                              shape_str(t.shape()));
}

// ---- raw matmul kernels (row-major) ----
// C[m,n] += A[m,k] * B[k,n]
void mm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + (int64_t)i * k;
    double* crow = c + (int64_t)i * n;
    for (int l = 0; l < k; ++l) {
      const double av = arow[l];
      const double* brow = b + (int64_t)l * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
void mm_nt(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + (int64_t)i * k;
    double* crow = c + (int64_t)i * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + (int64_t)j * k;
      double acc = 0.0;
      for (int l = 0; l < k; ++l) acc += arow[l] * brow[l];
      crow[j] += acc;
    }
  }
}

// C[k,n] += A[m,k]^T * B[m,n]
void mm_tn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + (int64_t)i * k;
    const double* brow = b + (int64_t)i * n;
    for (int l = 0; l < k; ++l) {
      const double av = arow[l];
      double* crow = c + (int64_t)l * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

bool tracing(const Tensor& a) { return Tape::active() != nullptr && a.requires_grad(); }
bool tracing(const Tensor& a, const Tensor& b) {
  return Tape::active() != nullptr && (a.requires_grad() || b.requires_grad());
}

}  // namespace

double rmsnorm_eps() { return kRmsNormEps; }

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  const int64_t n = numel_of(shape);
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data = std::make_shared<std::vector<double>>(n, 0.0);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (auto& v : *t.impl_->data) v = value;
  return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
  const int64_t n = numel_of(shape);
  if (n != (int64_t)values.size())
    throw std::runtime_error("from_data: " + std::to_string(values.size()) +
                             " values for shape " + shape_str(shape));
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data = std::make_shared<std::vector<double>>(std::move(values));
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double stddev, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  rng.fill_normal(t.data(), (size_t)t.numel(), stddev);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const std::vector<int>& Tensor::shape() const {
  if (!impl_) throw std::runtime_error("tensor: undefined");
  return impl_->shape;
}

int Tensor::dim(int i) const { return shape().at((size_t)i); }
int Tensor::ndim() const { return (int)shape().size(); }

int64_t Tensor::numel() const { return (int64_t)impl_->data->size(); }

double* Tensor::data() {
  if (!impl_) throw std::runtime_error("tensor: undefined");
  return impl_->data->data();
}
const double* Tensor::data() const {
  if (!impl_) throw std::runtime_error("tensor: undefined");
  return impl_->data->data();
}

double Tensor::item() const {
  if (numel() != 1) throw std::runtime_error("item: tensor has " + std::to_string(numel()) +
                                             " elements, expected 1");
  return (*impl_->data)[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

double* Tensor::grad() {
  if (!impl_) throw std::runtime_error("grad: undefined tensor");
  if (!impl_->grad) impl_->grad = std::make_shared<std::vector<double>>(impl_->data->size(), 0.0);
  return impl_->grad->data();
}

const double* Tensor::grad() const {
  if (!impl_ || !impl_->grad) return nullptr;
  return impl_->grad->data();
}

void Tensor::zero_grad() {
  if (impl_ && impl_->grad) std::fill(impl_->grad->begin(), impl_->grad->end(), 0.0);
}

Tensor Tensor::reshape(std::vector<int> new_shape) const {
  if (numel_of(new_shape) != numel())
    throw std::runtime_error("reshape: numel mismatch " + shape_str(shape()) + " -> " +
                             shape_str(new_shape));
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(new_shape);
  t.impl_->data = impl_->data;  // shared storage, fresh grad
  t.impl_->requires_grad = impl_->requires_grad;
  return t;
}

// ---- Tape -------------------------------------------------------------------

Tape::Tape() {
  prev_ = g_active_tape;
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> backward_fn) { nodes_.push_back(std::move(backward_fn)); }

void Tape::backward(Tensor& loss, double seed) {
  if (consumed_) throw std::runtime_error("backward: tape already consumed");
  if (loss.numel() != 1) throw std::runtime_error("backward: loss must be scalar");
  consumed_ = true;
  loss.grad()[0] += seed;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

// ---- ops --------------------------------------------------------------------

namespace {

Tensor out_like(std::vector<int> shape, bool req) { return Tensor::zeros(std::move(shape), req); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d("matmul", a);
  require_2d("matmul", b);
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw std::runtime_error("matmul: shape mismatch " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
  Tensor out = out_like({m, n}, a.requires_grad() || b.requires_grad());
  mm_nn(a.data(), b.data(), out.data(), m, k, n);
  check_finite("matmul", out);
  if (tracing(a, b)) {
    Tensor av = a, bv = b, ov = out;
    Tape::active()->record([av, bv, ov, m, k, n]() mutable {
      const double* g = ov.grad();
      if (av.requires_grad()) mm_nt(g, bv.data(), av.grad(), m, n, k);
      if (bv.requires_grad()) mm_tn(av.data(), g, bv.grad(), m, k, n);
    });
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_2d("matmul_nt", a);
  require_2d("matmul_nt", b);
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k)
    throw std::runtime_error("matmul_nt: shape mismatch " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()) + "^T");
  Tensor out = out_like({m, n}, a.requires_grad() || b.requires_grad());
  mm_nt(a.data(), b.data(), out.data(), m, k, n);
  check_finite("matmul_nt", out);
  if (tracing(a, b)) {
    Tensor av = a, bv = b, ov = out;
    Tape::active()->record([av, bv, ov, m, k, n]() mutable {
      const double* g = ov.grad();
      if (av.requires_grad()) mm_nn(g, bv.data(), av.grad(), m, n, k);
      if (bv.requires_grad()) mm_tn(g, av.data(), bv.grad(), m, n, k);
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::runtime_error("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
  const int64_t n = a.numel();
  Tensor out = out_like(a.shape(), a.requires_grad() || b.requires_grad());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  check_finite("add", out);
  if (tracing(a, b)) {
    Tensor av = a, bv = b, ov = out;
    Tape::active()->record([av, bv, ov, n]() mutable {
      const double* g = ov.grad();
      if (av.requires_grad()) {
        double* ga = av.grad();
        for (int64_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (bv.requires_grad()) {
        double* gb = bv.grad();
        for (int64_t i = 0; i < n; ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::runtime_error("sub: shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
  const int64_t n = a.numel();
  Tensor out = out_like(a.shape(), a.requires_grad() || b.requires_grad());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
  check_finite("sub", out);
  if (tracing(a, b)) {
    Tensor av = a, bv = b, ov = out;
    Tape::active()->record([av, bv, ov, n]() mutable {
      const double* g = ov.grad();
      if (av.requires_grad()) {
        double* ga = av.grad();
        for (int64_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (bv.requires_grad()) {
        double* gb = bv.grad();
        for (int64_t i = 0; i < n; ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::runtime_error("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
  const int64_t n = a.numel();
  Tensor out = out_like(a.shape(), a.requires_grad() || b.requires_grad());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  check_finite("mul", out);
  if (tracing(a, b)) {
    Tensor av = a, bv = b, ov = out;
    Tape::active()->record([av, bv, ov, n]() mutable {
      const double* g = ov.grad();
      if (av.requires_grad()) {
        double* ga = av.grad();
        const double* pb2 = bv.data();
        for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * pb2[i];
      }
      if (bv.requires_grad()) {
        double* gb = bv.grad();
        const double* pa2 = av.data();
        for (int64_t i = 0; i < n; ++i) gb[i] += g[i] * pa2[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double c) {
  const int64_t n = a.numel();
  Tensor out = out_like(a.shape(), a.requires_grad());
  const double* pa = a.data();
  double* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * c;
  check_finite("scale", out);
  if (tracing(a)) {
    Tensor av = a, ov = out;
    Tape::active()->record([av, ov, c, n]() mutable {
      const double* g = ov.grad();
      double* ga = av.grad();
      for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * c;
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& a, double c) {
  const int64_t n = a.numel();
  Tensor out = out_like(a.shape(), a.requires_grad());
  const double* pa = a.data();
  double* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + c;
  check_finite("add_scalar", out);
  if (tracing(a)) {
    Tensor av = a, ov = out;
    Tape::active()->record([av, ov, n]() mutable {
      const double* g = ov.grad();
      double* ga = av.grad();
      for (int64_t i = 0; i < n; ++i) ga[i] += g[i];
    });
  }
  return out;
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  require_2d("add_rowvec", x);
  if (v.ndim() != 1 || v.dim(0) != x.dim(1))
    throw std::runtime_error("add_rowvec: shape mismatch " + shape_str(x.shape()) + " + " +
                             shape_str(v.shape()));
  const int s = x.dim(0), d = x.dim(1);
  Tensor out = out_like(x.shape(), x.requires_grad() || v.requires_grad());
  const double* px = x.data();
  const double* pv = v.data();
  double* po = out.data();
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < d; ++j) po[(int64_t)i * d + j] = px[(int64_t)i * d + j] + pv[j];
  check_finite("add_rowvec", out);
  if (tracing(x, v)) {
    Tensor xv = x, vv = v, ov = out;
    Tape::active()->record([xv, vv, ov, s, d]() mutable {
      const double* g = ov.grad();
      if (xv.requires_grad()) {
        double* gx = xv.grad();
        for (int64_t i = 0; i < (int64_t)s * d; ++i) gx[i] += g[i];
      }
      if (vv.requires_grad()) {
        double* gv = vv.grad();
        for (int i = 0; i < s; ++i)
          for (int j = 0; j < d; ++j) gv[j] += g[(int64_t)i * d + j];
      }
    });
  }
  return out;
}

Tensor mul_rowvec(const Tensor& x, const Tensor& v) {
  require_2d("mul_rowvec", x);
  if (v.ndim() != 1 || v.dim(0) != x.dim(1))
    throw std::runtime_error("mul_rowvec: shape mismatch " + shape_str(x.shape()) + " * " +
                             shape_str(v.shape()));
  const int s = x.dim(0), d = x.dim(1);
  Tensor out = out_like(x.shape(), x.requires_grad() || v.requires_grad());
  const double* px = x.data();
  const double* pv = v.data();
  double* po = out.data();
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < d; ++j) po[(int64_t)i * d + j] = px[(int64_t)i * d + j] * pv[j];
  check_finite("mul_rowvec", out);
  if (tracing(x, v)) {
    Tensor xv = x, vv = v, ov = out;
    Tape::active()->record([xv, vv, ov, s, d]() mutable {
      const double* g = ov.grad();
      if (xv.requires_grad()) {
        double* gx = xv.grad();
        const double* pv2 = vv.data();
        for (int i = 0; i < s; ++i)
          for (int j = 0; j < d; ++j) gx[(int64_t)i * d + j] += g[(int64_t)i * d + j] * pv2[j];
      }
      if (vv.requires_grad()) {
        double* gv = vv.grad();
        const double* px2 = xv.data();
        for (int i = 0; i < s; ++i)
          for (int j = 0; j < d; ++j) gv[j] += g[(int64_t)i * d + j] * px2[(int64_t)i * d + j];
      }
    });
  }
  return out;
}

Tensor clip01(const Tensor& x) {
  const int64_t n = x.numel();
  Tensor out = out_like(x.shape(), x.requires_grad());
  const double* px = x.data();
  double* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = px[i] < 0.0 ? 0.0 : (px[i] > 1.0 ? 1.0 : px[i]);
  check_finite("clip01", out);
  if (tracing(x)) {
    Tensor xv = x, ov = out;
    Tape::active()->record([xv, ov, n]() mutable {
      const double* g = ov.grad();
      const double* px2 = xv.data();
      double* gx = xv.grad();
      // subgradient 0 at the clip boundaries themselves
      for (int64_t i = 0; i < n; ++i)
        if (px2[i] > 0.0 && px2[i] < 1.0) gx[i] += g[i];
    });
  }
  return out;
}

Tensor softmax(const Tensor& x) {
  const int d = x.dim(x.ndim() - 1);
  const int64_t rows = x.numel() / d;
  Tensor out = out_like(x.shape(), x.requires_grad());
  const double* px = x.data();
  double* po = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* in = px + r * d;
    double* o = po + r * d;
    double mx = in[0];
    for (int j = 1; j < d; ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (int j = 0; j < d; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < d; ++j) o[j] *= inv;
  }
  check_finite("softmax", out);
  if (tracing(x)) {
    Tensor xv = x, ov = out;
    Tape::active()->record([xv, ov, rows, d]() mutable {
      const double* g = ov.grad();
      const double* p = ov.data();
      double* gx = xv.grad();
      for (int64_t r = 0; r < rows; ++r) {
        const double* gr = g + r * d;
        const double* pr = p + r * d;
        double dot = 0.0;
        for (int j = 0; j < d; ++j) dot += gr[j] * pr[j];
        double* gxr = gx + r * d;
        for (int j = 0; j < d; ++j) gxr[j] += pr[j] * (gr[j] - dot);
      }
    });
  }
  return out;
}

Tensor rms_normalize(const Tensor& x) {
  const int d = x.dim(x.ndim() - 1);
  const int64_t rows = x.numel() / d;
  Tensor out = out_like(x.shape(), x.requires_grad());
  std::vector<double> rms(rows);
  const double* px = x.data();
  double* po = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* in = px + r * d;
    double ss = 0.0;
    for (int j = 0; j < d; ++j) ss += in[j] * in[j];
    const double rv = std::sqrt(ss / d + kRmsNormEps);
    rms[r] = rv;
    double* o = po + r * d;
    const double inv = 1.0 / rv;
    for (int j = 0; j < d; ++j) o[j] = in[j] * inv;
  }
  check_finite("rms_normalize", out);
  if (tracing(x)) {
    Tensor xv = x, ov = out;
    Tape::active()->record([xv, ov, rms = std::move(rms), rows, d]() mutable {
      const double* g = ov.grad();
      const double* px2 = xv.data();
      double* gx = xv.grad();
      for (int64_t r = 0; r < rows; ++r) {
        const double* gr = g + r * d;
        const double* in = px2 + r * d;
        const double rv = rms[r];
        double dot = 0.0;  // sum g_i x_i
        for (int j = 0; j < d; ++j) dot += gr[j] * in[j];
        const double c = dot / ((double)d * rv * rv * rv);
        double* gxr = gx + r * d;
        for (int j = 0; j < d; ++j) gxr[j] += gr[j] / rv - in[j] * c;
      }
    });
  }
  return out;
}

Tensor silu(const Tensor& x) {
  const int64_t n = x.numel();
  Tensor out = out_like(x.shape(), x.requires_grad());
  const double* px = x.data();
  double* po = out.data();
  for (int64_t i = 0; i < n; ++i) {
    const double s = 1.0 / (1.0 + std::exp(-px[i]));
    po[i] = px[i] * s;
  }
  check_finite("silu", out);
  if (tracing(x)) {
    Tensor xv = x, ov = out;
    Tape::active()->record([xv, ov, n]() mutable {
      const double* g = ov.grad();
      const double* px2 = xv.data();
      double* gx = xv.grad();
      for (int64_t i = 0; i < n; ++i) {
        const double s = 1.0 / (1.0 + std::exp(-px2[i]));
        gx[i] += g[i] * s * (1.0 + px2[i] * (1.0 - s));
      }
    });
  }
  return out;
}

Tensor mean_all(const Tensor& x) {
  const int64_t n = x.numel();
  double acc = 0.0;
  const double* px = x.data();
  for (int64_t i = 0; i < n; ++i) acc += px[i];
  Tensor out = Tensor::zeros({1}, x.requires_grad());
  out.data()[0] = acc / (double)n;
  check_finite("mean_all", out);
  if (tracing(x)) {
    Tensor xv = x, ov = out;
    Tape::active()->record([xv, ov, n]() mutable {
      const double g = ov.grad()[0] / (double)n;
      double* gx = xv.grad();
      for (int64_t i = 0; i < n; ++i) gx[i] += g;
    });
  }
  return out;
}

Tensor mean_rows(const Tensor& x) {
  require_2d("mean_rows", x);
  const int s = x.dim(0), d = x.dim(1);
  Tensor out = out_like({d}, x.requires_grad());
  const double* px = x.data();
  double* po = out.data();
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < d; ++j) po[j] += px[(int64_t)i * d + j];
  const double inv = 1.0 / s;
  for (int j = 0; j < d; ++j) po[j] *= inv;
  check_finite("mean_rows", out);
  if (tracing(x)) {
    Tensor xv = x, ov = out;
    Tape::active()->record([xv, ov, s, d]() mutable {
      const double* g = ov.grad();
      double* gx = xv.grad();
      const double inv2 = 1.0 / s;
      for (int i = 0; i < s; ++i)
        for (int j = 0; j < d; ++j) gx[(int64_t)i * d + j] += g[j] * inv2;
    });
  }
  return out;
}

Tensor l1_loss(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::runtime_error("l1_loss: shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
  const int64_t n = a.numel();
  const double* pa = a.data();
  const double* pb = b.data();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += std::fabs(pa[i] - pb[i]);
  Tensor out = Tensor::zeros({1}, a.requires_grad() || b.requires_grad());
  out.data()[0] = acc / (double)n;
  check_finite("l1_loss", out);
  if (tracing(a, b)) {
    Tensor av = a, bv = b, ov = out;
    Tape::active()->record([av, bv, ov, n]() mutable {
      const double g = ov.grad()[0] / (double)n;
      const double* pa2 = av.data();
      const double* pb2 = bv.data();
      for (int64_t i = 0; i < n; ++i) {
        const double diff = pa2[i] - pb2[i];
        const double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        if (av.requires_grad()) av.grad()[i] += g * s;
        if (bv.requires_grad()) bv.grad()[i] -= g * s;
      }
    });
  }
  return out;
}

Tensor l2_loss(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::runtime_error("l2_loss: shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
  const int64_t n = a.numel();
  const double* pa = a.data();
  const double* pb = b.data();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double diff = pa[i] - pb[i];
    acc += diff * diff;
  }
  Tensor out = Tensor::zeros({1}, a.requires_grad() || b.requires_grad());
  out.data()[0] = acc / (double)n;
  check_finite("l2_loss", out);
  if (tracing(a, b)) {
    Tensor av = a, bv = b, ov = out;
    Tape::active()->record([av, bv, ov, n]() mutable {
      const double g = 2.0 * ov.grad()[0] / (double)n;
      const double* pa2 = av.data();
      const double* pb2 = bv.data();
      for (int64_t i = 0; i < n; ++i) {
        const double diff = pa2[i] - pb2[i];
        if (av.requires_grad()) av.grad()[i] += g * diff;
        if (bv.requires_grad()) bv.grad()[i] -= g * diff;
      }
    });
  }
  return out;
}

Tensor rope_rotate(const Tensor& x, const Tensor& cos_t, const Tensor& sin_t) {
  if (x.shape() != cos_t.shape() || x.shape() != sin_t.shape())
    throw std::runtime_error("rope_rotate: angle tables must match input shape");
  const int d = x.dim(x.ndim() - 1);
  if (d % 2 != 0) throw std::runtime_error("rope_rotate: last dim must be even");
  const int64_t rows = x.numel() / d;
  Tensor out = out_like(x.shape(), x.requires_grad());
  const double* px = x.data();
  const double* pc = cos_t.data();
  const double* ps = sin_t.data();
  double* po = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t base = r * d;
    for (int j = 0; j < d; j += 2) {
      const double c = pc[base + j], s = ps[base + j];
      const double xe = px[base + j], xo = px[base + j + 1];
      po[base + j] = xe * c - xo * s;
      po[base + j + 1] = xe * s + xo * c;
    }
  }
  check_finite("rope_rotate", out);
  if (tracing(x)) {
    Tensor xv = x, cv = cos_t, sv = sin_t, ov = out;
    Tape::active()->record([xv, cv, sv, ov, rows, d]() mutable {
      const double* g = ov.grad();
      const double* pc2 = cv.data();
      const double* ps2 = sv.data();
      double* gx = xv.grad();
      for (int64_t r = 0; r < rows; ++r) {
        const int64_t base = r * d;
        for (int j = 0; j < d; j += 2) {
          const double c = pc2[base + j], s = ps2[base + j];
          const double ge = g[base + j], go = g[base + j + 1];
          gx[base + j] += ge * c + go * s;
          gx[base + j + 1] += -ge * s + go * c;
        }
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& x, int row0, int rows) {
  require_2d("slice_rows", x);
  const int s = x.dim(0), d = x.dim(1);
  if (row0 < 0 || rows <= 0 || row0 + rows > s)
    throw std::runtime_error("slice_rows: range [" + std::to_string(row0) + "," +
                             std::to_string(row0 + rows) + ") out of " + std::to_string(s));
  Tensor out = out_like({rows, d}, x.requires_grad());
  std::memcpy(out.data(), x.data() + (int64_t)row0 * d, sizeof(double) * (size_t)rows * d);
  if (tracing(x)) {
    Tensor xv = x, ov = out;
    Tape::active()->record([xv, ov, row0, rows, d]() mutable {
      const double* g = ov.grad();
      double* gx = xv.grad() + (int64_t)row0 * d;
      for (int64_t i = 0; i < (int64_t)rows * d; ++i) gx[i] += g[i];
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, int col0, int cols) {
  require_2d("slice_cols", x);
  const int s = x.dim(0), d = x.dim(1);
  if (col0 < 0 || cols <= 0 || col0 + cols > d)
    throw std::runtime_error("slice_cols: range [" + std::to_string(col0) + "," +
                             std::to_string(col0 + cols) + ") out of " + std::to_string(d));
  Tensor out = out_like({s, cols}, x.requires_grad());
  const double* px = x.data();
  double* po = out.data();
  for (int i = 0; i < s; ++i)
    std::memcpy(po + (int64_t)i * cols, px + (int64_t)i * d + col0, sizeof(double) * (size_t)cols);
  if (tracing(x)) {
    Tensor xv = x, ov = out;
    Tape::active()->record([xv, ov, col0, cols, s, d]() mutable {
      const double* g = ov.grad();
      double* gx = xv.grad();
      for (int i = 0; i < s; ++i)
        for (int j = 0; j < cols; ++j) gx[(int64_t)i * d + col0 + j] += g[(int64_t)i * cols + j];
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::runtime_error("concat_rows: empty input");
  const int d = xs[0].dim(1);
  int total = 0;
  bool req = false;
  for (const auto& t : xs) {
    require_2d("concat_rows", t);
    if (t.dim(1) != d) throw std::runtime_error("concat_rows: column mismatch");
    total += t.dim(0);
    req = req || t.requires_grad();
  }
  Tensor out = out_like({total, d}, req);
  double* po = out.data();
  int row = 0;
  for (const auto& t : xs) {
    std::memcpy(po + (int64_t)row * d, t.data(), sizeof(double) * (size_t)t.numel());
    row += t.dim(0);
  }
  if (Tape::active() && req) {
    std::vector<Tensor> parts = xs;
    Tensor ov = out;
    Tape::active()->record([parts, ov, d]() mutable {
      const double* g = ov.grad();
      int r = 0;
      for (auto& t : parts) {
        if (t.requires_grad()) {
          double* gt = t.grad();
          const double* gsrc = g + (int64_t)r * d;
          for (int64_t i = 0; i < t.numel(); ++i) gt[i] += gsrc[i];
        }
        r += t.dim(0);
      }
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::runtime_error("concat_cols: empty input");
  const int s = xs[0].dim(0);
  int total = 0;
  bool req = false;
  for (const auto& t : xs) {
    require_2d("concat_cols", t);
    if (t.dim(0) != s) throw std::runtime_error("concat_cols: row mismatch");
    total += t.dim(1);
    req = req || t.requires_grad();
  }
  Tensor out = out_like({s, total}, req);
  double* po = out.data();
  int col = 0;
  for (const auto& t : xs) {
    const int d = t.dim(1);
    const double* pt = t.data();
    for (int i = 0; i < s; ++i)
      std::memcpy(po + (int64_t)i * total + col, pt + (int64_t)i * d, sizeof(double) * (size_t)d);
    col += d;
  }
  if (Tape::active() && req) {
    std::vector<Tensor> parts = xs;
    Tensor ov = out;
    Tape::active()->record([parts, ov, s, total]() mutable {
      const double* g = ov.grad();
      int c = 0;
      for (auto& t : parts) {
        const int d = t.dim(1);
        if (t.requires_grad()) {
          double* gt = t.grad();
          for (int i = 0; i < s; ++i)
            for (int j = 0; j < d; ++j) gt[(int64_t)i * d + j] += g[(int64_t)i * total + c + j];
        }
        c += d;
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, std::vector<int> new_shape) {
  Tensor out = x.reshape(std::move(new_shape));
  // fresh grad buffer on the view; route it back to x on the tape
  if (tracing(x)) {
    Tensor xv = x, ov = out;
    Tape::active()->record([xv, ov]() mutable {
      const double* g = ov.grad();
      double* gx = xv.grad();
      for (int64_t i = 0; i < xv.numel(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

// token t = (bi, bj) block; feature = (pi*p + pj)*3 + c
Tensor patchify(const Tensor& img, int patch) {
  if (img.ndim() != 3 || img.dim(2) != 3)
    throw std::runtime_error("patchify: expected [h,w,3], got " + shape_str(img.shape()));
  const int h = img.dim(0), w = img.dim(1), p = patch;
  if (p <= 0 || h % p != 0 || w % p != 0)
    throw std::runtime_error("patchify: image " + shape_str(img.shape()) +
                             " not divisible by patch " + std::to_string(p));
  const int gh = h / p, gw = w / p;
  const int tokens = gh * gw, feat = p * p * 3;
  Tensor out = out_like({tokens, feat}, img.requires_grad());
  const double* pi = img.data();
  double* po = out.data();
  for (int bi = 0; bi < gh; ++bi)
    for (int bj = 0; bj < gw; ++bj) {
      double* tok = po + (int64_t)(bi * gw + bj) * feat;
      for (int y = 0; y < p; ++y)
        for (int x = 0; x < p; ++x)
          for (int c = 0; c < 3; ++c)
            tok[(y * p + x) * 3 + c] = pi[(((int64_t)(bi * p + y) * w) + (bj * p + x)) * 3 + c];
    }
  if (tracing(img)) {
    Tensor iv = img, ov = out;
    Tape::active()->record([iv, ov, gh, gw, p, w, feat]() mutable {
      const double* g = ov.grad();
      double* gi = iv.grad();
      for (int bi = 0; bi < gh; ++bi)
        for (int bj = 0; bj < gw; ++bj) {
          const double* tok = g + (int64_t)(bi * gw + bj) * feat;
          for (int y = 0; y < p; ++y)
            for (int x = 0; x < p; ++x)
              for (int c = 0; c < 3; ++c)
                gi[(((int64_t)(bi * p + y) * w) + (bj * p + x)) * 3 + c] +=
                    tok[(y * p + x) * 3 + c];
        }
    });
  }
  return out;
}

Tensor unpatchify(const Tensor& tokens, int h, int w, int patch) {
  require_2d("unpatchify", tokens);
  const int p = patch, gh = h / p, gw = w / p;
  if (h % p != 0 || w % p != 0 || tokens.dim(0) != gh * gw || tokens.dim(1) != p * p * 3)
    throw std::runtime_error("unpatchify: tokens " + shape_str(tokens.shape()) +
                             " do not tile " + std::to_string(h) + "x" + std::to_string(w));
  const int feat = p * p * 3;
  Tensor out = out_like({h, w, 3}, tokens.requires_grad());
  const double* pt = tokens.data();
  double* po = out.data();
  for (int bi = 0; bi < gh; ++bi)
    for (int bj = 0; bj < gw; ++bj) {
      const double* tok = pt + (int64_t)(bi * gw + bj) * feat;
      for (int y = 0; y < p; ++y)
        for (int x = 0; x < p; ++x)
          for (int c = 0; c < 3; ++c)
            po[(((int64_t)(bi * p + y) * w) + (bj * p + x)) * 3 + c] = tok[(y * p + x) * 3 + c];
    }
  if (tracing(tokens)) {
    Tensor tv = tokens, ov = out;
    Tape::active()->record([tv, ov, gh, gw, p, w, feat]() mutable {
      const double* g = ov.grad();
      double* gt = tv.grad();
      for (int bi = 0; bi < gh; ++bi)
        for (int bj = 0; bj < gw; ++bj) {
          double* tok = gt + (int64_t)(bi * gw + bj) * feat;
          for (int y = 0; y < p; ++y)
            for (int x = 0; x < p; ++x)
              for (int c = 0; c < 3; ++c)
                tok[(y * p + x) * 3 + c] +=
                    g[(((int64_t)(bi * p + y) * w) + (bj * p + x)) * 3 + c];
        }
    });
  }
  return out;
}

// ---- gradient checking ------------------------------------------------------

namespace {

// normwise relative error between gradient vectors; per-coordinate ratios are
// meaningless at the finite-difference noise floor (~|f| eps / 2h)
double vec_rel_err(const std::vector<double>& a, const std::vector<double>& n) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn += n[i] * n[i];
  }
  return std::sqrt(diff) / std::max(1e-8, std::sqrt(na) + std::sqrt(nn));
}

}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  Tensor xg = Tensor::from_data(x.shape(), std::vector<double>(x.data(), x.data() + x.numel()),
                                true);
  {
    Tape tape;
    Tensor loss = f(xg);
    tape.backward(loss);
  }
  std::vector<double> analytic(xg.grad(), xg.grad() + xg.numel());
  std::vector<double> numeric(analytic.size());
  Tensor xp = Tensor::from_data(x.shape(), std::vector<double>(x.data(), x.data() + x.numel()));
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double saved = xp.data()[i];
    xp.data()[i] = saved + h;
    const double fp = f(xp).item();
    xp.data()[i] = saved - h;
    const double fm = f(xp).item();
    xp.data()[i] = saved;
    numeric[(size_t)i] = (fp - fm) / (2.0 * h);
  }
  return vec_rel_err(analytic, numeric);
}

double grad_check_params(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                         double h) {
  std::vector<std::vector<double>> analytic;
  {
    for (auto p : params) p.zero_grad();
    Tape tape;
    Tensor loss = f();
    tape.backward(loss);
    for (auto p : params) {
      const double* g = p.grad();
      analytic.emplace_back(g, g + p.numel());
    }
  }
  double max_err = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    std::vector<double> numeric((size_t)p.numel());
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double saved = p.data()[i];
      p.data()[i] = saved + h;
      const double fp = f().item();
      p.data()[i] = saved - h;
      const double fm = f().item();
      p.data()[i] = saved;
      numeric[(size_t)i] = (fp - fm) / (2.0 * h);
    }
    max_err = std::max(max_err, vec_rel_err(analytic[pi], numeric));
  }
  return max_err;
}

}  // namespace lb
