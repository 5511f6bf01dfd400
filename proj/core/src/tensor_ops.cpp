#include "vitprobe/tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace vitprobe {

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace kernels {

template <class T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t p, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * p, T{0});
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * p;
    const T* arow = a + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T aik = arow[kk];
      const T* brow = b + kk * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
    }
  }
}

template <class T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t k, std::size_t m, std::size_t p, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * p, T{0});
  for (std::size_t kk = 0; kk < k; ++kk) {
    const T* arow = a + kk * m;
    const T* brow = b + kk * p;
    for (std::size_t i = 0; i < m; ++i) {
      const T aki = arow[i];
      T* crow = c + i * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += aki * brow[j];
    }
  }
}

template <class T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t p, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < p; ++j) {
      const T* brow = b + j * k;
      T acc{0};
      for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      if (accumulate) {
        c[i * p + j] += acc;
      } else {
        c[i * p + j] = acc;
      }
    }
  }
}

template <class T>
void layer_norm_rows(const T* x, const T* gamma, const T* beta, T* y, std::size_t rows, std::size_t d,
                     T eps, T* mean_out, T* rstd_out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * d;
    T* yr = y + r * d;
    T mean{0};
    for (std::size_t i = 0; i < d; ++i) mean += xr[i];
    mean /= static_cast<T>(d);
    T var{0};
    for (std::size_t i = 0; i < d; ++i) {
      const T c = xr[i] - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T rstd = T{1} / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) yr[i] = (xr[i] - mean) * rstd * gamma[i] + beta[i];
    if (mean_out) mean_out[r] = mean;
    if (rstd_out) rstd_out[r] = rstd;
  }
}

template <class T>
void softmax_row(T* row, std::size_t k) {
  T mx = row[0];
  for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, row[i]);
  T sum{0};
  for (std::size_t i = 0; i < k; ++i) {
    row[i] = std::exp(row[i] - mx);
    sum += row[i];
  }
  const T inv = T{1} / sum;
  for (std::size_t i = 0; i < k; ++i) row[i] *= inv;
}

}  // namespace kernels

namespace {

template <class T>
void require_matrix(const BasicTensor<T>& t, const char* name) {
  if (t.rank() != 2) {
    fail(ErrorKind::Dimension, std::string(name) + " must be a matrix, got shape " + shape_string(t.shape()));
  }
}

template <class T>
[[noreturn]] void mismatch(const char* op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  fail(ErrorKind::Dimension,
       std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
}

}  // namespace

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_matrix(a, "matmul lhs");
  require_matrix(b, "matmul rhs");
  if (a.extent(1) != b.extent(0)) mismatch("matmul", a, b);
  BasicTensor<T> c({a.extent(0), b.extent(1)});
  kernels::gemm(a.data().data(), b.data().data(), c.data().data(), a.extent(0), a.extent(1), b.extent(1),
                false);
  return c;
}

template <class T>
BasicTensor<T> matmul_tn(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_matrix(a, "matmul_tn lhs");
  require_matrix(b, "matmul_tn rhs");
  if (a.extent(0) != b.extent(0)) mismatch("matmul_tn", a, b);
  BasicTensor<T> c({a.extent(1), b.extent(1)});
  kernels::gemm_tn(a.data().data(), b.data().data(), c.data().data(), a.extent(0), a.extent(1), b.extent(1),
                   false);
  return c;
}

template <class T>
BasicTensor<T> matmul_nt(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_matrix(a, "matmul_nt lhs");
  require_matrix(b, "matmul_nt rhs");
  if (a.extent(1) != b.extent(1)) mismatch("matmul_nt", a, b);
  BasicTensor<T> c({a.extent(0), b.extent(0)});
  kernels::gemm_nt(a.data().data(), b.data().data(), c.data().data(), a.extent(0), a.extent(1), b.extent(0),
                   false);
  return c;
}

template <class T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                          T eps) {
  const std::size_t d = x.cols();
  if (gamma.size() != d || beta.size() != d) {
    fail(ErrorKind::Dimension, "layer_norm: input " + shape_string(x.shape()) + " vs gamma " +
                                   shape_string(gamma.shape()) + " / beta " + shape_string(beta.shape()));
  }
  if (!(eps >= T{0})) fail(ErrorKind::Spec, "layer_norm: eps must be non-negative");
  BasicTensor<T> y(x.shape());
  kernels::layer_norm_rows(x.data().data(), gamma.data().data(), beta.data().data(), y.data().data(), x.rows(),
                           d, eps, static_cast<T*>(nullptr), static_cast<T*>(nullptr));
  return y;
}

template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  for (std::size_t r = 0; r < y.rows(); ++r) kernels::softmax_row(y.row(r).data(), y.cols());
  return y;
}

namespace {

// Phi(x) = erfc(-x / sqrt 2) / 2 keeps full relative precision in the left
// tail, where 1 + erf(.) would cancel.
template <class T>
T normal_cdf(T x) noexcept {
  return T{0.5} * std::erfc(-x * std::numbers::sqrt2_v<T> / T{2});
}

}  // namespace

template <class T>
T gelu_scalar(T x) noexcept {
  return x * normal_cdf(x);
}

template <class T>
T gelu_derivative(T x) noexcept {
  const T cdf = normal_cdf(x);
  const T pdf = std::exp(T{-0.5} * x * x) * std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
  return cdf + x * pdf;
}

template <class T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  for (auto& v : y.storage()) v = gelu_scalar(v);
  return y;
}

template <class T>
double global_norm(std::span<const BasicTensor<T>* const> tensors) {
  double sq = 0.0;
  for (const auto* t : tensors) {
    for (T v : t->data()) sq += static_cast<double>(v) * static_cast<double>(v);
  }
  return std::sqrt(sq);
}

template <class T>
double clip_global_norm_inplace(std::span<BasicTensor<T>* const> grads, double max_norm) {
  if (!(max_norm > 0.0)) fail(ErrorKind::Spec, "clip_global_norm: max_norm must be positive");
  std::vector<const BasicTensor<T>*> view(grads.begin(), grads.end());
  const double norm = global_norm<T>(view);
  if (norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    for (auto* g : grads) {
      for (auto& v : g->storage()) v *= scale;
    }
  }
  return norm;
}

template <class T>
ClipResult<T> clip_global_norm(std::vector<BasicTensor<T>> grads, double max_norm) {
  std::vector<BasicTensor<T>*> ptrs;
  ptrs.reserve(grads.size());
  for (auto& g : grads) ptrs.push_back(&g);
  const double norm = clip_global_norm_inplace<T>(ptrs, max_norm);
  return {std::move(grads), norm};
}

#define VITPROBE_INSTANTIATE(T)                                                                          \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                          \
  template BasicTensor<T> matmul_tn(const BasicTensor<T>&, const BasicTensor<T>&);                       \
  template BasicTensor<T> matmul_nt(const BasicTensor<T>&, const BasicTensor<T>&);                       \
  template BasicTensor<T> layer_norm(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                     T);                                                                 \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                                \
  template BasicTensor<T> gelu(const BasicTensor<T>&);                                                   \
  template T gelu_scalar(T) noexcept;                                                                    \
  template T gelu_derivative(T) noexcept;                                                                \
  template ClipResult<T> clip_global_norm(std::vector<BasicTensor<T>>, double);                          \
  template double clip_global_norm_inplace(std::span<BasicTensor<T>* const>, double);                    \
  template double global_norm(std::span<const BasicTensor<T>* const>);                                   \
  template void kernels::gemm(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, bool);      \
  template void kernels::gemm_tn(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, bool);   \
  template void kernels::gemm_nt(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, bool);   \
  template void kernels::layer_norm_rows(const T*, const T*, const T*, T*, std::size_t, std::size_t, T, T*, \
                                         T*);                                                            \
  template void kernels::softmax_row(T*, std::size_t);

VITPROBE_INSTANTIATE(float)
VITPROBE_INSTANTIATE(double)

#undef VITPROBE_INSTANTIATE

}  // namespace vitprobe
