#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vitprobe/tensor.hpp"

namespace vitprobe {

// All reductions below accumulate sequentially in ascending index order, so
// results are bit-reproducible for a given build.

/// a[m x k] * b[k x p]
template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// a^T * b with a[k x m], b[k x p] -> [m x p]
template <class T>
BasicTensor<T> matmul_tn(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// a * b^T with a[m x k], b[p x k] -> [m x p]
template <class T>
BasicTensor<T> matmul_nt(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Per-row normalization over the last axis with biased variance.
template <class T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, T eps);

/// Max-subtracted softmax over the last axis.
template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& x);

/// Exact GeLU: x * Phi(x).
template <class T>
BasicTensor<T> gelu(const BasicTensor<T>& x);

template <class T>
T gelu_scalar(T x) noexcept;

/// d gelu / dx = Phi(x) + x * phi(x).
template <class T>
T gelu_derivative(T x) noexcept;

template <class T>
struct ClipResult {
  std::vector<BasicTensor<T>> tensors;
  double pre_clip_norm = 0.0;
};

/// Rescales the collection so its global L2 norm is at most max_norm.
template <class T>
ClipResult<T> clip_global_norm(std::vector<BasicTensor<T>> grads, double max_norm);

/// In-place variant; returns the pre-clip global norm.
template <class T>
double clip_global_norm_inplace(std::span<BasicTensor<T>* const> grads, double max_norm);

template <class T>
double global_norm(std::span<const BasicTensor<T>* const> tensors);

namespace kernels {

// Raw row-major kernels shared by the model code. `accumulate` adds into c
// instead of overwriting it.
template <class T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t p, bool accumulate);
template <class T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t k, std::size_t m, std::size_t p, bool accumulate);
template <class T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t p, bool accumulate);

/// Normalizes each of `rows` rows of width d; writes per-row mean and
/// reciprocal std when the outputs are non-null.
template <class T>
void layer_norm_rows(const T* x, const T* gamma, const T* beta, T* y, std::size_t rows, std::size_t d,
                     T eps, T* mean_out, T* rstd_out);

template <class T>
void softmax_row(T* row, std::size_t k);

}  // namespace kernels

}  // namespace vitprobe
