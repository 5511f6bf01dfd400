#pragma once

// Independent reference implementations used by the unit and acceptance
// suites. Nothing here is used by the library itself.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vitprobe/tensor.hpp"
#include "vitprobe/vit.hpp"

namespace vitprobe::oracle {

/// Textbook triple loop, accumulated in long double.
Tensor64 naive_matmul(const Tensor64& a, const Tensor64& b);

/// Seeded uniform(-scale, scale) tensor.
template <class T>
BasicTensor<T> random_tensor(const Shape& shape, std::uint64_t seed, double scale = 1.0);

/// Generic weights for derivative checks: matrices ~ N(0, 1/fan_in) scaled by
/// `scale`, biases and betas ~ 0.1 N(0,1), gammas ~ 1 + 0.1 N(0,1).
ModelWeights<double> random_weights(const ModelConfig& cfg, std::uint64_t seed, double scale = 1.0);

struct GradCheckTensor {
  std::string name;
  std::size_t total = 0;
  std::size_t checked = 0;   // entries perturbed
  std::size_t compared = 0;  // entries above the magnitude floor
  double max_rel_error = 0.0;
  double worst_analytic = 0.0;  // analytic value at the worst entry
  double worst_numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckTensor> tensors;
  double max_rel_error = 0.0;
  std::size_t loss_evaluations = 0;
};

/// Central finite differences of the mean cross-entropy against the analytic
/// gradient. Tensors with more than `max_entries` entries are checked on a
/// seeded sample. Relative error is |a - n| / max(|a|, |n|) over entries with
/// max(|a|, |n|) > floor. Perturbations only recompute from the first block
/// they affect.
GradCheckReport gradient_check(const ModelConfig& cfg, const ModelWeights<double>& w, const Tensor64& images,
                               std::span<const std::int32_t> labels, double step, std::size_t max_entries,
                               std::uint64_t seed, double floor = 1e-6);

/// Gaussian elimination with partial pivoting (row-major n x n).
std::vector<double> dense_solve(std::vector<double> a, std::vector<double> b);

/// Exhaustive search over hyperplanes through pairs of points (with small
/// rotations / offsets) for a 2-D two-class separator.
bool separable_2d(std::span<const std::pair<double, double>> points, std::span<const int> labels);

/// Perceptron with bias; true when an epoch passes without mistakes.
bool perceptron_separable(const std::vector<std::vector<double>>& x, std::span<const int> labels,
                          std::size_t max_epochs);

/// Two-sided exact binomial interval on the success fraction, each tail at
/// most alpha / 2.
std::pair<double, double> binomial_fraction_bounds(std::size_t n, double p, double alpha);

/// Parameter count walked from the config formulas.
std::size_t walk_parameter_count(std::size_t image, std::size_t patch, std::size_t channels, std::size_t d,
                                 std::size_t blocks, std::size_t ffn, std::size_t classes);

/// Std of N(0, sigma^2) truncated to +-k sigma.
double truncated_normal_std(double sigma, double k);

/// Std of N(0, sigma^2) censored (clipped) to [-a, a].
double censored_normal_std(double sigma, double a);

}  // namespace vitprobe::oracle
