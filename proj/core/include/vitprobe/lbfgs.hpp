#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace vitprobe {

/// Objective callback: returns f(x) and writes the gradient into `grad`.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct LbfgsOptions {
  double tol = 1e-5;              // stop when ||grad||_inf < tol
  std::size_t max_iter = 200;
  std::size_t history = 10;       // curvature pairs kept
  double c1 = 1e-4;               // sufficient decrease
  double c2 = 0.9;                // curvature
  std::size_t max_linesearch = 20;  // function evaluations per line search
  double curvature_eps = 1e-10;   // pairs with s.y <= this are skipped

  void validate() const;
};

enum class LbfgsStatus { Converged, MaxIterations, LineSearchFailed };

struct LbfgsResult {
  std::vector<double> x;
  double f = 0.0;
  double grad_inf_norm = 0.0;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  bool converged = false;
  LbfgsStatus status = LbfgsStatus::MaxIterations;
  std::vector<double> f_history;  // objective after each accepted iteration, starting with f(x0)
};

/// Limited-memory BFGS: two-loop recursion, strong-Wolfe line search with
/// cubic interpolation. The first step is steepest descent with initial step
/// length 1 / ||g0||. On line-search failure the best point seen is returned
/// with converged = false.
LbfgsResult lbfgs_minimize(const Objective& f, std::vector<double> x0, const LbfgsOptions& options = {});

}  // namespace vitprobe
