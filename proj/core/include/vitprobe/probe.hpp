#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "vitprobe/lbfgs.hpp"
#include "vitprobe/tensor.hpp"
#include "vitprobe/vit.hpp"

namespace vitprobe {

struct FitConfig {
  double l2 = 1e-4;
  double tol = 1e-5;
  std::size_t max_iter = 200;
  std::size_t history = 10;
  double c1 = 1e-4;
  double c2 = 0.9;

  void validate() const;
  LbfgsOptions lbfgs_options() const;
};

struct FeatureMatrix {
  Tensor features;  // [N x D]
  std::vector<std::int32_t> labels;
  std::optional<TapId> tap;

  std::size_t rows() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols(); }
  /// Shape agreement, finite values, non-negative labels.
  void validate() const;
};

/// Per-dimension mean / std computed on training rows.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> std;
};

inline constexpr double kStdFloor = 1e-8;

Standardization compute_standardization(const Tensor& features);
Tensor64 standardize(const Tensor& features, const Standardization& stats);

struct ProbeModel {
  Tensor64 weights;  // [D x C]
  std::vector<double> bias;
  Standardization stats;
  std::size_t num_classes = 0;
  std::optional<TapId> tap;
  double final_loss = 0.0;
  std::size_t iterations = 0;
  bool converged = false;

  std::size_t dim() const noexcept { return weights.rows(); }
};

struct LossGrad {
  double loss = 0.0;
  Tensor64 grad_w;  // [D x C]
  std::vector<double> grad_b;
};

/// Mean softmax cross-entropy plus (l2 / 2) * ||W||_F^2 (bias unregularized).
LossGrad softmax_xent_loss_grad(const Tensor64& w, std::span<const double> b, const Tensor64& x,
                                std::span<const std::int32_t> y, double l2);

/// The probe objective over the packed parameter vector [W row-major, b].
Objective probe_objective(const Tensor64& x, std::span<const std::int32_t> y, std::size_t num_classes, double l2);

/// Standardizes with train statistics and minimizes the regularized objective
/// from W = 0, b = 0 (or `initial`, packed as [W, b]). `num_classes` = 0
/// infers max(label) + 1.
ProbeModel fit_probe(const FeatureMatrix& train, const FitConfig& cfg = {}, std::size_t num_classes = 0,
                     std::span<const double> initial = {});

/// Class scores for raw (unstandardized) features.
Tensor64 probe_logits(const ProbeModel& model, const Tensor& features);
/// Argmax with ties resolved to the lowest class index.
std::vector<std::int32_t> predict(const ProbeModel& model, const Tensor& features);
double evaluate_accuracy(const ProbeModel& model, const FeatureMatrix& test);

/// Probe stored in a "VITF" container (kind = "probe").
void save_probe(const ProbeModel& model, const std::filesystem::path& path);
ProbeModel load_probe(const std::filesystem::path& path);

}  // namespace vitprobe
