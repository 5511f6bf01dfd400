#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vitprobe/data.hpp"
#include "vitprobe/probe.hpp"
#include "vitprobe/vit.hpp"
#include "vitprobe/weights_io.hpp"

namespace vitprobe {

/// CLS features at every requested tap, captured in a single forward pass
/// over the dataset (eval preprocessing). Batches run in parallel; each sample
/// is computed independently so the result does not depend on `threads`.
FeatureSet extract_features(const Dataset& data, const ModelWeights<float>& w, const ModelConfig& cfg,
                            const std::vector<TapId>& taps, std::size_t batch_size = 256, std::size_t threads = 1);

struct SweepPlan {
  ModelConfig config;
  ModelWeights<float> weights;
  Dataset train;
  Dataset test;
  std::vector<TapId> taps;  // empty = all 8 * L taps
  FitConfig fit;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t batch_size = 256;
  /// When set, features are spilled to train.vitf / test.vitf here and the
  /// fits read them back.
  std::optional<std::filesystem::path> cache_dir;
  std::string dataset_name;  // empty = test.name

  void validate() const;
  std::vector<TapId> resolved_taps() const;
};

/// entries[layer][module]; unset for taps that were not requested.
struct AccuracyMatrix {
  std::size_t num_blocks = 0;
  std::vector<std::array<std::optional<double>, 8>> entries;

  explicit AccuracyMatrix(std::size_t blocks = 0) : num_blocks(blocks), entries(blocks) {}
  double depth_pct(std::size_t layer) const;
  void set(const TapId& tap, double accuracy);
  std::optional<double> get(const TapId& tap) const;
  double at(std::size_t layer, Module m) const;  // throws Evaluation when unset
  bool complete_for(Module m) const;
};

struct SweepRow {
  std::string dataset;
  std::string corruption_kind = "none";
  int severity = 0;
  std::size_t layer = 0;
  Module module = Module::RC2;
  double depth_pct = 0.0;
  double accuracy = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  bool converged = false;
  std::uint64_t seed = 0;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

struct FitDiagnostics {
  TapId tap;
  double final_loss = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

struct SweepReport {
  std::size_t num_blocks = 0;
  std::vector<SweepRow> rows;  // ordered by (layer, module)
  std::vector<FitDiagnostics> diagnostics;
  double wall_seconds = 0.0;  // not serialized

  AccuracyMatrix matrix() const;
};

SweepReport run_sweep(const SweepPlan& plan);

std::string report_to_csv(const SweepReport& report);
SweepReport report_from_csv(std::string_view text, const std::string& origin = "<memory>");
void save_report(const SweepReport& report, const std::filesystem::path& path);
SweepReport load_report(const std::filesystem::path& path);

struct ModuleBest {
  double accuracy = 0.0;
  std::size_t layer = 0;
};

/// Max over layers per module; ties resolve to the earliest layer. Modules
/// with no complete column are omitted.
std::map<Module, ModuleBest> best_per_module(const AccuracyMatrix& matrix);

inline constexpr double kOodThreshold = 0.02;
/// Accuracies are ratios of counts, so their differences carry rounding
/// error; gaps within this slack of a threshold count as equal to it.
inline constexpr double kGapSlack = 1e-9;

struct OodSignature {
  bool ood_like = false;
  double gap = 0.0;  // max over layers - final layer; OOD-like when gap > tau + kGapSlack
  std::size_t best_layer = 0;
};

OodSignature ood_signature(const AccuracyMatrix& matrix, Module module, double tau = kOodThreshold);

/// One row per (dataset, corruption, severity, module) group across reports.
std::string best_per_module_csv(const std::vector<SweepReport>& reports, double tau = kOodThreshold);

/// Depth-profile plot: one polyline per module, x = depth %, y = accuracy.
std::string depth_profile_svg(const SweepReport& report, const std::string& title);

}  // namespace vitprobe
