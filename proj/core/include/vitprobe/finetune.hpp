#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "vitprobe/data.hpp"
#include "vitprobe/vit.hpp"

namespace vitprobe {

struct TrainConfig {
  double base_lr = 1e-2;  // used only when lr_grid is empty
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::size_t batch_size = 64;
  std::size_t total_steps = 500;
  std::size_t eval_interval = 50;
  double clip_norm = 1.0;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
  std::vector<double> lr_grid = {1e-3, 3e-3, 1e-2, 3e-2};
  std::size_t threads = 1;  // concurrent lr-grid runs

  void validate() const;
  std::vector<double> effective_grid() const;
};

/// eta * 0.5 * (1 + cos(pi * step / total_steps)); no warmup.
double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr);

/// Classic momentum: v <- momentum * v + g; w <- w - lr * v.
void sgd_momentum_step(ModelWeights<float>& w, const ModelWeights<float>& grads, ModelWeights<float>& velocity,
                       double lr, double momentum);

struct Checkpoint {
  std::size_t step = 0;
  double lr = 0.0;  // base lr of the run that produced it
  ModelWeights<float> weights;
  double val_accuracy = 0.0;
};

struct TrainLogRow {
  std::size_t step = 0;  // 1-based count of completed updates
  double lr_current = 0.0;
  double lr_base = 0.0;
  double train_loss = 0.0;
  double grad_norm_preclip = 0.0;
  std::optional<double> val_accuracy;
};

struct RunLog {
  double lr_base = 0.0;
  std::vector<TrainLogRow> rows;       // one per step
  std::vector<TrainLogRow> evaluations;  // rows where validation ran
};

struct FinetuneResult {
  Checkpoint best;
  std::vector<RunLog> runs;  // in lr-grid order
};

/// Validation indices are the last val_fraction of `train` in its given
/// order; the rest are optimized.
FinetuneResult finetune(const Dataset& train, const ModelWeights<float>& initial, const ModelConfig& cfg,
                        const TrainConfig& tc);

/// Top-1 accuracy of the classifier head under eval preprocessing.
double classification_accuracy(const Dataset& data, const ModelWeights<float>& w, const ModelConfig& cfg,
                               std::size_t batch_size = 256);

/// step,lr_current,lr_base,train_loss,grad_norm_preclip,val_accuracy
std::string train_log_csv(const FinetuneResult& result);

}  // namespace vitprobe
