#include "vitprobe/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vitprobe/grad.hpp"
#include "vitprobe/rng.hpp"
#include "vitprobe/tensor_ops.hpp"
#include "format.hpp"
#include "parallel.hpp"

namespace vitprobe {

void TrainConfig::validate() const {
  if (!(momentum >= 0.0 && momentum < 1.0)) fail(ErrorKind::Spec, "momentum must be in [0, 1)");
  if (total_steps == 0) fail(ErrorKind::Spec, "total_steps must be positive");
  if (batch_size == 0) fail(ErrorKind::Spec, "batch_size must be positive");
  if (eval_interval == 0) fail(ErrorKind::Spec, "eval_interval must be positive");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) fail(ErrorKind::Spec, "val_fraction must be in (0, 1)");
  if (!(clip_norm > 0.0)) fail(ErrorKind::Spec, "clip_norm must be positive");
  if (weight_decay < 0.0) fail(ErrorKind::Spec, "weight_decay must be non-negative");
  for (double lr : lr_grid) {
    if (!(lr > 0.0)) fail(ErrorKind::Spec, "learning rates must be positive");
  }
}

std::vector<double> TrainConfig::effective_grid() const {
  return lr_grid.empty() ? std::vector<double>{base_lr} : lr_grid;
}

double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr) {
  if (total_steps == 0) fail(ErrorKind::Schedule, "total_steps must be positive");
  if (step > total_steps) {
    fail(ErrorKind::Schedule, "step " + std::to_string(step) + " exceeds total_steps " + std::to_string(total_steps));
  }
  if (step == total_steps) return 0.0;
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void sgd_momentum_step(ModelWeights<float>& w, const ModelWeights<float>& grads, ModelWeights<float>& velocity,
                       double lr, double momentum) {
  std::vector<const Tensor*> g;
  grads.for_each([&](const std::string&, const Tensor& t) { g.push_back(&t); });
  std::vector<Tensor*> v;
  velocity.for_each([&](const std::string&, Tensor& t) { v.push_back(&t); });
  std::size_t i = 0;
  const auto mu = static_cast<float>(momentum);
  const auto eta = static_cast<float>(lr);
  w.for_each([&](const std::string& name, Tensor& t) {
    if (t.shape() != g[i]->shape() || t.shape() != v[i]->shape()) {
      fail(ErrorKind::Dimension, "sgd step: shape mismatch for " + name);
    }
    float* wp = t.data().data();
    const float* gp = g[i]->data().data();
    float* vp = v[i]->data().data();
    for (std::size_t k = 0; k < t.size(); ++k) {
      vp[k] = mu * vp[k] + gp[k];
      wp[k] -= eta * vp[k];
    }
    ++i;
  });
}

double classification_accuracy(const Dataset& data, const ModelWeights<float>& w, const ModelConfig& cfg,
                               std::size_t batch_size) {
  if (data.size() == 0) fail(ErrorKind::Data, "cannot evaluate on an empty dataset");
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    idx.resize(end - start);
    for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
    const Tensor logits = forward_logits(preprocess_eval(data.gather(idx), cfg.image_size), w, cfg);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      const auto row = logits.row(r);
      const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      if (static_cast<std::int32_t>(best) == data.labels[start + r]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

struct RunOutcome {
  RunLog log;
  Checkpoint best;
};

RunOutcome train_one(const Dataset& fit, const Dataset& val, const ModelWeights<float>& initial,
                     const ModelConfig& cfg, const TrainConfig& tc, double lr_base) {
  RunOutcome out;
  out.log.lr_base = lr_base;
  ModelWeights<float> w = initial;
  ModelWeights<float> velocity = zero_weights<float>(cfg);
  bool have_best = false;

  const std::size_t n = fit.size();
  std::vector<std::size_t> order(n);
  std::size_t cursor = n;  // forces a shuffle on the first step
  std::size_t epoch = 0;
  std::vector<std::size_t> batch_idx;
  std::vector<std::int32_t> batch_labels;

  for (std::size_t t = 0; t < tc.total_steps; ++t) {
    batch_idx.clear();
    batch_labels.clear();
    while (batch_idx.size() < std::min(tc.batch_size, n)) {
      if (cursor == n) {
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        KeyedRng rng(combine_key(tc.seed, 0x65706f6368ULL + epoch++));
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
        cursor = 0;
      }
      batch_idx.push_back(order[cursor++]);
    }
    for (std::size_t i : batch_idx) batch_labels.push_back(fit.labels[i]);

    const Tensor images = preprocess_train(fit.gather(batch_idx), cfg.image_size, combine_key(tc.seed, 0x100000000ULL + t));
    LossAndGrads<float> lg = loss_and_grads(images, batch_labels, w, cfg);
    if (tc.weight_decay > 0.0) {
      std::vector<const Tensor*> params;
      w.for_each([&](const std::string&, const Tensor& p) { params.push_back(&p); });
      std::size_t i = 0;
      const auto wd = static_cast<float>(tc.weight_decay);
      lg.grads.for_each([&](const std::string&, Tensor& g) {
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += wd * (*params[i])[k];
        ++i;
      });
    }
    std::vector<Tensor*> gptrs;
    lg.grads.for_each([&](const std::string&, Tensor& g) { gptrs.push_back(&g); });
    const double preclip = clip_global_norm_inplace<float>(gptrs, tc.clip_norm);
    const double lr = cosine_lr(t, tc.total_steps, lr_base);
    sgd_momentum_step(w, lg.grads, velocity, lr, tc.momentum);

    TrainLogRow row{t + 1, lr, lr_base, lg.loss, preclip, std::nullopt};
    const std::size_t step = t + 1;
    if (step % tc.eval_interval == 0 || step == tc.total_steps) {
      const double acc = classification_accuracy(val, w, cfg);
      row.val_accuracy = acc;
      out.log.evaluations.push_back(row);
      // strictly greater: ties keep the earlier step
      if (!have_best || acc > out.best.val_accuracy) {
        out.best = Checkpoint{step, lr_base, w, acc};
        have_best = true;
      }
    }
    out.log.rows.push_back(row);
  }
  return out;
}

}  // namespace

FinetuneResult finetune(const Dataset& train, const ModelWeights<float>& initial, const ModelConfig& cfg,
                        const TrainConfig& tc) {
  tc.validate();
  validate_weights(initial, cfg);
  const auto grid = tc.effective_grid();
  const std::size_t n_val = static_cast<std::size_t>(std::floor(tc.val_fraction * static_cast<double>(train.size())));
  if (train.size() == 0 || n_val == 0 || n_val >= train.size()) {
    fail(ErrorKind::Data, "training split of " + std::to_string(train.size()) +
                              " samples cannot be divided into non-empty fit/validation parts");
  }
  std::vector<std::size_t> fit_idx(train.size() - n_val), val_idx(n_val);
  for (std::size_t i = 0; i < fit_idx.size(); ++i) fit_idx[i] = i;
  for (std::size_t i = 0; i < n_val; ++i) val_idx[i] = fit_idx.size() + i;
  const Dataset fit = train.subset(fit_idx);
  const Dataset val = train.subset(val_idx);

  std::vector<RunOutcome> outcomes(grid.size());
  detail::parallel_for(grid.size(), tc.threads,
                       [&](std::size_t i) { outcomes[i] = train_one(fit, val, initial, cfg, tc, grid[i]); });

  FinetuneResult result;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const Checkpoint& c = outcomes[i].best;
    if (!best) {
      best = i;
      continue;
    }
    const Checkpoint& b = outcomes[*best].best;
    const bool better = c.val_accuracy > b.val_accuracy ||
                        (c.val_accuracy == b.val_accuracy &&
                         (c.step < b.step || (c.step == b.step && c.lr < b.lr)));
    if (better) best = i;
  }
  result.best = std::move(outcomes[*best].best);
  for (auto& o : outcomes) result.runs.push_back(std::move(o.log));
  return result;
}

std::string train_log_csv(const FinetuneResult& result) {
  std::string out = "step,lr_current,lr_base,train_loss,grad_norm_preclip,val_accuracy\n";
  for (const auto& run : result.runs) {
    for (const auto& r : run.rows) {
      out += std::to_string(r.step) + "," + format_double(r.lr_current) + "," + format_double(r.lr_base) + "," +
             format_double(r.train_loss) + "," + format_double(r.grad_norm_preclip) + "," +
             (r.val_accuracy ? format_double(*r.val_accuracy) : std::string()) + "\n";
    }
  }
  return out;
}

}  // namespace vitprobe
