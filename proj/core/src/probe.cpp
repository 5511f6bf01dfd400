#include "vitprobe/probe.hpp"

#include <algorithm>
#include <cmath>

#include "container.hpp"
#include "vitprobe/tensor_ops.hpp"

namespace vitprobe {

void FitConfig::validate() const { lbfgs_options().validate(); if (l2 < 0.0) fail(ErrorKind::Spec, "l2 must be non-negative"); }

LbfgsOptions FitConfig::lbfgs_options() const {
  LbfgsOptions o;
  o.tol = tol;
  o.max_iter = max_iter;
  o.history = history;
  o.c1 = c1;
  o.c2 = c2;
  return o;
}

void FeatureMatrix::validate() const {
  if (features.rank() != 2 || features.extent(0) != labels.size()) {
    fail(ErrorKind::Dimension, "feature matrix " + shape_string(features.shape()) + " vs " +
                                   std::to_string(labels.size()) + " labels");
  }
  for (float v : features.data()) {
    if (!std::isfinite(v)) fail(ErrorKind::Data, "feature matrix contains a non-finite value");
  }
  for (auto l : labels) {
    if (l < 0) fail(ErrorKind::Data, "negative label in feature matrix");
  }
}

Standardization compute_standardization(const Tensor& features) {
  const std::size_t n = features.rows(), d = features.cols();
  Standardization s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += features.at(r, j);
  }
  for (auto& m : s.mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      const double c = features.at(r, j) - s.mean[j];
      s.std[j] += c * c;
    }
  }
  for (auto& v : s.std) v = std::max(std::sqrt(v / static_cast<double>(n)), kStdFloor);
  return s;
}

Tensor64 standardize(const Tensor& features, const Standardization& stats) {
  const std::size_t d = features.cols();
  if (stats.mean.size() != d) {
    fail(ErrorKind::Evaluation, "features have width " + std::to_string(d) + ", standardization expects " +
                                    std::to_string(stats.mean.size()));
  }
  Tensor64 out(features.shape());
  for (std::size_t r = 0; r < features.rows(); ++r) {
    for (std::size_t j = 0; j < d; ++j) out.at(r, j) = (features.at(r, j) - stats.mean[j]) / stats.std[j];
  }
  return out;
}

namespace {

// Writes the loss; fills dlogits = (softmax - onehot) / N in place of logits.
double xent_in_place(Tensor64& logits, std::span<const std::int32_t> y) {
  const std::size_t n = logits.rows(), c = logits.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double* z = logits.row(r).data();
    double mx = z[0];
    for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, z[k]);
    double sum = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      z[k] = std::exp(z[k] - mx);
      sum += z[k];
    }
    const auto label = static_cast<std::size_t>(y[r]);
    loss += -std::log(z[label] / sum);
    for (std::size_t k = 0; k < c; ++k) z[k] = z[k] / sum * inv_n;
    z[label] -= inv_n;
  }
  return loss * inv_n;
}

void check_problem(const Tensor64& x, std::span<const std::int32_t> y, std::size_t classes) {
  if (x.rows() != y.size()) fail(ErrorKind::Dimension, "probe: rows of X differ from label count");
  for (auto l : y) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) fail(ErrorKind::Data, "probe: label out of range");
  }
}

}  // namespace

LossGrad softmax_xent_loss_grad(const Tensor64& w, std::span<const double> b, const Tensor64& x,
                                std::span<const std::int32_t> y, double l2) {
  const std::size_t n = x.rows(), d = x.cols(), c = b.size();
  if (w.rank() != 2 || w.extent(0) != d || w.extent(1) != c) {
    fail(ErrorKind::Dimension, "probe: W " + shape_string(w.shape()) + " incompatible with X " +
                                   shape_string(x.shape()) + " and " + std::to_string(c) + " classes");
  }
  check_problem(x, y, c);
  Tensor64 logits({n, c});
  kernels::gemm(x.data().data(), w.data().data(), logits.data().data(), n, d, c, false);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < c; ++k) logits.at(r, k) += b[k];
  }
  LossGrad out;
  out.loss = xent_in_place(logits, y);
  out.grad_w = Tensor64({d, c});
  kernels::gemm_tn(x.data().data(), logits.data().data(), out.grad_w.data().data(), n, d, c, false);
  out.grad_b.assign(c, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < c; ++k) out.grad_b[k] += logits.at(r, k);
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    sq += w[i] * w[i];
    out.grad_w[i] += l2 * w[i];
  }
  out.loss += 0.5 * l2 * sq;
  return out;
}

Objective probe_objective(const Tensor64& x, std::span<const std::int32_t> y, std::size_t num_classes, double l2) {
  check_problem(x, y, num_classes);
  const std::size_t d = x.cols(), c = num_classes;
  return [&x, y, d, c, l2](std::span<const double> p, std::span<double> grad) {
    Tensor64 w({d, c}, std::vector<double>(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(d * c)));
    const LossGrad lg = softmax_xent_loss_grad(w, p.subspan(d * c, c), x, y, l2);
    std::copy(lg.grad_w.data().begin(), lg.grad_w.data().end(), grad.begin());
    std::copy(lg.grad_b.begin(), lg.grad_b.end(), grad.begin() + static_cast<std::ptrdiff_t>(d * c));
    return lg.loss;
  };
}

ProbeModel fit_probe(const FeatureMatrix& train, const FitConfig& cfg, std::size_t num_classes,
                     std::span<const double> initial) {
  cfg.validate();
  train.validate();
  if (train.rows() == 0) fail(ErrorKind::Data, "probe: empty training set");
  const std::int32_t max_label = *std::max_element(train.labels.begin(), train.labels.end());
  const std::size_t classes = std::max(num_classes, static_cast<std::size_t>(max_label) + 1);
  std::vector<bool> present(classes, false);
  for (auto l : train.labels) present[static_cast<std::size_t>(l)] = true;
  if (std::count(present.begin(), present.end(), true) < 2) {
    fail(ErrorKind::Fit, "training labels contain a single class; a probe needs at least two");
  }

  ProbeModel model;
  model.tap = train.tap;
  model.num_classes = classes;
  model.stats = compute_standardization(train.features);
  const Tensor64 x = standardize(train.features, model.stats);
  const std::size_t d = x.cols();

  std::vector<double> x0(d * classes + classes, 0.0);
  if (!initial.empty()) {
    if (initial.size() != x0.size()) fail(ErrorKind::Dimension, "probe: initial parameter vector has wrong length");
    std::copy(initial.begin(), initial.end(), x0.begin());
  }
  const LbfgsResult r = lbfgs_minimize(probe_objective(x, train.labels, classes, cfg.l2), std::move(x0),
                                       cfg.lbfgs_options());
  model.weights = Tensor64({d, classes}, std::vector<double>(r.x.begin(), r.x.begin() + static_cast<std::ptrdiff_t>(d * classes)));
  model.bias.assign(r.x.begin() + static_cast<std::ptrdiff_t>(d * classes), r.x.end());
  model.final_loss = r.f;
  model.iterations = r.iterations;
  model.converged = r.converged;
  return model;
}

Tensor64 probe_logits(const ProbeModel& model, const Tensor& features) {
  if (features.rank() != 2 || features.cols() != model.dim()) {
    fail(ErrorKind::Evaluation, "probe expects features of width " + std::to_string(model.dim()) + ", got " +
                                    shape_string(features.shape()));
  }
  const Tensor64 x = standardize(features, model.stats);
  const std::size_t n = x.rows(), c = model.num_classes;
  Tensor64 logits({n, c});
  kernels::gemm(x.data().data(), model.weights.data().data(), logits.data().data(), n, model.dim(), c, false);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < c; ++k) logits.at(r, k) += model.bias[k];
  }
  return logits;
}

std::vector<std::int32_t> predict(const ProbeModel& model, const Tensor& features) {
  const Tensor64 logits = probe_logits(model, features);
  std::vector<std::int32_t> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    out[r] = static_cast<std::int32_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double evaluate_accuracy(const ProbeModel& model, const FeatureMatrix& test) {
  if (test.features.rank() != 2 || test.features.rows() != test.labels.size()) {
    fail(ErrorKind::Evaluation, "test features " + shape_string(test.features.shape()) + " vs " +
                                    std::to_string(test.labels.size()) + " labels");
  }
  const auto pred = predict(model, test.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == test.labels[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

void save_probe(const ProbeModel& model, const std::filesystem::path& path) {
  detail::Container c;
  c.magic = "VITF";
  const std::size_t d = model.dim(), k = model.num_classes;
  c.blobs.push_back(detail::make_blob("probe.weight", {d, k}, model.weights.data()));
  c.blobs.push_back(detail::make_blob("probe.bias", {k}, std::span<const double>(model.bias)));
  c.blobs.push_back(detail::make_blob("probe.mean", {d}, std::span<const double>(model.stats.mean)));
  c.blobs.push_back(detail::make_blob("probe.std", {d}, std::span<const double>(model.stats.std)));
  nlohmann::json meta = {{"kind", "probe"},
                         {"num_classes", k},
                         {"final_loss", model.final_loss},
                         {"iterations", model.iterations},
                         {"converged", model.converged}};
  if (model.tap) {
    meta["tap"] = {{"block", model.tap->block}, {"module", module_name(model.tap->module)}};
  } else {
    meta["tap"] = nullptr;
  }
  c.metadata = std::move(meta);
  detail::write_container(path, c);
}

ProbeModel load_probe(const std::filesystem::path& path) {
  const detail::Container c = detail::read_container(path, "VITF");
  ProbeModel m;
  try {
    if (c.metadata.at("kind").get<std::string>() != "probe") {
      fail(ErrorKind::Data, path.string() + " is a VITF container but does not hold a probe");
    }
    m.num_classes = c.metadata.at("num_classes").get<std::size_t>();
    m.final_loss = c.metadata.at("final_loss").get<double>();
    m.iterations = c.metadata.at("iterations").get<std::size_t>();
    m.converged = c.metadata.at("converged").get<bool>();
    if (!c.metadata.at("tap").is_null()) {
      const auto module = parse_module(c.metadata.at("tap").at("module").get<std::string>());
      if (!module) fail(ErrorKind::Corruption, path.string() + ": unknown module");
      m.tap = TapId{c.metadata.at("tap").at("block").get<std::size_t>(), *module};
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Corruption, path.string() + ": malformed probe manifest: " + e.what());
  }
  const auto& w = c.find("probe.weight");
  m.weights = Tensor64(w.shape, detail::blob_f64(w));
  m.bias = detail::blob_f64(c.find("probe.bias"));
  m.stats.mean = detail::blob_f64(c.find("probe.mean"));
  m.stats.std = detail::blob_f64(c.find("probe.std"));
  if (m.weights.rank() != 2 || m.weights.cols() != m.num_classes || m.bias.size() != m.num_classes ||
      m.stats.mean.size() != m.dim() || m.stats.std.size() != m.dim()) {
    fail(ErrorKind::Corruption, path.string() + ": probe tensor shapes are inconsistent");
  }
  return m;
}

}  // namespace vitprobe
