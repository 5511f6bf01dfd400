#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "vitprobe/error.hpp"
#include "vitprobe/probe.hpp"
#include "vitprobe/rng.hpp"

using namespace vitprobe;

namespace {

FeatureMatrix blobs(std::size_t per_class, std::size_t classes, std::size_t dim, double spread, std::uint64_t seed) {
  KeyedRng rng(seed);
  std::vector<std::vector<double>> centers(classes, std::vector<double>(dim));
  for (auto& c : centers)
    for (auto& v : c) v = rng.uniform(-3.0, 3.0);
  const std::size_t n = per_class * classes;
  Tensor x({n, dim});
  std::vector<std::int32_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % classes;
    y[i] = static_cast<std::int32_t>(c);
    for (std::size_t j = 0; j < dim; ++j) x.at(i, j) = static_cast<float>(centers[c][j] + spread * rng.normal());
  }
  return {x, y, std::nullopt};
}

FeatureMatrix noise(std::size_t n, std::size_t dim, std::size_t classes, std::uint64_t seed) {
  KeyedRng rng(seed);
  Tensor x({n, dim});
  for (auto& v : x.data()) v = static_cast<float>(rng.normal());
  std::vector<std::int32_t> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<std::int32_t>(i % classes);
  for (std::size_t i = n; i-- > 1;) std::swap(y[i], y[rng.index(i + 1)]);
  return {x, y, std::nullopt};
}

double objective(const ProbeModel& m, const FeatureMatrix& train, double l2) {
  const auto x = standardize(train.features, m.stats);
  return softmax_xent_loss_grad(m.weights, m.bias, x, train.labels, l2).loss;
}

}  // namespace

TEST_CASE("zero model has loss ln C") {
  const auto data = blobs(4, 3, 5, 1.0, 1);
  const auto x = data.features.cast<double>();
  const Tensor64 w({5, 3});
  const std::vector<double> b(3, 0.0);
  CHECK(softmax_xent_loss_grad(w, b, x, data.labels, 0.5).loss == doctest::Approx(std::log(3.0)));
}

TEST_CASE("loss gradient matches central differences") {
  const auto data = blobs(2, 3, 3, 1.0, 2);  // 6 samples, 3 features, 3 classes
  const auto x = data.features.cast<double>();
  KeyedRng rng(5);
  Tensor64 w({3, 3});
  for (auto& v : w.data()) v = rng.normal();
  std::vector<double> b = {0.1, -0.2, 0.3};
  const double l2 = 0.3;
  const auto lg = softmax_xent_loss_grad(w, b, x, data.labels, l2);
  const double h = 1e-5;
  for (std::size_t i = 0; i < w.size(); ++i) {
    auto wp = w, wm = w;
    wp[i] += h;
    wm[i] -= h;
    const double fd = (softmax_xent_loss_grad(wp, b, x, data.labels, l2).loss -
                       softmax_xent_loss_grad(wm, b, x, data.labels, l2).loss) / (2 * h);
    CHECK(std::abs(fd - lg.grad_w[i]) / std::max(1e-8, std::abs(fd)) < 1e-6);
  }
  for (std::size_t k = 0; k < 3; ++k) {
    auto bp = b, bm = b;
    bp[k] += h;
    bm[k] -= h;
    const double fd = (softmax_xent_loss_grad(w, bp, x, data.labels, l2).loss -
                       softmax_xent_loss_grad(w, bm, x, data.labels, l2).loss) / (2 * h);
    CHECK(std::abs(fd - lg.grad_b[k]) / std::max(1e-8, std::abs(fd)) < 1e-6);
  }
  // Doubling lambda adds exactly (lambda / 2) ||W||^2.
  double sq = 0;
  for (double v : w.data()) sq += v * v;
  const double doubled = softmax_xent_loss_grad(w, b, x, data.labels, 2 * l2).loss;
  CHECK(std::abs(doubled - lg.loss - 0.5 * l2 * sq) < 1e-12);
}

TEST_CASE("separable 2-D blobs are fit perfectly") {
  // 40 points around (-1.5, -1) and (1.5, 1).
  KeyedRng rng(3);
  FeatureMatrix data{Tensor({40, 2}), {}, std::nullopt};
  for (std::size_t i = 0; i < 40; ++i) {
    const double sign = i % 2 ? 1.0 : -1.0;
    data.features.at(i, 0) = static_cast<float>(1.5 * sign + 0.5 * rng.normal());
    data.features.at(i, 1) = static_cast<float>(sign + 0.5 * rng.normal());
    data.labels.push_back(static_cast<std::int32_t>(i % 2));
  }
  std::vector<std::pair<double, double>> pts;
  std::vector<int> labels;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    pts.emplace_back(data.features.at(i, 0), data.features.at(i, 1));
    labels.push_back(data.labels[i]);
  }
  REQUIRE(oracle::separable_2d(pts, labels));
  const auto m = fit_probe(data);
  CHECK(evaluate_accuracy(m, data) == 1.0);
}

TEST_CASE("label noise gives chance accuracy") {
  const std::size_t n_test = 500;
  const auto [lo, hi] = oracle::binomial_fraction_bounds(n_test, 0.1, 1e-3);
  CHECK(lo >= 0.05);
  CHECK(hi <= 0.18);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto train = noise(500, 16, 10, 10 + s), test = noise(n_test, 16, 10, 100 + s);
    const double acc = evaluate_accuracy(fit_probe(train), test);
    CHECK(acc >= lo);
    CHECK(acc <= hi);
  }
}

TEST_CASE("duplicated rows leave the fit unchanged") {
  const auto data = blobs(15, 3, 4, 2.0, 4);
  FeatureMatrix twice{Tensor({90, 4}), {}, std::nullopt};
  for (std::size_t i = 0; i < 90; ++i) {
    for (std::size_t j = 0; j < 4; ++j) twice.features.at(i, j) = data.features.at(i % 45, j);
    twice.labels.push_back(data.labels[i % 45]);
  }
  FitConfig cfg;
  cfg.tol = 1e-10;
  cfg.max_iter = 1000;
  const auto a = fit_probe(data, cfg), b = fit_probe(twice, cfg);
  for (std::size_t i = 0; i < a.weights.size(); ++i) CHECK(std::abs(a.weights[i] - b.weights[i]) < 1e-6);
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(a.bias[k] - b.bias[k]) < 1e-6);
}

TEST_CASE("objective is non-increasing and start-independent") {
  const auto data = blobs(30, 4, 6, 2.5, 5);
  FitConfig cfg;
  const auto stats = compute_standardization(data.features);
  const auto x = standardize(data.features, stats);
  const auto r = lbfgs_minimize(probe_objective(x, data.labels, 4, cfg.l2), std::vector<double>(28, 0.0),
                                cfg.lbfgs_options());
  for (std::size_t i = 1; i < r.f_history.size(); ++i) CHECK(r.f_history[i] <= r.f_history[i - 1]);

  cfg.tol = 1e-9;
  cfg.max_iter = 2000;
  KeyedRng rng(9);
  std::vector<double> start(28);
  for (auto& v : start) v = rng.normal();
  const auto a = fit_probe(data, cfg), b = fit_probe(data, cfg, 0, start);
  CHECK(std::abs(objective(a, data, cfg.l2) - objective(b, data, cfg.l2)) < 1e-6);
}

TEST_CASE("predictions survive refitting on standardized inputs") {
  const auto train = blobs(20, 3, 3, 0.5, 6), test = blobs(10, 3, 3, 0.5, 6);
  const auto stats = compute_standardization(train.features);
  const auto pre = [&](const FeatureMatrix& f) {
    return FeatureMatrix{standardize(f.features, stats).cast<float>(), f.labels, std::nullopt};
  };
  const auto raw = fit_probe(train), stdz = fit_probe(pre(train));
  CHECK(predict(raw, test.features) == predict(stdz, pre(test).features));
}

TEST_CASE("evaluation semantics") {
  // One-hot logits with identity weights on standardized one-hot features.
  Tensor x({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const FeatureMatrix f{x, {0, 1, 2}, std::nullopt};
  ProbeModel m;
  m.num_classes = 3;
  m.stats = {{0, 0, 0}, {1, 1, 1}};
  m.weights = Tensor64({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  m.bias = {0, 0, 0};
  CHECK(evaluate_accuracy(m, f) == 1.0);

  // Hand case: W = [[1, -1], [2, 0]], b = [0, 0.5].
  ProbeModel h;
  h.num_classes = 2;
  h.stats = {{0, 0}, {1, 1}};
  h.weights = Tensor64({2, 2}, {1, -1, 2, 0});
  h.bias = {0, 0.5};
  // (1, 0) -> [1, -0.5] -> 0; (-1, 0) -> [-1, 1.5] -> 1; (0, 0.25) -> [0.5, 0.5] -> tie -> 0
  const Tensor xs({3, 2}, {1, 0, -1, 0, 0, 0.25f});
  CHECK(predict(h, xs) == std::vector<std::int32_t>{0, 1, 0});
  CHECK(evaluate_accuracy(h, FeatureMatrix{xs, {0, 1, 1}, std::nullopt}) == doctest::Approx(2.0 / 3.0));

  ProbeModel zero;
  zero.num_classes = 4;
  zero.stats = {{0}, {1}};
  zero.weights = Tensor64({1, 4});
  zero.bias = {0, 0, 0, 0};
  const FeatureMatrix bal{Tensor({8, 1}), {0, 1, 2, 3, 0, 1, 2, 3}, std::nullopt};
  CHECK(evaluate_accuracy(zero, bal) == 0.25);

  try {
    (void)evaluate_accuracy(h, FeatureMatrix{Tensor({2, 3}), {0, 1}, std::nullopt});
    FAIL("expected an evaluation error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Evaluation);
  }
}

TEST_CASE("accuracy is invariant to test row order") {
  const auto train = blobs(20, 3, 4, 2.0, 7), test = blobs(20, 3, 4, 2.0, 8);
  const auto m = fit_probe(train);
  FeatureMatrix rev{Tensor(test.features.shape()), {}, std::nullopt};
  for (std::size_t i = 0; i < test.rows(); ++i) {
    const std::size_t src = test.rows() - 1 - i;
    for (std::size_t j = 0; j < 4; ++j) rev.features.at(i, j) = test.features.at(src, j);
    rev.labels.push_back(test.labels[src]);
  }
  CHECK(evaluate_accuracy(m, test) == evaluate_accuracy(m, rev));
}

TEST_CASE("fit preconditions") {
  const FeatureMatrix single{Tensor({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8}), {1, 1, 1, 1}, std::nullopt};
  try {
    (void)fit_probe(single);
    FAIL("expected a fit error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Fit);
  }
  Tensor bad({2, 1}, {0.0f, NAN});
  CHECK_THROWS_AS(fit_probe(FeatureMatrix{bad, {0, 1}, std::nullopt}), Error);
  FitConfig cfg;
  cfg.l2 = -1;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("standardization uses train rows and floors the std") {
  const Tensor x({3, 2}, {1, 5, 2, 5, 3, 5});
  const auto s = compute_standardization(x);
  CHECK(s.mean[0] == doctest::Approx(2.0));
  CHECK(s.std[0] == doctest::Approx(std::sqrt(2.0 / 3.0)));
  CHECK(s.std[1] == kStdFloor);
}

TEST_CASE("probe container round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "vitprobe_test_probe";
  std::filesystem::create_directories(dir);
  auto data = blobs(10, 3, 4, 1.0, 9);
  data.tap = TapId{2, Module::Act};
  const auto m = fit_probe(data);
  save_probe(m, dir / "p.vitf");
  const auto back = load_probe(dir / "p.vitf");
  CHECK(back.weights == m.weights);
  CHECK(back.bias == m.bias);
  CHECK(back.stats.mean == m.stats.mean);
  CHECK(back.stats.std == m.stats.std);
  CHECK(back.tap == m.tap);
  CHECK(back.iterations == m.iterations);
  CHECK(back.final_loss == m.final_loss);
}
