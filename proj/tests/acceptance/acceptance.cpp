// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "oracles.hpp"
#include "vitprobe/corruptions.hpp"
#include "vitprobe/data.hpp"
#include "vitprobe/finetune.hpp"
#include "vitprobe/grad.hpp"
#include "vitprobe/io.hpp"
#include "vitprobe/lbfgs.hpp"
#include "vitprobe/probe.hpp"
#include "vitprobe/rng.hpp"
#include "vitprobe/sweep.hpp"
#include "vitprobe/tensor_ops.hpp"
#include "vitprobe/vit.hpp"
#include "vitprobe/weights_io.hpp"

using namespace vitprobe;
namespace fs = std::filesystem;

namespace {

// Fixed seeds of the qualitative reproduction (criteria 6 and 7). The CLI
// quickstart in the README reproduces the same numbers.
constexpr std::uint64_t kInitSeed = 0;
constexpr std::uint64_t kPretrainDataSeed = 100;
constexpr std::size_t kPretrainSamples = 2000;
constexpr std::uint64_t kTrainSeed = 0;
constexpr std::size_t kProbeSamples = 1000;
constexpr std::uint64_t kProbeDataSeedBase = 1000;   // + k
constexpr std::uint64_t kCorruptionSeedBase = 2000;  // + k; split seed is k
constexpr std::size_t kReproSeeds = 5;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

std::size_t worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

// 1. Analytic backward vs central differences.
Verdict gradient_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = ModelConfig::toy();
  const auto w = oracle::random_weights(cfg, 17);
  DatasetSpec spec;
  spec.num_samples = 2;
  spec.seed = 3;
  const auto d = synth_generate(spec);
  const auto x = preprocess_eval(d.images, cfg.image_size).cast<double>();
  const auto r = oracle::gradient_check(cfg, w, x, d.labels, 1e-4, 64, 5);
  const double secs = seconds_since(t0);
  std::size_t checked = 0;
  bool every_tensor = true;
  const oracle::GradCheckTensor* worst = &r.tensors.front();
  for (const auto& t : r.tensors) {
    checked += t.checked;
    every_tensor = every_tensor && t.compared > 0;
    if (t.max_rel_error > worst->max_rel_error) worst = &t;
  }
  const bool pass = r.max_rel_error < 1e-5 && every_tensor && secs < 120.0;
  return {pass, std::to_string(r.tensors.size()) + " tensors, " + std::to_string(checked) +
                    " entries, max rel error " + fmt(r.max_rel_error, 3) + " (< 1e-5) at " + worst->name + " (analytic " + fmt(worst->worst_analytic, 3) +
                    ", numeric " + fmt(worst->worst_numeric, 3) + "), " + fmt(secs, 3) + " s"};
}

// 2. Residual identities, attention normalization and tap widths.
Verdict architecture_invariants() {
  const auto cfg = ModelConfig::toy();
  std::size_t failures = 0;
  double worst_row = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto w = oracle::random_weights(cfg, 500 + s, 1.0 + 0.02 * static_cast<double>(s));
    const auto wf = cast_weights<float>(w);
    const std::size_t b = s % cfg.num_blocks;
    const auto x = oracle::random_tensor<float>({cfg.tokens(), cfg.embed_dim}, 900 + s, 2.0);
    const auto out = block_forward(x, wf.blocks[b], cfg, b);
    const auto& mha = out.taps[module_index(Module::MHA)].cls_embedding;
    const auto& rc1 = out.taps[module_index(Module::RC1)].cls_embedding;
    const auto& fc2 = out.taps[module_index(Module::FC2)].cls_embedding;
    const auto& rc2 = out.taps[module_index(Module::RC2)].cls_embedding;
    for (std::size_t j = 0; j < cfg.embed_dim; ++j)
      if (rc1[j] != x.at(0, j) + mha[j] || rc2[j] != rc1[j] + fc2[j]) ++failures;

    const auto image = oracle::random_tensor<double>({1, 3, cfg.image_size, cfg.image_size}, 1300 + s, 2.0);
    const auto trace = forward_trace(image, w, cfg);
    const std::size_t S = cfg.tokens();
    for (const auto& block : trace.blocks) {
      const auto p = attention_weights(block, cfg, 0);
      for (std::size_t r = 0; r < p.size() / S; ++r) {
        const double sum = std::accumulate(p.begin() + static_cast<std::ptrdiff_t>(r * S),
                                           p.begin() + static_cast<std::ptrdiff_t>((r + 1) * S), 0.0);
        worst_row = std::max(worst_row, std::abs(sum - 1.0));
      }
    }

    // Tap widths on a varying geometry with the standard 4d MLP.
    ModelConfig g = cfg;
    g.num_heads = 1 + s % 4;
    g.embed_dim = g.num_heads * (4 + 2 * (s % 3));
    g.ffn_dim = 4 * g.embed_dim;
    g.num_blocks = 1 + s % 3;
    const auto gw = cast_weights<float>(oracle::random_weights(g, 1700 + s));
    const auto taps = all_taps(g);
    const auto c = forward_collect(oracle::random_tensor<float>({2, 3, g.image_size, g.image_size}, 2100 + s), gw,
                                   g, std::set<TapId>(taps.begin(), taps.end()));
    for (const auto& tap : taps) {
      const bool wide = tap.module == Module::FC1 || tap.module == Module::Act;
      const std::size_t want = wide ? 4 * g.embed_dim : g.embed_dim;
      if (tap_width(tap, g) != want || c.features.at(tap).cols() != want) ++failures;
    }
  }
  const bool pass = failures == 0 && worst_row < 1e-6;
  return {pass, "100 trials, " + std::to_string(failures) + " identity/width violations, worst attention row |sum-1| " +
                    fmt(worst_row, 3)};
}

struct Quadratic {
  std::size_t n;
  std::vector<double> a, b;
  double operator()(std::span<const double> x, std::span<double> g) const {
    double f = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double ax = 0;
      for (std::size_t j = 0; j < n; ++j) ax += a[i * n + j] * x[j];
      g[i] = ax - b[i];
      f += 0.5 * x[i] * ax - b[i] * x[i];
    }
    return f;
  }
};

// 3. L-BFGS against dense solves, Rosenbrock and a real probe objective.
Verdict optimizer_oracles() {
  double worst_quad = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const std::size_t n = 5 + s % 11;
    KeyedRng rng(3000 + s);
    std::vector<double> m(n * n);
    for (auto& v : m) v = rng.normal();
    Quadratic q{n, std::vector<double>(n * n, 0.0), std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < n; ++k) q.a[i * n + j] += m[k * n + i] * m[k * n + j];
        if (i == j) q.a[i * n + j] += 0.5;
      }
    for (auto& v : q.b) v = rng.normal();
    LbfgsOptions o;
    o.tol = 1e-11;
    o.max_iter = 1000;
    const auto r = lbfgs_minimize(q, std::vector<double>(n, 0.0), o);
    const auto want = oracle::dense_solve(q.a, q.b);
    for (std::size_t i = 0; i < n; ++i) worst_quad = std::max(worst_quad, std::abs(r.x[i] - want[i]));
  }

  auto rosen = [](std::span<const double> x, std::span<double> g) {
    const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  LbfgsOptions ro;
  ro.tol = 1e-10;
  ro.max_iter = 1000;
  const auto rr = lbfgs_minimize(rosen, {-1.2, 1.0}, ro);
  const double rosen_err = std::max(std::abs(rr.x[0] - 1.0), std::abs(rr.x[1] - 1.0));

  // Probe objective on CLS features of the toy model.
  const auto cfg = ModelConfig::toy();
  DatasetSpec spec;
  spec.num_samples = 200;
  spec.seed = 31;
  const auto d = synth_generate(spec);
  const TapId tap{3, Module::Act};
  const auto feats = extract_features(d, init_toy(cfg, 1), cfg, {tap});
  const auto stats = compute_standardization(feats.features.at(tap));
  const auto x = standardize(feats.features.at(tap), stats);
  FitConfig fc;
  const auto pr = lbfgs_minimize(probe_objective(x, d.labels, cfg.num_classes, fc.l2),
                                 std::vector<double>((x.cols() + 1) * cfg.num_classes, 0.0), fc.lbfgs_options());
  std::size_t increases = 0;
  for (std::size_t i = 1; i < pr.f_history.size(); ++i)
    if (pr.f_history[i] > pr.f_history[i - 1]) ++increases;

  const bool pass = worst_quad < 1e-6 && rosen_err < 1e-6 && increases == 0;
  return {pass, "20 SPD quadratics max |x - x*| " + fmt(worst_quad, 3) + ", Rosenbrock error " + fmt(rosen_err, 3) +
                    ", probe objective " + std::to_string(pr.f_history.size() - 1) + " iterations with " +
                    std::to_string(increases) + " increases"};
}

// 4. Separable blobs, chance on shuffled labels, loss/grad differences.
Verdict probe_oracles() {
  KeyedRng rng(41);
  FeatureMatrix blobs{Tensor({60, 2}), {}, std::nullopt};
  std::vector<std::pair<double, double>> pts;
  std::vector<int> pl;
  for (std::size_t i = 0; i < 60; ++i) {
    const double sign = i % 2 ? 1.0 : -1.0;
    blobs.features.at(i, 0) = static_cast<float>(1.5 * sign + 0.5 * rng.normal());
    blobs.features.at(i, 1) = static_cast<float>(sign + 0.5 * rng.normal());
    blobs.labels.push_back(static_cast<std::int32_t>(i % 2));
    pts.emplace_back(blobs.features.at(i, 0), blobs.features.at(i, 1));
    pl.push_back(blobs.labels.back());
  }
  const bool certified = oracle::separable_2d(pts, pl);
  const double blob_acc = evaluate_accuracy(fit_probe(blobs), blobs);

  // Real features with shuffled labels: a probe cannot beat chance.
  const auto cfg = ModelConfig::toy();
  DatasetSpec spec;
  spec.num_samples = 1000;
  spec.seed = 43;
  const auto d = synth_generate(spec);
  const TapId tap{5, Module::RC2};
  const auto feats = extract_features(d, init_toy(cfg, 2), cfg, {tap}).features.at(tap);
  std::vector<std::int32_t> shuffled = d.labels;
  KeyedRng perm(44);
  for (std::size_t i = shuffled.size(); i-- > 1;) std::swap(shuffled[i], shuffled[perm.index(i + 1)]);
  std::vector<std::size_t> tr(800), te(200);
  std::iota(tr.begin(), tr.end(), 0);
  std::iota(te.begin(), te.end(), 800);
  auto rows = [&](const std::vector<std::size_t>& idx) {
    FeatureMatrix fm{Tensor({idx.size(), feats.cols()}), {}, tap};
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t j = 0; j < feats.cols(); ++j) fm.features.at(r, j) = feats.at(idx[r], j);
      fm.labels.push_back(shuffled[idx[r]]);
    }
    return fm;
  };
  const auto train = rows(tr), test = rows(te);
  const auto [lo, hi] = oracle::binomial_fraction_bounds(test.rows(), 0.1, 1e-3);
  const double chance_acc = evaluate_accuracy(fit_probe(train, {}, 10), test);

  // Central differences of the regularized loss.
  KeyedRng wr(45);
  const auto x = oracle::random_tensor<double>({12, 5}, 46);
  std::vector<std::int32_t> y(12);
  for (std::size_t i = 0; i < 12; ++i) y[i] = static_cast<std::int32_t>(i % 4);
  Tensor64 w({5, 4});
  for (auto& v : w.data()) v = wr.normal();
  std::vector<double> b = {0.2, -0.1, 0.05, 0.3};
  const double l2 = 0.2, h = 1e-5;
  const auto lg = softmax_xent_loss_grad(w, b, x, y, l2);
  double worst_fd = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    auto wp = w, wm = w;
    wp[i] += h;
    wm[i] -= h;
    const double fd =
        (softmax_xent_loss_grad(wp, b, x, y, l2).loss - softmax_xent_loss_grad(wm, b, x, y, l2).loss) / (2 * h);
    worst_fd = std::max(worst_fd, std::abs(fd - lg.grad_w[i]) / std::max(1e-8, std::abs(fd)));
  }
  for (std::size_t k = 0; k < b.size(); ++k) {
    auto bp = b, bm = b;
    bp[k] += h;
    bm[k] -= h;
    const double fd =
        (softmax_xent_loss_grad(w, bp, x, y, l2).loss - softmax_xent_loss_grad(w, bm, x, y, l2).loss) / (2 * h);
    worst_fd = std::max(worst_fd, std::abs(fd - lg.grad_b[k]) / std::max(1e-8, std::abs(fd)));
  }

  const bool pass = certified && blob_acc == 1.0 && chance_acc >= lo && chance_acc <= hi && worst_fd < 1e-6;
  return {pass, "blobs train accuracy " + fmt(blob_acc) + ", shuffled-label test accuracy " + fmt(chance_acc) +
                    " in [" + fmt(lo) + ", " + fmt(hi) + "], finite-difference rel error " + fmt(worst_fd, 3)};
}

// 5. Byte-identical sweeps, bitwise container round trips, reproducible corruption.
Verdict determinism_and_formats(const fs::path& work) {
  const auto cfg = ModelConfig::toy();
  DatasetSpec spec;
  spec.num_samples = 150;
  spec.seed = 51;
  const auto data = synth_generate(spec);
  const auto split = split_80_20(data.labels, 52);
  const CorruptionSpec cs{CorruptionKind::GaussianNoise, 5, 53};
  SweepPlan plan;
  plan.config = cfg;
  plan.weights = init_toy(cfg, 54);
  plan.train = corrupt_dataset(data.subset(split.train), cs);
  plan.test = corrupt_dataset(data.subset(split.test), cs);
  plan.seed = 55;
  std::vector<std::string> csvs;
  for (std::size_t threads : {1, 4, 1, 4}) {
    plan.threads = threads;
    const auto report = run_sweep(plan);
    const auto path = work / ("sweep_" + std::to_string(csvs.size()) + ".csv");
    save_report(report, path);
    csvs.push_back(read_text_file(path));
  }
  const bool sweeps_equal = std::all_of(csvs.begin(), csvs.end(), [&](const auto& c) { return c == csvs[0]; });

  const auto w = init_toy(cfg, 56);
  save_weights(w, cfg, work / "w.vitw");
  const auto loaded = load_weights(work / "w.vitw");
  const bool vitw = encode_weights(loaded.weights, loaded.config) == read_file_bytes(work / "w.vitw") &&
                    loaded.config == cfg;

  const auto feats = extract_features(plan.test, w, cfg, all_taps(cfg));
  save_features(feats, work / "a.vitf");
  const auto back = load_features(work / "a.vitf");
  save_features(back, work / "b.vitf");
  bool vitf = read_file_bytes(work / "a.vitf") == read_file_bytes(work / "b.vitf") && back.labels == feats.labels;
  for (const auto& [tap, t] : feats.features) vitf = vitf && back.features.at(tap) == t;

  bool corruption = true;
  for (auto kind : kAllCorruptions) {
    const CorruptionSpec a{kind, 3, 57};
    const auto x = corrupt_dataset(plan.test, a), y = corrupt_dataset(plan.test, a);
    corruption = corruption && x.images == y.images;
    if (kind != CorruptionKind::Contrast && kind != CorruptionKind::MotionBlur)
      corruption = corruption && corrupt_dataset(plan.test, {kind, 3, 58}).images != x.images;
  }
  const auto noisy = corrupt_dataset(plan.test, cs);
  save_dataset(noisy, work / "noisy");
  corruption = corruption && load_dataset(work / "noisy").images == noisy.images;

  const bool pass = sweeps_equal && vitw && vitf && corruption;
  return {pass, std::string("sweep CSV identical over threads {1,4} x 2 runs: ") + (sweeps_equal ? "yes" : "no") +
                    ", VITW bitwise: " + (vitw ? "yes" : "no") + ", VITF bitwise: " + (vitf ? "yes" : "no") +
                    ", corruption reproducible: " + (corruption ? "yes" : "no")};
}

struct SeedOutcome {
  std::size_t k = 0;
  AccuracyMatrix id, ood;
};

struct Reproduction {
  FinetuneResult training;
  std::vector<SeedOutcome> seeds;
  double seconds = 0.0;
};

Dataset quantized(Dataset d) {
  quantize_8bit(d.images);
  return d;
}

Reproduction reproduce() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = ModelConfig::toy();
  Reproduction out;
  DatasetSpec pre;
  pre.num_samples = kPretrainSamples;
  pre.seed = kPretrainDataSeed;
  TrainConfig tc;
  tc.seed = kTrainSeed;
  tc.threads = worker_count();
  out.training = finetune(quantized(synth_generate(pre)), init_toy(cfg, kInitSeed), cfg, tc);

  for (std::size_t k = 0; k < kReproSeeds; ++k) {
    DatasetSpec ps;
    ps.num_samples = kProbeSamples;
    ps.seed = kProbeDataSeedBase + k;
    const auto clean = quantized(synth_generate(ps));
    const auto split = split_80_20(clean.labels, k);
    SweepPlan plan;
    plan.config = cfg;
    plan.weights = out.training.best.weights;
    plan.train = clean.subset(split.train);
    plan.test = clean.subset(split.test);
    plan.seed = k;
    plan.threads = worker_count();
    SeedOutcome s{k, run_sweep(plan).matrix(), AccuracyMatrix(cfg.num_blocks)};
    const CorruptionSpec cs{CorruptionKind::GaussianNoise, 5, kCorruptionSeedBase + k};
    plan.train = corrupt_dataset(plan.train, cs);
    plan.test = corrupt_dataset(plan.test, cs);
    s.ood = run_sweep(plan).matrix();
    out.seeds.push_back(std::move(s));
  }
  out.seconds = seconds_since(t0);
  return out;
}

std::string rc2_profile(const AccuracyMatrix& m) {
  std::string s;
  for (std::size_t l = 0; l < m.num_blocks; ++l) s += (l ? " " : "") + fmt(m.at(l, Module::RC2), 3);
  return s;
}

// 6. ID profile peaks at the end; OOD profile peaks earlier.
Verdict qualitative_depth(const Reproduction& r) {
  const auto& s0 = r.seeds.front();
  const auto id = ood_signature(s0.id, Module::RC2);
  const bool a = id.gap <= 0.01 + kGapSlack;
  std::size_t ood_votes = 0;
  std::string per_seed;
  for (const auto& s : r.seeds) {
    const auto sig = ood_signature(s.ood, Module::RC2);
    ood_votes += sig.ood_like;
    per_seed += (per_seed.empty() ? "" : ", ") + std::string("seed ") + std::to_string(s.k) + " gap " + fmt(sig.gap, 3);
  }
  const bool default_ood = ood_signature(s0.ood, Module::RC2).ood_like;
  const bool b = default_ood || 2 * ood_votes > r.seeds.size();
  std::cout << "  note: best lr " << fmt(r.training.best.lr) << " step " << r.training.best.step << " val accuracy "
            << fmt(r.training.best.val_accuracy) << ", reproduction took " << fmt(r.seconds, 3) << " s\n";
  for (const auto& run : r.training.runs) {
    const auto& rows = run.rows;
    const std::size_t win = std::min<std::size_t>(50, rows.size());
    double first = 0, last = 0;
    for (std::size_t i = 0; i < win; ++i) {
      first += rows[i].train_loss;
      last += rows[rows.size() - win + i].train_loss;
    }
    std::cout << "  note: lr " << fmt(run.lr_base) << " smoothed train loss " << fmt(first / win) << " -> "
              << fmt(last / win) << " over " << rows.size() << " steps\n";
  }
  std::cout << "  note: seed 0 RC2 ID profile " << rc2_profile(s0.id) << "\n";
  std::cout << "  note: seed 0 RC2 OOD profile " << rc2_profile(s0.ood) << "\n";
  return {a && b, "(a) ID RC2 final-layer gap " + fmt(id.gap, 3) + " (<= 0.01): " + (a ? "met" : "missed") +
                      "; (b) OOD RC2 OOD-like at default seed: " + (default_ood ? "yes" : "no") + ", " +
                      std::to_string(ood_votes) + "/" + std::to_string(r.seeds.size()) + " seeds [" + per_seed + "]"};
}

// 7. Module ranking on the OOD setup.
Verdict qualitative_modules(const Reproduction& r) {
  std::size_t votes = 0;
  std::string per_seed;
  for (const auto& s : r.seeds) {
    const auto best = best_per_module(s.ood);
    const double act = best.at(Module::Act).accuracy, rc2 = best.at(Module::RC2).accuracy;
    const double fc2 = best.at(Module::FC2).accuracy;
    // FC2 is last or second-to-last when at most one module is strictly worse.
    std::size_t worse = 0;
    for (const auto& [m, b] : best)
      if (b.accuracy < fc2) ++worse;
    const bool ok = act >= rc2 && worse <= 1;
    votes += ok;
    per_seed += (per_seed.empty() ? "" : ", ") + std::string("seed ") + std::to_string(s.k) + " Act " + fmt(act, 3) +
                " RC2 " + fmt(rc2, 3) + " FC2 above " + std::to_string(worse) + (ok ? " ok" : " no");
  }
  return {2 * votes > r.seeds.size(),
          std::to_string(votes) + "/" + std::to_string(r.seeds.size()) + " seeds [" + per_seed + "]"};
}

// 8. Corruption properties.
Verdict corruption_properties() {
  DatasetSpec spec;
  spec.num_samples = 100;
  spec.seed = 81;
  const auto d = synth_generate(spec);
  bool monotone = true, in_range = true;
  for (auto kind : kAllCorruptions) {
    double prev = 0.0;
    for (int sev = 1; sev <= 5; ++sev) {
      double total = 0.0;
      for (std::size_t i = 0; i < d.size(); ++i) {
        const auto img = d.image(i);
        const auto out = corrupt(img, {kind, sev, 82}, i);
        for (std::size_t p = 0; p < img.size(); ++p) {
          total += (out[p] - img[p]) * (out[p] - img[p]);
          in_range = in_range && out[p] >= 0.0f && out[p] <= 1.0f;
        }
      }
      monotone = monotone && total >= prev;
      prev = total;
    }
  }

  double worst_mean = 0.0;
  for (std::size_t i = 0; i < 20; ++i) {
    const auto img = d.image(i);
    for (int sev = 1; sev <= 5; ++sev) {
      const auto out = apply_contrast(img, kContrastFactor[static_cast<std::size_t>(sev - 1)]);
      const std::size_t plane = img.size() / 3;
      for (std::size_t c = 0; c < 3; ++c) {
        double m0 = 0, m1 = 0;
        for (std::size_t p = 0; p < plane; ++p) {
          m0 += img[c * plane + p];
          m1 += out[c * plane + p];
        }
        worst_mean = std::max(worst_mean, std::abs(m0 - m1) / static_cast<double>(plane));
      }
    }
  }

  Tensor gray({3, 256, 256});
  gray.fill(0.5f);
  auto sd = [](const Tensor& t) {
    double m = 0, s = 0;
    for (float v : t.data()) m += v;
    m /= static_cast<double>(t.size());
    for (float v : t.data()) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(t.size()));
  };
  double worst_moment = 0.0;
  for (std::size_t sev = 0; sev < 5; ++sev) {
    const double sigma = kNoiseSigma[sev];
    const auto key = combine_key(83, sev);
    const double raw = sd(apply_gaussian_noise(gray, sigma, key, false)) / sigma - 1.0;
    const double clipped =
        sd(apply_gaussian_noise(gray, sigma, key, true)) / oracle::censored_normal_std(sigma, 0.5) - 1.0;
    worst_moment = std::max({worst_moment, std::abs(raw), std::abs(clipped)});
  }

  const bool pass = monotone && in_range && worst_mean < 1e-6 && worst_moment < 0.05;
  return {pass, std::string("MSE monotone in severity: ") + (monotone ? "yes" : "no") + ", range [0,1]: " +
                    (in_range ? "yes" : "no") + ", contrast channel-mean drift " + fmt(worst_mean, 3) +
                    ", noise std within " + fmt(100 * worst_moment, 3) + "% (< 5%)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vitprobe acceptance suite"};
  std::string workdir = (fs::temp_directory_path() / "vitprobe_acceptance").string();
  std::vector<int> only;
  app.option_defaults()->always_capture_default();
  app.add_option("--workdir", workdir, "Scratch directory");
  app.add_option("--only", only, "Run just these criteria (1-8)")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  const auto wanted = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };
  std::optional<Reproduction> repro;
  const auto shared = [&]() -> const Reproduction& {
    if (!repro) repro = reproduce();
    return *repro;
  };
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradient oracle", gradient_oracle},
      {"architecture invariants", architecture_invariants},
      {"optimizer oracles", optimizer_oracles},
      {"probe oracles", probe_oracles},
      {"determinism and formats", [&] { return determinism_and_formats(workdir); }},
      {"qualitative depth profile", [&] { return qualitative_depth(shared()); }},
      {"qualitative module ranking", [&] { return qualitative_modules(shared()); }},
      {"corruption properties", corruption_properties},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!wanted(n)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    all = all && v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " " << n << " " << criteria[i].first << ": " << v.detail << std::endl;
  }
  return all ? 0 : 1;
}
