#include "vitprobe/sweep.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <tuple>

#include "format.hpp"
#include "parallel.hpp"
#include "vitprobe/io.hpp"

namespace vitprobe {

FeatureSet extract_features(const Dataset& data, const ModelWeights<float>& w, const ModelConfig& cfg,
                            const std::vector<TapId>& taps, std::size_t batch_size, std::size_t threads) {
  cfg.validate();
  if (batch_size == 0) fail(ErrorKind::Spec, "batch_size must be positive");
  if (data.size() == 0) fail(ErrorKind::Data, "cannot extract features from an empty dataset");
  if (taps.empty()) fail(ErrorKind::Tap, "no taps requested");
  for (const auto& t : taps) validate_tap(t, cfg);
  const std::set<TapId> tap_set(taps.begin(), taps.end());

  FeatureSet out;
  out.config = cfg;
  out.labels = data.labels;
  out.source = data.name;
  const std::size_t n = data.size();
  for (const auto& t : tap_set) out.features.emplace(t, Tensor({n, tap_width(t, cfg)}));

  const std::size_t batches = (n + batch_size - 1) / batch_size;
  detail::parallel_for(batches, threads, [&](std::size_t bi) {
    const std::size_t lo = bi * batch_size, hi = std::min(n, lo + batch_size);
    std::vector<std::size_t> idx(hi - lo);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = lo + i;
    const Tensor images = preprocess_eval(data.gather(idx), cfg.image_size);
    const auto collected = forward_collect(images, w, cfg, tap_set);
    for (const auto& [tap, feats] : collected.features) {
      Tensor& dst = out.features.at(tap);
      const std::size_t width = feats.cols();
      std::copy(feats.data().begin(), feats.data().end(), dst.data().begin() + static_cast<std::ptrdiff_t>(lo * width));
    }
  });
  return out;
}

void SweepPlan::validate() const {
  config.validate();
  validate_weights(weights, config);
  fit.validate();
  for (const auto& t : taps) validate_tap(t, config);
  if (train.size() == 0 || test.size() == 0) fail(ErrorKind::Data, "sweep needs non-empty train and test splits");
  if (batch_size == 0) fail(ErrorKind::Spec, "batch_size must be positive");
}

std::vector<TapId> SweepPlan::resolved_taps() const {
  if (taps.empty()) return all_taps(config);
  std::set<TapId> unique(taps.begin(), taps.end());
  return {unique.begin(), unique.end()};
}

double AccuracyMatrix::depth_pct(std::size_t layer) const {
  return 100.0 * static_cast<double>(layer + 1) / static_cast<double>(num_blocks);
}

void AccuracyMatrix::set(const TapId& tap, double accuracy) {
  if (tap.block >= num_blocks) fail(ErrorKind::Tap, "tap " + tap_name(tap) + " outside accuracy matrix");
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) fail(ErrorKind::Evaluation, "accuracy outside [0, 1]");
  entries[tap.block][module_index(tap.module)] = accuracy;
}

std::optional<double> AccuracyMatrix::get(const TapId& tap) const {
  if (tap.block >= num_blocks) return std::nullopt;
  return entries[tap.block][module_index(tap.module)];
}

double AccuracyMatrix::at(std::size_t layer, Module m) const {
  const auto v = get(TapId{layer, m});
  if (!v) fail(ErrorKind::Evaluation, "no accuracy recorded for tap " + tap_name(TapId{layer, m}));
  return *v;
}

bool AccuracyMatrix::complete_for(Module m) const {
  if (num_blocks == 0) return false;
  return std::all_of(entries.begin(), entries.end(), [m](const auto& row) { return row[module_index(m)].has_value(); });
}

AccuracyMatrix SweepReport::matrix() const {
  AccuracyMatrix m(num_blocks);
  for (const auto& r : rows) m.set(TapId{r.layer, r.module}, r.accuracy);
  return m;
}

namespace {

FeatureMatrix feature_matrix(const FeatureSet& set, const TapId& tap) {
  return FeatureMatrix{set.features.at(tap), set.labels, tap};
}

}  // namespace

SweepReport run_sweep(const SweepPlan& plan) {
  const auto start = std::chrono::steady_clock::now();
  plan.validate();
  const auto taps = plan.resolved_taps();

  FeatureSet train = extract_features(plan.train, plan.weights, plan.config, taps, plan.batch_size, plan.threads);
  FeatureSet test = extract_features(plan.test, plan.weights, plan.config, taps, plan.batch_size, plan.threads);
  if (plan.cache_dir) {
    std::filesystem::create_directories(*plan.cache_dir);
    save_features(train, *plan.cache_dir / "train.vitf");
    save_features(test, *plan.cache_dir / "test.vitf");
    train = load_features(*plan.cache_dir / "train.vitf");
    test = load_features(*plan.cache_dir / "test.vitf");
  }

  const std::size_t classes = std::max(plan.train.num_classes, plan.test.num_classes);
  std::vector<std::optional<ProbeModel>> models(taps.size());
  std::vector<double> accuracy(taps.size(), 0.0);
  detail::parallel_for(taps.size(), plan.threads, [&](std::size_t i) {
    const ProbeModel model = fit_probe(feature_matrix(train, taps[i]), plan.fit, classes);
    accuracy[i] = evaluate_accuracy(model, feature_matrix(test, taps[i]));
    models[i] = model;
  });

  SweepReport report;
  report.num_blocks = plan.config.num_blocks;
  const AccuracyMatrix shape(plan.config.num_blocks);
  std::string kind = "none";
  int severity = 0;
  if (plan.test.spec && plan.test.spec->corruption) {
    kind = std::string(corruption_name(plan.test.spec->corruption->kind));
    severity = plan.test.spec->corruption->severity;
  }
  for (std::size_t i = 0; i < taps.size(); ++i) {
    SweepRow row;
    row.dataset = plan.dataset_name.empty() ? plan.test.name : plan.dataset_name;
    row.corruption_kind = kind;
    row.severity = severity;
    row.layer = taps[i].block;
    row.module = taps[i].module;
    row.depth_pct = shape.depth_pct(taps[i].block);
    row.accuracy = accuracy[i];
    row.n_train = plan.train.size();
    row.n_test = plan.test.size();
    row.converged = models[i]->converged;
    row.seed = plan.seed;
    report.rows.push_back(std::move(row));
    report.diagnostics.push_back({taps[i], models[i]->final_loss, models[i]->iterations, models[i]->converged});
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

namespace {

constexpr const char* kCsvHeader =
    "dataset,corruption_kind,severity,layer,module,depth_pct,accuracy,n_train,n_test,converged,seed";

void check_field(const std::string& s) {
  if (s.find_first_of(",\n\r\"") != std::string::npos) {
    fail(ErrorKind::Spec, "report field '" + s + "' may not contain commas, quotes or newlines");
  }
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = line.find(sep, pos);
    out.emplace_back(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

template <class T>
T parse_number(const std::string& s, const std::string& what, const std::string& origin) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    fail(ErrorKind::Data, origin + ": field " + what + " has invalid value '" + s + "'");
  }
  return v;
}

}  // namespace

std::string report_to_csv(const SweepReport& report) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : report.rows) {
    check_field(r.dataset);
    check_field(r.corruption_kind);
    out += r.dataset + "," + r.corruption_kind + "," + std::to_string(r.severity) + "," + std::to_string(r.layer) +
           "," + std::string(module_name(r.module)) + "," + format_double(r.depth_pct) + "," +
           format_double(r.accuracy) + "," + std::to_string(r.n_train) + "," + std::to_string(r.n_test) + "," +
           (r.converged ? "true" : "false") + "," + std::to_string(r.seed) + "\n";
  }
  return out;
}

SweepReport report_from_csv(std::string_view text, const std::string& origin) {
  std::vector<std::string> lines = split(text, '\n');
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  for (auto& l : lines) {
    if (!l.empty() && l.back() == '\r') l.pop_back();
  }
  if (lines.empty() || lines.front() != kCsvHeader) {
    fail(ErrorKind::Data, origin + ": missing or unexpected report header (expected '" + kCsvHeader + "')");
  }
  SweepReport report;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split(lines[i], ',');
    const std::string where = origin + " line " + std::to_string(i + 1);
    if (f.size() != 11) fail(ErrorKind::Data, where + ": expected 11 fields, got " + std::to_string(f.size()));
    SweepRow r;
    r.dataset = f[0];
    r.corruption_kind = f[1];
    r.severity = parse_number<int>(f[2], "severity", where);
    r.layer = parse_number<std::size_t>(f[3], "layer", where);
    const auto m = parse_module(f[4]);
    if (!m) fail(ErrorKind::Data, where + ": field module has invalid value '" + f[4] + "'");
    r.module = *m;
    r.depth_pct = parse_number<double>(f[5], "depth_pct", where);
    r.accuracy = parse_number<double>(f[6], "accuracy", where);
    if (!(r.accuracy >= 0.0 && r.accuracy <= 1.0)) fail(ErrorKind::Data, where + ": accuracy outside [0, 1]");
    r.n_train = parse_number<std::size_t>(f[7], "n_train", where);
    r.n_test = parse_number<std::size_t>(f[8], "n_test", where);
    if (f[9] != "true" && f[9] != "false") fail(ErrorKind::Data, where + ": field converged must be true/false");
    r.converged = f[9] == "true";
    r.seed = parse_number<std::uint64_t>(f[10], "seed", where);
    report.num_blocks = std::max(report.num_blocks, r.layer + 1);
    report.rows.push_back(std::move(r));
  }
  // depth_pct = 100 (layer + 1) / L recovers L even when the last layers
  // were not requested.
  for (const auto& r : report.rows) {
    if (r.depth_pct > 0.0) {
      const double blocks = 100.0 * static_cast<double>(r.layer + 1) / r.depth_pct;
      report.num_blocks = std::max(report.num_blocks, static_cast<std::size_t>(std::llround(blocks)));
    }
  }
  return report;
}

void save_report(const SweepReport& report, const std::filesystem::path& path) {
  write_text_atomic(path, report_to_csv(report));
}

SweepReport load_report(const std::filesystem::path& path) {
  return report_from_csv(read_text_file(path), path.string());
}

std::map<Module, ModuleBest> best_per_module(const AccuracyMatrix& matrix) {
  std::map<Module, ModuleBest> out;
  for (Module m : kAllModules) {
    if (!matrix.complete_for(m)) continue;
    ModuleBest best{matrix.at(0, m), 0};
    for (std::size_t l = 1; l < matrix.num_blocks; ++l) {
      const double a = matrix.at(l, m);
      if (a > best.accuracy) best = {a, l};
    }
    out.emplace(m, best);
  }
  return out;
}

OodSignature ood_signature(const AccuracyMatrix& matrix, Module module, double tau) {
  if (!matrix.complete_for(module)) {
    fail(ErrorKind::Evaluation, "accuracy matrix is incomplete for module " + std::string(module_name(module)));
  }
  const auto best = best_per_module(matrix).at(module);
  OodSignature s;
  s.best_layer = best.layer;
  s.gap = best.accuracy - matrix.at(matrix.num_blocks - 1, module);
  s.ood_like = s.gap > tau + kGapSlack;
  return s;
}

std::string best_per_module_csv(const std::vector<SweepReport>& reports, double tau) {
  using Key = std::tuple<std::string, std::string, int>;
  std::vector<Key> order;
  std::map<Key, SweepReport> groups;
  for (const auto& rep : reports) {
    for (const auto& row : rep.rows) {
      const Key key{row.dataset, row.corruption_kind, row.severity};
      auto [it, inserted] = groups.try_emplace(key);
      if (inserted) order.push_back(key);
      it->second.num_blocks = std::max(it->second.num_blocks, rep.num_blocks);
      it->second.rows.push_back(row);
    }
  }
  std::string out = "dataset,corruption_kind,severity,module,best_accuracy,best_layer,best_depth_pct,final_accuracy,gap,signature\n";
  for (const auto& key : order) {
    const AccuracyMatrix m = groups.at(key).matrix();
    for (const auto& [module, best] : best_per_module(m)) {
      const auto sig = ood_signature(m, module, tau);
      out += std::get<0>(key) + "," + std::get<1>(key) + "," + std::to_string(std::get<2>(key)) + "," +
             std::string(module_name(module)) + "," + format_double(best.accuracy) + "," +
             std::to_string(best.layer) + "," + format_double(m.depth_pct(best.layer)) + "," +
             format_double(m.at(m.num_blocks - 1, module)) + "," + format_double(sig.gap) + "," +
             (sig.ood_like ? "OOD-like" : "ID-like") + "\n";
    }
  }
  return out;
}

namespace {

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr std::array<const char*, 8> kColors = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                "#9467bd", "#8c564b", "#e377c2", "#17becf"};

}  // namespace

std::string depth_profile_svg(const SweepReport& report, const std::string& title) {
  const AccuracyMatrix m = report.matrix();
  constexpr double W = 720, H = 440, left = 60, right = 130, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  double lo = 1.0, hi = 0.0;
  for (const auto& r : report.rows) {
    lo = std::min(lo, r.accuracy);
    hi = std::max(hi, r.accuracy);
  }
  if (report.rows.empty()) lo = 0.0, hi = 1.0;
  lo = std::max(0.0, std::floor(lo * 10.0) / 10.0);
  hi = std::min(1.0, std::ceil(hi * 10.0) / 10.0);
  if (hi <= lo) hi = std::min(1.0, lo + 0.1), lo = hi - 0.1;
  const auto sx = [&](double pct) { return left + pw * pct / 100.0; };
  const auto sy = [&](double acc) { return top + ph * (1.0 - (acc - lo) / (hi - lo)); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << fixed(left + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << xml_escape(title) << "</text>\n";
  svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double acc = lo + (hi - lo) * i / 4.0;
    svg << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << fixed(sy(acc)) << "\" y2=\""
        << fixed(sy(acc)) << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << left - 6 << "\" y=\"" << fixed(sy(acc) + 4) << "\" text-anchor=\"end\">" << fixed(acc)
        << "</text>\n";
  }
  for (std::size_t l = 0; l < m.num_blocks; ++l) {
    const double x = sx(m.depth_pct(l));
    svg << "<text x=\"" << fixed(x) << "\" y=\"" << fixed(top + ph + 18) << "\" text-anchor=\"middle\">"
        << fixed(m.depth_pct(l), 0) << "</text>\n";
  }
  svg << "<text x=\"" << fixed(left + pw / 2) << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">depth (%)</text>\n";
  svg << "<text transform=\"translate(16," << fixed(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << "probe accuracy</text>\n";
  std::size_t legend = 0;
  for (Module mod : kAllModules) {
    std::string points;
    for (std::size_t l = 0; l < m.num_blocks; ++l) {
      const auto v = m.get(TapId{l, mod});
      if (!v) continue;
      if (!points.empty()) points += ' ';
      points += fixed(sx(m.depth_pct(l))) + "," + fixed(sy(*v));
    }
    if (points.empty()) continue;
    const char* color = kColors[module_index(mod)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << points << "\"/>\n";
    const double ly = top + 10 + 18.0 * static_cast<double>(legend++);
    svg << "<line x1=\"" << left + pw + 14 << "\" x2=\"" << left + pw + 38 << "\" y1=\"" << fixed(ly) << "\" y2=\""
        << fixed(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << left + pw + 44 << "\" y=\"" << fixed(ly + 4) << "\">" << module_name(mod) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace vitprobe
