#include "vitprobe_cli/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vitprobe/corruptions.hpp"
#include "vitprobe/data.hpp"
#include "vitprobe/error.hpp"
#include "vitprobe/finetune.hpp"
#include "vitprobe/io.hpp"
#include "vitprobe/probe.hpp"
#include "vitprobe/sweep.hpp"
#include "vitprobe/version.hpp"
#include "vitprobe/weights_io.hpp"

namespace vitprobe::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<double> parse_lr_grid(const std::string& text) {
  std::vector<double> grid;
  for (const auto& item : split_list(text)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) fail(ErrorKind::Spec, "--lr-grid: '" + item + "' is not a number");
    grid.push_back(v);
  }
  if (grid.empty()) fail(ErrorKind::Spec, "--lr-grid: empty list");
  return grid;
}

/// "all" or a comma list of "<block>.<module>" names, e.g. "5.RC2,3.Act".
std::vector<TapId> parse_taps(const std::string& text, const ModelConfig& cfg) {
  if (text == "all") return all_taps(cfg);
  std::vector<TapId> taps;
  for (const auto& item : split_list(text)) {
    const auto dot = item.find('.');
    const auto m = dot == std::string::npos ? std::nullopt : parse_module(std::string_view(item).substr(dot + 1));
    std::size_t block = 0;
    bool ok = m.has_value() && dot > 0 &&
              std::all_of(item.begin(), item.begin() + static_cast<std::ptrdiff_t>(dot), [](char c) { return c >= '0' && c <= '9'; });
    if (ok) {
      try {
        block = std::stoul(item.substr(0, dot));
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok) fail(ErrorKind::Spec, "--taps: '" + item + "' is not of the form <block>.<module>");
    const TapId tap{block, *m};
    validate_tap(tap, cfg);
    taps.push_back(tap);
  }
  if (taps.empty()) fail(ErrorKind::Spec, "--taps: empty list");
  std::sort(taps.begin(), taps.end());
  taps.erase(std::unique(taps.begin(), taps.end()), taps.end());
  return taps;
}

fs::path strip_trailing_separator(const fs::path& p) {
  fs::path n = p.lexically_normal();
  if (n.filename().empty() && n.has_parent_path()) n = n.parent_path();
  return n;
}

/// Content hash of a file, or of a directory as the hash of its sorted
/// "name hash" listing.
std::string content_hash(const fs::path& p) {
  if (fs::is_directory(p)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(p))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::string listing;
    for (const auto& f : files) listing += f.filename().string() + " " + content_hash(f) + "\n";
    const auto* b = reinterpret_cast<const unsigned char*>(listing.data());
    return fnv1a_hex({b, listing.size()});
  }
  const auto bytes = read_file_bytes(p);
  return fnv1a_hex(bytes);
}

/// Run manifest written to "<output>.manifest.json". Thread counts are left
/// out on purpose: they never change results, so manifests stay identical.
struct Manifest {
  std::string command;
  json params = json::object();
  std::vector<fs::path> inputs;
  json results = json::object();

  void write_for(const fs::path& output) const {
    const fs::path out = strip_trailing_separator(output);
    json m;
    m["tool"] = "vitprobe";
    m["version"] = kVersion;
    m["container_version"] = kContainerVersion;
    m["command"] = command;
    m["params"] = params;
    json in = json::array();
    for (const auto& p : inputs) in.push_back({{"path", p.string()}, {"fnv1a64", content_hash(p)}});
    m["inputs"] = in;
    m["output"] = {{"path", out.string()}, {"fnv1a64", content_hash(out)}};
    if (!results.empty()) m["results"] = results;
    write_text_atomic(out.string() + ".manifest.json", m.dump(2) + "\n");
  }
};

std::string format_number(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

struct Runner {
  std::ostream& out;
  std::size_t threads = 1;

  void init_toy(const std::string& config, std::uint64_t seed, const fs::path& dest) {
    const ModelConfig cfg = resolve_model_config(config);
    save_weights(vitprobe::init_toy(cfg, seed), cfg, dest);
    Manifest m{"init-toy", {{"config", config}, {"seed", seed}}, {}, {}};
    if (fs::exists(config)) m.inputs.push_back(config);
    m.results = {{"parameters", parameter_count(cfg)}};
    m.write_for(dest);
    out << "wrote " << dest.string() << " (" << parameter_count(cfg) << " parameters)\n";
  }

  void gen_data(const DatasetSpec& spec, const std::optional<fs::path>& spec_file, const std::string& split,
                std::uint64_t split_seed, const fs::path& dest) {
    spec.validate();
    Dataset data = synth_generate(spec);
    if (split != "none") {
      const Split s = split_80_20(data.labels, split_seed);
      data = data.subset(split == "train" ? s.train : s.test);
    }
    save_dataset(data, dest);
    Manifest m{"gen-data", {}, {}, {}};
    m.params = {{"spec", json::parse(dataset_spec_to_json(spec))}, {"split", split}, {"split_seed", split_seed}};
    if (spec_file) m.inputs.push_back(*spec_file);
    m.results = {{"num_samples", data.size()}};
    m.write_for(dest);
    out << "wrote " << data.size() << " images to " << dest.string() << "\n";
  }

  void corrupt(const fs::path& in, const std::string& kind, int severity, std::uint64_t seed, const fs::path& dest) {
    const CorruptionSpec spec{parse_corruption_kind(kind), severity, seed};
    spec.validate();
    const Dataset clean = load_dataset(in);
    const Dataset bad = corrupt_dataset(clean, spec);
    save_dataset(bad, dest);
    Manifest m{"corrupt", {{"kind", kind}, {"severity", severity}, {"seed", seed}}, {in}, {}};
    m.write_for(dest);
    out << "wrote " << bad.size() << " corrupted images to " << dest.string() << "\n";
  }

  void train(const fs::path& weights, const fs::path& data_dir, TrainConfig tc, const fs::path& dest,
             const std::optional<fs::path>& log) {
    const LoadedModel model = load_weights(weights);
    const Dataset data = load_dataset(data_dir);
    tc.threads = threads;
    tc.validate();
    const FinetuneResult result = finetune(data, model.weights, model.config, tc);
    save_weights(result.best.weights, model.config, dest);
    json grid = json::array();
    for (double lr : tc.lr_grid) grid.push_back(lr);
    Manifest m{"train", {}, {weights, data_dir}, {}};
    m.params = {{"lr_grid", grid},          {"steps", tc.total_steps},     {"batch_size", tc.batch_size},
                {"eval_interval", tc.eval_interval}, {"momentum", tc.momentum}, {"weight_decay", tc.weight_decay},
                {"clip_norm", tc.clip_norm}, {"val_fraction", tc.val_fraction}, {"seed", tc.seed}};
    m.results = {{"best_lr", result.best.lr},
                 {"best_step", result.best.step},
                 {"best_val_accuracy", result.best.val_accuracy}};
    m.write_for(dest);
    if (log) {
      write_text_atomic(*log, train_log_csv(result));
      m.write_for(*log);
    }
    out << "best checkpoint: lr " << format_number(result.best.lr) << ", step " << result.best.step
        << ", val accuracy " << format_number(result.best.val_accuracy) << "\n";
  }

  void extract(const fs::path& weights, const fs::path& data_dir, const std::string& taps, std::size_t batch,
               const fs::path& dest) {
    const LoadedModel model = load_weights(weights);
    const Dataset data = load_dataset(data_dir);
    const auto tap_list = parse_taps(taps, model.config);
    const FeatureSet set = extract_features(data, model.weights, model.config, tap_list, batch, threads);
    save_features(set, dest);
    Manifest m{"extract", {{"taps", taps}, {"batch_size", batch}}, {weights, data_dir}, {}};
    m.results = {{"num_samples", data.size()}, {"num_taps", tap_list.size()}};
    m.write_for(dest);
    out << "wrote " << tap_list.size() << " taps x " << data.size() << " samples to " << dest.string() << "\n";
  }

  static FeatureMatrix matrix_for(const FeatureSet& set, const TapId& tap, const fs::path& origin) {
    const auto it = set.features.find(tap);
    if (it == set.features.end())
      fail(ErrorKind::Tap, origin.string() + " has no features for tap " + tap_name(tap));
    FeatureMatrix fm{it->second, set.labels, tap};
    fm.validate();
    return fm;
  }

  void probe(const fs::path& train_path, const fs::path& test_path, const std::string& tap_text, const FitConfig& fit,
             const fs::path& dest) {
    const FeatureSet train = load_features(train_path);
    const FeatureSet test = load_features(test_path);
    TapId tap;
    if (tap_text == "auto") {
      if (train.features.size() != 1)
        fail(ErrorKind::Spec, "--tap: " + train_path.string() + " holds " + std::to_string(train.features.size()) +
                                  " taps; name one explicitly");
      tap = train.features.begin()->first;
    } else {
      const auto taps = parse_taps(tap_text, train.config);
      if (taps.size() != 1) fail(ErrorKind::Spec, "--tap: expected exactly one tap");
      tap = taps.front();
    }
    const FeatureMatrix tr = matrix_for(train, tap, train_path);
    const FeatureMatrix te = matrix_for(test, tap, test_path);
    std::int32_t max_label = 0;
    for (auto l : tr.labels) max_label = std::max(max_label, l);
    for (auto l : te.labels) max_label = std::max(max_label, l);
    const ProbeModel model = fit_probe(tr, fit, static_cast<std::size_t>(max_label) + 1);
    const double train_acc = evaluate_accuracy(model, tr);
    const double test_acc = evaluate_accuracy(model, te);
    save_probe(model, dest);
    Manifest m{"probe", {{"tap", tap_name(tap)}, {"l2", fit.l2}, {"tol", fit.tol}, {"max_iter", fit.max_iter}},
               {train_path, test_path}, {}};
    m.results = {{"train_accuracy", train_acc}, {"test_accuracy", test_acc}, {"converged", model.converged},
                 {"iterations", model.iterations}};
    m.write_for(dest);
    out << "tap " << tap_name(tap) << ": train accuracy " << format_number(train_acc) << ", test accuracy "
        << format_number(test_acc) << "\n";
  }

  void sweep(const fs::path& weights, const fs::path& train_dir, const fs::path& test_dir, const std::string& taps,
             const FitConfig& fit, std::uint64_t seed, std::size_t batch, const std::optional<fs::path>& cache,
             const std::string& name, const fs::path& report_path, const std::optional<fs::path>& plot) {
    const LoadedModel model = load_weights(weights);
    SweepPlan plan;
    plan.config = model.config;
    plan.weights = model.weights;
    plan.train = load_dataset(train_dir);
    plan.test = load_dataset(test_dir);
    plan.taps = parse_taps(taps, model.config);
    plan.fit = fit;
    plan.seed = seed;
    plan.threads = threads;
    plan.batch_size = batch;
    plan.cache_dir = cache;
    plan.dataset_name = name;
    const SweepReport report = run_sweep(plan);
    save_report(report, report_path);
    Manifest m{"sweep", {}, {weights, train_dir, test_dir}, {}};
    m.params = {{"taps", taps},     {"l2", fit.l2},       {"tol", fit.tol},       {"max_iter", fit.max_iter},
                {"seed", seed},     {"batch_size", batch}, {"dataset_name", name}};
    m.results = {{"rows", report.rows.size()}};
    m.write_for(report_path);
    if (plot) {
      const std::string title = report.rows.empty() ? name : report.rows.front().dataset;
      write_text_atomic(*plot, depth_profile_svg(report, title));
      m.write_for(*plot);
    }
    out << "wrote " << report.rows.size() << " rows to " << report_path.string() << "\n";
  }

  void report(const std::string& inputs, const std::string& table, double tau, const fs::path& dest) {
    if (table != "best-per-module") fail(ErrorKind::Spec, "--table: unknown table '" + table + "'");
    const auto paths = split_list(inputs);
    if (paths.empty()) fail(ErrorKind::Spec, "--inputs: empty list");
    std::vector<SweepReport> reports;
    Manifest m{"report", {{"table", table}, {"tau", tau}}, {}, {}};
    for (const auto& p : paths) {
      reports.push_back(load_report(p));
      m.inputs.emplace_back(p);
    }
    const std::string csv = best_per_module_csv(reports, tau);
    write_text_atomic(dest, csv);
    const auto rows = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) - 1;
    m.results = {{"rows", rows}};
    m.write_for(dest);
    out << "wrote " << rows << " rows to " << dest.string() << "\n";
  }
};

void build(CLI::App& app, Runner& run, std::function<void()>& action) {
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kVersion));
  app.add_option("--threads", run.threads, "Worker threads; results do not depend on it")
      ->check(CLI::Range(std::size_t{1}, std::size_t{256}));

  {
    auto* sub = app.add_subcommand("init-toy", "Write freshly initialized weights");
    auto config = std::make_shared<std::string>("toy");
    auto seed = std::make_shared<std::uint64_t>(0);
    auto dest = std::make_shared<std::string>();
    sub->add_option("--config", *config, "Preset name (toy, base) or JSON config file");
    sub->add_option("--seed", *seed, "Initialization seed");
    sub->add_option("--out", *dest, "Output .vitw file")->required();
    sub->callback([&, config, seed, dest] { action = [&, config, seed, dest] { run.init_toy(*config, *seed, *dest); }; });
  }
  {
    auto* sub = app.add_subcommand("gen-data", "Generate the procedural shapes dataset");
    auto spec = std::make_shared<DatasetSpec>();
    auto spec_file = std::make_shared<std::string>();
    auto split = std::make_shared<std::string>("none");
    auto split_seed = std::make_shared<std::uint64_t>(0);
    auto dest = std::make_shared<std::string>();
    auto* file_opt = sub->add_option("--spec", *spec_file, "JSON dataset spec; replaces the four flags below");
    sub->add_option("--classes", spec->num_classes, "Number of classes")->excludes(file_opt);
    sub->add_option("--samples", spec->num_samples, "Number of images")->excludes(file_opt);
    sub->add_option("--image-size", spec->image_size, "Image side in pixels")->excludes(file_opt);
    sub->add_option("--seed", spec->seed, "Generator seed")->excludes(file_opt);
    sub->add_option("--split", *split, "Keep the stratified 80/20 train or test part, or everything")
        ->check(CLI::IsMember({"none", "train", "test"}));
    sub->add_option("--split-seed", *split_seed, "Seed of the stratified split");
    sub->add_option("--out", *dest, "Output dataset directory")->required();
    sub->callback([&, spec, spec_file, split, split_seed, dest] {
      action = [&, spec, spec_file, split, split_seed, dest] {
        std::optional<fs::path> file;
        DatasetSpec s = *spec;
        if (!spec_file->empty()) {
          file = *spec_file;
          s = dataset_spec_from_json(read_text_file(*file));
        }
        run.gen_data(s, file, *split, *split_seed, *dest);
      };
    });
  }
  {
    auto* sub = app.add_subcommand("corrupt", "Apply a corruption to every image of a dataset");
    auto in = std::make_shared<std::string>();
    auto kind = std::make_shared<std::string>("gaussian_noise");
    auto severity = std::make_shared<int>(5);
    auto seed = std::make_shared<std::uint64_t>(0);
    auto dest = std::make_shared<std::string>();
    sub->add_option("--in", *in, "Input dataset directory")->required();
    sub->add_option("--kind", *kind, "contrast, gaussian_noise, speckle_noise, motion_blur or snow");
    sub->add_option("--severity", *severity, "Severity level 1..5");
    sub->add_option("--seed", *seed, "Corruption seed");
    sub->add_option("--out", *dest, "Output dataset directory")->required();
    sub->callback([&, in, kind, severity, seed, dest] {
      action = [&, in, kind, severity, seed, dest] { run.corrupt(*in, *kind, *severity, *seed, *dest); };
    });
  }
  {
    auto* sub = app.add_subcommand("train", "Finetune over a learning-rate grid and keep the best checkpoint");
    auto tc = std::make_shared<TrainConfig>();
    auto grid = std::make_shared<std::string>("0.001,0.003,0.01,0.03");
    auto weights = std::make_shared<std::string>();
    auto data = std::make_shared<std::string>();
    auto dest = std::make_shared<std::string>();
    auto log = std::make_shared<std::string>();
    sub->add_option("--weights", *weights, "Initial .vitw weights")->required();
    sub->add_option("--data", *data, "Training dataset directory; its last val-fraction is held out")->required();
    sub->add_option("--lr-grid", *grid, "Comma-separated base learning rates");
    sub->add_option("--steps", tc->total_steps, "Optimizer steps per learning rate");
    sub->add_option("--batch-size", tc->batch_size, "Minibatch size");
    sub->add_option("--eval-interval", tc->eval_interval, "Steps between validation passes");
    sub->add_option("--momentum", tc->momentum, "SGD momentum");
    sub->add_option("--weight-decay", tc->weight_decay, "L2 weight decay");
    sub->add_option("--clip-norm", tc->clip_norm, "Global gradient norm clip");
    sub->add_option("--val-fraction", tc->val_fraction, "Held-out validation fraction");
    sub->add_option("--seed", tc->seed, "Minibatch and augmentation seed");
    sub->add_option("--out", *dest, "Best checkpoint .vitw")->required();
    sub->add_option("--log", *log, "Training log CSV (skipped when empty)");
    sub->callback([&, tc, grid, weights, data, dest, log] {
      action = [&, tc, grid, weights, data, dest, log] {
        TrainConfig c = *tc;
        c.lr_grid = parse_lr_grid(*grid);
        std::optional<fs::path> l;
        if (!log->empty()) l = *log;
        run.train(*weights, *data, c, *dest, l);
      };
    });
  }
  {
    auto* sub = app.add_subcommand("extract", "Capture CLS features at probe taps");
    auto weights = std::make_shared<std::string>();
    auto data = std::make_shared<std::string>();
    auto taps = std::make_shared<std::string>("all");
    auto batch = std::make_shared<std::size_t>(256);
    auto dest = std::make_shared<std::string>();
    sub->add_option("--weights", *weights, "Model .vitw weights")->required();
    sub->add_option("--data", *data, "Dataset directory")->required();
    sub->add_option("--taps", *taps, "'all' or a comma list such as 5.RC2,3.Act");
    sub->add_option("--batch-size", *batch, "Images per forward batch");
    sub->add_option("--out", *dest, "Output .vitf features")->required();
    sub->callback([&, weights, data, taps, batch, dest] {
      action = [&, weights, data, taps, batch, dest] { run.extract(*weights, *data, *taps, *batch, *dest); };
    });
  }
  {
    auto* sub = app.add_subcommand("probe", "Fit a linear probe on one tap and score it");
    auto fit = std::make_shared<FitConfig>();
    auto train = std::make_shared<std::string>();
    auto test = std::make_shared<std::string>();
    auto tap = std::make_shared<std::string>("auto");
    auto dest = std::make_shared<std::string>();
    sub->add_option("--train", *train, "Training .vitf features")->required();
    sub->add_option("--test", *test, "Test .vitf features")->required();
    sub->add_option("--tap", *tap, "Tap such as 5.RC2; 'auto' takes the only tap in the file");
    sub->add_option("--l2", fit->l2, "L2 penalty on the probe weights");
    sub->add_option("--tol", fit->tol, "Gradient-norm tolerance");
    sub->add_option("--max-iter", fit->max_iter, "L-BFGS iteration cap");
    sub->add_option("--out", *dest, "Output .vitf probe")->required();
    sub->callback([&, fit, train, test, tap, dest] {
      action = [&, fit, train, test, tap, dest] {
        fit->validate();
        run.probe(*train, *test, *tap, *fit, *dest);
      };
    });
  }
  {
    auto* sub = app.add_subcommand("sweep", "Probe every tap and write the depth report");
    auto fit = std::make_shared<FitConfig>();
    auto weights = std::make_shared<std::string>();
    auto train = std::make_shared<std::string>();
    auto test = std::make_shared<std::string>();
    auto taps = std::make_shared<std::string>("all");
    auto seed = std::make_shared<std::uint64_t>(0);
    auto batch = std::make_shared<std::size_t>(256);
    auto cache = std::make_shared<std::string>();
    auto name = std::make_shared<std::string>();
    auto report = std::make_shared<std::string>();
    auto plot = std::make_shared<std::string>();
    sub->add_option("--weights", *weights, "Model .vitw weights")->required();
    sub->add_option("--train-data", *train, "Probe training dataset directory")->required();
    sub->add_option("--test-data", *test, "Probe test dataset directory")->required();
    sub->add_option("--taps", *taps, "'all' or a comma list such as 5.RC2,3.Act");
    sub->add_option("--l2", fit->l2, "L2 penalty on the probe weights");
    sub->add_option("--tol", fit->tol, "Gradient-norm tolerance");
    sub->add_option("--max-iter", fit->max_iter, "L-BFGS iteration cap");
    sub->add_option("--seed", *seed, "Seed recorded in every report row");
    sub->add_option("--batch-size", *batch, "Images per forward batch");
    sub->add_option("--cache-dir", *cache, "Spill features here (skipped when empty)");
    sub->add_option("--dataset-name", *name, "Report dataset name (empty: test dataset name)");
    sub->add_option("--report", *report, "Output report CSV")->required();
    sub->add_option("--plot", *plot, "Output SVG depth profile (skipped when empty)");
    sub->callback([&, fit, weights, train, test, taps, seed, batch, cache, name, report, plot] {
      action = [&, fit, weights, train, test, taps, seed, batch, cache, name, report, plot] {
        fit->validate();
        std::optional<fs::path> c, p;
        if (!cache->empty()) c = *cache;
        if (!plot->empty()) p = *plot;
        run.sweep(*weights, *train, *test, *taps, *fit, *seed, *batch, c, *name, *report, p);
      };
    });
  }
  {
    auto* sub = app.add_subcommand("report", "Summarize sweep reports");
    auto inputs = std::make_shared<std::string>();
    auto table = std::make_shared<std::string>("best-per-module");
    auto tau = std::make_shared<double>(kOodThreshold);
    auto dest = std::make_shared<std::string>();
    sub->add_option("--inputs", *inputs, "Comma-separated report CSVs")->required();
    sub->add_option("--table", *table, "Table to emit (best-per-module)");
    sub->add_option("--tau", *tau, "Gap above which a profile counts as OOD-like");
    sub->add_option("--out", *dest, "Output CSV")->required();
    sub->callback([&, inputs, table, tau, dest] {
      action = [&, inputs, table, tau, dest] { run.report(*inputs, *table, *tau, *dest); };
    });
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Layer-wise linear probing of vision transformers", "vitprobe"};
  Runner run{out};
  std::function<void()> action;
  build(app, run, action);
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion& e) {
    out << e.what() << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    // Subcommand --help surfaces here too, as CallForHelp from the child.
    err << "CONFIG: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << category_name(e.category()) << ": " << e.what() << "\n";
    return 1;
  }
  try {
    if (action) action();
    return 0;
  } catch (const Error& e) {
    err << category_name(e.category()) << ": " << e.what() << "\n";
  } catch (const nlohmann::json::exception& e) {
    err << "CONFIG: " << e.what() << "\n";
  } catch (const fs::filesystem_error& e) {
    err << "IO: " << e.what() << "\n";
  } catch (const std::bad_alloc&) {
    err << "IO: out of memory\n";
  } catch (const std::exception& e) {
    err << "NUMERIC: " << e.what() << "\n";
  }
  return 1;
}

}  // namespace vitprobe::cli
