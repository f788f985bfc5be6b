// deload: fit watch-time tables, train the range policy, simulate strategies, emit plot data.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "deload/experiment.hpp"

namespace fs = std::filesystem;
using namespace deload;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::string out;
};

void add_common(CLI::App* app, Common& c, bool need_config) {
  auto* opt = app->add_option("--config", c.config, "experiment config (JSON)");
  if (need_config) opt->required();
  app->add_option("--seed", c.seed, "override the config seed");
  app->add_option("--jobs", c.jobs, "worker threads (1 = sequential)");
  app->add_option("--out", c.out, "output path");
}

ExperimentSpec spec_from(const Common& c) {
  auto spec = load_spec(c.config);
  if (c.seed) spec.seed = *c.seed;
  if (c.jobs) spec.jobs = std::max<std::size_t>(1, *c.jobs);
  return spec;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_fit(const Common& c, const std::string& records_path) {
  std::string records = records_path, out = c.out;
  if (!c.config.empty()) {
    const auto spec = spec_from(c);
    if (records.empty()) records = spec.data.watch_records;
    if (out.empty()) out = spec.data.param_table;
  }
  if (records.empty()) throw ConfigError("fit: give --records or a config with data.watch_records");
  if (out.empty()) throw ConfigError("fit: give --out or a config with data.param_table");
  BuildDiagnostics diag;
  const auto table = build_param_table(load_watch_records(records), {}, {}, &diag);
  if (table.by_bucket.empty()) throw DataError("fit: no duration bucket could be fitted");
  save_param_table(out, table);
  std::cout << "fitted " << table.by_video.size() << " videos, " << table.by_user.size() << " users, "
            << table.by_bucket.size() << " duration buckets -> " << out << '\n';
  for (const auto& [reason, n] : diag.failures) {
    const char* name = reason == FitFailure::insufficient_data ? "insufficient_data"
                       : reason == FitFailure::degenerate     ? "degenerate"
                                                              : "poor_fit";
    std::cout << "  skipped " << n << " groups: " << name << '\n';
  }
  return 0;
}

int cmd_train(const Common& c) {
  const auto spec = spec_from(c);
  std::string out = c.out;
  if (out.empty()) {
    auto it = spec.checkpoints.find(spec.train.mode);
    if (it == spec.checkpoints.end()) throw ConfigError("train: give --out or checkpoints." + std::string(to_string(spec.train.mode)));
    out = it->second;
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = load_data(spec);
  const auto result = train_experiment(spec, data);
  if (auto dir = fs::path(out).parent_path(); !dir.empty()) fs::create_directories(dir);
  save_checkpoint(out, result.checkpoint);
  const auto curve_path = fs::path(out).replace_extension(".curve.csv");
  std::ofstream cs(curve_path, std::ios::binary);
  if (!cs) throw RuntimeFault("cannot write " + curve_path.string());
  write_learning_curve(cs, result.curve);
  std::cout << "trained " << to_string(spec.train.mode) << " for " << result.curve.size() << " episodes in "
            << seconds_since(t0) << " s -> " << out << " (curve: " << curve_path.string() << ")\n";
  return 0;
}

int cmd_simulate(const Common& c) {
  const auto spec = spec_from(c);
  const fs::path out = c.out.empty() ? fs::path(spec.output) : fs::path(c.out);
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = load_data(spec);
  const auto rep = run_experiment(spec, data);
  write_report(out, rep);
  std::cout << rep.records.size() << " runs (" << spec.strategies.size() << " strategies x " << data.traces.size()
            << " traces) in " << seconds_since(t0) << " s -> " << out.string() << '\n';
  const auto summary = summarize(rep);
  for (const auto& s : rep.strategies) {
    const auto& o = summary["strategies"][s];
    std::cout << "  " << s << ": mean QoE " << o["mean_qoe"].get<double>() << ", rebuffer "
              << o["mean_rebuffer_s"].get<double>() << " s, waste ratio " << o["waste_ratio"].get<double>() << '\n';
  }
  return 0;
}

int cmd_report(const Common& c, const std::string& report_dir) {
  const fs::path out = c.out.empty() ? fs::path(report_dir) / "plots" : fs::path(c.out);
  PolicyConfig policy;
  if (!c.config.empty()) policy = spec_from(c).policy;
  const auto rep = read_report(report_dir);
  emit_plots_data(rep, out, 0.5, policy.range_max_s);
  std::cout << "plot data -> " << out.string() << '\n';
  return 0;
}

int cmd_gen(const Common& c, SyntheticConfig cfg, const SyntheticTraining& tr) {
  if (c.out.empty()) throw ConfigError("gen-synthetic: --out is required");
  if (c.seed) cfg.seed = *c.seed;
  const auto suite = write_synthetic_experiment(c.out, cfg, tr);
  std::cout << "synthetic suite: " << suite.traces.size() << " traces, " << suite.catalog.size() << " videos, "
            << suite.history.size() << " watch records -> " << c.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Demand-aware range preloading for short-video playlists"};
  app.require_subcommand(1);

  Common common;
  std::string records, report_dir;
  SyntheticConfig syn;
  SyntheticTraining training;

  auto* fit = app.add_subcommand("fit", "fit per-video/user/duration Weibull tables from watch records");
  add_common(fit, common, false);
  fit->add_option("--records", records, "watch records CSV (user_id,video_id,duration_s,watch_time_s)");

  auto* tr = app.add_subcommand("train", "train the range policy with PPO");
  add_common(tr, common, true);

  auto* sim = app.add_subcommand("simulate", "simulate every strategy on every trace and write a report");
  add_common(sim, common, true);

  auto* rep = app.add_subcommand("report", "turn a report directory into plot-ready CSVs");
  add_common(rep, common, false);
  rep->add_option("report", report_dir, "report directory written by simulate")->required();

  auto* gen = app.add_subcommand("gen-synthetic", "write a synthetic trace/catalog/retention suite");
  add_common(gen, common, false);
  gen->add_option("--traces", syn.traces, "number of traces");
  gen->add_option("--videos", syn.videos, "catalog size");
  gen->add_option("--users", syn.users, "number of viewers in the history");
  gen->add_option("--trace-length", syn.trace_length_s, "trace length in seconds");
  gen->add_option("--episodes", training.episodes, "training episodes written to experiment.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::usage);
  }

  try {
    if (*fit) return cmd_fit(common, records);
    if (*tr) return cmd_train(common);
    if (*sim) return cmd_simulate(common);
    if (*rep) return cmd_report(common, report_dir);
    if (*gen) return cmd_gen(common, syn, training);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::runtime);
  }
  return static_cast<int>(ExitCode::usage);
}
