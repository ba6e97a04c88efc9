#include "posafe/config.hpp"
#include "posafe/experiment.hpp"
#include "posafe/parallel.hpp"
#include "posafe/rng.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace posafe;

namespace {

enum Exit { kOk = 0, kUsage = 1, kCheckFailed = 2, kRuntime = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool single_thread = false;
  bool check = false;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

// A manifest written by a previous run is accepted wherever a run config is.
json resolve_config(const Common& c) {
  json file = json::object();
  if (!c.config_path.empty()) {
    file = read_json_file(c.config_path);
    if (file.is_object() && file.contains("format") && file["format"] == "posafe-manifest") file = file.at("config");
  }
  std::string scenario = "navigation";
  if (file.contains("scenario")) scenario = file["scenario"].get<std::string>();
  json cfg = default_run_config(scenario);
  cfg = merge_run_config(cfg, file);
  for (const auto& s : c.sets) cfg = merge_run_config(cfg, parse_assignment(s));
  if (!c.scenario.empty()) cfg = merge_run_config(cfg, {{"scenario", c.scenario}});
  if (c.seed) cfg["seed"] = *c.seed;
  return cfg;
}

fs::path output_dir(const Common& c, const std::string& command) {
  if (!c.out.empty()) return c.out;
  const char* root = std::getenv("POSAFE_OUT_ROOT");
  return fs::path(root != nullptr && *root != '\0' ? root : "runs") / command;
}

void write_manifest(const fs::path& dir, const std::string& command, const json& cfg, const Common& c) {
  fs::create_directories(dir);
  const json manifest = {{"format", "posafe-manifest"},
                         {"command", command},
                         {"single_thread", c.single_thread},
                         {"config", cfg}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

template <class Fn>
void write_file(const fs::path& path, Fn&& fn) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  fn(f);
}

void save_model(const Model& m, const fs::path& path) {
  write_file(path, [&](std::ostream& f) { f << m.to_json().dump(1) << '\n'; });
}

// Trains (or loads from paths.checkpoints) and stores a copy under dir/checkpoints.
Model obtain_model(const Experiment& exp, const std::string& variant, const Dataset& data, const fs::path& dir) {
  std::cerr << "training " << variant << "...\n";
  TrainResult tr;
  Model m = exp.load_or_train(variant, data, &tr);
  fs::create_directories(dir / "checkpoints");
  save_model(m, dir / "checkpoints" / ("checkpoint_" + variant + ".json"));
  if (!tr.curve.empty())
    write_file(dir / "checkpoints" / ("curve_" + variant + ".csv"), [&](std::ostream& f) { write_curve_csv(tr.curve, f); });
  return m;
}

void print_summary(std::span<const PolicyResult> results) {
  std::cout << std::left << std::setw(22) << "policy" << std::right << std::setw(10) << "feasible" << std::setw(14)
            << "safety_min" << std::setw(14) << "mse_mean" << std::setw(12) << "qp_succ%" << '\n';
  for (const auto& r : results) {
    const auto& m = r.report;
    std::cout << std::left << std::setw(22) << r.policy << std::right << std::setw(10) << (m.feasibility ? "yes" : "no")
              << std::setw(14) << std::setprecision(5) << m.safety_min << std::setw(14) << m.mse_mean << std::setw(12)
              << 100.0 * m.qp_success << '\n';
  }
}

const PolicyResult& find_row(std::span<const PolicyResult> results, const std::string& name) {
  for (const auto& r : results)
    if (r.policy == name) return r;
  throw std::runtime_error("missing result row '" + name + "'");
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const Common& c, const json& cfg) {
  const Experiment exp(cfg);
  const fs::path dir = output_dir(c, "gen-data");
  write_manifest(dir, "gen-data", cfg, c);
  if (exp.data_horizon() == 0) std::cerr << "warning: horizon is 0, the dataset will be empty\n";
  const Dataset data = exp.make_dataset();
  write_file(dir / "dataset.csv", [&](std::ostream& f) { write_dataset_csv(data, exp.scenario(), f); });
  const json report = {{"scenario", exp.scenario().name()},
                       {"episodes", data.episodes.size()},
                       {"horizon", data.horizon},
                       {"samples", data.samples.size()},
                       {"expert_failures", data.expert_failures}};
  write_file(dir / "report.json", [&](std::ostream& f) { f << report.dump(2) << '\n'; });
  std::cout << report.dump() << '\n';
  return kOk;
}

int cmd_train(const Common& c, const json& cfg) {
  const Experiment exp(cfg);
  const fs::path dir = output_dir(c, "train");
  write_manifest(dir, "train", cfg, c);
  const std::string variant = cfg.at("train").at("variant").get<std::string>();
  const Dataset data = exp.load_or_make_dataset();
  TrainResult tr;
  Model m = exp.make_model(variant);
  try {
    tr = train(m, exp.scenario(), data, exp.train_config(variant));
  } catch (const NonFiniteLoss& e) {
    std::ostringstream msg;
    msg << "training " << variant << " on " << exp.scenario().name() << " diverged at epoch " << e.epoch() << " step "
        << e.step() << ": " << e.what();
    throw std::runtime_error(msg.str());
  }
  save_model(m, dir / ("checkpoint_" + variant + ".json"));
  write_file(dir / ("curve_" + variant + ".csv"), [&](std::ostream& f) { write_curve_csv(tr.curve, f); });
  for (const auto& e : tr.curve)
    std::cout << "epoch " << e.epoch << " train_mse " << e.train_mse << " val_mse " << e.val_mse << '\n';
  if (tr.skipped_samples > 0) std::cerr << "skipped " << tr.skipped_samples << " samples with degenerate geometry\n";
  return kOk;
}

int cmd_rollout(const Common& c, const json& cfg, const std::string& policy_name, std::size_t index) {
  const Experiment exp(cfg);
  const fs::path dir = output_dir(c, "rollout");
  write_manifest(dir, "rollout", cfg, c);
  const Dataset data = exp.load_or_make_dataset();
  Model e2e = Model::unconstrained(exp.scenario().default_layers(), 0), hard = e2e, mixture = e2e;
  const bool needs_e2e = policy_name == "e2e" || policy_name.rfind("qp_", 0) == 0;
  if (needs_e2e) e2e = obtain_model(exp, "e2e", data, dir);
  if (policy_name == "posafenet_hard") hard = obtain_model(exp, "hard", data, dir);
  if (policy_name == "posafenet_mixture") mixture = obtain_model(exp, "mixture", data, dir);
  const auto policies = exp.bench_policies(e2e, hard, mixture);
  const Policy* policy = nullptr;
  for (const auto& p : policies)
    if (p.name == policy_name) policy = &p;
  if (policy == nullptr) throw UsageError("unknown policy '" + policy_name + "'");

  const BenchConfig bc = exp.bench_config(data);
  const auto& sc = exp.scenario();
  const Episode ep = sc.episode(exp.seed(), stream::kTestEpisodes, index % bc.test_episodes);
  RolloutOptions opts;
  opts.horizon = bc.horizon;
  opts.noise_on = bc.noise_on;
  opts.noise_scale = bc.noise_scale;
  opts.noise_seed = derive_seed(exp.seed(), stream::kNoise, index);
  RolloutTrace trace = rollout(sc, *policy, ep, opts);
  trace.rollout = index;
  write_file(dir / "trace.jsonl", [&](std::ostream& f) { write_trace_jsonl(trace, sc, f); });
  const RolloutTrace reference = rollout(sc, policies.front(), ep, {opts.horizon, false, {}, 0});
  std::vector<RolloutTrace> traces = {trace};
  std::vector<std::vector<Vec>> refs = {reference.states};
  const auto m = evaluate(traces, sc, refs);
  const json summary = {{"policy", policy_name},
                        {"episode", trace.episode},
                        {"steps", trace.controls.size()},
                        {"feasible", m.feasibility},
                        {"safety_min", m.safety_min},
                        {"final_distance", trace.final_distance},
                        {"audit_violations", trace.audit_violations},
                        {"termination", trace.termination}};
  std::cout << summary.dump() << '\n';
  return kOk;
}

int cmd_bench(const Common& c, const json& cfg) {
  const Experiment exp(cfg);
  const fs::path dir = output_dir(c, "bench");
  write_manifest(dir, "bench", cfg, c);
  const Dataset data = exp.load_or_make_dataset();
  const Model e2e = obtain_model(exp, "e2e", data, dir);
  const Model hard = obtain_model(exp, "hard", data, dir);
  const Model mixture = obtain_model(exp, "mixture", data, dir);
  const auto policies = exp.bench_policies(e2e, hard, mixture);
  std::cerr << "running " << policies.size() << " policies...\n";
  const auto results = benchmark(exp.scenario(), policies, exp.bench_config(data));
  write_bench_outputs(results, exp.scenario(), dir);
  print_summary(results);
  if (c.check) {
    const auto& m = find_row(results, "posafenet_hard").report;
    const bool ok = m.feasibility && m.safety_min >= 0.0;
    std::cout << "check posafenet_hard feasibility=" << m.feasibility << " safety_min=" << m.safety_min << ": "
              << (ok ? "PASS" : "FAIL") << '\n';
    if (!ok) return kCheckFailed;
  }
  return kOk;
}

int cmd_ablate(const Common& c, const json& cfg) {
  const Experiment exp(cfg);
  if (exp.scenario().kind() != ScenarioKind::Driving) throw UsageError("ablate needs a driving scenario");
  const fs::path dir = output_dir(c, "ablate");
  write_manifest(dir, "ablate", cfg, c);
  const Dataset data = exp.load_or_make_dataset();
  const std::vector<std::string> variants = {"fix_order", "wrong_order", "hard", "mixture"};
  std::vector<Model> models;
  models.reserve(variants.size());
  for (const auto& v : variants) models.push_back(obtain_model(exp, v, data, dir));
  std::vector<Policy> policies;
  for (std::size_t i = 0; i < variants.size(); ++i)
    policies.push_back({variants[i], PolicyKind::PoSafeNet, &models[i], 0.0, {}});
  const auto results = benchmark(exp.scenario(), policies, exp.bench_config(data));
  write_file(dir / "ablation.csv", [&](std::ostream& f) { write_bench_csv(results, f); });
  std::cout << std::left << std::setw(14) << "variant" << std::right << std::setw(10) << "crash%" << std::setw(16)
            << "lane_viol_min" << std::setw(16) << "lane_viol_mean" << std::setw(14) << "out_of_lane" << '\n';
  for (const auto& r : results)
    std::cout << std::left << std::setw(14) << r.policy << std::right << std::setw(10) << r.report.crash_pct
              << std::setw(16) << std::setprecision(5) << r.report.lane_viol_min << std::setw(16)
              << r.report.lane_viol_mean << std::setw(14) << r.report.time_out_of_lane << '\n';
  const auto chk = check_ablation(results);
  std::cout << "wrong_order crashes: " << (chk.wrong_order_crashes ? "yes" : "no")
            << "\nothers crash-free: " << (chk.others_crash_free ? "yes" : "no")
            << "\nfix_order worse lane mean than mixture: " << (chk.fix_order_worse_lane ? "yes" : "no") << '\n';
  if (c.check && !chk.ok()) return kCheckFailed;
  return kOk;
}

int cmd_timing(const Common& c, const json& cfg) {
  const fs::path dir = output_dir(c, "timing");
  write_manifest(dir, "timing", cfg, c);
  const auto& t = cfg.at("timing");
  const auto batches = t.at("batches").get<std::vector<std::size_t>>();
  const auto report = timing_bench(batches, t.at("max_heads").get<std::size_t>(),
                                   derive_seed(cfg.at("seed").get<std::uint64_t>(), stream::kExtensions),
                                   t.at("repeats").get<std::size_t>());
  write_file(dir / "timing.csv", [&](std::ostream& f) { write_timing_csv(report, f); });
  std::cout << "oracle/projection at batch 128: " << report.ratio_at_128 << "x\n"
            << "heads fit: slope " << report.heads_slope << " s/head, R^2 " << report.heads_r2 << '\n';
  if (c.check && !(report.ratio_at_128 >= 2.0 && report.heads_r2 >= 0.95)) return kCheckFailed;
  return kOk;
}

int cmd_poset(const Common& c, const json& cfg, const std::string& poset_file) {
  const fs::path dir = output_dir(c, "poset");
  write_manifest(dir, "poset", cfg, c);
  SafetyPoset poset;
  std::vector<std::string> names;
  if (!poset_file.empty()) {
    std::ifstream in(poset_file);
    if (!in) throw UsageError("cannot open poset file '" + poset_file + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    poset = parse_poset_text(ss.str());
  } else {
    const Experiment exp(cfg);
    poset = exp.scenario().poset();
    names = exp.scenario().constraint_names();
  }
  auto label = [&](std::size_t i) { return i < names.size() ? names[i] : std::to_string(i); };
  const auto exts = poset.enumerate_linear_extensions(100000);
  std::cout << exts.size() << " linear extensions (enforcement order, last wins)\n";
  for (const auto& e : exts) {
    for (std::size_t k = 0; k < e.order.size(); ++k) std::cout << (k ? " -> " : "  ") << label(e.order[k]);
    std::cout << '\n';
  }
  write_file(dir / "poset.dot", [&](std::ostream& f) { f << to_dot(poset, names); });
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Poset-ordered safety projection: data, training, rollouts and benchmarks"};
  app.require_subcommand(1);
  Common c;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", c.config_path, "run config JSON or a manifest.json from a previous run");
    sub->add_option("--set", c.sets, "override a config key, e.g. --set train.epochs=5 (repeatable)");
    sub->add_option("--scenario", c.scenario, "navigation, manipulation, driving or driving4");
    sub->add_option("--seed", c.seed, "root seed");
    sub->add_option("--out", c.out, "output directory (default $POSAFE_OUT_ROOT/<command> or runs/<command>)");
    sub->add_flag("--single-thread", c.single_thread, "deterministic single-threaded execution");
  };
  auto* gen = app.add_subcommand("gen-data", "generate expert demonstrations");
  auto* tr = app.add_subcommand("train", "train one model variant");
  std::string variant;
  tr->add_option("--variant", variant, "hard, mixture, gumbel, e2e, fix_order or wrong_order");
  auto* ro = app.add_subcommand("rollout", "one closed-loop rollout");
  std::string policy = "posafenet_hard";
  std::size_t index = 0;
  ro->add_option("--policy", policy, "expert, e2e, qp_hard, qp_slack_<w>, posafenet_hard, posafenet_mixture");
  ro->add_option("--index", index, "rollout index (episode index mod test episodes, noise stream index)");
  auto* bench = app.add_subcommand("bench", "train and benchmark all policies");
  auto* abl = app.add_subcommand("ablate", "driving enforcement-order ablation");
  auto* tim = app.add_subcommand("timing", "projection vs QP oracle timing");
  auto* pos = app.add_subcommand("poset", "list linear extensions and write a Hasse diagram");
  std::string poset_file;
  pos->add_option("--file", poset_file, "poset text file instead of the scenario poset");
  for (auto* sub : {gen, tr, ro, bench, abl, tim, pos}) add_common(sub);
  for (auto* sub : {bench, abl, tim}) sub->add_flag("--check", c.check, "exit 2 when the benchmark check fails");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  json cfg;
  try {
    cfg = resolve_config(c);
    if (!variant.empty()) cfg = merge_run_config(cfg, {{"train", {{"variant", variant}}}});
    make_scenario(cfg.at("scenario").get<std::string>(), cfg.at("scenario_overrides"));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  if (c.single_thread) set_thread_count(1);

  try {
    if (gen->parsed()) return cmd_gen_data(c, cfg);
    if (tr->parsed()) return cmd_train(c, cfg);
    if (ro->parsed()) return cmd_rollout(c, cfg, policy, index);
    if (bench->parsed()) return cmd_bench(c, cfg);
    if (abl->parsed()) return cmd_ablate(c, cfg);
    if (tim->parsed()) return cmd_timing(c, cfg);
    if (pos->parsed()) return cmd_poset(c, cfg, poset_file);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
