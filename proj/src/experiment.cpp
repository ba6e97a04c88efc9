#include "posafe/experiment.hpp"

#include "posafe/config.hpp"
#include "posafe/rng.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace posafe {

using nlohmann::json;

json default_run_config(const std::string& scenario) {
  const bool nav = scenario == "navigation";
  const bool driving = scenario.rfind("driving", 0) == 0;
  return {
      {"scenario", scenario},
      {"seed", 1},
      {"scenario_overrides", json::object()},
      {"data", {{"episodes", driving ? 80 : 40}, {"horizon", nullptr}}},
      {"train",
       {{"epochs", driving ? 60 : 20},
        {"batch_size", 64},
        {"learning_rate", 1e-3},
        {"val_fraction", 0.1},
        {"init_raw_gain", 0.5},
        {"temperature", 1.0},
        {"heads", nullptr},
        {"layers", nullptr},
        {"variant", "hard"}}},
      {"bench",
       {{"test_episodes", nav ? 24 : 20},
        {"rollouts", 100},
        {"noise", !driving},
        {"slack_weights", {1e2, 1e3, 1e6}},
        {"qp_control_limit", nullptr}}},
      {"timing", {{"batches", {1, 8, 32, 128, 512, 1024}}, {"max_heads", 10}, {"repeats", 7}}},
      {"paths", {{"dataset", nullptr}, {"checkpoints", nullptr}}},
  };
}

namespace {

void deep_merge(json& dst, const json& src) {
  if (!src.is_object() || !dst.is_object()) {
    dst = src;
    return;
  }
  for (const auto& [k, v] : src.items()) {
    if (dst.contains(k))
      deep_merge(dst[k], v);
    else
      dst[k] = v;
  }
}

}  // namespace

json merge_run_config(const json& base, const json& overrides) {
  if (overrides.is_null()) return base;
  if (!overrides.is_object()) throw std::invalid_argument("run configuration must be a JSON object");
  json rest = overrides;
  json scenario_over = json::object();
  if (rest.contains("scenario_overrides")) {
    scenario_over = rest["scenario_overrides"];
    if (!scenario_over.is_object()) throw std::invalid_argument("scenario_overrides must be an object");
    rest.erase("scenario_overrides");
  }
  json start = base;
  if (rest.contains("scenario") && rest["scenario"] != base.at("scenario")) {
    // Scenario-dependent defaults follow the new scenario; explicit values
    // already in `base` that differ from the old defaults are kept.
    const auto old_defaults = default_run_config(base.at("scenario").get<std::string>());
    auto fresh = default_run_config(rest["scenario"].get<std::string>());
    const std::pair<const char*, const char*> dependent[] = {
        {"data", "episodes"}, {"train", "epochs"}, {"bench", "test_episodes"}, {"bench", "noise"}};
    for (const auto& [section, key] : dependent)
      if (base.at(section).at(key) == old_defaults.at(section).at(key)) start[section][key] = fresh[section][key];
  }
  json out = merge_config(start, rest);
  deep_merge(out["scenario_overrides"], scenario_over);
  return out;
}

std::vector<std::string> model_variants() { return {"hard", "mixture", "gumbel", "e2e", "fix_order", "wrong_order"}; }

Experiment::Experiment(json run_config) : config_(std::move(run_config)) {
  scenario_ = make_scenario(config_.at("scenario").get<std::string>(), config_.at("scenario_overrides"));
  seed_ = config_.at("seed").get<std::uint64_t>();
}

std::string Experiment::scenario_hash() const {
  return hex64(fnv1a(scenario_->name() + ":" + scenario_->config().dump()));
}

std::size_t Experiment::data_horizon() const {
  const auto& h = config_.at("data").at("horizon");
  return h.is_null() ? scenario_->horizon() : h.get<std::size_t>();
}

Dataset Experiment::make_dataset() const {
  return generate_dataset(*scenario_, seed_, config_.at("data").at("episodes").get<std::size_t>(), data_horizon());
}

Dataset Experiment::load_or_make_dataset() const {
  const auto& p = config_.at("paths").at("dataset");
  if (p.is_null()) return make_dataset();
  std::ifstream in(p.get<std::string>());
  if (!in) throw std::runtime_error("cannot open dataset '" + p.get<std::string>() + "'");
  return read_dataset_csv(*scenario_, in, seed_, data_horizon());
}

namespace {

std::size_t variant_index(const std::string& variant) {
  const auto all = model_variants();
  const auto it = std::find(all.begin(), all.end(), variant);
  if (it == all.end()) throw std::invalid_argument("unknown model variant '" + variant + "'");
  return static_cast<std::size_t>(it - all.begin());
}

}  // namespace

TrainConfig Experiment::train_config(const std::string& variant) const {
  const auto& t = config_.at("train");
  TrainConfig tc;
  tc.epochs = t.at("epochs").get<std::size_t>();
  tc.batch_size = t.at("batch_size").get<std::size_t>();
  tc.learning_rate = t.at("learning_rate").get<double>();
  tc.val_fraction = t.at("val_fraction").get<double>();
  tc.seed = derive_seed(seed_, stream::kShuffle, variant_index(variant));
  return tc;
}

Model Experiment::make_model(const std::string& variant) const {
  const auto& t = config_.at("train");
  const auto layers =
      t.at("layers").is_null() ? scenario_->default_layers() : t.at("layers").get<std::vector<std::size_t>>();
  const std::size_t heads = t.at("heads").is_null() ? scenario_->default_heads() : t.at("heads").get<std::size_t>();
  const double raw = t.at("init_raw_gain").get<double>();
  const std::uint64_t seed = derive_seed(seed_, stream::kInit, variant_index(variant));

  auto finish = [&](Model m) {
    m.scenario_name = scenario_->name();
    m.scenario_hash = scenario_hash();
    return m;
  };
  if (variant == "e2e") return finish(Model::unconstrained(layers, seed));
  if (variant == "fix_order" || variant == "wrong_order") {
    if (scenario_->kind() != ScenarioKind::Driving)
      throw std::invalid_argument("the order ablation needs a driving scenario");
    return finish(Model::fixed_order(*scenario_, variant == "fix_order" ? ablation_fix_order() : ablation_wrong_order(),
                                     layers, seed, raw));
  }
  Model m = Model::posafenet(*scenario_, combine_mode_from_string(variant), heads, layers, seed, raw);
  if (t.at("temperature").get<double>() != 1.0)
    m = Model(m.layers(), m.poset(), m.extensions(), m.constraint_map(), m.mode(), seed, raw,
              t.at("temperature").get<double>());
  return finish(std::move(m));
}

Model Experiment::train_model(const std::string& variant, const Dataset& data, TrainResult* result) const {
  Model m = make_model(variant);
  auto r = train(m, *scenario_, data, train_config(variant));
  if (result) *result = std::move(r);
  return m;
}

Model Experiment::load_checkpoint(const std::string& path) const {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  Model m = Model::from_json(json::parse(in));
  if (m.scenario_hash != scenario_hash())
    throw std::runtime_error("checkpoint '" + path + "' was trained for a different scenario configuration");
  return m;
}

Model Experiment::load_or_train(const std::string& variant, const Dataset& data, TrainResult* result) const {
  const auto& dir = config_.at("paths").at("checkpoints");
  if (!dir.is_null()) {
    const std::string path = dir.get<std::string>() + "/checkpoint_" + variant + ".json";
    if (std::ifstream(path).good()) return load_checkpoint(path);
  }
  return train_model(variant, data, result);
}

BenchConfig Experiment::bench_config(const Dataset& data) const {
  const auto& b = config_.at("bench");
  BenchConfig bc;
  bc.seed = seed_;
  bc.test_episodes = b.at("test_episodes").get<std::size_t>();
  bc.rollouts = b.at("rollouts").get<std::size_t>();
  bc.horizon = scenario_->horizon();
  bc.noise_on = b.at("noise").get<bool>();
  bc.noise_scale = scenario_->noise_fraction() * control_scale(data, scenario_->system().control_dim());
  return bc;
}

std::vector<Policy> Experiment::bench_policies(const Model& e2e, const Model& hard, const Model& mixture) const {
  const auto& b = config_.at("bench");
  Vec limit;
  if (!b.at("qp_control_limit").is_null()) {
    const auto v = b.at("qp_control_limit").get<std::vector<double>>();
    limit = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  std::vector<Policy> out;
  out.push_back({"expert", PolicyKind::Expert, nullptr, 0.0, {}});
  out.push_back({"e2e", PolicyKind::Unprotected, &e2e, 0.0, {}});
  out.push_back({"qp_hard", PolicyKind::QpHard, &e2e, 0.0, limit});
  for (double w : b.at("slack_weights").get<std::vector<double>>()) {
    std::ostringstream name;
    name << "qp_slack_" << w;
    out.push_back({name.str(), PolicyKind::QpSlack, &e2e, w, limit});
  }
  out.push_back({"posafenet_hard", PolicyKind::PoSafeNet, &hard, 0.0, {}});
  out.push_back({"posafenet_mixture", PolicyKind::PoSafeNet, &mixture, 0.0, {}});
  return out;
}

}  // namespace posafe
