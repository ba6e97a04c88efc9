#pragma once

#include "posafe/sim.hpp"

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace posafe {

/// Run configuration with every knob the pipeline reads:
///   scenario, seed, scenario_overrides (validated by the scenario),
///   data, train, bench, timing, paths.
nlohmann::json default_run_config(const std::string& scenario);

/// Strict overlay like merge_config, except that `scenario_overrides` is
/// accumulated as free-form JSON and checked when the scenario is built.
/// Changing `scenario` re-derives the scenario-dependent defaults.
nlohmann::json merge_run_config(const nlohmann::json& base, const nlohmann::json& overrides);

/// Model variants: hard, mixture, gumbel, e2e, fix_order, wrong_order.
std::vector<std::string> model_variants();

/// One resolved run: the scenario plus seeded factories for data, models
/// and benchmark settings.
class Experiment {
 public:
  explicit Experiment(nlohmann::json run_config);

  const nlohmann::json& config() const noexcept { return config_; }
  const Scenario& scenario() const noexcept { return *scenario_; }
  std::uint64_t seed() const noexcept { return seed_; }
  /// Hash of the effective scenario configuration (stored in checkpoints).
  std::string scenario_hash() const;

  std::size_t data_horizon() const;
  Dataset make_dataset() const;
  /// Reads paths.dataset when set, otherwise generates.
  Dataset load_or_make_dataset() const;

  TrainConfig train_config(const std::string& variant) const;
  Model make_model(const std::string& variant) const;
  Model train_model(const std::string& variant, const Dataset& data, TrainResult* result = nullptr) const;
  /// Loads paths.checkpoints/checkpoint_<variant>.json when present,
  /// otherwise trains.
  Model load_or_train(const std::string& variant, const Dataset& data, TrainResult* result = nullptr) const;
  /// Throws if the checkpoint was produced for a different scenario configuration.
  Model load_checkpoint(const std::string& path) const;

  BenchConfig bench_config(const Dataset& data) const;
  /// Desk benchmark rows: expert, e2e, qp_hard, qp_slack_<w>…, posafenet_hard,
  /// posafenet_mixture. `e2e`, `hard` and `mixture` must point to trained models.
  std::vector<Policy> bench_policies(const Model& e2e, const Model& hard, const Model& mixture) const;

 private:
  nlohmann::json config_;
  std::unique_ptr<Scenario> scenario_;
  std::uint64_t seed_ = 0;
};

}  // namespace posafe
