#pragma once

#include "posafe/learner.hpp"

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace posafe {

enum class PolicyKind { PoSafeNet, Expert, QpHard, QpSlack, Unprotected };

/// A closed-loop controller. PoSafeNet uses the full model; the QP baselines
/// and the unprotected policy use head 0 of `model` as the nominal network.
struct Policy {
  std::string name;
  PolicyKind kind = PolicyKind::Expert;
  const Model* model = nullptr;
  double slack_weight = 1e3;  // QpSlack only
  Vec control_limit;          // QP baselines: |u_i| ≤ limit_i when nonempty
};

struct RolloutTrace {
  std::string policy;
  std::size_t rollout = 0;
  std::size_t episode = 0;
  std::uint64_t noise_seed = 0;
  std::vector<Vec> states;                     // horizon + 1 entries; empty for horizon 0
  std::vector<Vec> controls;                   // applied (after noise)
  std::vector<std::vector<double>> barriers;   // b_i(x(t)) per state
  std::vector<double> safety;                  // task safety barrier per state
  double final_distance = 0.0;
  std::vector<std::vector<OverrideEvent>> events;
  std::vector<bool> feasible;
  std::vector<double> step_time;               // safety-layer wall clock (s)
  double wall_time = 0.0;                      // whole rollout (s)
  std::size_t audit_violations = 0;
  std::string termination;                     // empty when the horizon was reached
};

struct RolloutOptions {
  std::size_t horizon = 0;
  bool noise_on = true;
  Vec noise_scale;          // per channel; noise is uniform in [−scale, scale]
  std::uint64_t noise_seed = 0;
};

/// Euler closed loop; noise is added to the control after the safety layer.
RolloutTrace rollout(const Scenario& scenario, const Policy& policy, const Episode& ep, const RolloutOptions& opts);

class EmptyTraces : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct MetricsReport {
  std::size_t rollouts = 0;
  bool valid = false;  // false when no trace has any state (metrics are NaN)
  double safety_min = 0.0;
  double safety_mean = 0.0;
  double mse_mean = 0.0;
  double mse_var = 0.0;
  double final_distance_mean = 0.0;
  double qp_success = 0.0;  // fraction of rollouts feasible at every step
  bool feasibility = false;
  bool top_safety_guarantee = false;
  Vec uncertainty;
  double rollout_time_avg = 0.0;
  double step_time_avg = 0.0;
  // manipulation
  double phi_viol_mean = std::numeric_limits<double>::quiet_NaN();
  double phi_viol_max = std::numeric_limits<double>::quiet_NaN();
  // driving
  double lane_viol_min = std::numeric_limits<double>::quiet_NaN();
  double lane_viol_mean = std::numeric_limits<double>::quiet_NaN();
  double ey_mean = std::numeric_limits<double>::quiet_NaN();
  double ey_var = std::numeric_limits<double>::quiet_NaN();
  double time_out_of_lane = std::numeric_limits<double>::quiet_NaN();
  double pass_pct = std::numeric_limits<double>::quiet_NaN();
  double crash_pct = std::numeric_limits<double>::quiet_NaN();
  double rot_viol = std::numeric_limits<double>::quiet_NaN();  // mean |u₁| per rollout, averaged
  std::size_t override_events = 0;
  std::size_t audit_violations = 0;
  std::size_t terminated = 0;
};

/// `references[k]` is the noise-free expert trajectory for traces[k]
/// (task-space MSE); pass an empty vector to skip MSE.
MetricsReport evaluate(std::span<const RolloutTrace> traces, const Scenario& scenario,
                       std::span<const std::vector<Vec>> references);

struct BenchConfig {
  std::uint64_t seed = 0;
  std::size_t test_episodes = 24;
  std::size_t rollouts = 100;
  std::size_t horizon = 0;  // 0 means the scenario horizon
  bool noise_on = true;
  Vec noise_scale;
};

struct PolicyResult {
  std::string policy;
  MetricsReport report;
  std::vector<RolloutTrace> traces;
};

/// Rollout k uses test episode k mod test_episodes and noise seed
/// derive_seed(seed, kNoise, k); every policy sees the same seeds.
std::vector<PolicyResult> benchmark(const Scenario& scenario, std::span<const Policy> policies,
                                    const BenchConfig& config);

std::vector<std::string> bench_columns();
void write_bench_csv(std::span<const PolicyResult> results, std::ostream& out);
/// First line is a header object, then one object per step.
void write_trace_jsonl(const RolloutTrace& trace, const Scenario& scenario, std::ostream& out);
/// Columns rollout, t and the two task coordinates.
void write_trajectory_csv(std::span<const RolloutTrace> traces, const Scenario& scenario, std::ostream& out);
/// bench.csv, traces/<policy>/<noise seed>.jsonl, trajectories/<policy>.csv.
void write_bench_outputs(std::span<const PolicyResult> results, const Scenario& scenario,
                         const std::filesystem::path& dir);

struct AblationCheck {
  bool wrong_order_crashes = false;
  bool others_crash_free = false;
  bool fix_order_worse_lane = false;
  bool ok() const { return wrong_order_crashes && others_crash_free && fix_order_worse_lane; }
};

/// Expects rows named fix_order, wrong_order, hard and mixture.
AblationCheck check_ablation(std::span<const PolicyResult> results);

/// Enforcement orders for the driving ablation: lane constraints first and
/// obstacle last, or the reverse.
LinearExtension ablation_fix_order();
LinearExtension ablation_wrong_order();

struct TimingRow {
  std::string method;  // "projection" or "oracle"
  std::size_t batch = 0;
  std::size_t heads = 0;
  double seconds = 0.0;  // median wall clock per batched call
};

struct TimingReport {
  std::vector<TimingRow> rows;
  double ratio_at_128 = 0.0;  // oracle time / projection time, one head
  double heads_slope = 0.0;   // seconds per extra head at batch 128
  double heads_r2 = 0.0;
};

/// Three constraints, two controls. Single-threaded.
TimingReport timing_bench(std::span<const std::size_t> batches, std::size_t max_heads, std::uint64_t seed,
                          std::size_t repeats = 7);
void write_timing_csv(const TimingReport& report, std::ostream& out);

}  // namespace posafe
