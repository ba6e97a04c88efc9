#pragma once

#include "posafe/scenarios.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace posafe {

/// Noise-free expert closed loop from the episode's initial state.
struct ExpertTrajectory {
  std::vector<Vec> states;    // horizon + 1 entries unless terminated early
  std::vector<Vec> controls;  // applied controls
  std::vector<bool> feasible; // expert QP feasible at that step
  std::size_t failures = 0;
  std::string termination;    // empty when the horizon was reached
};

ExpertTrajectory expert_rollout(const Scenario& scenario, const Episode& ep, std::size_t horizon);

struct Sample {
  std::size_t episode = 0;  // position in Dataset::episodes
  std::size_t t = 0;
  Vec state;
  Vec control;
};

struct Dataset {
  std::string scenario;
  std::uint64_t seed = 0;
  std::size_t horizon = 0;
  std::vector<Episode> episodes;
  std::vector<Sample> samples;   // expert-feasible steps only
  std::size_t expert_failures = 0;
};

/// Episodes come from the training stream of `seed`.
Dataset generate_dataset(const Scenario& scenario, std::uint64_t seed, std::size_t episodes, std::size_t horizon);

/// Per-channel max |u| over the dataset (the control scale for noise).
Vec control_scale(const Dataset& data, std::size_t control_dim);

/// Columns: episode, t, state…, u…, b_<constraint>… (header row first).
void write_dataset_csv(const Dataset& data, const Scenario& scenario, std::ostream& out);
std::vector<std::string> dataset_header(const Scenario& scenario);

/// Reads a CSV written by write_dataset_csv. Episodes are regenerated from
/// `seed`, so it must match the seed used at generation time.
Dataset read_dataset_csv(const Scenario& scenario, std::istream& in, std::uint64_t seed, std::size_t horizon);

}  // namespace posafe
