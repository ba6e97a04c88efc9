#include "posafe/dataset.hpp"

#include "posafe/rng.hpp"

#include <charconv>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace posafe {

ExpertTrajectory expert_rollout(const Scenario& scenario, const Episode& ep, std::size_t horizon) {
  ExpertTrajectory traj;
  const auto specs = scenario.barriers(ep);
  Vec x = ep.initial_state;
  traj.states.push_back(x);
  for (std::size_t t = 0; t < horizon; ++t) {
    Vec u;
    bool ok = false;
    try {
      const auto res = expert_control(scenario, specs, x, ep);
      u = res.control;
      ok = res.feasible;
    } catch (const GeometryError&) {
      u = scenario.reference_control(x, ep);
    } catch (const FrameSingularity& e) {
      traj.termination = e.what();
      break;
    }
    if (!ok) ++traj.failures;
    Vec next;
    try {
      next = scenario.system().step(x, u, scenario.dt());
    } catch (const FrameSingularity& e) {
      traj.termination = e.what();
      break;
    }
    if (!next.allFinite()) {
      traj.termination = "non-finite state";
      break;
    }
    traj.controls.push_back(u);
    traj.feasible.push_back(ok);
    x = std::move(next);
    traj.states.push_back(x);
  }
  return traj;
}

Dataset generate_dataset(const Scenario& scenario, std::uint64_t seed, std::size_t episodes, std::size_t horizon) {
  Dataset data;
  data.scenario = scenario.name();
  data.seed = seed;
  data.horizon = horizon;
  for (std::size_t e = 0; e < episodes; ++e) {
    Episode ep = scenario.episode(seed, stream::kTrainEpisodes, e);
    const auto traj = expert_rollout(scenario, ep, horizon);
    data.expert_failures += traj.failures;
    for (std::size_t t = 0; t < traj.controls.size(); ++t)
      if (traj.feasible[t]) data.samples.push_back({e, t, traj.states[t], traj.controls[t]});
    data.episodes.push_back(std::move(ep));
  }
  return data;
}

Vec control_scale(const Dataset& data, std::size_t control_dim) {
  Vec scale = Vec::Zero(static_cast<Eigen::Index>(control_dim));
  for (const auto& s : data.samples) scale = scale.cwiseMax(s.control.cwiseAbs());
  return scale;
}

std::vector<std::string> dataset_header(const Scenario& scenario) {
  std::vector<std::string> cols = {"episode", "t"};
  for (const auto& s : scenario.state_names()) cols.push_back(s);
  for (const auto& u : scenario.control_names()) cols.push_back("u_" + u);
  for (const auto& b : scenario.constraint_names()) cols.push_back("b_" + b);
  return cols;
}

void write_dataset_csv(const Dataset& data, const Scenario& scenario, std::ostream& out) {
  const auto header = dataset_header(scenario);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  out << std::setprecision(17);
  std::vector<std::vector<BarrierSpec>> specs;
  specs.reserve(data.episodes.size());
  for (const auto& ep : data.episodes) specs.push_back(scenario.barriers(ep));
  for (const auto& s : data.samples) {
    out << s.episode << ',' << s.t;
    for (Eigen::Index i = 0; i < s.state.size(); ++i) out << ',' << s.state[i];
    for (Eigen::Index i = 0; i < s.control.size(); ++i) out << ',' << s.control[i];
    for (const auto& spec : specs[s.episode]) out << ',' << spec.barrier->value(s.state);
    out << '\n';
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

double to_double(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("bad number '" + s + "'");
  return v;
}

}  // namespace

Dataset read_dataset_csv(const Scenario& scenario, std::istream& in, std::uint64_t seed, std::size_t horizon) {
  const auto header = dataset_header(scenario);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset is empty (missing header row)");
  if (split_csv(line) != header) throw std::runtime_error("dataset header does not match scenario " + scenario.name());

  Dataset data;
  data.scenario = scenario.name();
  data.seed = seed;
  data.horizon = horizon;
  const auto n = static_cast<Eigen::Index>(scenario.system().state_dim());
  const auto m = static_cast<Eigen::Index>(scenario.system().control_dim());
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw std::runtime_error("dataset row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                               " columns, expected " + std::to_string(header.size()));
    Sample s;
    s.episode = std::stoul(cells[0]);
    s.t = std::stoul(cells[1]);
    s.state = Vec(n);
    s.control = Vec(m);
    for (Eigen::Index i = 0; i < n; ++i) s.state[i] = to_double(cells[2 + i]);
    for (Eigen::Index i = 0; i < m; ++i) s.control[i] = to_double(cells[2 + n + i]);
    while (data.episodes.size() <= s.episode)
      data.episodes.push_back(scenario.episode(seed, stream::kTrainEpisodes, data.episodes.size()));
    data.samples.push_back(std::move(s));
  }
  return data;
}

}  // namespace posafe
