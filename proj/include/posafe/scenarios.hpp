#pragma once

#include "posafe/geometry.hpp"
#include "posafe/poset.hpp"
#include "posafe/qp.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace posafe {

/// Maps an angle to [−π, π).
double wrap_angle(double a);

// ---------------------------------------------------------------------------
// Systems

/// State (x, y, θ, v), control (turn rate, acceleration).
class Unicycle final : public ControlAffineSystem {
 public:
  std::size_t state_dim() const override { return 4; }
  std::size_t control_dim() const override { return 2; }
  Vec drift(const Vec& x) const override;
  Mat input_map(const Vec& x) const override;
  Mat drift_jacobian(const Vec& x) const override;
  std::vector<std::size_t> configuration_rows() const override { return {0, 1, 2}; }
  std::vector<std::size_t> velocity_rows() const override { return {3}; }
};

/// Two-link arm as a double integrator on absolute joint angles.
/// State (θ₁, ω₁, θ₂, ω₂), control (angular accelerations).
class Manipulator final : public ControlAffineSystem {
 public:
  std::size_t state_dim() const override { return 4; }
  std::size_t control_dim() const override { return 2; }
  Vec drift(const Vec& x) const override;
  Mat input_map(const Vec& x) const override;
  Mat drift_jacobian(const Vec& x) const override;
  std::vector<std::size_t> configuration_rows() const override { return {0, 2}; }
  std::vector<std::size_t> velocity_rows() const override { return {1, 3}; }
};

struct CurvatureSegment {
  double s_start = 0.0;
  double kappa = 0.0;
};

struct BicycleParams {
  double l_r = 1.4;     // rear axle to center of mass
  double l_f = 1.6;     // front axle to center of mass
  double frame_eps = 1e-3;
  std::vector<CurvatureSegment> curvature;  // sorted by s_start; empty means straight
};

/// Kinematic bicycle in a curvilinear frame. State (s, d, μ, v, δ),
/// control (steering rate δ̇, acceleration v̇).
class CurvilinearBicycle final : public ControlAffineSystem {
 public:
  explicit CurvilinearBicycle(BicycleParams params = {}) : p_(std::move(params)) {}

  std::size_t state_dim() const override { return 5; }
  std::size_t control_dim() const override { return 2; }
  /// Throws FrameSingularity when 1 − dκ(s) ≤ frame_eps.
  Vec drift(const Vec& x) const override;
  Mat input_map(const Vec& x) const override;
  Mat drift_jacobian(const Vec& x) const override;
  std::vector<std::size_t> configuration_rows() const override { return {0, 1, 2}; }
  std::vector<std::size_t> velocity_rows() const override { return {3, 4}; }

  double curvature(double s) const;
  /// β = atan(l_r/(l_f + l_r) · tan δ).
  double slip(double delta) const;
  double slip_derivative(double delta) const;
  const BicycleParams& params() const noexcept { return p_; }

 private:
  double frame_factor(const Vec& x) const;
  BicycleParams p_;
};

// ---------------------------------------------------------------------------
// Barriers

struct Disk {
  double x = 0.0;
  double y = 0.0;
  double r = 1.0;
};

/// (x_i − x₀)² + (x_j − y₀)² − R² on two state coordinates.
class DiskBarrier final : public Barrier {
 public:
  DiskBarrier(std::size_t ix, std::size_t iy, Disk disk) : ix_(ix), iy_(iy), disk_(disk) {}
  double value(const Vec& x) const override;
  Vec gradient(const Vec& x) const override;
  Mat hessian(const Vec& x) const override;

 private:
  std::size_t ix_, iy_;
  Disk disk_;
};

/// Disk barrier of whichever disk currently has the smallest value.
class NearestDiskBarrier final : public Barrier {
 public:
  NearestDiskBarrier(std::size_t ix, std::size_t iy, std::vector<Disk> disks);
  double value(const Vec& x) const override;
  Vec gradient(const Vec& x) const override;
  Mat hessian(const Vec& x) const override;
  std::size_t nearest(const Vec& x) const;

 private:
  std::vector<DiskBarrier> parts_;
};

/// End-effector clearance with absolute-angle forward kinematics
/// p = l₁(cos θ₁, sin θ₁) + l₂(cos θ₂, sin θ₂).
class TipBarrier final : public Barrier {
 public:
  TipBarrier(double l1, double l2, Disk disk) : l1_(l1), l2_(l2), disk_(disk) {}
  double value(const Vec& x) const override;
  Vec gradient(const Vec& x) const override;
  Mat hessian(const Vec& x) const override;

 private:
  double l1_, l2_;
  Disk disk_;
};

/// φ − φ_min (lower) or φ_max − φ (upper), φ = wrap(θ₂ − θ₁).
class JointLimitBarrier final : public Barrier {
 public:
  JointLimitBarrier(double limit, bool upper) : limit_(limit), upper_(upper) {}
  double value(const Vec& x) const override;
  Vec gradient(const Vec& x) const override;
  Mat hessian(const Vec& x) const override;

 private:
  double limit_;
  bool upper_;
};

/// w·x + offset.
class AffineBarrier final : public Barrier {
 public:
  AffineBarrier(Vec weights, double offset) : w_(std::move(weights)), offset_(offset) {}
  double value(const Vec& x) const override { return w_.dot(x) + offset_; }
  Vec gradient(const Vec&) const override { return w_; }
  Mat hessian(const Vec&) const override { return Mat::Zero(w_.size(), w_.size()); }

 private:
  Vec w_;
  double offset_;
};

// ---------------------------------------------------------------------------
// Scenarios

enum class ScenarioKind { Navigation, Manipulation, Driving };

struct Episode {
  std::size_t index = 0;
  Vec initial_state;
  Vec goal;
  std::vector<Disk> obstacles;
};

class Scenario {
 public:
  virtual ~Scenario() = default;

  virtual ScenarioKind kind() const = 0;
  const std::string& name() const noexcept { return name_; }
  virtual const ControlAffineSystem& system() const = 0;

  const SafetyPoset& poset() const noexcept { return poset_; }
  const std::vector<std::string>& constraint_names() const noexcept { return names_; }
  std::size_t constraint_count() const noexcept { return names_.size(); }
  const std::vector<std::string>& state_names() const noexcept { return state_names_; }
  const std::vector<std::string>& control_names() const noexcept { return control_names_; }

  /// One spec per constraint index, gains set to the expert gains.
  virtual std::vector<BarrierSpec> barriers(const Episode& ep) const = 0;
  /// Constraint indices the expert QP enforces.
  virtual std::vector<std::size_t> expert_constraints() const;

  virtual Vec reference_control(const Vec& x, const Episode& ep) const = 0;
  virtual std::size_t feature_dim() const = 0;
  /// Policy input z: state plus goal/context information.
  virtual Vec features(const Vec& x, const Episode& ep) const = 0;

  /// Task barrier reported as Safety (min / mean).
  virtual double safety_value(const Vec& x, const Episode& ep) const = 0;
  /// Two planar coordinates used for trajectory MSE and plotting.
  virtual std::array<double, 2> task_position(const Vec& x) const = 0;
  virtual std::array<std::string, 2> task_position_names() const = 0;
  virtual double final_distance(const Vec& x, const Episode& ep) const = 0;

  /// Deterministic in `seed`; the caller derives it.
  virtual Episode make_episode(std::uint64_t seed) const = 0;
  Episode episode(std::uint64_t root_seed, std::uint64_t stream, std::size_t index) const;

  double dt() const noexcept { return dt_; }
  std::size_t horizon() const noexcept { return horizon_; }
  double noise_fraction() const noexcept { return noise_fraction_; }
  double expert_gain() const noexcept { return expert_gain_; }
  std::size_t default_heads() const noexcept { return heads_; }
  const std::vector<std::size_t>& default_layers() const noexcept { return layers_; }

  /// Effective configuration after overrides.
  const nlohmann::json& config() const noexcept { return config_; }

 protected:
  void set_common(const nlohmann::json& cfg);

  std::string name_;
  SafetyPoset poset_;
  std::vector<std::string> names_;
  std::vector<std::string> state_names_;
  std::vector<std::string> control_names_;
  nlohmann::json config_;
  double dt_ = 0.05;
  std::size_t horizon_ = 0;
  double noise_fraction_ = 0.1;
  double expert_gain_ = 1.0;
  std::size_t heads_ = 1;
  std::vector<std::size_t> layers_;
};

class NavigationScenario final : public Scenario {
 public:
  explicit NavigationScenario(const nlohmann::json& overrides = {});
  ScenarioKind kind() const override { return ScenarioKind::Navigation; }
  const ControlAffineSystem& system() const override { return system_; }
  std::vector<BarrierSpec> barriers(const Episode& ep) const override;
  Vec reference_control(const Vec& x, const Episode& ep) const override;
  std::size_t feature_dim() const override { return 5; }
  Vec features(const Vec& x, const Episode& ep) const override;
  double safety_value(const Vec& x, const Episode& ep) const override;
  std::array<double, 2> task_position(const Vec& x) const override { return {x[0], x[1]}; }
  std::array<std::string, 2> task_position_names() const override { return {"x", "y"}; }
  double final_distance(const Vec& x, const Episode& ep) const override;
  Episode make_episode(std::uint64_t seed) const override;

 private:
  Unicycle system_;
};

class ManipulationScenario final : public Scenario {
 public:
  explicit ManipulationScenario(const nlohmann::json& overrides = {});
  ScenarioKind kind() const override { return ScenarioKind::Manipulation; }
  const ControlAffineSystem& system() const override { return system_; }
  std::vector<BarrierSpec> barriers(const Episode& ep) const override;
  /// The expert only enforces the end-effector constraint.
  std::vector<std::size_t> expert_constraints() const override { return {0}; }
  Vec reference_control(const Vec& x, const Episode& ep) const override;
  std::size_t feature_dim() const override { return 6; }
  Vec features(const Vec& x, const Episode& ep) const override;
  double safety_value(const Vec& x, const Episode& ep) const override;
  std::array<double, 2> task_position(const Vec& x) const override { return {x[0], x[2]}; }
  std::array<std::string, 2> task_position_names() const override { return {"theta1", "theta2"}; }
  double final_distance(const Vec& x, const Episode& ep) const override;
  Episode make_episode(std::uint64_t seed) const override;

  double phi(const Vec& x) const { return wrap_angle(x[2] - x[0]); }
  /// max(0, φ − φ_max, φ_min − φ).
  double phi_violation(const Vec& x) const;

 private:
  Manipulator system_;
  double l1_ = 1.0, l2_ = 1.0, phi_min_ = -2.5, phi_max_ = 2.5;
};

class DrivingScenario final : public Scenario {
 public:
  /// `four_level` adds centerline and speed constraints (indices 3..6).
  DrivingScenario(bool four_level, const nlohmann::json& overrides = {});
  ScenarioKind kind() const override { return ScenarioKind::Driving; }
  const ControlAffineSystem& system() const override { return system_; }
  std::vector<BarrierSpec> barriers(const Episode& ep) const override;
  /// Lane and obstacle constraints only.
  std::vector<std::size_t> expert_constraints() const override { return {0, 1, 2}; }
  Vec reference_control(const Vec& x, const Episode& ep) const override;
  std::size_t feature_dim() const override { return 6; }
  Vec features(const Vec& x, const Episode& ep) const override;
  double safety_value(const Vec& x, const Episode& ep) const override;
  std::array<double, 2> task_position(const Vec& x) const override { return {x[0], x[1]}; }
  std::array<std::string, 2> task_position_names() const override { return {"s", "d"}; }
  double final_distance(const Vec& x, const Episode& ep) const override;
  Episode make_episode(std::uint64_t seed) const override;

  /// min(b_L, b_R).
  double lane_margin(const Vec& x) const;
  double lane_half_width() const noexcept { return lane_half_width_; }

 private:
  const Disk* next_obstacle(const Vec& x, const Episode& ep) const;

  CurvilinearBicycle system_;
  bool four_level_;
  double lane_half_width_ = 2.0;
};

inline constexpr std::size_t kLaneLeft = 0, kLaneRight = 1, kObstacle = 2;

/// "navigation", "manipulation", "driving", "driving4".
std::unique_ptr<Scenario> make_scenario(const std::string& name, const nlohmann::json& overrides = {});
std::vector<std::string> scenario_names();

/// Scenario posets by name (same names as make_scenario).
SafetyPoset scenario_poset(const std::string& name);

// ---------------------------------------------------------------------------
// Expert

/// Terms of every constraint at x (order as in `specs`).
std::vector<BarrierTerms> compile_all_terms(const ControlAffineSystem& system, const std::vector<BarrierSpec>& specs,
                                            const Vec& x);

struct ExpertResult {
  bool feasible = false;
  Vec control;    // QP solution, or the reference when infeasible
  Vec reference;
  QpSolution solution;
};

/// Hard QP over the scenario's expert constraints at expert gains.
ExpertResult expert_control(const Scenario& scenario, const std::vector<BarrierSpec>& specs, const Vec& x,
                            const Vec& u_ref);
ExpertResult expert_control(const Scenario& scenario, const std::vector<BarrierSpec>& specs, const Vec& x,
                            const Episode& ep);

}  // namespace posafe
