#include "posafe/scenarios.hpp"

#include "posafe/config.hpp"
#include "posafe/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace posafe {

using nlohmann::json;

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(a + std::numbers::pi, two_pi);
  if (r < 0.0) r += two_pi;
  r -= std::numbers::pi;
  return r >= std::numbers::pi ? r - two_pi : r;
}

// ---------------------------------------------------------------------------
// Systems

Vec Unicycle::drift(const Vec& x) const {
  Vec f = Vec::Zero(4);
  f[0] = x[3] * std::cos(x[2]);
  f[1] = x[3] * std::sin(x[2]);
  return f;
}

Mat Unicycle::input_map(const Vec&) const {
  Mat g = Mat::Zero(4, 2);
  g(2, 0) = 1.0;
  g(3, 1) = 1.0;
  return g;
}

Mat Unicycle::drift_jacobian(const Vec& x) const {
  Mat j = Mat::Zero(4, 4);
  const double c = std::cos(x[2]), s = std::sin(x[2]);
  j(0, 2) = -x[3] * s;
  j(0, 3) = c;
  j(1, 2) = x[3] * c;
  j(1, 3) = s;
  return j;
}

Vec Manipulator::drift(const Vec& x) const {
  Vec f = Vec::Zero(4);
  f[0] = x[1];
  f[2] = x[3];
  return f;
}

Mat Manipulator::input_map(const Vec&) const {
  Mat g = Mat::Zero(4, 2);
  g(1, 0) = 1.0;
  g(3, 1) = 1.0;
  return g;
}

Mat Manipulator::drift_jacobian(const Vec&) const {
  Mat j = Mat::Zero(4, 4);
  j(0, 1) = 1.0;
  j(2, 3) = 1.0;
  return j;
}

double CurvilinearBicycle::curvature(double s) const {
  double k = 0.0;
  for (const auto& seg : p_.curvature) {
    if (s < seg.s_start) break;
    k = seg.kappa;
  }
  return k;
}

double CurvilinearBicycle::slip(double delta) const {
  return std::atan(p_.l_r / (p_.l_f + p_.l_r) * std::tan(delta));
}

double CurvilinearBicycle::slip_derivative(double delta) const {
  const double r = p_.l_r / (p_.l_f + p_.l_r);
  const double t = std::tan(delta);
  return r * (1.0 + t * t) / (1.0 + r * r * t * t);
}

double CurvilinearBicycle::frame_factor(const Vec& x) const {
  const double den = 1.0 - x[1] * curvature(x[0]);
  if (den <= p_.frame_eps)
    throw FrameSingularity("curvilinear frame singular: 1 - d*kappa = " + std::to_string(den));
  return den;
}

Vec CurvilinearBicycle::drift(const Vec& x) const {
  const double den = frame_factor(x);
  const double k = curvature(x[0]);
  const double v = x[3];
  const double beta = slip(x[4]);
  const double c = std::cos(x[2] + beta), s = std::sin(x[2] + beta);
  Vec f = Vec::Zero(5);
  f[0] = v * c / den;
  f[1] = v * s;
  f[2] = v / p_.l_r * std::sin(beta) - k * v * c / den;
  return f;
}

Mat CurvilinearBicycle::input_map(const Vec&) const {
  Mat g = Mat::Zero(5, 2);
  g(4, 0) = 1.0;  // steering rate
  g(3, 1) = 1.0;  // acceleration
  return g;
}

Mat CurvilinearBicycle::drift_jacobian(const Vec& x) const {
  // κ(s) is piecewise constant, so ∂/∂s vanishes almost everywhere.
  const double den = frame_factor(x);
  const double k = curvature(x[0]);
  const double v = x[3];
  const double beta = slip(x[4]);
  const double db = slip_derivative(x[4]);
  const double c = std::cos(x[2] + beta), s = std::sin(x[2] + beta);
  Mat j = Mat::Zero(5, 5);
  j(0, 1) = v * c * k / (den * den);
  j(0, 2) = -v * s / den;
  j(0, 3) = c / den;
  j(0, 4) = -v * s * db / den;
  j(1, 2) = v * c;
  j(1, 3) = s;
  j(1, 4) = v * c * db;
  j(2, 1) = -k * k * v * c / (den * den);
  j(2, 2) = k * v * s / den;
  j(2, 3) = std::sin(beta) / p_.l_r - k * c / den;
  j(2, 4) = v / p_.l_r * std::cos(beta) * db + k * v * s * db / den;
  return j;
}

// ---------------------------------------------------------------------------
// Barriers

double DiskBarrier::value(const Vec& x) const {
  const double dx = x[ix_] - disk_.x, dy = x[iy_] - disk_.y;
  return dx * dx + dy * dy - disk_.r * disk_.r;
}

Vec DiskBarrier::gradient(const Vec& x) const {
  Vec g = Vec::Zero(x.size());
  g[ix_] = 2.0 * (x[ix_] - disk_.x);
  g[iy_] = 2.0 * (x[iy_] - disk_.y);
  return g;
}

Mat DiskBarrier::hessian(const Vec& x) const {
  Mat h = Mat::Zero(x.size(), x.size());
  h(ix_, ix_) = 2.0;
  h(iy_, iy_) = 2.0;
  return h;
}

NearestDiskBarrier::NearestDiskBarrier(std::size_t ix, std::size_t iy, std::vector<Disk> disks) {
  if (disks.empty()) throw std::invalid_argument("NearestDiskBarrier needs at least one disk");
  for (const auto& d : disks) parts_.emplace_back(ix, iy, d);
}

std::size_t NearestDiskBarrier::nearest(const Vec& x) const {
  std::size_t best = 0;
  double best_v = parts_[0].value(x);
  for (std::size_t i = 1; i < parts_.size(); ++i) {
    const double v = parts_[i].value(x);
    if (v < best_v) best_v = v, best = i;
  }
  return best;
}

double NearestDiskBarrier::value(const Vec& x) const { return parts_[nearest(x)].value(x); }
Vec NearestDiskBarrier::gradient(const Vec& x) const { return parts_[nearest(x)].gradient(x); }
Mat NearestDiskBarrier::hessian(const Vec& x) const { return parts_[nearest(x)].hessian(x); }

double TipBarrier::value(const Vec& x) const {
  const double ex = l1_ * std::cos(x[0]) + l2_ * std::cos(x[2]) - disk_.x;
  const double ey = l1_ * std::sin(x[0]) + l2_ * std::sin(x[2]) - disk_.y;
  return ex * ex + ey * ey - disk_.r * disk_.r;
}

Vec TipBarrier::gradient(const Vec& x) const {
  const double c1 = std::cos(x[0]), s1 = std::sin(x[0]), c2 = std::cos(x[2]), s2 = std::sin(x[2]);
  const double ex = l1_ * c1 + l2_ * c2 - disk_.x;
  const double ey = l1_ * s1 + l2_ * s2 - disk_.y;
  Vec g = Vec::Zero(4);
  g[0] = 2.0 * l1_ * (-ex * s1 + ey * c1);
  g[2] = 2.0 * l2_ * (-ex * s2 + ey * c2);
  return g;
}

Mat TipBarrier::hessian(const Vec& x) const {
  const double c1 = std::cos(x[0]), s1 = std::sin(x[0]), c2 = std::cos(x[2]), s2 = std::sin(x[2]);
  const double ex = l1_ * c1 + l2_ * c2 - disk_.x;
  const double ey = l1_ * s1 + l2_ * s2 - disk_.y;
  Mat h = Mat::Zero(4, 4);
  // ∂²b/∂θₖ∂θₗ = 2 ∂ₖp·∂ₗp + 2 e·∂ₖ∂ₗp
  h(0, 0) = 2.0 * l1_ * l1_ - 2.0 * l1_ * (ex * c1 + ey * s1);
  h(2, 2) = 2.0 * l2_ * l2_ - 2.0 * l2_ * (ex * c2 + ey * s2);
  h(0, 2) = h(2, 0) = 2.0 * l1_ * l2_ * (s1 * s2 + c1 * c2);
  return h;
}

double JointLimitBarrier::value(const Vec& x) const {
  const double phi = wrap_angle(x[2] - x[0]);
  return upper_ ? limit_ - phi : phi - limit_;
}

Vec JointLimitBarrier::gradient(const Vec& x) const {
  const double sign = upper_ ? -1.0 : 1.0;
  Vec g = Vec::Zero(x.size());
  g[0] = -sign;
  g[2] = sign;
  return g;
}

Mat JointLimitBarrier::hessian(const Vec& x) const { return Mat::Zero(x.size(), x.size()); }

// ---------------------------------------------------------------------------
// Scenario plumbing

namespace {

double uniform(std::mt19937_64& rng, const json& range) {
  const double lo = range.at(0).get<double>(), hi = range.at(1).get<double>();
  if (hi <= lo) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Disk disk_from(const json& j) { return Disk{j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

BarrierSpec make_spec(std::string name, BarrierOrder order, std::shared_ptr<const Barrier> b, double gain) {
  BarrierSpec s;
  s.name = std::move(name);
  s.order = order;
  s.barrier = std::move(b);
  const double raw = inverse_softplus(gain);
  s.raw_gains = {raw, raw};
  return s;
}

const json& navigation_defaults() {
  static const json d = {
      {"dt", 0.05},
      {"horizon", 360},
      {"noise_fraction", 0.1},
      {"expert_gain", 1.0},
      {"heads", 6},
      {"layers", {5, 128, 32, 32, 2}},
      {"goal", {22.0, 0.0}},
      {"obstacles", {{5.0, 0.8, 1.2}, {11.0, -1.2, 1.2}, {17.0, 1.0, 1.2}}},
      {"start_x", {-1.0, 1.0}},
      {"start_y", {-3.0, 3.0}},
      {"start_heading", {-0.4, 0.4}},
      {"start_speed", {0.5, 1.5}},
      {"cruise_speed", 2.0},
      {"k_heading", 2.0},
      {"k_speed", 1.0},
      {"k_distance", 0.5},
      {"avoid_gain", 1.0},
      {"avoid_range", 2.0},
      {"position_scale", 10.0},
  };
  return d;
}

const json& manipulation_defaults() {
  static const json d = {
      {"dt", 0.05},
      {"horizon", 370},
      {"noise_fraction", 0.1},
      {"expert_gain", 1.0},
      {"heads", 2},
      {"layers", {6, 128, 256, 128, 32, 32, 2}},
      {"link_lengths", {1.0, 1.0}},
      {"phi_limits", {-2.5, 2.5}},
      {"obstacle", {0.6, 1.5, 0.3}},
      {"start_theta1", {-1.0, 1.0}},
      {"start_phi", {-1.0, 1.0}},
      {"goal_theta1", {-1.2, 1.2}},
      {"goal_phi", {-2.4, 2.4}},
      {"kp", 2.0},
      {"kd", 1.0},
  };
  return d;
}

const json& driving_defaults() {
  static const json d = {
      {"dt", 0.05},
      {"horizon", 400},
      {"noise_fraction", 0.1},
      {"expert_gain", 1.0},
      {"heads", 2},
      {"layers", {6, 64, 32, 32, 2}},
      {"l_r", 1.4},
      {"l_f", 1.6},
      {"frame_eps", 1e-3},
      {"curvature", json::array()},
      {"lane_half_width", 2.0},
      {"centerline_tolerance", 0.5},
      {"speed_limits", {2.0, 12.0}},
      {"obstacle_radius", 1.5},
      {"start_s", {0.0, 10.0}},
      {"start_d", {-0.5, 0.5}},
      {"start_speed", {6.0, 10.0}},
      {"gap_first", {20.0, 30.0}},
      {"gap_second", {30.0, 40.0}},
      {"obstacle_offset", {0.1, 1.5}},
      {"v_ref", 8.0},
      {"k_speed", 1.0},
      {"k_lateral", 0.3},
      {"k_heading", 2.0},
      {"k_steer", 4.0},
      {"max_heading", 0.4},
      {"max_steer", 0.5},
      {"pass_clearance", 0.3},
      {"lookahead", 30.0},
  };
  return d;
}

}  // namespace

std::vector<std::size_t> Scenario::expert_constraints() const {
  std::vector<std::size_t> all(constraint_count());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

Episode Scenario::episode(std::uint64_t root_seed, std::uint64_t stream_id, std::size_t index) const {
  Episode ep = make_episode(derive_seed(root_seed, stream_id, index));
  ep.index = index;
  return ep;
}

void Scenario::set_common(const json& cfg) {
  config_ = cfg;
  dt_ = cfg.at("dt").get<double>();
  horizon_ = cfg.at("horizon").get<std::size_t>();
  noise_fraction_ = cfg.at("noise_fraction").get<double>();
  expert_gain_ = cfg.at("expert_gain").get<double>();
  heads_ = cfg.at("heads").get<std::size_t>();
  layers_ = cfg.at("layers").get<std::vector<std::size_t>>();
  if (!(dt_ > 0.0)) throw std::invalid_argument("dt must be positive");
  if (!(expert_gain_ > 0.0)) throw std::invalid_argument("expert_gain must be positive");
  if (heads_ == 0) throw std::invalid_argument("heads must be at least 1");
}

// ---------------------------------------------------------------------------
// Navigation

NavigationScenario::NavigationScenario(const json& overrides) {
  name_ = "navigation";
  set_common(merge_config(navigation_defaults(), overrides));
  names_ = {"obstacle0", "obstacle1", "obstacle2"};
  state_names_ = {"x", "y", "theta", "v"};
  control_names_ = {"turn_rate", "accel"};
  if (config_.at("obstacles").size() != 3) throw std::invalid_argument("navigation expects exactly 3 obstacles");
  poset_ = scenario_poset(name_);
}

std::vector<BarrierSpec> NavigationScenario::barriers(const Episode& ep) const {
  std::vector<BarrierSpec> specs;
  for (std::size_t i = 0; i < ep.obstacles.size(); ++i)
    specs.push_back(make_spec(names_[i], BarrierOrder::Second,
                              std::make_shared<DiskBarrier>(0, 1, ep.obstacles[i]), expert_gain_));
  return specs;
}

Vec NavigationScenario::reference_control(const Vec& x, const Episode& ep) const {
  const double dx = ep.goal[0] - x[0], dy = ep.goal[1] - x[1];
  const double dist = std::hypot(dx, dy);
  // Goal direction bent tangentially around obstacles ahead.
  double hx = dx / std::max(dist, 1e-9), hy = dy / std::max(dist, 1e-9);
  const double gx = hx, gy = hy;
  const double gain = config_.at("avoid_gain").get<double>(), range = config_.at("avoid_range").get<double>();
  for (const auto& o : ep.obstacles) {
    const double rx = x[0] - o.x, ry = x[1] - o.y;
    const double rn = std::hypot(rx, ry);
    const double surface = rn - o.r;
    if (rn < 1e-9 || surface >= range || -(rx * gx + ry * gy) <= 0.0) continue;
    double tx = -ry / rn, ty = rx / rn;
    if (tx * gx + ty * gy < 0.0) tx = -tx, ty = -ty;
    const double w = gain * (range - std::max(surface, 0.0)) / range;
    hx += w * tx;
    hy += w * ty;
  }
  const double heading_err = wrap_angle(std::atan2(hy, hx) - x[2]);
  const double v_des = std::min(config_.at("cruise_speed").get<double>(), config_.at("k_distance").get<double>() * dist);
  Vec u(2);
  // Stop turning once at the goal.
  u[0] = config_.at("k_heading").get<double>() * heading_err * std::min(1.0, dist);
  u[1] = config_.at("k_speed").get<double>() * (v_des - x[3]);
  return u;
}

Vec NavigationScenario::features(const Vec& x, const Episode& ep) const {
  const double scale = config_.at("position_scale").get<double>();
  Vec z(5);
  z << (x[0] - ep.goal[0]) / scale, (x[1] - ep.goal[1]) / scale, std::cos(x[2]), std::sin(x[2]), x[3];
  return z;
}

double NavigationScenario::safety_value(const Vec& x, const Episode& ep) const {
  double b = std::numeric_limits<double>::infinity();
  for (const auto& o : ep.obstacles) b = std::min(b, DiskBarrier(0, 1, o).value(x));
  return b;
}

double NavigationScenario::final_distance(const Vec& x, const Episode& ep) const {
  return std::hypot(x[0] - ep.goal[0], x[1] - ep.goal[1]);
}

Episode NavigationScenario::make_episode(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  Episode ep;
  ep.goal = Vec(2);
  ep.goal << config_.at("goal").at(0).get<double>(), config_.at("goal").at(1).get<double>();
  for (const auto& o : config_.at("obstacles")) ep.obstacles.push_back(disk_from(o));
  ep.initial_state = Vec(4);
  ep.initial_state[0] = uniform(rng, config_.at("start_x"));
  ep.initial_state[1] = uniform(rng, config_.at("start_y"));
  ep.initial_state[2] = uniform(rng, config_.at("start_heading"));
  ep.initial_state[3] = uniform(rng, config_.at("start_speed"));
  return ep;
}

// ---------------------------------------------------------------------------
// Manipulation

ManipulationScenario::ManipulationScenario(const json& overrides) {
  name_ = "manipulation";
  set_common(merge_config(manipulation_defaults(), overrides));
  l1_ = config_.at("link_lengths").at(0).get<double>();
  l2_ = config_.at("link_lengths").at(1).get<double>();
  phi_min_ = config_.at("phi_limits").at(0).get<double>();
  phi_max_ = config_.at("phi_limits").at(1).get<double>();
  if (!(l1_ > 0.0 && l2_ > 0.0)) throw std::invalid_argument("link lengths must be positive");
  if (!(phi_min_ < phi_max_)) throw std::invalid_argument("phi_limits must satisfy min < max");
  names_ = {"obstacle", "joint_min", "joint_max"};
  state_names_ = {"theta1", "omega1", "theta2", "omega2"};
  control_names_ = {"alpha1", "alpha2"};
  poset_ = scenario_poset(name_);
}

std::vector<BarrierSpec> ManipulationScenario::barriers(const Episode& ep) const {
  return {
      make_spec(names_[0], BarrierOrder::Second, std::make_shared<TipBarrier>(l1_, l2_, ep.obstacles.at(0)),
                expert_gain_),
      make_spec(names_[1], BarrierOrder::Second, std::make_shared<JointLimitBarrier>(phi_min_, false), expert_gain_),
      make_spec(names_[2], BarrierOrder::Second, std::make_shared<JointLimitBarrier>(phi_max_, true), expert_gain_),
  };
}

Vec ManipulationScenario::reference_control(const Vec& x, const Episode& ep) const {
  const double kp = config_.at("kp").get<double>(), kd = config_.at("kd").get<double>();
  Vec u(2);
  u[0] = kp * (ep.goal[0] - x[0]) - kd * x[1];
  u[1] = kp * (ep.goal[1] - x[2]) - kd * x[3];
  return u;
}

Vec ManipulationScenario::features(const Vec& x, const Episode& ep) const {
  Vec z(6);
  z << x[0], x[1], x[2], x[3], ep.goal[0] - x[0], ep.goal[1] - x[2];
  return z;
}

double ManipulationScenario::safety_value(const Vec& x, const Episode& ep) const {
  return TipBarrier(l1_, l2_, ep.obstacles.at(0)).value(x);
}

double ManipulationScenario::final_distance(const Vec& x, const Episode& ep) const {
  return std::hypot(x[0] - ep.goal[0], x[2] - ep.goal[1]);
}

double ManipulationScenario::phi_violation(const Vec& x) const {
  const double p = phi(x);
  return std::max({0.0, p - phi_max_, phi_min_ - p});
}

Episode ManipulationScenario::make_episode(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  Episode ep;
  ep.obstacles.push_back(disk_from(config_.at("obstacle")));
  const double t1 = uniform(rng, config_.at("start_theta1"));
  const double phi0 = uniform(rng, config_.at("start_phi"));
  ep.initial_state = Vec(4);
  ep.initial_state << t1, 0.0, t1 + phi0, 0.0;
  const double g1 = uniform(rng, config_.at("goal_theta1"));
  const double gphi = uniform(rng, config_.at("goal_phi"));
  ep.goal = Vec(2);
  ep.goal << g1, g1 + gphi;
  return ep;
}

// ---------------------------------------------------------------------------
// Driving

namespace {

BicycleParams bicycle_params(const json& cfg) {
  BicycleParams p;
  p.l_r = cfg.at("l_r").get<double>();
  p.l_f = cfg.at("l_f").get<double>();
  p.frame_eps = cfg.at("frame_eps").get<double>();
  for (const auto& seg : cfg.at("curvature"))
    p.curvature.push_back({seg.at(0).get<double>(), seg.at(1).get<double>()});
  std::sort(p.curvature.begin(), p.curvature.end(),
            [](const CurvatureSegment& a, const CurvatureSegment& b) { return a.s_start < b.s_start; });
  return p;
}

}  // namespace

DrivingScenario::DrivingScenario(bool four_level, const json& overrides)
    : system_(bicycle_params(merge_config(driving_defaults(), overrides))), four_level_(four_level) {
  name_ = four_level ? "driving4" : "driving";
  json defaults = driving_defaults();
  if (four_level) defaults["heads"] = 8;
  set_common(merge_config(defaults, overrides));
  lane_half_width_ = config_.at("lane_half_width").get<double>();
  const auto limits = config_.at("speed_limits").get<std::vector<double>>();
  if (!(lane_half_width_ > 0.0)) throw std::invalid_argument("lane_half_width must be positive");
  if (!(config_.at("centerline_tolerance").get<double>() > 0.0))
    throw std::invalid_argument("centerline_tolerance must be positive");
  if (limits.size() != 2 || !(limits[0] < limits[1])) throw std::invalid_argument("speed_limits must be [min, max]");
  if (!(config_.at("obstacle_radius").get<double>() > 0.0)) throw std::invalid_argument("obstacle_radius must be positive");
  names_ = {"lane_left", "lane_right", "obstacle"};
  state_names_ = {"s", "d", "mu", "v", "delta"};
  control_names_ = {"steer_rate", "accel"};
  if (four_level_) {
    names_.insert(names_.end(), {"center_left", "center_right", "speed_min", "speed_max"});
  }
  poset_ = scenario_poset(name_);
}

std::vector<BarrierSpec> DrivingScenario::barriers(const Episode& ep) const {
  auto affine = [](std::size_t idx, double w, double offset) {
    Vec weights = Vec::Zero(5);
    weights[static_cast<Eigen::Index>(idx)] = w;
    return std::make_shared<AffineBarrier>(weights, offset);
  };
  const double lf = lane_half_width_;
  std::vector<BarrierSpec> specs = {
      make_spec(names_[0], BarrierOrder::Second, affine(1, -1.0, lf), expert_gain_),
      make_spec(names_[1], BarrierOrder::Second, affine(1, 1.0, lf), expert_gain_),
      make_spec(names_[2], BarrierOrder::Second, std::make_shared<NearestDiskBarrier>(0, 1, ep.obstacles),
                expert_gain_),
  };
  if (four_level_) {
    const double tau = config_.at("centerline_tolerance").get<double>();
    const auto limits = config_.at("speed_limits").get<std::vector<double>>();
    specs.push_back(make_spec(names_[3], BarrierOrder::Second, affine(1, -1.0, tau), expert_gain_));
    specs.push_back(make_spec(names_[4], BarrierOrder::Second, affine(1, 1.0, tau), expert_gain_));
    specs.push_back(make_spec(names_[5], BarrierOrder::First, affine(3, 1.0, -limits[0]), expert_gain_));
    specs.push_back(make_spec(names_[6], BarrierOrder::First, affine(3, -1.0, limits[1]), expert_gain_));
  }
  return specs;
}

const Disk* DrivingScenario::next_obstacle(const Vec& x, const Episode& ep) const {
  const Disk* best = nullptr;
  for (const auto& o : ep.obstacles)
    if (o.x - x[0] > -o.r && (best == nullptr || o.x < best->x)) best = &o;
  return best;
}

Vec DrivingScenario::reference_control(const Vec& x, const Episode& ep) const {
  const auto& c = config_;
  double d_ref = 0.0;
  if (const Disk* o = next_obstacle(x, ep); o != nullptr && o->x - x[0] < c.at("lookahead").get<double>()) {
    const double side = o->y >= 0.0 ? -1.0 : 1.0;
    d_ref = o->y + side * (o->r + c.at("pass_clearance").get<double>());
    const double bound = lane_half_width_ - 0.2;
    d_ref = std::clamp(d_ref, -bound, bound);
  }
  const double max_heading = c.at("max_heading").get<double>();
  const double max_steer = c.at("max_steer").get<double>();
  const double mu_des = std::clamp(std::atan(c.at("k_lateral").get<double>() * (d_ref - x[1])), -max_heading, max_heading);
  const double delta_des = std::clamp(c.at("k_heading").get<double>() * (mu_des - x[2]), -max_steer, max_steer);
  Vec u(2);
  u[0] = c.at("k_steer").get<double>() * (delta_des - x[4]);
  u[1] = c.at("k_speed").get<double>() * (c.at("v_ref").get<double>() - x[3]);
  return u;
}

Vec DrivingScenario::features(const Vec& x, const Episode& ep) const {
  const double lookahead = config_.at("lookahead").get<double>();
  const double v_ref = config_.at("v_ref").get<double>();
  double ds = 1.0, d0 = 0.0;
  if (const Disk* o = next_obstacle(x, ep); o != nullptr) {
    ds = std::min(1.0, (o->x - x[0]) / lookahead);
    d0 = o->y / lane_half_width_;
  }
  Vec z(6);
  z << x[1] / lane_half_width_, x[2], (x[3] - v_ref) / v_ref, x[4], ds, d0;
  return z;
}

double DrivingScenario::safety_value(const Vec& x, const Episode& ep) const {
  return NearestDiskBarrier(0, 1, ep.obstacles).value(x);
}

double DrivingScenario::lane_margin(const Vec& x) const {
  return std::min(lane_half_width_ - x[1], x[1] + lane_half_width_);
}

double DrivingScenario::final_distance(const Vec& x, const Episode&) const { return std::abs(x[1]); }

Episode DrivingScenario::make_episode(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  const auto& c = config_;
  Episode ep;
  ep.initial_state = Vec::Zero(5);
  ep.initial_state[0] = uniform(rng, c.at("start_s"));
  ep.initial_state[1] = uniform(rng, c.at("start_d"));
  ep.initial_state[3] = uniform(rng, c.at("start_speed"));
  const double r = c.at("obstacle_radius").get<double>();
  const double gap1 = uniform(rng, c.at("gap_first"));
  const double gap2 = gap1 + uniform(rng, c.at("gap_second"));
  for (double gap : {gap1, gap2}) {
    const double mag = uniform(rng, c.at("obstacle_offset"));
    const double sign = std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
    ep.obstacles.push_back(Disk{ep.initial_state[0] + gap, sign * mag, r});
  }
  ep.goal = Vec::Zero(1);
  return ep;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Scenario> make_scenario(const std::string& name, const json& overrides) {
  if (name == "navigation") return std::make_unique<NavigationScenario>(overrides);
  if (name == "manipulation") return std::make_unique<ManipulationScenario>(overrides);
  if (name == "driving") return std::make_unique<DrivingScenario>(false, overrides);
  if (name == "driving4") return std::make_unique<DrivingScenario>(true, overrides);
  throw std::invalid_argument("unknown scenario '" + name + "'");
}

std::vector<std::string> scenario_names() { return {"navigation", "manipulation", "driving", "driving4"}; }

SafetyPoset scenario_poset(const std::string& name) {
  if (name == "navigation") return SafetyPoset::antichain(3);
  if (name == "manipulation") return SafetyPoset(3, {{0, 1}, {0, 2}});
  if (name == "driving") return SafetyPoset(3, {{kLaneLeft, kObstacle}, {kLaneRight, kObstacle}});
  if (name == "driving4") {
    const std::vector<std::vector<std::size_t>> tiers = {{3, 4}, {5, 6}, {kLaneLeft, kLaneRight}, {kObstacle}};
    std::vector<Relation> rels;
    for (std::size_t t = 0; t + 1 < tiers.size(); ++t)
      for (auto lo : tiers[t])
        for (auto hi : tiers[t + 1]) rels.push_back({lo, hi});
    return SafetyPoset(7, rels);
  }
  throw std::invalid_argument("unknown scenario '" + name + "'");
}

// ---------------------------------------------------------------------------

std::vector<BarrierTerms> compile_all_terms(const ControlAffineSystem& system, const std::vector<BarrierSpec>& specs,
                                            const Vec& x) {
  std::vector<BarrierTerms> terms;
  terms.reserve(specs.size());
  for (std::size_t j = 0; j < specs.size(); ++j)
    terms.push_back(compile_terms(*specs[j].barrier, specs[j].order, system, x, j));
  return terms;
}

ExpertResult expert_control(const Scenario& scenario, const std::vector<BarrierSpec>& specs, const Vec& x,
                            const Vec& u_ref) {
  QpProblem problem;
  problem.reference = u_ref;
  for (std::size_t j : scenario.expert_constraints())
    problem.constraints.push_back(compile_halfspace(specs.at(j), scenario.system(), x, j));
  ExpertResult out;
  out.reference = u_ref;
  out.solution = solve_qp(problem);
  out.feasible = out.solution.ok();
  out.control = out.feasible ? out.solution.control : u_ref;
  return out;
}

ExpertResult expert_control(const Scenario& scenario, const std::vector<BarrierSpec>& specs, const Vec& x,
                            const Episode& ep) {
  return expert_control(scenario, specs, x, scenario.reference_control(x, ep));
}

}  // namespace posafe
