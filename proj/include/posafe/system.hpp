#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace posafe {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

class FrameSingularity : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Control-affine dynamics  ẋ = f(x) + g(x) u.
class ControlAffineSystem {
 public:
  virtual ~ControlAffineSystem() = default;

  virtual std::size_t state_dim() const = 0;
  virtual std::size_t control_dim() const = 0;

  virtual Vec drift(const Vec& x) const = 0;
  virtual Mat input_map(const Vec& x) const = 0;
  /// ∂f/∂x, analytically coded per system.
  virtual Mat drift_jacobian(const Vec& x) const = 0;

  /// Rows of g that drive the configuration q (for isotropy checks).
  virtual std::vector<std::size_t> configuration_rows() const = 0;
  /// Rows of g that drive the configuration velocities; used when the
  /// configuration block of g is identically zero (second-order systems).
  virtual std::vector<std::size_t> velocity_rows() const = 0;

  Vec derivative(const Vec& x, const Vec& u) const { return drift(x) + input_map(x) * u; }

  /// Explicit Euler step.
  Vec step(const Vec& x, const Vec& u, double dt) const { return x + dt * derivative(x, u); }
};

/// ẋ = u on R^m. Used in tests and as the reference isotropic system.
class SingleIntegrator final : public ControlAffineSystem {
 public:
  explicit SingleIntegrator(std::size_t dim) : dim_(dim) {}

  std::size_t state_dim() const override { return dim_; }
  std::size_t control_dim() const override { return dim_; }
  Vec drift(const Vec&) const override { return Vec::Zero(dim_); }
  Mat input_map(const Vec&) const override { return Mat::Identity(dim_, dim_); }
  Mat drift_jacobian(const Vec&) const override { return Mat::Zero(dim_, dim_); }
  std::vector<std::size_t> configuration_rows() const override;
  std::vector<std::size_t> velocity_rows() const override { return {}; }

 private:
  std::size_t dim_;
};

}  // namespace posafe
