#pragma once

#include "posafe/system.hpp"

#include <array>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>

namespace posafe {

namespace tol {
inline constexpr double kNorm = 1e-9;      // minimum ‖a‖ accepted by the projector
inline constexpr double kFeas = 1e-9;      // feasibility slack on a·u ≥ c
inline constexpr double kDot = 1e-12;      // compatibility threshold on aᵢ·aⱼ
inline constexpr double kBoundary = 1e-8;  // |c − a·u| below this counts as on the boundary
}  // namespace tol

enum class GeometryErrorKind { DegenerateNormal, RelativeDegreeMismatch };

class GeometryError : public std::runtime_error {
 public:
  GeometryError(GeometryErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  GeometryErrorKind kind() const noexcept { return kind_; }

 private:
  GeometryErrorKind kind_;
};

/// {u : a·u ≥ c}.
struct Halfspace {
  Vec a;
  double c = 0.0;
  std::size_t constraint_id = 0;

  double margin(const Vec& u) const { return a.dot(u) - c; }
  bool contains(const Vec& u, double slack = tol::kFeas) const { return margin(u) >= -slack; }
  bool degenerate() const { return a.norm() < tol::kNorm; }
};

/// Closed-form Euclidean projection  u + ReLU(c − a·u)/‖a‖² · a.
/// Inputs with c − a·u ≤ kFeas are returned unchanged (bitwise).
Vec project(const Halfspace& h, const Vec& u);

struct ProjectionJacobian {
  Mat d_out_d_u;  // m×m
  Vec d_out_d_c;  // m
  bool active = false;
};

/// Derivative of project(). On the boundary (|c − a·u| ≤ kBoundary) the
/// inactive branch is returned, i.e. ReLU'(0) = 0.
ProjectionJacobian project_jacobian(const Halfspace& h, const Vec& u);

enum class Compatibility { Compatible, Conflicting, Degenerate };

/// Sufficient non-interference test for a pair of halfspaces: normals not
/// opposing (aᵢ·aⱼ ≥ −kDot) and a nonempty intersection. Returns Degenerate
/// when either normal is below kNorm.
Compatibility check_compatibility(const Halfspace& hi, const Halfspace& hj);

/// ‖g_q g_qᵀ − γ̂ I‖_F / γ̂ with γ̂ = trace/dim over the configuration block
/// of g; falls back to the velocity block when the configuration block is zero.
double isotropy_check(const ControlAffineSystem& system, const Vec& x);

// ---------------------------------------------------------------------------
// Barriers

/// Scalar barrier b(x) with analytic first and second derivatives.
class Barrier {
 public:
  virtual ~Barrier() = default;
  virtual double value(const Vec& x) const = 0;
  virtual Vec gradient(const Vec& x) const = 0;
  virtual Mat hessian(const Vec& x) const = 0;
};

enum class BarrierOrder { First = 1, Second = 2 };

double softplus(double raw);
double softplus_derivative(double raw);  // logistic sigmoid
double inverse_softplus(double value);

struct BarrierSpec {
  std::string name;
  BarrierOrder order = BarrierOrder::First;
  std::shared_ptr<const Barrier> barrier;
  /// Unconstrained gain parameters, mapped through softplus. Index 1 is only
  /// used by second-order barriers.
  std::array<double, 2> raw_gains{0.5, 0.5};

  std::array<double, 2> gains() const { return {softplus(raw_gains[0]), softplus(raw_gains[1])}; }
};

/// State-dependent quantities of one barrier at one state. The threshold c
/// is affine in them for fixed gains, which lets callers recompute c and its
/// gain sensitivities without touching the dynamics again.
struct BarrierTerms {
  BarrierOrder order = BarrierOrder::First;
  std::size_t constraint_id = 0;
  Vec a;               // L_g b (first order) or L_g L_f b (second order)
  double b = 0.0;      // b(x)
  double lf_b = 0.0;   // L_f b
  double lf2_b = 0.0;  // L_f² b (second order only)

  /// First order:  c = −L_f b − κ₁ b.
  /// Second order: c = −L_f² b − (κ₁+κ₂) L_f b − κ₁κ₂ b.
  double threshold(const std::array<double, 2>& kappa) const;
  /// ∂c/∂κ₁, ∂c/∂κ₂ (the latter zero for first order).
  std::array<double, 2> threshold_gain_sensitivity(const std::array<double, 2>& kappa) const;
  Halfspace halfspace(const std::array<double, 2>& kappa) const {
    return Halfspace{a, threshold(kappa), constraint_id};
  }
};

/// Lie-derivative terms of `barrier` on `system` at `x`.
/// Throws RelativeDegreeMismatch if the order disagrees with L_g b, and
/// DegenerateNormal if a second-order normal vanishes.
BarrierTerms compile_terms(const Barrier& barrier, BarrierOrder order, const ControlAffineSystem& system,
                           const Vec& x, std::size_t constraint_id = 0);

Halfspace compile_halfspace(const BarrierSpec& spec, const ControlAffineSystem& system, const Vec& x,
                            std::size_t constraint_id = 0);

}  // namespace posafe
