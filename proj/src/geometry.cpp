#include "posafe/geometry.hpp"

#include <cmath>

namespace posafe {

std::vector<std::size_t> SingleIntegrator::configuration_rows() const {
  std::vector<std::size_t> rows(dim_);
  for (std::size_t i = 0; i < dim_; ++i) rows[i] = i;
  return rows;
}

namespace {

void require_normal(const Halfspace& h) {
  if (h.degenerate())
    throw GeometryError(GeometryErrorKind::DegenerateNormal,
                        "halfspace " + std::to_string(h.constraint_id) + " has a degenerate normal");
}

}  // namespace

Vec project(const Halfspace& h, const Vec& u) {
  require_normal(h);
  const double residual = h.c - h.a.dot(u);
  // Residuals inside the feasibility slack count as satisfied; this keeps the
  // map idempotent in floating point (a projected point re-enters this branch).
  if (residual <= tol::kFeas) return u;
  return u + (residual / h.a.squaredNorm()) * h.a;
}

ProjectionJacobian project_jacobian(const Halfspace& h, const Vec& u) {
  require_normal(h);
  const auto m = h.a.size();
  ProjectionJacobian jac;
  const double residual = h.c - h.a.dot(u);
  if (residual <= tol::kBoundary) {
    jac.d_out_d_u = Mat::Identity(m, m);
    jac.d_out_d_c = Vec::Zero(m);
    jac.active = false;
    return jac;
  }
  const double nrm2 = h.a.squaredNorm();
  jac.d_out_d_u = Mat::Identity(m, m) - (h.a * h.a.transpose()) / nrm2;
  jac.d_out_d_c = h.a / nrm2;
  jac.active = true;
  return jac;
}

Compatibility check_compatibility(const Halfspace& hi, const Halfspace& hj) {
  if (hi.degenerate() || hj.degenerate()) return Compatibility::Degenerate;
  const double dot = hi.a.dot(hj.a);
  if (dot < -tol::kDot) return Compatibility::Conflicting;
  // Non-opposing normals: the only way two halfspaces can fail to intersect
  // is anti-parallel normals, which the dot test has already excluded, so
  // the intersection is nonempty for any thresholds.
  return Compatibility::Compatible;
}

double isotropy_check(const ControlAffineSystem& system, const Vec& x) {
  const Mat g = system.input_map(x);
  auto block_of = [&](const std::vector<std::size_t>& rows) {
    Mat b(rows.size(), g.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) b.row(r) = g.row(rows[r]);
    return b;
  };
  Mat gq = block_of(system.configuration_rows());
  Mat gram = gq * gq.transpose();
  if (gram.trace() <= 0.0) {
    gq = block_of(system.velocity_rows());
    gram = gq * gq.transpose();
  }
  const auto dim = gram.rows();
  if (dim == 0) return 0.0;
  const double gamma = gram.trace() / static_cast<double>(dim);
  if (gamma <= 0.0) return 0.0;
  return (gram - gamma * Mat::Identity(dim, dim)).norm() / gamma;
}

double softplus(double raw) {
  // log(1 + e^raw) without overflow for large raw
  return raw > 0.0 ? raw + std::log1p(std::exp(-raw)) : std::log1p(std::exp(raw));
}

double softplus_derivative(double raw) {
  if (raw >= 0.0) return 1.0 / (1.0 + std::exp(-raw));
  const double e = std::exp(raw);
  return e / (1.0 + e);
}

double inverse_softplus(double value) {
  if (value <= 0.0) throw std::invalid_argument("inverse_softplus needs a positive value");
  return value > 30.0 ? value + std::log(-std::expm1(-value)) : std::log(std::expm1(value));
}

double BarrierTerms::threshold(const std::array<double, 2>& kappa) const {
  if (order == BarrierOrder::First) return -lf_b - kappa[0] * b;
  return -lf2_b - (kappa[0] + kappa[1]) * lf_b - kappa[0] * kappa[1] * b;
}

std::array<double, 2> BarrierTerms::threshold_gain_sensitivity(const std::array<double, 2>& kappa) const {
  if (order == BarrierOrder::First) return {-b, 0.0};
  return {-lf_b - kappa[1] * b, -lf_b - kappa[0] * b};
}

BarrierTerms compile_terms(const Barrier& barrier, BarrierOrder order, const ControlAffineSystem& system,
                           const Vec& x, std::size_t constraint_id) {
  BarrierTerms t;
  t.order = order;
  t.constraint_id = constraint_id;
  const Vec f = system.drift(x);
  const Mat g = system.input_map(x);
  const Vec grad = barrier.gradient(x);
  t.b = barrier.value(x);
  t.lf_b = grad.dot(f);
  const Vec lg_b = g.transpose() * grad;

  if (order == BarrierOrder::First) {
    if (lg_b.norm() < tol::kNorm)
      throw GeometryError(GeometryErrorKind::RelativeDegreeMismatch,
                          "first-order barrier " + std::to_string(constraint_id) + " has L_g b = 0");
    t.a = lg_b;
    return t;
  }

  if (lg_b.norm() >= tol::kNorm)
    throw GeometryError(GeometryErrorKind::RelativeDegreeMismatch,
                        "second-order barrier " + std::to_string(constraint_id) + " has L_g b != 0");
  // ∇(L_f b) = H_b f + (∂f/∂x)ᵀ ∇b
  const Vec grad_lf = barrier.hessian(x) * f + system.drift_jacobian(x).transpose() * grad;
  t.lf2_b = grad_lf.dot(f);
  t.a = g.transpose() * grad_lf;
  if (t.a.norm() < tol::kNorm)
    throw GeometryError(GeometryErrorKind::DegenerateNormal,
                        "second-order barrier " + std::to_string(constraint_id) + " has L_g L_f b = 0");
  return t;
}

Halfspace compile_halfspace(const BarrierSpec& spec, const ControlAffineSystem& system, const Vec& x,
                            std::size_t constraint_id) {
  return compile_terms(*spec.barrier, spec.order, system, x, constraint_id).halfspace(spec.gains());
}

}  // namespace posafe
