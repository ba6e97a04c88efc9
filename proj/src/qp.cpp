#include "posafe/qp.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace posafe {

namespace {

constexpr double kCondLimit = 1e12;
constexpr double kMultiplierTol = 1e-10;

void check_problem(const QpProblem& p) {
  const auto m = static_cast<std::size_t>(p.reference.size());
  if (m < 1 || m > kMaxQpControlDim)
    throw std::invalid_argument("QP control dimension must be in {1,2,3}, got " + std::to_string(m));
  if (p.constraints.size() > kMaxQpConstraints)
    throw std::invalid_argument("QP supports at most 8 constraints, got " + std::to_string(p.constraints.size()));
  for (const auto& h : p.constraints)
    if (static_cast<std::size_t>(h.a.size()) != m) throw std::invalid_argument("constraint dimension mismatch");
  if (p.slack_weight < 0.0) throw std::invalid_argument("slack weight must be nonnegative");
}

double feasibility_tol(const Halfspace& h) { return 1e-9 * (1.0 + std::abs(h.c) + h.a.norm()); }

// Searches for y ≥ 0 with Aᵀy = 0 and cᵀy > 0 over subsets of at most m+1
// constraints whose normals have a one-dimensional dependency.
Vec farkas_certificate(const QpProblem& p) {
  const std::size_t k = p.constraints.size();
  const auto m = p.reference.size();
  for (std::uint32_t mask = 1; mask < (1u << k); ++mask) {
    const int size = __builtin_popcount(mask);
    if (size < 2 || size > m + 1) continue;
    Mat cols(m, size);
    Vec cs(size);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < k; ++i)
      if (mask & (1u << i)) {
        cols.col(static_cast<Eigen::Index>(idx.size())) = p.constraints[i].a;
        cs[static_cast<Eigen::Index>(idx.size())] = p.constraints[i].c;
        idx.push_back(i);
      }
    Eigen::FullPivLU<Mat> lu(cols);
    lu.setThreshold(1e-10);
    Mat ker = lu.kernel();
    if (ker.cols() != 1) continue;
    Vec y = ker.col(0);
    if (cs.dot(y) < 0.0) y = -y;
    const double scale = y.cwiseAbs().maxCoeff();
    if (scale <= 0.0) continue;
    y /= scale;
    if (y.minCoeff() < -1e-9 || cs.dot(y) <= 1e-12) continue;
    Vec full = Vec::Zero(static_cast<Eigen::Index>(k));
    for (std::size_t r = 0; r < idx.size(); ++r)
      full[static_cast<Eigen::Index>(idx[r])] = std::max(0.0, y[static_cast<Eigen::Index>(r)]);
    return full / full.sum();
  }
  return {};
}

}  // namespace

QpSolution solve_qp(const QpProblem& p) {
  check_problem(p);
  const std::size_t k = p.constraints.size();
  const auto m = p.reference.size();
  const bool slack = p.slack_weight > 0.0;
  const auto dim = slack ? m + static_cast<Eigen::Index>(k) : m;

  // Lifted variable z = (u, s) with metric W = diag(1, …, 1, w, …, w).
  Vec w_inv = Vec::Ones(dim);
  if (slack) w_inv.tail(static_cast<Eigen::Index>(k)).setConstant(1.0 / p.slack_weight);
  Vec z0 = Vec::Zero(dim);
  z0.head(m) = p.reference;
  Mat rows = Mat::Zero(static_cast<Eigen::Index>(k), dim);
  Vec rhs(static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    rows.row(r).head(m) = p.constraints[i].a.transpose();
    if (slack) rows(r, m + r) = 1.0;
    rhs[r] = p.constraints[i].c;
  }

  QpSolution best;
  best.status = QpStatus::Infeasible;
  double best_obj = std::numeric_limits<double>::infinity();
  bool best_ill = true;

  for (std::uint32_t mask = 0; mask < (1u << k); ++mask) {
    const int size = __builtin_popcount(mask);
    if (size > dim) continue;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < k; ++i)
      if (mask & (1u << i)) idx.push_back(i);

    Vec z = z0;
    Vec lambda = Vec::Zero(size);
    bool ill = false;
    if (size > 0) {
      Mat as(size, dim);
      Vec cs(size);
      for (int r = 0; r < size; ++r) {
        as.row(r) = rows.row(static_cast<Eigen::Index>(idx[r]));
        cs[r] = rhs[static_cast<Eigen::Index>(idx[r])];
      }
      const Mat scaled = as * w_inv.asDiagonal();
      const Mat gram = scaled * as.transpose();
      const Vec resid = cs - as * z0;
      Eigen::JacobiSVD<Mat> svd(gram);
      const auto& sv = svd.singularValues();
      const double smax = sv[0];
      const double smin = sv[sv.size() - 1];
      if (!(smax > 0.0)) continue;
      if (smin <= 0.0 || smax / smin > kCondLimit) {
        ill = true;
        lambda = gram.completeOrthogonalDecomposition().solve(resid);
      } else {
        lambda = gram.llt().solve(resid);
      }
      z = z0 + scaled.transpose() * lambda;
    }
    if (size > 0 && lambda.minCoeff() < -kMultiplierTol * (1.0 + lambda.cwiseAbs().maxCoeff())) continue;

    bool feasible = true;
    for (std::size_t i = 0; i < k && feasible; ++i) {
      const double lhs = rows.row(static_cast<Eigen::Index>(i)).dot(z);
      feasible = lhs - rhs[static_cast<Eigen::Index>(i)] >= -feasibility_tol(p.constraints[i]);
    }
    if (!feasible) continue;

    const Vec dz = z - z0;
    const double obj = dz.dot(w_inv.cwiseInverse().asDiagonal() * dz);
    // Prefer well-conditioned candidates when objectives tie.
    const bool better = obj < best_obj - 1e-12 * (1.0 + best_obj) ||
                        (obj <= best_obj + 1e-12 * (1.0 + best_obj) && best_ill && !ill);
    if (!better) continue;
    best_obj = obj;
    best_ill = ill;
    best.status = QpStatus::Optimal;
    best.control = z.head(m);
    best.slack = slack ? Vec(z.tail(static_cast<Eigen::Index>(k))) : Vec();
    best.multipliers = Vec::Zero(static_cast<Eigen::Index>(k));
    for (int r = 0; r < size; ++r) best.multipliers[static_cast<Eigen::Index>(idx[r])] = std::max(0.0, lambda[r]);
    best.active = idx;
    best.objective = obj;
    best.ill_conditioned = ill;
  }

  if (best.status == QpStatus::Infeasible && !slack) best.farkas = farkas_certificate(p);
  return best;
}

Vec solve_qp_projected_gradient(const QpProblem& p, std::size_t iterations) {
  check_problem(p);
  const std::size_t k = p.constraints.size();
  if (k == 0) return p.reference;
  const auto m = p.reference.size();
  Mat a(static_cast<Eigen::Index>(k), m);
  Vec c(static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i) {
    a.row(static_cast<Eigen::Index>(i)) = p.constraints[i].a.transpose();
    c[static_cast<Eigen::Index>(i)] = p.constraints[i].c;
  }
  // Dual: min_{λ≥0} ½ λᵀGλ − λᵀ(c − A r), G = AAᵀ (+ I/w with slack).
  Mat gram = a * a.transpose();
  if (p.slack_weight > 0.0) gram.diagonal().array() += 1.0 / p.slack_weight;
  const Vec lin = c - a * p.reference;
  const double lip = Eigen::SelfAdjointEigenSolver<Mat>(gram).eigenvalues().maxCoeff();
  if (!(lip > 0.0)) return p.reference;
  const double step = 1.0 / lip;

  Vec lambda = Vec::Zero(static_cast<Eigen::Index>(k));
  Vec y = lambda;
  double t = 1.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    Vec next = (y - step * (gram * y - lin)).cwiseMax(0.0);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = next + ((t - 1.0) / t_next) * (next - lambda);
    lambda = std::move(next);
    t = t_next;
  }
  return p.reference + a.transpose() * lambda;
}

}  // namespace posafe
