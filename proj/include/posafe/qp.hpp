#pragma once

#include "posafe/geometry.hpp"

#include <cstddef>
#include <vector>

namespace posafe {

inline constexpr std::size_t kMaxQpControlDim = 3;
inline constexpr std::size_t kMaxQpConstraints = 8;

/// min ‖u − reference‖² (+ w Σ sᵢ²)  s.t.  aᵢ·u ≥ cᵢ (− sᵢ).
/// slack_weight = 0 means hard constraints.
struct QpProblem {
  Vec reference;
  std::vector<Halfspace> constraints;
  double slack_weight = 0.0;
};

enum class QpStatus { Optimal, Infeasible };

struct QpSolution {
  QpStatus status = QpStatus::Infeasible;
  Vec control;
  Vec multipliers;                  // one per constraint, zero when inactive
  Vec slack;                        // slack mode only, one per constraint
  std::vector<std::size_t> active;  // indices into constraints
  double objective = 0.0;
  bool ill_conditioned = false;     // chosen candidate needed a pseudo-solve
  /// Hard-mode infeasibility certificate: y ≥ 0, Aᵀy = 0, cᵀy > 0.
  Vec farkas;

  bool ok() const { return status == QpStatus::Optimal; }
};

/// Exact solve by enumerating active subsets. Throws std::invalid_argument
/// when m ∉ {1,2,3} or more than 8 constraints are given.
QpSolution solve_qp(const QpProblem& problem);

/// Independent route used for cross-checking: accelerated projected gradient
/// on the dual of the hard problem, step 1/L.
Vec solve_qp_projected_gradient(const QpProblem& problem, std::size_t iterations = 10000);

}  // namespace posafe
