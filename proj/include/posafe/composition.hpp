#pragma once

#include "posafe/geometry.hpp"
#include "posafe/poset.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace posafe {

/// A constraint that went from satisfied to violated during one projection step.
struct OverrideEvent {
  std::size_t step = 0;      // 1-based position in the extension
  std::size_t enforced = 0;  // constraint projected at this step
  std::size_t flipped = 0;   // constraint that lost feasibility
  double margin_before = 0.0;
  double margin_after = 0.0;
  Vec u_before;
  Vec u_after;
};

struct SequentialResult {
  Vec control;
  std::vector<OverrideEvent> events;
};

/// u⁽⁰⁾ = u_nom, u⁽ᵏ⁾ = Π_{j_k}(u⁽ᵏ⁻¹⁾). `halfspaces[j]` must describe
/// constraint j. A flip is recorded when a·u − c crosses from ≥ −kFeas to
/// < −kFeas across a step.
SequentialResult sequential_project(std::span<const Halfspace> halfspaces, const LinearExtension& ext,
                                    const Vec& u_nom);

/// One linear extension bound to one nominal policy.
class ProjectionHead {
 public:
  /// Throws std::invalid_argument if `extension` is not a linear extension of `poset`.
  ProjectionHead(const SafetyPoset& poset, LinearExtension extension, std::size_t nominal_policy_id,
                 std::size_t head_index);

  const LinearExtension& extension() const noexcept { return extension_; }
  std::size_t nominal_policy_id() const noexcept { return nominal_policy_id_; }
  std::size_t index() const noexcept { return index_; }

 private:
  LinearExtension extension_;
  std::size_t nominal_policy_id_;
  std::size_t index_;
};

enum class CombineMode { Mixture, Hard, Gumbel };
enum class Phase { Training, Inference };

struct HeadCombiner {
  CombineMode mode = CombineMode::Mixture;
  Vec logits;  // mixture logits or Gumbel logits γ
  double temperature = 1.0;
};

class EmptyHeads : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

Vec softmax(const Vec& logits);
/// Index of the largest entry; ties resolve to the lowest index.
std::size_t argmax_lowest(const Vec& v);
/// Standard Gumbel sample −log(−log U) from a uniform U in (0, 1).
double gumbel_from_uniform(double uniform);

/// Combination weights over heads.
///   Mixture: softmax(logits) in both phases.
///   Hard:    one-hot argmax(logits).
///   Gumbel:  softmax((logits + noise)/temperature) in training, one-hot
///            argmax(logits) at inference.
/// `gumbel_noise` is required for Gumbel training.
Vec combination_weights(const HeadCombiner& combiner, Phase phase, const Vec* gumbel_noise = nullptr);

struct HeadsOutput {
  Vec control;
  std::vector<Vec> head_controls;
  std::vector<std::vector<OverrideEvent>> head_events;
  Vec weights;
  std::optional<std::size_t> selected;  // set when the weights are one-hot
};

HeadsOutput run_heads(std::span<const ProjectionHead> heads, const HeadCombiner& combiner,
                      std::span<const Halfspace> halfspaces, std::span<const Vec> u_noms, Phase phase,
                      const Vec* gumbel_noise = nullptr);

struct AuditReport {
  bool ok = true;
  std::vector<OverrideEvent> violations;
};

/// Every event must satisfy flipped ≺ enforced in the closure.
AuditReport audit_poset_respecting(std::span<const OverrideEvent> events, const SafetyPoset& poset);

struct MixturePreconditionReport {
  bool all_pass = true;
  std::vector<std::size_t> maximal;   // maximal constraints checked
  std::vector<std::size_t> flagged;   // maximal constraints violated by at least one head
};

/// Checks that every head output satisfies every maximal constraint, the
/// precondition under which any convex mixture also satisfies them.
MixturePreconditionReport check_mixture_safety_preconditions(std::span<const Vec> head_outputs,
                                                             std::span<const Halfspace> halfspaces,
                                                             const SafetyPoset& poset);

}  // namespace posafe
