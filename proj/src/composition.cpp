#include "posafe/composition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace posafe {

SequentialResult sequential_project(std::span<const Halfspace> halfspaces, const LinearExtension& ext,
                                    const Vec& u_nom) {
  SequentialResult out;
  out.control = u_nom;
  if (ext.order.size() != halfspaces.size())
    throw std::invalid_argument("extension length " + std::to_string(ext.order.size()) +
                                " does not match constraint count " + std::to_string(halfspaces.size()));
  const std::size_t n = halfspaces.size();
  std::vector<double> margins(n);
  for (std::size_t i = 0; i < n; ++i) margins[i] = halfspaces[i].margin(out.control);

  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = ext.order[k];
    Vec next = project(halfspaces[j], out.control);
    for (std::size_t i = 0; i < n; ++i) {
      const double after = halfspaces[i].margin(next);
      if (i != j && margins[i] >= -tol::kFeas && after < -tol::kFeas)
        out.events.push_back({k + 1, j, i, margins[i], after, out.control, next});
      margins[i] = after;
    }
    out.control = std::move(next);
  }
  return out;
}

ProjectionHead::ProjectionHead(const SafetyPoset& poset, LinearExtension extension, std::size_t nominal_policy_id,
                               std::size_t head_index)
    : extension_(std::move(extension)), nominal_policy_id_(nominal_policy_id), index_(head_index) {
  if (!poset.is_linear_extension(extension_))
    throw std::invalid_argument("head " + std::to_string(head_index) +
                                ": order is not a linear extension of the poset");
}

Vec softmax(const Vec& logits) {
  if (logits.size() == 0) return logits;
  const double mx = logits.maxCoeff();
  Vec e = (logits.array() - mx).exp();
  return e / e.sum();
}

std::size_t argmax_lowest(const Vec& v) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(i);
  return best;
}

double gumbel_from_uniform(double uniform) {
  const double u = std::clamp(uniform, std::numeric_limits<double>::min(), 1.0 - 1e-16);
  return -std::log(-std::log(u));
}

Vec combination_weights(const HeadCombiner& combiner, Phase phase, const Vec* gumbel_noise) {
  const auto h = combiner.logits.size();
  if (h == 0) throw EmptyHeads("combiner has no heads");
  auto one_hot = [h](std::size_t idx) {
    Vec w = Vec::Zero(h);
    w[static_cast<Eigen::Index>(idx)] = 1.0;
    return w;
  };
  switch (combiner.mode) {
    case CombineMode::Mixture:
      return softmax(combiner.logits);
    case CombineMode::Hard:
      return one_hot(argmax_lowest(combiner.logits));
    case CombineMode::Gumbel:
      if (phase == Phase::Inference) return one_hot(argmax_lowest(combiner.logits));
      if (gumbel_noise == nullptr || gumbel_noise->size() != h)
        throw std::invalid_argument("Gumbel training needs one noise sample per head");
      if (!(combiner.temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
      return softmax((combiner.logits + *gumbel_noise) / combiner.temperature);
  }
  return {};
}

HeadsOutput run_heads(std::span<const ProjectionHead> heads, const HeadCombiner& combiner,
                      std::span<const Halfspace> halfspaces, std::span<const Vec> u_noms, Phase phase,
                      const Vec* gumbel_noise) {
  if (heads.empty()) throw EmptyHeads("run_heads called with no heads");
  if (u_noms.size() != heads.size() || static_cast<std::size_t>(combiner.logits.size()) != heads.size())
    throw std::invalid_argument("heads, nominal controls and combiner logits must agree in count");

  HeadsOutput out;
  out.weights = combination_weights(combiner, phase, gumbel_noise);
  out.head_controls.reserve(heads.size());
  out.head_events.reserve(heads.size());
  for (std::size_t h = 0; h < heads.size(); ++h) {
    auto res = sequential_project(halfspaces, heads[h].extension(), u_noms[h]);
    out.head_controls.push_back(std::move(res.control));
    out.head_events.push_back(std::move(res.events));
  }
  const bool one_hot = combiner.mode == CombineMode::Hard ||
                       (combiner.mode == CombineMode::Gumbel && phase == Phase::Inference);
  if (one_hot) {
    const std::size_t sel = argmax_lowest(combiner.logits);
    out.selected = sel;
    out.control = out.head_controls[sel];
    return out;
  }
  out.control = Vec::Zero(out.head_controls.front().size());
  for (std::size_t h = 0; h < heads.size(); ++h)
    out.control += out.weights[static_cast<Eigen::Index>(h)] * out.head_controls[h];
  return out;
}

AuditReport audit_poset_respecting(std::span<const OverrideEvent> events, const SafetyPoset& poset) {
  AuditReport report;
  for (const auto& e : events)
    if (!poset.precedes(e.flipped, e.enforced)) report.violations.push_back(e);
  report.ok = report.violations.empty();
  return report;
}

MixturePreconditionReport check_mixture_safety_preconditions(std::span<const Vec> head_outputs,
                                                             std::span<const Halfspace> halfspaces,
                                                             const SafetyPoset& poset) {
  MixturePreconditionReport report;
  report.maximal = poset.maximal_elements();
  for (std::size_t j : report.maximal) {
    bool ok = true;
    for (const auto& u : head_outputs) ok = ok && halfspaces[j].contains(u);
    if (!ok) report.flagged.push_back(j);
  }
  report.all_pass = report.flagged.empty();
  return report;
}

}  // namespace posafe
