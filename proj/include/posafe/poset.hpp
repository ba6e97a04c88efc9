#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace posafe {

/// Strict priority relation `lower ≺ higher`: `higher` has strictly higher
/// priority and is therefore enforced later in any linear extension.
struct Relation {
  std::size_t lower = 0;
  std::size_t higher = 0;

  friend bool operator==(const Relation&, const Relation&) = default;
  friend auto operator<=>(const Relation&, const Relation&) = default;
};

enum class PosetErrorKind { CycleDetected, SelfRelation, IndexOutOfRange, Parse };

class PosetError : public std::runtime_error {
 public:
  PosetError(PosetErrorKind kind, std::string what, std::vector<std::size_t> path = {})
      : std::runtime_error(std::move(what)), kind_(kind), path_(std::move(path)) {}

  PosetErrorKind kind() const noexcept { return kind_; }
  /// For CycleDetected: the offending cycle, first element repeated at the end.
  const std::vector<std::size_t>& path() const noexcept { return path_; }

 private:
  PosetErrorKind kind_;
  std::vector<std::size_t> path_;
};

struct ValidationReport {
  bool ok = true;
  PosetErrorKind kind = PosetErrorKind::CycleDetected;
  std::vector<std::size_t> cycle;
  std::string message;
};

/// Checks an arbitrary relation set: indices in range, no self pairs, acyclic.
ValidationReport validate(std::size_t n, std::span<const Relation> relations);

/// Reflexive-free transitive closure, sorted. Throws PosetError on a cycle.
std::vector<Relation> transitive_closure(std::size_t n, std::span<const Relation> relations);

/// An enforcement order (j_1, ..., j_N): j_1 is projected first, j_N last.
struct LinearExtension {
  std::vector<std::size_t> order;

  std::size_t size() const noexcept { return order.size(); }
  friend bool operator==(const LinearExtension&, const LinearExtension&) = default;
  friend auto operator<=>(const LinearExtension&, const LinearExtension&) = default;
};

/// Safety poset over constraint indices 0..n-1. Immutable; the stored
/// relation is always its own transitive closure.
class SafetyPoset {
 public:
  SafetyPoset() = default;
  SafetyPoset(std::size_t n, std::span<const Relation> relations);
  SafetyPoset(std::size_t n, std::initializer_list<Relation> relations)
      : SafetyPoset(n, std::span<const Relation>(relations.begin(), relations.size())) {}

  static SafetyPoset antichain(std::size_t n) { return SafetyPoset(n, std::span<const Relation>{}); }

  std::size_t size() const noexcept { return n_; }

  /// True iff i ≺ j in the closure.
  bool precedes(std::size_t i, std::size_t j) const;
  bool incomparable(std::size_t i, std::size_t j) const;
  bool is_maximal(std::size_t i) const;
  std::vector<std::size_t> maximal_elements() const;

  /// Closure pairs, sorted.
  std::vector<Relation> relations() const;
  /// Transitive reduction (Hasse diagram edges), sorted.
  std::vector<Relation> covering_relations() const;

  bool is_linear_extension(const LinearExtension& ext) const;

  /// Lexicographic enumeration, truncated at `limit` orders.
  std::vector<LinearExtension> enumerate_linear_extensions(std::size_t limit) const;
  /// Greedy-uniform: at every step picks uniformly among the currently
  /// minimal remaining elements. Not uniform over extensions.
  LinearExtension sample_linear_extension(std::uint64_t seed) const;

  friend bool operator==(const SafetyPoset&, const SafetyPoset&) = default;

 private:
  void check_index(std::size_t i) const;

  std::size_t n_ = 0;
  std::vector<std::uint8_t> closure_;  // row-major n×n, closure_[i*n+j] = i ≺ j
};

/// Text format: a header line `n=<count>` followed by one `i < j` per line.
/// Blank lines and `#` comments are ignored.
SafetyPoset parse_poset_text(const std::string& text);
std::string to_poset_text(const SafetyPoset& poset);

/// Hasse diagram in DOT; edges point from lower to higher priority.
std::string to_dot(const SafetyPoset& poset, const std::vector<std::string>& names = {});

}  // namespace posafe
