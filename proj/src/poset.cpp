#include "posafe/poset.hpp"

#include <algorithm>
#include <random>
#include <sstream>

namespace posafe {

namespace {

// Recursive DFS; n is small. On success `cycle` holds the loop with its head repeated.
bool find_cycle(std::size_t v, const std::vector<std::vector<std::size_t>>& adj,
                std::vector<int>& color, std::vector<std::size_t>& stack,
                std::vector<std::size_t>& cycle) {
  color[v] = 1;
  stack.push_back(v);
  for (std::size_t w : adj[v]) {
    if (color[w] == 1) {
      auto it = std::find(stack.begin(), stack.end(), w);
      cycle.assign(it, stack.end());
      cycle.push_back(w);
      return true;
    }
    if (color[w] == 0 && find_cycle(w, adj, color, stack, cycle)) return true;
  }
  stack.pop_back();
  color[v] = 2;
  return false;
}

std::string join_path(const std::vector<std::size_t>& path) {
  std::ostringstream os;
  for (std::size_t k = 0; k < path.size(); ++k) os << (k ? " < " : "") << path[k];
  return os.str();
}

}  // namespace

ValidationReport validate(std::size_t n, std::span<const Relation> relations) {
  ValidationReport report;
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& r : relations) {
    if (r.lower >= n || r.higher >= n) {
      report.ok = false;
      report.kind = PosetErrorKind::IndexOutOfRange;
      report.message = "relation " + std::to_string(r.lower) + " < " + std::to_string(r.higher) +
                       " out of range for n=" + std::to_string(n);
      return report;
    }
    if (r.lower == r.higher) {
      report.ok = false;
      report.kind = PosetErrorKind::SelfRelation;
      report.cycle = {r.lower, r.lower};
      report.message = "self relation on " + std::to_string(r.lower);
      return report;
    }
    adj[r.lower].push_back(r.higher);
  }
  for (auto& row : adj) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
  std::vector<int> color(n, 0);
  std::vector<std::size_t> stack;
  for (std::size_t v = 0; v < n; ++v) {
    if (color[v] == 0 && find_cycle(v, adj, color, stack, report.cycle)) {
      report.ok = false;
      report.kind = PosetErrorKind::CycleDetected;
      report.message = "cycle " + join_path(report.cycle);
      return report;
    }
  }
  return report;
}

std::vector<Relation> transitive_closure(std::size_t n, std::span<const Relation> relations) {
  return SafetyPoset(n, relations).relations();
}

SafetyPoset::SafetyPoset(std::size_t n, std::span<const Relation> relations)
    : n_(n), closure_(n * n, 0) {
  auto report = validate(n, relations);
  if (!report.ok) throw PosetError(report.kind, report.message, report.cycle);
  for (const auto& r : relations) closure_[r.lower * n + r.higher] = 1;
  // Warshall
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      if (closure_[i * n + k])
        for (std::size_t j = 0; j < n; ++j)
          if (closure_[k * n + j]) closure_[i * n + j] = 1;
}

void SafetyPoset::check_index(std::size_t i) const {
  if (i >= n_)
    throw PosetError(PosetErrorKind::IndexOutOfRange,
                     "constraint index " + std::to_string(i) + " out of range for n=" + std::to_string(n_));
}

bool SafetyPoset::precedes(std::size_t i, std::size_t j) const {
  check_index(i);
  check_index(j);
  return closure_[i * n_ + j] != 0;
}

bool SafetyPoset::incomparable(std::size_t i, std::size_t j) const {
  check_index(i);
  check_index(j);
  if (i == j) throw PosetError(PosetErrorKind::IndexOutOfRange, "incomparable() needs i != j");
  return !closure_[i * n_ + j] && !closure_[j * n_ + i];
}

bool SafetyPoset::is_maximal(std::size_t i) const {
  check_index(i);
  for (std::size_t j = 0; j < n_; ++j)
    if (closure_[i * n_ + j]) return false;
  return true;
}

std::vector<std::size_t> SafetyPoset::maximal_elements() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n_; ++i)
    if (is_maximal(i)) out.push_back(i);
  return out;
}

std::vector<Relation> SafetyPoset::relations() const {
  std::vector<Relation> out;
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j)
      if (closure_[i * n_ + j]) out.push_back({i, j});
  return out;
}

std::vector<Relation> SafetyPoset::covering_relations() const {
  std::vector<Relation> out;
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j) {
      if (!closure_[i * n_ + j]) continue;
      bool covered = true;
      for (std::size_t k = 0; k < n_ && covered; ++k)
        if (closure_[i * n_ + k] && closure_[k * n_ + j]) covered = false;
      if (covered) out.push_back({i, j});
    }
  return out;
}

bool SafetyPoset::is_linear_extension(const LinearExtension& ext) const {
  if (ext.order.size() != n_) return false;
  std::vector<std::size_t> pos(n_, n_);
  for (std::size_t k = 0; k < n_; ++k) {
    std::size_t v = ext.order[k];
    if (v >= n_ || pos[v] != n_) return false;
    pos[v] = k;
  }
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j)
      if (closure_[i * n_ + j] && pos[i] > pos[j]) return false;
  return true;
}

std::vector<LinearExtension> SafetyPoset::enumerate_linear_extensions(std::size_t limit) const {
  std::vector<LinearExtension> out;
  if (limit == 0) return out;
  // Number of unplaced predecessors per element.
  std::vector<std::size_t> pending(n_, 0);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j)
      if (closure_[i * n_ + j]) ++pending[j];

  std::vector<std::uint8_t> placed(n_, 0);
  LinearExtension current;
  current.order.reserve(n_);

  auto recurse = [&](auto&& self) -> void {
    if (out.size() >= limit) return;
    if (current.order.size() == n_) {
      out.push_back(current);
      return;
    }
    for (std::size_t v = 0; v < n_ && out.size() < limit; ++v) {
      if (placed[v] || pending[v] != 0) continue;
      placed[v] = 1;
      current.order.push_back(v);
      for (std::size_t w = 0; w < n_; ++w)
        if (closure_[v * n_ + w]) --pending[w];
      self(self);
      for (std::size_t w = 0; w < n_; ++w)
        if (closure_[v * n_ + w]) ++pending[w];
      current.order.pop_back();
      placed[v] = 0;
    }
  };
  recurse(recurse);
  return out;
}

LinearExtension SafetyPoset::sample_linear_extension(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> pending(n_, 0);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j)
      if (closure_[i * n_ + j]) ++pending[j];
  std::vector<std::uint8_t> placed(n_, 0);
  LinearExtension ext;
  std::vector<std::size_t> available;
  for (std::size_t step = 0; step < n_; ++step) {
    available.clear();
    for (std::size_t v = 0; v < n_; ++v)
      if (!placed[v] && pending[v] == 0) available.push_back(v);
    std::uniform_int_distribution<std::size_t> pick(0, available.size() - 1);
    std::size_t v = available[pick(rng)];
    placed[v] = 1;
    ext.order.push_back(v);
    for (std::size_t w = 0; w < n_; ++w)
      if (closure_[v * n_ + w]) --pending[w];
  }
  return ext;
}

SafetyPoset parse_poset_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  bool have_n = false;
  std::size_t n = 0;
  std::vector<Relation> rels;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    if (!have_n) {
      std::string tok;
      ls >> tok;
      if (tok.rfind("n=", 0) != 0)
        throw PosetError(PosetErrorKind::Parse, "line " + std::to_string(lineno) + ": expected header n=<count>");
      try {
        n = std::stoul(tok.substr(2));
      } catch (const std::exception&) {
        throw PosetError(PosetErrorKind::Parse, "line " + std::to_string(lineno) + ": bad count");
      }
      have_n = true;
      continue;
    }
    long long i = -1, j = -1;
    char lt = 0;
    std::string rest;
    if (!(ls >> i >> lt >> j) || lt != '<' || (ls >> rest) || i < 0 || j < 0)
      throw PosetError(PosetErrorKind::Parse, "line " + std::to_string(lineno) + ": expected 'i < j'");
    rels.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j)});
  }
  if (!have_n) throw PosetError(PosetErrorKind::Parse, "missing header n=<count>");
  return SafetyPoset(n, rels);
}

std::string to_poset_text(const SafetyPoset& poset) {
  std::ostringstream os;
  os << "n=" << poset.size() << "\n";
  for (const auto& r : poset.covering_relations()) os << r.lower << " < " << r.higher << "\n";
  return os.str();
}

std::string to_dot(const SafetyPoset& poset, const std::vector<std::string>& names) {
  std::ostringstream os;
  os << "digraph safety_poset {\n  rankdir=BT;\n  node [shape=box];\n";
  for (std::size_t i = 0; i < poset.size(); ++i) {
    os << "  c" << i << " [label=\"";
    if (i < names.size()) os << names[i];
    else os << i;
    os << "\"];\n";
  }
  for (const auto& r : poset.covering_relations()) os << "  c" << r.lower << " -> c" << r.higher << ";\n";
  os << "}\n";
  return os.str();
}

}  // namespace posafe
