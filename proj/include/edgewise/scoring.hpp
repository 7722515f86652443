#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "edgewise/data.hpp"
#include "edgewise/logspace.hpp"
#include "edgewise/prior.hpp"
#include "edgewise/varset.hpp"

namespace edgewise {

// Modular feature restricted to a single directed edge u -> v:
// f_v(G) = [u in G], f_i = 1 elsewhere. Absent feature means f = 1.
struct EdgeFeature {
  int u = 0;
  int v = 0;
};
using Feature = std::optional<EdgeFeature>;

struct ScoreError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// log p(x_i | x_G, G) under a conjugate Dirichlet-multinomial score.
// BDeu uses alpha_{jk} = ess/(r_i * q), K2 uses alpha_{jk} = 1, where q is the
// number of parent configurations. Sufficient statistics are gathered by
// hashing the parent configuration of each sample, O(m) per family; parent
// configurations never observed contribute exactly zero and are skipped.
inline double local_marginal_loglik(const DataMatrix& data, int node, VarSet parents,
                                    const PriorSpec& prior) {
  assert(!parents.contains(node));
  const int r = data.arity[node];
  const auto pvars = parents.elements();

  std::uint64_t q = 1;
  for (int p : pvars) {
    q *= static_cast<std::uint64_t>(data.arity[p]);
    if (q > prior.parent_config_cap)
      throw ScoreError("parent configuration count exceeds cap (" +
                       std::to_string(prior.parent_config_cap) + ")");
  }

  const double alpha_k = prior.score == ScoreKind::k2
                             ? 1.0
                             : prior.ess / (static_cast<double>(r) * static_cast<double>(q));
  const double alpha_cfg = static_cast<double>(r) * alpha_k;

  // slot lookup by packed parent configuration; counts laid out per slot
  std::unordered_map<std::uint64_t, std::uint32_t> slot_of;
  slot_of.reserve(static_cast<std::size_t>(data.m) * 2);
  std::vector<std::uint32_t> counts;  // [slot * r + child_state]

  for (int t = 0; t < data.m; ++t) {
    std::uint64_t key = 0;
    for (int p : pvars) key = key * static_cast<std::uint64_t>(data.arity[p]) + data.cell(t, p);
    auto [it, inserted] = slot_of.try_emplace(key, static_cast<std::uint32_t>(counts.size() / r));
    if (inserted) counts.resize(counts.size() + r, 0);
    ++counts[static_cast<std::size_t>(it->second) * r + data.cell(t, node)];
  }

  const double lg_alpha_cfg = std::lgamma(alpha_cfg);
  const double lg_alpha_k = std::lgamma(alpha_k);
  double score = 0.0;
  const std::size_t slots = counts.size() / r;
  for (std::size_t s = 0; s < slots; ++s) {
    std::uint64_t n_cfg = 0;
    for (int kk = 0; kk < r; ++kk) {
      const std::uint32_t c = counts[s * r + kk];
      n_cfg += c;
      if (c) score += std::lgamma(c + alpha_k) - lg_alpha_k;
    }
    score += lg_alpha_cfg - std::lgamma(static_cast<double>(n_cfg) + alpha_cfg);
  }
  return score;
}

// B_i(G) = log rho_i(G) + log p(x_i | x_G, G) when f_i(G) = 1, else -inf.
inline double family_score(const DataMatrix& data, int node, VarSet parents,
                           const PriorSpec& prior, const Feature& feature) {
  if (feature && feature->v == node && !parents.contains(feature->u)) return log_zero;
  return prior.log_rho(data.n, parents.size()) + local_marginal_loglik(data, node, parents, prior);
}

// Per-node table of B_i(G) over G <= V-{i}, |G| <= d, in (cardinality, bits)
// order.
struct FamilyScoreTable {
  int node = 0;
  int d = 0;
  std::vector<VarSet> parent_sets;
  std::vector<double> scores;  // aligned with parent_sets

  double at(mask_t parents) const {
    for (std::size_t i = 0; i < parent_sets.size(); ++i)
      if (parent_sets[i].bits == parents) return scores[i];
    throw std::out_of_range("family score: parent set not in table");
  }
};

inline FamilyScoreTable build_family_scores(const DataMatrix& data, int node, int d,
                                            const PriorSpec& prior, const Feature& feature = {}) {
  if (d < 0 || d > data.n - 1) throw std::invalid_argument("indegree bound out of range");
  FamilyScoreTable table;
  table.node = node;
  table.d = d;
  table.parent_sets = subsets_upto(VarSet::full(data.n).without(node), d);
  table.scores.reserve(table.parent_sets.size());
  for (VarSet g : table.parent_sets)
    table.scores.push_back(family_score(data, node, g, prior, feature));
  return table;
}

}  // namespace edgewise
