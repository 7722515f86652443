#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "edgewise/logspace.hpp"
#include "edgewise/posterior.hpp"
#include "edgewise/scoring.hpp"
#include "edgewise/varset.hpp"

namespace edgewise {

struct OracleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Definition evaluated literally: t(T) = log sum_{S <= T, |S| <= d} exp s(S)
// by a direct double loop over (T, submask) pairs.
inline std::vector<double> naive_upward_sum(int n, int d, const std::vector<double>& s) {
  if (n > 16) throw OracleError("naive subset sums limited to n <= 16");
  const std::size_t size = std::size_t{1} << n;
  std::vector<double> t(size, log_zero);
  for (mask_t T = 0; T < size; ++T) {
    double acc = log_zero;
    mask_t S = T;
    while (true) {
      if (popcount(S) <= d) acc = log_add(acc, s[S]);
      if (S == 0) break;
      S = (S - 1) & T;
    }
    t[T] = acc;
  }
  return t;
}

// t(T) = log sum_{T <= S <= V} exp s(S) for |T| <= d (log-zero elsewhere).
inline std::vector<double> naive_downward_sum(int n, int d, const std::vector<double>& s) {
  if (n > 16) throw OracleError("naive superset sums limited to n <= 16");
  const std::size_t size = std::size_t{1} << n;
  const mask_t all = full_mask(n);
  std::vector<double> t(size, log_zero);
  for (mask_t T = 0; T < size; ++T) {
    if (popcount(T) > d) continue;
    double acc = log_zero;
    const mask_t free = all ^ T;
    mask_t X = free;
    while (true) {
      acc = log_add(acc, s[T | X]);
      if (X == 0) break;
      X = (X - 1) & free;
    }
    t[T] = acc;
  }
  return t;
}

// Joint P(f, D) summed order by order (Eq. 6 evaluated literally): for each
// of the n! linear orders, each node contributes the truncated subset sum of
// exp B_i over its predecessor set; orders accumulate left to right, an
// accumulation order deliberately different from the lattice DP's.
// B[i] is a dense 2^n table of log scores with any feature already folded in
// (log-zero where the feature indicator is 0 or i is inside the mask).
inline double joint_by_order_enumeration(int n, int d, const std::vector<std::vector<double>>& B,
                                         const PriorSpec& prior = {}) {
  if (n > 8) throw OracleError("order enumeration limited to n <= 8");
  const std::size_t size = std::size_t{1} << n;
  // inner[i][L] = log sum over G <= L, |G| <= d of exp B_i(G)
  std::vector<std::vector<double>> inner(n, std::vector<double>(size, log_zero));
  for (int i = 0; i < n; ++i) {
    for (mask_t L = 0; L < size; ++L) {
      if (L >> i & 1) continue;
      double acc = log_zero;
      mask_t G = L;
      while (true) {
        if (popcount(G) <= d) acc = log_add(acc, B[i][G]);
        if (G == 0) break;
        G = (G - 1) & L;
      }
      inner[i][L] = acc;
    }
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  double total = log_zero;
  do {
    double term = 0.0;
    mask_t preceding = 0;
    for (int idx = 0; idx < n; ++idx) {
      const int node = order[idx];
      term += prior.log_q(VarSet(preceding, n)) + inner[node][preceding];
      preceding |= mask_t{1} << node;
    }
    total = log_add(total, term);
  } while (std::next_permutation(order.begin(), order.end()));
  return total;
}

inline std::vector<std::vector<double>> dense_family_scores(const DataMatrix& data, int d,
                                                            const PriorSpec& prior,
                                                            const Feature& feature = {}) {
  const int n = data.n;
  const std::size_t size = std::size_t{1} << n;
  std::vector<std::vector<double>> B(n, std::vector<double>(size, log_zero));
  for (int i = 0; i < n; ++i)
    for (mask_t g = 0; g < size; ++g) {
      if ((g >> i & 1) || popcount(g) > d) continue;
      B[i][g] = family_score(data, i, VarSet(g, n), prior, feature);
    }
  return B;
}

struct OracleJoint {
  double log_joint = log_zero;     // log P(f, D)
  double log_evidence = log_zero;  // log P(D), the f = 1 run
  double posterior() const { return std::exp(log_joint - log_evidence); }
};

inline OracleJoint posterior_by_order_enumeration(const DataMatrix& data, const PriorSpec& prior,
                                                  int d, const Feature& feature = {}) {
  OracleJoint out;
  out.log_joint = joint_by_order_enumeration(data.n, d, dense_family_scores(data, d, prior, feature), prior);
  out.log_evidence =
      feature ? joint_by_order_enumeration(data.n, d, dense_family_scores(data, d, prior), prior)
              : out.log_joint;
  return out;
}

// Every P(u->v | D) at once, still by raw order enumeration. Per order the
// trivial product swaps one factor: node v's unfiltered subset sum is
// replaced by the sum over parent sets containing u.
inline EdgePosteriorMatrix oracle_edge_posteriors(const DataMatrix& data, const PriorSpec& prior,
                                                  int d) {
  const int n = data.n;
  if (n > 8) throw OracleError("order enumeration limited to n <= 8");
  const std::size_t size = std::size_t{1} << n;
  const auto B = dense_family_scores(data, d, prior);

  std::vector<std::vector<double>> inner(n, std::vector<double>(size, log_zero));
  // filtered[(v * size + L) * n + u] = log sum over u-containing G <= L
  std::vector<double> filtered(static_cast<std::size_t>(n) * size * n, log_zero);
  for (int v = 0; v < n; ++v) {
    for (mask_t L = 0; L < size; ++L) {
      if (L >> v & 1) continue;
      double total = log_zero;
      std::vector<double> with_u(n, log_zero);
      mask_t G = L;
      while (true) {
        if (popcount(G) <= d) {
          total = log_add(total, B[v][G]);
          for (mask_t rest = G; rest; rest &= rest - 1)
            with_u[std::countr_zero(rest)] = log_add(with_u[std::countr_zero(rest)], B[v][G]);
        }
        if (G == 0) break;
        G = (G - 1) & L;
      }
      inner[v][L] = total;
      for (int u = 0; u < n; ++u)
        filtered[(static_cast<std::size_t>(v) * size + L) * n + u] = with_u[u];
    }
  }

  std::vector<double> joint(static_cast<std::size_t>(n) * n, log_zero);
  double evidence = log_zero;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  do {
    double term = 0.0;
    std::vector<mask_t> pred(n);
    mask_t preceding = 0;
    for (int idx = 0; idx < n; ++idx) {
      const int node = order[idx];
      pred[node] = preceding;
      term += prior.log_q(VarSet(preceding, n)) + inner[node][preceding];
      preceding |= mask_t{1} << node;
    }
    evidence = log_add(evidence, term);
    for (int v = 0; v < n; ++v) {
      if (is_log_zero(inner[v][pred[v]])) continue;
      const double without_v = term - inner[v][pred[v]];
      for (int u = 0; u < n; ++u) {
        if (u == v) continue;
        const double swapped =
            filtered[(static_cast<std::size_t>(v) * size + pred[v]) * n + u];
        if (is_log_zero(swapped)) continue;
        auto& cell = joint[static_cast<std::size_t>(u) * n + v];
        cell = log_add(cell, without_v + swapped);
      }
    }
  } while (std::next_permutation(order.begin(), order.end()));

  EdgePosteriorMatrix out;
  out.n = n;
  out.log_p_data = evidence;
  out.values.assign(static_cast<std::size_t>(n) * n, std::numeric_limits<double>::quiet_NaN());
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v)
      if (u != v)
        out.values[static_cast<std::size_t>(u) * n + v] =
            std::exp(joint[static_cast<std::size_t>(u) * n + v] - evidence);
  return out;
}

}  // namespace edgewise
