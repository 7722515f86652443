#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "edgewise/varset.hpp"

namespace edgewise {

enum class ScoreKind { bdeu, k2 };
enum class RhoKind { uniform_cardinality, one };

// Order-modular prior: P(order, G) ~ prod_i q_i(L_i) rho_i(G_i). q is the
// constant-one function; rho is either constant-one or uniform over each
// parent-set cardinality, rho_i(G) = 1/C(n-1, |G|).
struct PriorSpec {
  ScoreKind score = ScoreKind::bdeu;
  double ess = 1.0;  // BDeu equivalent sample size
  RhoKind rho = RhoKind::uniform_cardinality;
  std::uint64_t parent_config_cap = std::uint64_t{1} << 20;

  double log_rho(int n, int parent_count) const {
    if (rho == RhoKind::one) return 0.0;
    return -std::log(static_cast<double>(choose(n - 1, parent_count)));
  }

  // q_i is pinned to the constant-one function.
  double log_q(VarSet /*predecessors*/) const { return 0.0; }

  std::string describe() const {
    if (score == ScoreKind::k2) return "k2";
    return "bdeu:" + std::to_string(ess);
  }
};

}  // namespace edgewise
