#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "edgewise/data.hpp"
#include "edgewise/varset.hpp"

namespace edgewise {

// Seeded generator of discrete data: a random DAG with indegree at most d
// over a random topological order, conditional tables drawn row-wise from
// Dirichlet(1), then ancestral sampling. Random draws avoid distribution
// adapters so identical seeds give identical data across toolchains.
struct SynthSpec {
  int n = 5;
  int d = 2;
  int samples = 500;
  std::uint64_t seed = 0;
  int arity = 2;
};

inline DataMatrix synth_data(const SynthSpec& spec) {
  std::mt19937_64 rng(spec.seed * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull);
  auto draw_below = [&](std::uint64_t bound) { return bound ? rng() % bound : 0; };
  auto draw_unit = [&] {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;  // (0, 1)
  };

  const int n = spec.n;
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[draw_below(i + 1)]);

  std::vector<std::vector<int>> parents(n);
  std::vector<std::vector<double>> cpt(n);  // [node][config * arity + state]
  for (int t = 0; t < n; ++t) {
    const int node = order[t];
    const int want = static_cast<int>(draw_below(std::min(spec.d, t) + 1));
    std::vector<int> pool(order.begin(), order.begin() + t);
    for (int c = 0; c < want; ++c) {
      const std::size_t pick = draw_below(pool.size());
      parents[node].push_back(pool[pick]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    std::size_t configs = 1;
    for (std::size_t c = 0; c < parents[node].size(); ++c) configs *= spec.arity;
    cpt[node].resize(configs * spec.arity);
    for (std::size_t cfg = 0; cfg < configs; ++cfg) {
      double total = 0.0;
      for (int s = 0; s < spec.arity; ++s) {
        const double e = -std::log(draw_unit());  // Exp(1) = Gamma(1), Dirichlet(1) row
        cpt[node][cfg * spec.arity + s] = e;
        total += e;
      }
      for (int s = 0; s < spec.arity; ++s) cpt[node][cfg * spec.arity + s] /= total;
    }
  }

  DataMatrix data;
  data.n = n;
  data.m = spec.samples;
  data.arity.assign(n, spec.arity);
  data.names.resize(n);
  for (int i = 0; i < n; ++i) data.names[i] = "X" + std::to_string(i + 1);
  data.columns.assign(n, std::vector<std::uint8_t>(spec.samples, 0));

  std::vector<int> sample(n, 0);
  for (int t = 0; t < spec.samples; ++t) {
    for (int node : order) {
      std::size_t cfg = 0;
      for (int p : parents[node]) cfg = cfg * spec.arity + static_cast<std::size_t>(sample[p]);
      const double roll = draw_unit();
      double cum = 0.0;
      int state = spec.arity - 1;
      for (int s = 0; s < spec.arity; ++s) {
        cum += cpt[node][cfg * spec.arity + s];
        if (roll < cum) {
          state = s;
          break;
        }
      }
      sample[node] = state;
      data.columns[node][t] = static_cast<std::uint8_t>(state);
    }
  }
  return data;
}

inline void write_csv(const DataMatrix& data, std::ostream& os) {
  for (int v = 0; v < data.n; ++v) os << (v ? "," : "") << data.names[v];
  os << "\n";
  for (int t = 0; t < data.m; ++t) {
    for (int v = 0; v < data.n; ++v) os << (v ? "," : "") << int(data.columns[v][t]);
    os << "\n";
  }
}

}  // namespace edgewise
