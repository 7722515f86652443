#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "edgewise/advisor.hpp"
#include "edgewise/fabric.hpp"
#include "edgewise/lattice.hpp"
#include "edgewise/logspace.hpp"
#include "edgewise/scoring.hpp"
#include "edgewise/zeta.hpp"

namespace edgewise {

// P(u->v | D) for all ordered pairs, plus the evidence F(V) = P(D).
struct EdgePosteriorMatrix {
  int n = 0;
  std::vector<double> values;  // row-major, [u*n + v]; diagonal is NaN
  double log_p_data = log_zero;

  double at(int u, int v) const { return values[static_cast<std::size_t>(u) * n + v]; }
};

struct AssembleOptions {
  // Drops the u-in-G_v indicator from the per-edge sums; every posterior then
  // reproduces P(D)/P(D) = 1, the trivial-feature identity check.
  bool no_filter_self_test = false;
  std::uint64_t mem_limit_bytes = 0;  // 0 disables the estimate check
};

namespace detail {

// Everything one worker retains across the pipeline stages.
struct WorkerStore {
  std::vector<std::vector<double>> A;  // [node][block]
  std::vector<double> F, R;
  struct BEntry {
    std::uint32_t block;
    double value;
  };
  std::vector<std::vector<BEntry>> B;  // [node], ascending block
  TrackedBytes tracked;
  TrackedBytes tracked_b;
};

// Stage 1 of the all-edges pipeline: for each node i, score the families this
// worker owns (B_i over its masks with |G| <= d), then run the truncated
// upward transform in place to get A_i, and keep the raw B_i entries for the
// later per-edge masking.
class ScoreTransformWorker : public Program {
 public:
  ScoreTransformWorker(int n, int k, int d, std::uint32_t id, const DataMatrix* data,
                       const PriorSpec* prior, WorkerStore* store)
      : n_(n), k_(k), d_(d), id_(id), data_(data), prior_(prior), store_(store) {}

  bool step(Endpoint& ep) override {
    if (node_ == n_) return false;
    switch (phase_) {
      case Phase::score: {
        auto& table = store_->A[node_];
        auto& blist = store_->B[node_];
        const std::size_t blocks = table.size();
        for (std::size_t b = 0; b < blocks; ++b) {
          const mask_t g = static_cast<mask_t>(b) << k_ | id_;
          if ((g >> node_ & 1) || popcount(g) > d_) {
            table[b] = log_zero;
            continue;
          }
          table[b] = family_score(*data_, node_, VarSet(g, n_), *prior_, {});
          blist.push_back({static_cast<std::uint32_t>(b), table[b]});
        }
        zeta_ = ZetaWorker{ZetaDirection::up,
                           n_,
                           k_,
                           d_,
                           id_,
                           &table,
                           MsgTag{stage::zeta_up, static_cast<std::uint32_t>(node_) * 64},
                           nullptr,
                           -1};
        phase_ = Phase::transform;
        return true;
      }
      case Phase::transform: {
        if (!zeta_.advance(ep)) return false;
        if (zeta_.done()) phase_ = Phase::finalize;
        return true;
      }
      case Phase::finalize: {
        auto& table = store_->A[node_];
        for (std::size_t b = 0; b < table.size(); ++b) {
          const mask_t s = static_cast<mask_t>(b) << k_ | id_;
          if (s >> node_ & 1)
            table[b] = log_zero;  // A_i is only defined away from i
          else
            table[b] += prior_->log_q(VarSet(s, n_));
        }
        ++node_;
        phase_ = Phase::score;
        return true;
      }
    }
    return false;
  }

  bool done() const override { return node_ == n_; }
  std::string describe() const override {
    return "score/transform node " + std::to_string(node_) + " (" + zeta_.describe() + ")";
  }

 private:
  enum class Phase { score, transform, finalize };
  int n_, k_, d_;
  std::uint32_t id_;
  const DataMatrix* data_;
  const PriorSpec* prior_;
  WorkerStore* store_;
  Phase phase_ = Phase::score;
  int node_ = 0;
  ZetaWorker zeta_{};
};

// Stages 4-15 of the all-edges pipeline, one worker's view. For each v: move
// the backward scores next to their forward partners (a dimension-v hop when
// v < k, a local block permutation otherwise), build q*F*R, run the truncated
// downward transform on the sub-lattice avoiding v, then for each u fold the
// masked B_v against Gamma_v and reduce onto the all-ones worker, which
// divides by F(V).
class EdgeSumWorker : public Program {
 public:
  EdgeSumWorker(int n, int k, int d, std::uint32_t id, const PriorSpec* prior,
                const WorkerStore* store, EdgePosteriorMatrix* out, bool no_filter,
                EndpointCounters& counters)
      : n_(n), k_(k), d_(d), id_(id), prior_(prior), store_(store), out_(out),
        no_filter_(no_filter) {
    qfr_.resize(store_->F.size());
    tracked_ = TrackedBytes(counters, qfr_.size() * 8);
    root_ = k_ == 0 ? 0u : static_cast<std::uint32_t>(full_mask(k_));
  }

  bool step(Endpoint& ep) override {
    if (v_ == n_) return false;
    switch (phase_) {
      case Phase::exchange: {
        const bool spectator = v_ < k_ && (id_ >> v_ & 1);
        if (spectator) {
          ep.send(v_, FabricMessage{MsgTag{stage::exchange, static_cast<std::uint32_t>(v_)}, 0, 0,
                                    -1, store_->R});
          begin_usum();
          return true;
        }
        const mask_t bmask = full_mask(n_ - k_);
        if (v_ < k_) {
          auto msg = ep.try_recv(MsgTag{stage::exchange, static_cast<std::uint32_t>(v_)}, v_);
          if (!msg) return false;
          for (std::size_t b = 0; b < qfr_.size(); ++b) {
            const mask_t s = static_cast<mask_t>(b) << k_ | id_;
            qfr_[b] = prior_->log_q(VarSet(s, n_)) + store_->F[b] + msg->payload[~b & bmask];
          }
        } else {
          const mask_t vblock = mask_t{1} << (v_ - k_);
          for (std::size_t b = 0; b < qfr_.size(); ++b) {
            if (b & vblock) {
              qfr_[b] = log_zero;  // v in S: outside the sub-lattice
              continue;
            }
            const mask_t s = static_cast<mask_t>(b) << k_ | id_;
            qfr_[b] = prior_->log_q(VarSet(s, n_)) + store_->F[b] +
                      store_->R[~(b | vblock) & bmask];
          }
        }
        zeta_ = ZetaWorker{ZetaDirection::down,
                           n_,
                           k_,
                           d_,
                           id_,
                           &qfr_,
                           MsgTag{stage::gamma, static_cast<std::uint32_t>(v_) * 64},
                           nullptr,
                           v_};
        phase_ = Phase::gamma;
        return true;
      }
      case Phase::gamma: {
        if (!zeta_.advance(ep)) return false;
        if (zeta_.done()) begin_usum();
        return true;
      }
      case Phase::usum: {
        if (!fold_started_) {
          double local = log_zero;
          const bool holder = !(v_ < k_ && (id_ >> v_ & 1));
          if (holder) {
            for (const auto& e : store_->B[v_]) {
              if (!no_filter_) {
                const mask_t g = static_cast<mask_t>(e.block) << k_ | id_;
                if (!(g >> u_ & 1)) continue;
              }
              local = log_add(local, e.value + qfr_[e.block]);
            }
          }
          fold_.start(local);
          fold_started_ = true;
        }
        const MsgTag tag{stage::reduce, static_cast<std::uint32_t>(v_) * 64 +
                                            static_cast<std::uint32_t>(u_)};
        if (!fold_.advance(ep, tag)) return false;
        if (id_ == root_) {
          out_->values[static_cast<std::size_t>(u_) * n_ + v_] =
              std::exp(fold_.acc - out_->log_p_data);
        }
        fold_started_ = false;
        advance_u();
        return true;
      }
    }
    return false;
  }

  bool done() const override { return v_ == n_; }
  std::string describe() const override {
    return "edge sums v=" + std::to_string(v_) + " u=" + std::to_string(u_) + " phase " +
           (phase_ == Phase::exchange ? "exchange" : phase_ == Phase::gamma ? "gamma" : "reduce");
  }

 private:
  void begin_usum() {
    phase_ = Phase::usum;
    u_ = v_ == 0 ? 1 : 0;
    fold_started_ = false;
  }
  void advance_u() {
    ++u_;
    if (u_ == v_) ++u_;
    if (u_ >= n_) {
      ++v_;
      phase_ = Phase::exchange;
    }
  }

  enum class Phase { exchange, gamma, usum };
  int n_, k_, d_;
  std::uint32_t id_;
  const PriorSpec* prior_;
  const WorkerStore* store_;
  EdgePosteriorMatrix* out_;
  bool no_filter_;
  std::uint32_t root_;
  Phase phase_ = Phase::exchange;
  int v_ = 0;
  int u_ = 0;
  std::vector<double> qfr_;
  TrackedBytes tracked_;
  ZetaWorker zeta_{};
  ReduceFold fold_{};
  bool fold_started_ = false;
};

}  // namespace detail

// The full all-edges pipeline on a hypercube fabric: score, transform,
// forward and backward sweeps, then the per-endpoint-node loop of exchanges,
// downward transforms and reduces. The result is identical across worker
// counts up to log-sum-exp regrouping in the final per-edge sums.
inline EdgePosteriorMatrix assemble_edge_posteriors(Fabric& fabric, const DataMatrix& data,
                                                    const PriorSpec& prior, int d,
                                                    const AssembleOptions& opts = {}) {
  const int n = data.n;
  const int k = fabric.k();
  if (n < 2) throw std::invalid_argument("edge posteriors need at least two variables");
  if (k > n) throw std::invalid_argument("fabric dimension k exceeds variable count n");
  if (d < 0 || d > n - 1) throw std::invalid_argument("indegree bound out of range");
  if (opts.mem_limit_bytes) {
    const std::uint64_t est = estimate_worker_table_bytes(n, k);
    if (est > opts.mem_limit_bytes)
      throw ResourceError("estimated " + std::to_string(est) +
                          " score-table bytes per worker exceed the limit of " +
                          std::to_string(opts.mem_limit_bytes));
  }

  const std::size_t blocks = std::size_t{1} << (n - k);
  std::vector<detail::WorkerStore> stores(fabric.size());
  for (std::uint32_t r = 0; r < fabric.size(); ++r) {
    auto& st = stores[r];
    st.A.assign(n, std::vector<double>(blocks, log_zero));
    st.F.assign(blocks, log_zero);
    st.R.assign(blocks, log_zero);
    st.B.resize(n);
    st.tracked = TrackedBytes(fabric.endpoint(r).counters(),
                              (static_cast<std::uint64_t>(n) + 2) * blocks * 8);
  }

  {
    std::vector<std::unique_ptr<Program>> progs;
    for (std::uint32_t r = 0; r < fabric.size(); ++r)
      progs.push_back(std::make_unique<detail::ScoreTransformWorker>(n, k, d, r, &data, &prior,
                                                                     &stores[r]));
    fabric.run(progs);
  }
  for (std::uint32_t r = 0; r < fabric.size(); ++r) {
    std::uint64_t b_bytes = 0;
    for (const auto& list : stores[r].B) b_bytes += list.size() * sizeof(detail::WorkerStore::BEntry);
    stores[r].tracked_b = TrackedBytes(fabric.endpoint(r).counters(), b_bytes);
  }

  {
    std::vector<std::unique_ptr<Program>> progs;
    for (std::uint32_t r = 0; r < fabric.size(); ++r)
      progs.push_back(std::make_unique<LatticeWorker>(false, n, k, r, &stores[r].A, &stores[r].F,
                                                      fabric.endpoint(r).counters()));
    fabric.run(progs);
  }
  {
    std::vector<std::unique_ptr<Program>> progs;
    for (std::uint32_t r = 0; r < fabric.size(); ++r)
      progs.push_back(std::make_unique<LatticeWorker>(true, n, k, r, &stores[r].A, &stores[r].R,
                                                      fabric.endpoint(r).counters()));
    fabric.run(progs);
  }

  EdgePosteriorMatrix out;
  out.n = n;
  out.values.assign(static_cast<std::size_t>(n) * n, std::numeric_limits<double>::quiet_NaN());
  const std::uint32_t root = k == 0 ? 0u : static_cast<std::uint32_t>(full_mask(k));
  out.log_p_data = stores[root].F[full_mask(n - k)];

  {
    std::vector<std::unique_ptr<Program>> progs;
    for (std::uint32_t r = 0; r < fabric.size(); ++r)
      progs.push_back(std::make_unique<detail::EdgeSumWorker>(
          n, k, d, r, &prior, &stores[r], &out, opts.no_filter_self_test,
          fabric.endpoint(r).counters()));
    fabric.run(progs);
  }
  return out;
}

// Serial reference of the same pipeline in one address space; the k = 0
// fabric run reproduces it bitwise.
inline EdgePosteriorMatrix assemble_serial(const DataMatrix& data, const PriorSpec& prior, int d,
                                           bool no_filter_self_test = false,
                                           std::uint64_t mem_limit = std::uint64_t{1} << 34) {
  const int n = data.n;
  if (d < 0 || d > n - 1) throw std::invalid_argument("indegree bound out of range");
  const std::size_t size = std::size_t{1} << n;
  const std::uint64_t required = (static_cast<std::uint64_t>(n) + 4) * 8 * size;
  if (n > 28 || required > mem_limit)
    throw std::runtime_error("serial pipeline needs " + std::to_string(required) +
                             " bytes, over the limit of " + std::to_string(mem_limit));

  std::vector<std::vector<double>> A(n), B(n);
  for (int i = 0; i < n; ++i) {
    B[i].assign(size, log_zero);
    for (mask_t g = 0; g < size; ++g) {
      if ((g >> i & 1) || popcount(g) > d) continue;
      B[i][g] = family_score(data, i, VarSet(g, n), prior, {});
    }
    A[i] = upward_zeta_serial(n, d, B[i]);
    for (mask_t s = 0; s < size; ++s) {
      if (s >> i & 1)
        A[i][s] = log_zero;
      else
        A[i][s] += prior.log_q(VarSet(s, n));
    }
  }

  const FRTables fr = serial_f_r(n, A, mem_limit);
  const mask_t all = full_mask(n);

  EdgePosteriorMatrix out;
  out.n = n;
  out.values.assign(static_cast<std::size_t>(n) * n, std::numeric_limits<double>::quiet_NaN());
  out.log_p_data = fr.forward[all];

  std::vector<double> qfr(size);
  for (int v = 0; v < n; ++v) {
    const mask_t vbit = mask_t{1} << v;
    for (mask_t s = 0; s < size; ++s) {
      qfr[s] = (s & vbit) ? log_zero
                          : prior.log_q(VarSet(s, n)) + fr.forward[s] +
                                fr.backward[all ^ s ^ vbit];
    }
    const std::vector<double> gamma = downward_zeta_serial(n, d, qfr, nullptr, v);
    for (int u = 0; u < n; ++u) {
      if (u == v) continue;
      double acc = log_zero;
      for (mask_t g = 0; g < size; ++g) {
        if ((g & vbit) || popcount(g) > d) continue;
        if (!no_filter_self_test && !(g >> u & 1)) continue;
        acc = log_add(acc, B[v][g] + gamma[g]);
      }
      out.values[static_cast<std::size_t>(u) * n + v] = std::exp(acc - out.log_p_data);
    }
  }
  return out;
}

// Forward-only joint P(f, D) = F(V) with the feature folded into the local
// scores; the Eq. 9 route used to cross-check the forward-backward pipeline
// one edge at a time.
inline double joint_log_prob_serial(const DataMatrix& data, const PriorSpec& prior, int d,
                                    const Feature& feature = {}) {
  const int n = data.n;
  const std::size_t size = std::size_t{1} << n;
  std::vector<std::vector<double>> A(n);
  for (int i = 0; i < n; ++i) {
    std::vector<double> s(size, log_zero);
    for (mask_t g = 0; g < size; ++g) {
      if ((g >> i & 1) || popcount(g) > d) continue;
      s[g] = family_score(data, i, VarSet(g, n), prior, feature);
    }
    A[i] = upward_zeta_serial(n, d, std::move(s));
    for (mask_t m = 0; m < size; ++m) {
      if (m >> i & 1)
        A[i][m] = log_zero;
      else
        A[i][m] += prior.log_q(VarSet(m, n));
    }
  }
  return serial_f_r(n, A).forward[full_mask(n)];
}

inline double edge_posterior_forward_only(const DataMatrix& data, const PriorSpec& prior, int d,
                                          int u, int v) {
  const double joint = joint_log_prob_serial(data, prior, d, EdgeFeature{u, v});
  const double evidence = joint_log_prob_serial(data, prior, d, {});
  return std::exp(joint - evidence);
}

}  // namespace edgewise
