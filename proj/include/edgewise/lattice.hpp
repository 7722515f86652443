#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "edgewise/fabric.hpp"
#include "edgewise/logspace.hpp"
#include "edgewise/varset.hpp"

namespace edgewise {

// Masks over `bits` bits sorted by (popcount ascending, value ascending):
// the lattice level order, and also the sub-hypercube pipeline order when
// applied to the (n-k)-bit prefixes.
inline std::vector<std::uint32_t> schedule_order(int bits) {
  std::vector<std::uint32_t> order(std::size_t{1} << bits);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [](std::uint32_t a, std::uint32_t b) {
    const int pa = popcount(a), pb = popcount(b);
    return pa != pb ? pa < pb : a < b;
  });
  return order;
}

struct FRTables {
  std::vector<double> forward;   // F(S), indexed by mask
  std::vector<double> backward;  // R(S), indexed by mask
};

// Level-by-level reference DP over a single address space.
// F(S) = sum_{i in S} A_i(S-{i}) F(S-{i}), F(empty) = 1;
// R(S) = sum_{i in S} A_i(V-S) R(S-{i}),  R(empty) = 1.
// Contributions fold in ascending i, the same order the parallel path uses.
inline FRTables serial_f_r(int n, const std::vector<std::vector<double>>& A,
                           std::uint64_t mem_limit = std::uint64_t{1} << 34) {
  const std::uint64_t required = std::uint64_t{2} * 8 << n;
  if (n > 30 || required > mem_limit)
    throw std::runtime_error("serial lattice DP needs " + std::to_string(required) +
                             " bytes for the F and R tables, over the limit of " +
                             std::to_string(mem_limit));
  const std::size_t size = std::size_t{1} << n;
  assert(A.size() == static_cast<std::size_t>(n));
  FRTables t;
  t.forward.assign(size, log_zero);
  t.backward.assign(size, log_zero);
  t.forward[0] = 0.0;
  t.backward[0] = 0.0;
  const mask_t all = full_mask(n);
  for (std::uint32_t s : schedule_order(n)) {
    if (s == 0) continue;
    double f = log_zero, r = log_zero;
    for (mask_t rest = s; rest; rest &= rest - 1) {
      const int i = std::countr_zero(rest);
      const mask_t prev = s ^ (mask_t{1} << i);
      f = log_add(f, A[i][prev] + t.forward[prev]);
      r = log_add(r, A[i][all ^ s] + t.backward[prev]);
    }
    t.forward[s] = f;
    t.backward[s] = r;
  }
  return t;
}

// One worker's share of the forward sum F (or the backward function R when
// mirrored). Blocks run in (popcount, value) order of the full subset mask;
// each block waits for its |S| incoming contributions, folds them in
// ascending dimension, then emits toward every superset: a one-bit fabric
// hop for dimensions below k, a local buffer write above. For F the sender
// attaches the product A_j(S)+F(S); for R the raw score travels and the
// receiver multiplies by its resident A_i(V-S).
class LatticeWorker : public Program {
 public:
  LatticeWorker(bool mirrored, int n, int k, std::uint32_t id,
                const std::vector<std::vector<double>>* A, std::vector<double>* out,
                EndpointCounters& counters, bool record_activation = false)
      : mirrored_(mirrored),
        n_(n),
        k_(k),
        id_(id),
        low_bits_(mirrored ? static_cast<std::uint32_t>(~mask_t{id} & full_mask(k)) : id),
        A_(A),
        out_(out),
        tag_{mirrored ? stage::backward : stage::forward, 0},
        record_activation_(record_activation) {
    const std::size_t blocks = std::size_t{1} << (n - k);
    assert(out_->size() == blocks);
    contrib_.assign(blocks * static_cast<std::size_t>(n), log_zero);
    arrived_.assign(blocks, 0);
    order_ = schedule_order(n - k);
    tracked_ = TrackedBytes(counters, blocks * (8 * static_cast<std::uint64_t>(n) + 1 + 4));
    if (record_activation_) activation_.reserve(blocks);
  }

  bool step(Endpoint& ep) override {
    bool did = false;
    for (auto& msg : ep.drain()) {
      if (msg.tag != tag_)
        throw FabricError("lattice stage received foreign message (stage " +
                          std::to_string(msg.tag.stage) + ")");
      contrib_[static_cast<std::size_t>(msg.block) * n_ + msg.dim] = msg.payload[0];
      ++arrived_[msg.block];
      did = true;
    }
    if (cursor_ == order_.size()) return did;
    const std::uint32_t b = order_[cursor_];
    const mask_t s = mask_of(b);
    if (arrived_[b] != popcount(s)) return did;
    process(ep, b, s);
    ++cursor_;
    return true;
  }

  bool done() const override { return cursor_ == order_.size(); }

  std::string describe() const override {
    if (done()) return "lattice worker finished";
    const std::uint32_t b = order_[cursor_];
    return "block " + std::to_string(b) + " with " + std::to_string(int(arrived_[b])) + "/" +
           std::to_string(popcount(mask_of(b))) + " contributions";
  }

  // (block, simulated round it was computed in), in processing order.
  const std::vector<std::pair<std::uint32_t, std::uint64_t>>& activation() const {
    return activation_;
  }

 private:
  mask_t mask_of(std::uint32_t block) const { return static_cast<mask_t>(block) << k_ | low_bits_; }

  void process(Endpoint& ep, std::uint32_t b, mask_t s) {
    double val = 0.0;  // log 1, the empty-set base case
    if (s != 0) {
      val = log_zero;
      const mask_t complement_block = ~static_cast<mask_t>(b) & full_mask(n_ - k_);
      for (mask_t rest = s; rest; rest &= rest - 1) {
        const int i = std::countr_zero(rest);
        double term = contrib_[static_cast<std::size_t>(b) * n_ + i];
        if (mirrored_) term += (*A_)[i][complement_block];
        val = log_add(val, term);
      }
    }
    (*out_)[b] = val;
    if (record_activation_) activation_.emplace_back(b, ep.current_round());
    for (int j = 0; j < n_; ++j) {
      if (s >> j & 1) continue;
      const double emitted = mirrored_ ? val : (*A_)[j][b] + val;
      if (j < k_) {
        ep.send(j, FabricMessage{tag_, 0, 0, static_cast<std::int64_t>(b), {emitted}});
      } else {
        const std::uint32_t tb = b | (std::uint32_t{1} << (j - k_));
        contrib_[static_cast<std::size_t>(tb) * n_ + j] = emitted;
        ++arrived_[tb];
      }
    }
  }

  bool mirrored_;
  int n_, k_;
  std::uint32_t id_;
  std::uint32_t low_bits_;  // the low k bits of masks this worker owns
  const std::vector<std::vector<double>>* A_;
  std::vector<double>* out_;
  MsgTag tag_;
  bool record_activation_;
  std::vector<double> contrib_;
  std::vector<std::uint8_t> arrived_;
  std::vector<std::uint32_t> order_;
  std::size_t cursor_ = 0;
  std::vector<std::pair<std::uint32_t, std::uint64_t>> activation_;
  TrackedBytes tracked_;
};

// Runs the forward stage: worker r ends up holding F(S) for every S whose low
// k bits equal r. A[r][i] must hold A_i(S) for the same masks. Returns the
// number of simulated rounds used (0 on the parallel backend).
inline std::uint64_t compute_forward(Fabric& fabric, int n,
                                     const std::vector<std::vector<std::vector<double>>>& A,
                                     std::vector<std::vector<double>>& F) {
  std::vector<std::unique_ptr<Program>> progs;
  progs.reserve(fabric.size());
  for (std::uint32_t r = 0; r < fabric.size(); ++r)
    progs.push_back(std::make_unique<LatticeWorker>(false, n, fabric.k(), r, &A[r], &F[r],
                                                    fabric.endpoint(r).counters()));
  return fabric.run(progs);
}

// Runs the backward stage under the mirrored mapping: worker r holds R(S) for
// every S whose low k bits equal ~r, so R(S) is co-resident with F(V-S).
inline std::uint64_t compute_backward(Fabric& fabric, int n,
                                      const std::vector<std::vector<std::vector<double>>>& A,
                                      std::vector<std::vector<double>>& R) {
  std::vector<std::unique_ptr<Program>> progs;
  progs.reserve(fabric.size());
  for (std::uint32_t r = 0; r < fabric.size(); ++r)
    progs.push_back(std::make_unique<LatticeWorker>(true, n, fabric.k(), r, &A[r], &R[r],
                                                    fabric.endpoint(r).counters()));
  return fabric.run(progs);
}

}  // namespace edgewise
