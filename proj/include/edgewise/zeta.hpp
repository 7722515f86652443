#pragma once

#include <cassert>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "edgewise/fabric.hpp"
#include "edgewise/logspace.hpp"
#include "edgewise/varset.hpp"

namespace edgewise {

// Instrumentation for the truncated transforms. additions counts log-space
// accumulations with a partner operand; entries_processed counts (S, j)
// visits that pass the iteration guard. When check_freshness is set (single
// worker or simulated backend only), every partner or carried value read at
// iteration j is asserted to have been written at iteration j-1 — entries a
// guard skipped are never consumed.
struct ZetaStats {
  std::uint64_t additions = 0;
  std::uint64_t entries_processed = 0;
  std::vector<std::uint64_t> per_worker_additions;
  bool check_freshness = false;
  std::vector<std::int32_t> last_written;  // indexed by full mask
  bool freshness_ok = true;

  void init_freshness(int n) {
    if (!check_freshness) return;
    last_written.assign(std::size_t{1} << n, 0);
    freshness_ok = true;
  }
  void note_write(mask_t s, int j) {
    if (check_freshness) last_written[s] = j + 1;
  }
  void note_read(mask_t s, int j) {
    if (check_freshness && last_written[s] != j) freshness_ok = false;
  }
};

enum class ZetaDirection { up, down };

// t(T) = log sum_{S <= T, |S| <= d} exp s(S) for all T, by the n-pass
// in-place sweep. Masks are swept descending so a partner cell is read only
// before its own (identity) refresh within an iteration.
inline std::vector<double> upward_zeta_serial(int n, int d, std::vector<double> t,
                                              ZetaStats* stats = nullptr) {
  const std::size_t size = std::size_t{1} << n;
  assert(t.size() == size);
  assert(d >= 0 && d <= n);
  if (stats) stats->init_freshness(n);
  for (mask_t s = 0; s < size; ++s)
    if (popcount(s) > d) t[s] = log_zero;
  for (int j = 0; j < n; ++j) {
    const mask_t bit = mask_t{1} << j;
    for (mask_t s = size; s-- > 0;) {
      if (popcount(s >> (j + 1)) > d) continue;
      double v = log_zero;
      if (popcount(s >> j) <= d) {
        if (stats) stats->note_read(s, j);
        v = t[s];
      }
      if (s & bit) {
        if (stats) {
          stats->note_read(s ^ bit, j);
          ++stats->additions;
        }
        v = log_add(v, t[s ^ bit]);
      }
      t[s] = v;
      if (stats) {
        ++stats->entries_processed;
        stats->note_write(s, j);
      }
    }
  }
  return t;
}

// t(T) = log sum_{T <= S <= V} exp s(S), valid on |T| <= d. excluded >= 0
// restricts the transform to the sub-lattice of masks avoiding that variable
// (that dimension is never swept and those masks never touched).
inline std::vector<double> downward_zeta_serial(int n, int d, std::vector<double> t,
                                                ZetaStats* stats = nullptr, int excluded = -1) {
  const std::size_t size = std::size_t{1} << n;
  assert(t.size() == size);
  assert(d >= 0 && d <= n);
  if (stats) stats->init_freshness(n);
  const mask_t evade = excluded >= 0 ? mask_t{1} << excluded : 0;
  for (int j = 0; j < n; ++j) {
    if (j == excluded) continue;
    const mask_t bit = mask_t{1} << j;
    const mask_t lowmask = (bit << 1) - 1;
    for (mask_t s = 0; s < size; ++s) {
      if (s & evade) continue;
      if (popcount(s & lowmask) > d) continue;
      if (stats) {
        stats->note_read(s, j);
        ++stats->entries_processed;
      }
      if (!(s & bit)) {
        if (stats) {
          stats->note_read(s | bit, j);
          ++stats->additions;
        }
        t[s] = log_add(t[s], t[s | bit]);
      }
      if (stats) stats->note_write(s, j);
    }
  }
  return t;
}

// One worker's share of the k-D transform: 2^{n-k} entries, mask =
// (block << k) | worker. Iterations over the first k dimensions exchange the
// whole current table with the dimension-j neighbor as one message; higher
// dimensions pair blocks locally. advance() performs one iteration per call.
struct ZetaWorker {
  ZetaDirection dir = ZetaDirection::up;
  int n = 0, k = 0, d = 0;
  std::uint32_t worker = 0;
  std::vector<double>* t = nullptr;
  MsgTag tag{};  // aux is offset by the iteration index
  ZetaStats* stats = nullptr;
  int excluded = -1;
  int j = 0;
  bool init_done = false;

  bool done() const { return init_done && j >= n; }

  std::string describe() const {
    return std::string(dir == ZetaDirection::up ? "upward" : "downward") +
           " zeta iteration " + std::to_string(j);
  }

  bool advance(Endpoint& ep) {
    if (done()) return false;
    if (!init_done) {
      if (dir == ZetaDirection::up) {
        for (std::size_t b = 0; b < t->size(); ++b)
          if (popcount(full(b)) > d) (*t)[b] = log_zero;
      }
      if (stats && stats->per_worker_additions.empty())
        stats->per_worker_additions.assign(std::size_t{1} << k, 0);
      init_done = true;
      if (j == excluded) ++j;
      return true;
    }
    const bool up = dir == ZetaDirection::up;
    if (j < k) {
      const bool sender = ((worker >> j & 1) == 0) == up;
      const MsgTag mt{tag.stage, tag.aux + static_cast<std::uint32_t>(j)};
      if (sender) {
        ep.send(j, FabricMessage{mt, 0, 0, -1, *t});
        sweep(nullptr);
      } else {
        auto msg = ep.try_recv(mt, j);
        if (!msg) return false;
        sweep(&msg->payload);
      }
    } else {
      sweep(nullptr);
    }
    ++j;
    if (j == excluded) ++j;
    return true;
  }

 private:
  mask_t full(std::size_t block) const { return static_cast<mask_t>(block) << k | worker; }

  void sweep(const std::vector<double>* neighbor) {
    const std::size_t blocks = t->size();
    const mask_t bit = mask_t{1} << j;
    const mask_t evade = excluded >= 0 ? mask_t{1} << excluded : 0;
    std::uint64_t adds = 0;
    if (dir == ZetaDirection::up) {
      for (std::size_t b = blocks; b-- > 0;) {
        const mask_t s = full(b);
        if (s & evade) continue;
        if (popcount(s >> (j + 1)) > d) continue;
        double v = log_zero;
        if (popcount(s >> j) <= d) {
          if (stats) stats->note_read(s, j);
          v = (*t)[b];
        }
        if (s & bit) {
          double partner;
          if (j < k) {
            partner = (*neighbor)[b];
          } else {
            partner = (*t)[b ^ (mask_t{1} << (j - k))];
          }
          if (stats) stats->note_read(s ^ bit, j);
          v = log_add(v, partner);
          ++adds;
        }
        (*t)[b] = v;
        if (stats) {
          ++stats->entries_processed;
          stats->note_write(s, j);
        }
      }
    } else {
      const mask_t lowmask = (bit << 1) - 1;
      for (std::size_t b = 0; b < blocks; ++b) {
        const mask_t s = full(b);
        if (s & evade) continue;
        if (popcount(s & lowmask) > d) continue;
        if (stats) {
          stats->note_read(s, j);
          ++stats->entries_processed;
        }
        if (!(s & bit)) {
          double partner;
          if (j < k) {
            partner = (*neighbor)[b];
          } else {
            partner = (*t)[b ^ (mask_t{1} << (j - k))];
          }
          if (stats) stats->note_read(s | bit, j);
          (*t)[b] = log_add((*t)[b], partner);
          ++adds;
        }
        if (stats) stats->note_write(s, j);
      }
    }
    if (stats) {
      stats->additions += adds;
      if (!stats->per_worker_additions.empty()) stats->per_worker_additions[worker] += adds;
    }
  }
};

namespace detail {
class ZetaProgram : public Program {
 public:
  explicit ZetaProgram(ZetaWorker w) : w_(w) {}
  bool step(Endpoint& ep) override { return w_.advance(ep); }
  bool done() const override { return w_.done(); }
  std::string describe() const override { return w_.describe(); }

 private:
  ZetaWorker w_;
};
}  // namespace detail

// Runs one full parallel transform over per-worker blocks (in place).
// blocks[r] holds s(S) for every S with low k bits equal to r. Workers whose
// id carries the excluded variable's bit take no part when excluded < k.
inline void parallel_zeta(Fabric& fabric, ZetaDirection dir, int n, int d,
                          std::vector<std::vector<double>>& blocks, ZetaStats* stats = nullptr,
                          int excluded = -1, MsgTag tag = {}) {
  const int k = fabric.k();
  assert(blocks.size() == fabric.size());
  if (tag.stage == 0) tag.stage = dir == ZetaDirection::up ? stage::zeta_up : stage::zeta_down;
  if (stats) {
    stats->init_freshness(n);
    if (stats->per_worker_additions.empty())
      stats->per_worker_additions.assign(fabric.size(), 0);
  }
  std::vector<std::unique_ptr<Program>> progs;
  progs.reserve(fabric.size());
  for (std::uint32_t r = 0; r < fabric.size(); ++r) {
    ZetaWorker w{dir, n, k, d, r, &blocks[r], tag, stats, excluded};
    if (excluded >= 0 && excluded < k && (r >> excluded & 1)) {
      w.j = n;  // this worker holds no part of the sub-lattice
      w.init_done = true;
    }
    progs.push_back(std::make_unique<detail::ZetaProgram>(w));
  }
  fabric.run(progs);
}

// Scatter a dense 2^n table into per-worker blocks under the direct mapping
// (worker = low k bits), and gather it back. The mirrored forms are used by
// the backward function's layout.
inline std::vector<std::vector<double>> scatter_blocks(const std::vector<double>& full, int n,
                                                       int k, bool mirror = false) {
  std::vector<std::vector<double>> out(std::size_t{1} << k);
  const std::size_t blocks = std::size_t{1} << (n - k);
  for (auto& v : out) v.assign(blocks, log_zero);
  for (mask_t s = 0; s < full.size(); ++s) {
    auto addr = split_address(VarSet(s, n), k, mirror);
    out[addr.worker][addr.block] = full[s];
  }
  return out;
}

inline std::vector<double> gather_blocks(const std::vector<std::vector<double>>& blocks, int n,
                                         int k, bool mirror = false) {
  std::vector<double> out(std::size_t{1} << n, log_zero);
  for (std::uint32_t r = 0; r < blocks.size(); ++r)
    for (std::size_t b = 0; b < blocks[r].size(); ++b)
      out[join_address({r, b}, n, k, mirror).bits] = blocks[r][b];
  return out;
}

}  // namespace edgewise
