#pragma once

#include <atomic>
#include <cassert>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "edgewise/logspace.hpp"
#include "edgewise/varset.hpp"

namespace edgewise {

struct FabricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Stage ids used to tag messages; a message is consumed only by the stage
// whose tag it carries.
namespace stage {
inline constexpr std::uint16_t zeta_up = 1;
inline constexpr std::uint16_t zeta_down = 2;
inline constexpr std::uint16_t forward = 3;
inline constexpr std::uint16_t backward = 4;
inline constexpr std::uint16_t exchange = 5;
inline constexpr std::uint16_t gamma = 6;
inline constexpr std::uint16_t reduce = 7;
inline constexpr std::uint16_t user = 100;
}  // namespace stage

struct MsgTag {
  std::uint16_t stage = 0;
  std::uint32_t aux = 0;
  friend bool operator==(const MsgTag&, const MsgTag&) = default;
};

struct FabricMessage {
  MsgTag tag;
  std::uint16_t dim = 0;    // hypercube dimension traveled (0-based)
  std::uint32_t sender = 0;
  std::int64_t block = -1;  // target block address; -1 for whole-table batches
  std::vector<double> payload;
};

struct EndpointCounters {
  std::uint64_t sent_msgs = 0;
  std::uint64_t sent_values = 0;
  std::uint64_t sent_bytes = 0;
  std::uint64_t recv_msgs = 0;
  std::uint64_t idle_steps = 0;
  double comm_cost = 0.0;  // sum of tau + mu * payload over sent messages
  std::uint64_t table_bytes = 0;
  std::uint64_t table_bytes_peak = 0;

  void track_alloc(std::uint64_t bytes) {
    table_bytes += bytes;
    if (table_bytes > table_bytes_peak) table_bytes_peak = table_bytes;
  }
  void track_free(std::uint64_t bytes) {
    assert(bytes <= table_bytes);
    table_bytes -= bytes;
  }
};

// Per-message latency/bandwidth charge, the (tau, mu) pair of the cost model.
struct CostModel {
  double tau = 1.0;
  double mu = 1.0;
};

enum class Backend { simulated, parallel };

class Fabric;

class Endpoint {
 public:
  std::uint32_t id() const { return id_; }
  int k() const { return k_; }

  void send(int dim, FabricMessage msg);

  // First pending message matching (tag, dim); FIFO within each
  // (sender, dimension, tag) channel because the inbox preserves arrival
  // order and sender is determined by (receiver, dimension).
  std::optional<FabricMessage> try_recv(MsgTag tag, int dim = -1) {
    std::lock_guard lock(mu_);
    for (auto it = inbox_.begin(); it != inbox_.end(); ++it) {
      if (it->tag == tag && (dim < 0 || it->dim == dim)) {
        FabricMessage m = std::move(*it);
        inbox_.erase(it);
        ++counters_.recv_msgs;
        return m;
      }
    }
    return std::nullopt;
  }

  std::vector<FabricMessage> drain() {
    std::lock_guard lock(mu_);
    std::vector<FabricMessage> out(std::make_move_iterator(inbox_.begin()),
                                   std::make_move_iterator(inbox_.end()));
    inbox_.clear();
    counters_.recv_msgs += out.size();
    return out;
  }

  bool inbox_empty() const {
    std::lock_guard lock(mu_);
    return inbox_.empty();
  }

  EndpointCounters& counters() { return counters_; }
  const EndpointCounters& counters() const { return counters_; }

  // Round currently executing (simulated backend; 1-based).
  std::uint64_t current_round() const;

  std::string pending_summary() const {
    std::lock_guard lock(mu_);
    std::ostringstream os;
    os << "endpoint " << id_ << ": " << inbox_.size() << " pending";
    for (std::size_t i = 0; i < inbox_.size() && i < 8; ++i)
      os << " [stage=" << inbox_[i].tag.stage << " aux=" << inbox_[i].tag.aux
         << " dim=" << inbox_[i].dim << " from=" << inbox_[i].sender << "]";
    return os.str();
  }

 private:
  friend class Fabric;

  void deliver(FabricMessage&& m) {
    {
      std::lock_guard lock(mu_);
      inbox_.push_back(std::move(m));
    }
    cv_.notify_one();
  }

  // Blocks until a message arrives or the timeout passes (parallel backend).
  bool wait_for_message(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    return cv_.wait_for(lock, timeout, [&] { return !inbox_.empty(); });
  }

  std::uint32_t id_ = 0;
  int k_ = 0;
  Fabric* fabric_ = nullptr;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<FabricMessage> inbox_;
  EndpointCounters counters_;
};

// One endpoint's stage logic. step() makes at most one unit of progress and
// returns whether it did anything; the fabric drives all endpoints until
// every program reports done.
class Program {
 public:
  virtual ~Program() = default;
  virtual bool step(Endpoint& ep) = 0;
  virtual bool done() const = 0;
  virtual std::string describe() const { return {}; }
};

// 2^k logical workers joined along hypercube edges: a message may travel only
// between ids differing in exactly one bit. Two interchangeable backends run
// the same programs; the simulated one is single-threaded and deterministic
// (strict round-robin, ascending endpoint id), the parallel one runs one
// thread per endpoint with blocking waits.
class Fabric {
 public:
  Fabric(int k, Backend backend, CostModel cost = {}) : k_(k), backend_(backend), cost_(cost) {
    const int cap = backend == Backend::simulated ? 20 : 16;
    if (k < 0 || k > cap)
      throw FabricError("fabric dimension k=" + std::to_string(k) + " out of range [0," +
                        std::to_string(cap) + "]");
    if (backend == Backend::parallel) {
      const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
      if ((std::uint64_t{1} << k) > std::uint64_t{4} * hw)
        throw FabricError("insufficient workers: 2^" + std::to_string(k) +
                          " endpoints requested on " + std::to_string(hw) + " hardware threads");
    }
    endpoints_.resize(std::size_t{1} << k);
    for (std::uint32_t i = 0; i < endpoints_.size(); ++i) {
      endpoints_[i] = std::make_unique<Endpoint>();
      endpoints_[i]->id_ = i;
      endpoints_[i]->k_ = k;
      endpoints_[i]->fabric_ = this;
    }
  }

  int k() const { return k_; }
  std::uint32_t size() const { return static_cast<std::uint32_t>(endpoints_.size()); }
  Backend backend() const { return backend_; }
  Endpoint& endpoint(std::uint32_t id) { return *endpoints_[id]; }
  std::uint64_t rounds() const { return rounds_; }

  // Runs one program per endpoint to completion. Returns the number of
  // round-robin rounds used (simulated backend; 0 for parallel).
  std::uint64_t run(std::vector<std::unique_ptr<Program>>& programs) {
    assert(programs.size() == endpoints_.size());
    std::uint64_t used = backend_ == Backend::simulated ? run_simulated(programs)
                                                        : run_parallel(programs);
    for (auto& ep : endpoints_) {
      if (!ep->inbox_empty())
        throw FabricError("stage finished with unconsumed messages; " + ep->pending_summary());
    }
    return used;
  }

  std::string counters_json() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < endpoints_.size(); ++i) {
      const auto& c = endpoints_[i]->counters_;
      if (i) os << ",";
      os << "{\"endpoint\":" << i << ",\"sent_msgs\":" << c.sent_msgs
         << ",\"sent_bytes\":" << c.sent_bytes << ",\"recv_msgs\":" << c.recv_msgs
         << ",\"idle_steps\":" << c.idle_steps << "}";
    }
    os << "]";
    return os.str();
  }

  std::uint64_t total_sent_msgs() const {
    std::uint64_t s = 0;
    for (auto& ep : endpoints_) s += ep->counters_.sent_msgs;
    return s;
  }
  std::uint64_t max_sent_msgs() const {
    std::uint64_t s = 0;
    for (auto& ep : endpoints_) s = std::max(s, ep->counters_.sent_msgs);
    return s;
  }
  std::uint64_t max_table_bytes_peak() const {
    std::uint64_t s = 0;
    for (auto& ep : endpoints_) s = std::max(s, ep->counters_.table_bytes_peak);
    return s;
  }
  // Messages that traveled between non-adjacent endpoints; the send path
  // only admits single-bit hops, so this stays zero by construction and the
  // locality audits assert it.
  std::uint64_t nonneighbor_msgs() const { return nonneighbor_msgs_.load(); }

  const CostModel& cost() const { return cost_; }

 private:
  friend class Endpoint;

  std::uint64_t run_simulated(std::vector<std::unique_ptr<Program>>& programs) {
    rounds_ = 0;
    while (true) {
      bool all_done = true;
      for (auto& p : programs)
        if (!p->done()) {
          all_done = false;
          break;
        }
      if (all_done) break;
      ++rounds_;
      bool progress = false;
      for (std::uint32_t i = 0; i < endpoints_.size(); ++i) {
        if (programs[i]->done()) continue;
        if (programs[i]->step(*endpoints_[i]))
          progress = true;
        else
          ++endpoints_[i]->counters_.idle_steps;
      }
      if (!progress) throw FabricError(deadlock_dump(programs));
    }
    return rounds_;
  }

  std::uint64_t run_parallel(std::vector<std::unique_ptr<Program>>& programs) {
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mu;
    std::vector<std::thread> threads;
    threads.reserve(endpoints_.size());
    for (std::uint32_t i = 0; i < endpoints_.size(); ++i) {
      threads.emplace_back([&, i] {
        Program& prog = *programs[i];
        Endpoint& ep = *endpoints_[i];
        int stalled = 0;
        try {
          while (!prog.done()) {
            if (failed.load(std::memory_order_relaxed)) return;
            if (prog.step(ep)) {
              stalled = 0;
              progress_.fetch_add(1, std::memory_order_relaxed);
              continue;
            }
            const std::uint64_t seen = progress_.load(std::memory_order_relaxed);
            ep.wait_for_message(std::chrono::milliseconds(50));
            if (progress_.load(std::memory_order_relaxed) == seen) {
              if (++stalled > 600)
                throw FabricError("recv cannot be satisfied; " + ep.pending_summary() + "; " +
                                  prog.describe());
            } else {
              stalled = 0;
            }
          }
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!failed.exchange(true)) first_error = std::current_exception();
          for (auto& other : endpoints_) other->cv_.notify_all();
        }
      });
    }
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
    return 0;
  }

  std::string deadlock_dump(const std::vector<std::unique_ptr<Program>>& programs) const {
    std::ostringstream os;
    os << "fabric deadlock: no endpoint can make progress\n";
    for (std::uint32_t i = 0; i < endpoints_.size(); ++i) {
      if (programs[i]->done()) continue;
      os << "  " << endpoints_[i]->pending_summary();
      auto what = programs[i]->describe();
      if (!what.empty()) os << " waiting on " << what;
      os << "\n";
    }
    return os.str();
  }

  int k_;
  Backend backend_;
  CostModel cost_;
  std::vector<std::unique_ptr<Endpoint>> endpoints_;
  std::uint64_t rounds_ = 0;
  std::atomic<std::uint64_t> progress_{0};
  std::atomic<std::uint64_t> nonneighbor_msgs_{0};
};

inline void Endpoint::send(int dim, FabricMessage msg) {
  if (dim < 0 || dim >= k_)
    throw FabricError("send on dimension " + std::to_string(dim) + " outside a " +
                      std::to_string(k_) + "-D hypercube");
  const std::uint32_t dst = id_ ^ (std::uint32_t{1} << dim);
  if (popcount(id_ ^ dst) != 1) ++fabric_->nonneighbor_msgs_;  // unreachable by construction
  msg.dim = static_cast<std::uint16_t>(dim);
  msg.sender = id_;
  ++counters_.sent_msgs;
  counters_.sent_values += msg.payload.size();
  counters_.sent_bytes += 16 + 8 * msg.payload.size();
  counters_.comm_cost += fabric_->cost_.tau + fabric_->cost_.mu * static_cast<double>(msg.payload.size());
  fabric_->progress_.fetch_add(1, std::memory_order_relaxed);
  fabric_->endpoints_[dst]->deliver(std::move(msg));
}

inline std::uint64_t Endpoint::current_round() const { return fabric_->rounds(); }

inline Fabric spawn(int k, Backend backend, CostModel cost = {}) {
  return Fabric(k, backend, cost);
}

// RAII registration of a table allocation against an endpoint's byte
// counters; used to audit the per-worker space law.
class TrackedBytes {
 public:
  TrackedBytes() = default;
  TrackedBytes(EndpointCounters& c, std::uint64_t bytes) : c_(&c), bytes_(bytes) {
    c_->track_alloc(bytes_);
  }
  TrackedBytes(TrackedBytes&& o) noexcept : c_(o.c_), bytes_(o.bytes_) { o.c_ = nullptr; }
  TrackedBytes& operator=(TrackedBytes&& o) noexcept {
    release();
    c_ = o.c_;
    bytes_ = o.bytes_;
    o.c_ = nullptr;
    return *this;
  }
  TrackedBytes(const TrackedBytes&) = delete;
  TrackedBytes& operator=(const TrackedBytes&) = delete;
  ~TrackedBytes() { release(); }

 private:
  void release() {
    if (c_) c_->track_free(bytes_);
    c_ = nullptr;
  }
  EndpointCounters* c_ = nullptr;
  std::uint64_t bytes_ = 0;
};

// One endpoint's participation in the k-round fold onto the all-ones id.
// Round t: endpoints whose low t bits are all ones are still active; the one
// with bit t clear sends its accumulator to its dimension-t neighbor and
// drops out, the neighbor folds (local first, incoming second) and continues.
// The fold order is therefore fixed by dimension, not by arrival.
struct ReduceFold {
  double acc = log_zero;
  int round = 0;
  bool finished = false;

  void start(double local) {
    acc = local;
    round = 0;
    finished = false;
  }

  // Advances as far as messages allow; true once this endpoint's role ends.
  bool advance(Endpoint& ep, MsgTag tag) {
    const int k = ep.k();
    while (!finished) {
      if (round == k) {
        finished = true;
        break;
      }
      if ((ep.id() >> round & 1) == 0) {
        ep.send(round, FabricMessage{tag, 0, 0, -1, {acc}});
        finished = true;
        break;
      }
      auto msg = ep.try_recv(tag, round);
      if (!msg) return false;
      acc = log_add(acc, msg->payload[0]);
      ++round;
    }
    return true;
  }
};

namespace detail {
class ReduceProgram : public Program {
 public:
  ReduceProgram(double local, MsgTag tag, double* out) : tag_(tag), out_(out) { fold_.start(local); }
  bool step(Endpoint& ep) override {
    if (done_) return false;
    if (!fold_.advance(ep, tag_)) return false;
    done_ = true;
    const auto root = ep.k() == 0 ? 0u : static_cast<std::uint32_t>(full_mask(ep.k()));
    if (out_ && ep.id() == root) *out_ = fold_.acc;
    return true;
  }
  bool done() const override { return done_; }
  std::string describe() const override {
    return "reduce round " + std::to_string(fold_.round);
  }

 private:
  ReduceFold fold_;
  MsgTag tag_;
  double* out_;
  bool done_ = false;
};
}  // namespace detail

// Every endpoint contributes one value; the log-sum-exp lands on the all-ones
// endpoint and is returned.
inline double reduce_log_sum_exp(Fabric& fabric, const std::vector<double>& contributions,
                                 MsgTag tag = {stage::reduce, 0}) {
  assert(contributions.size() == fabric.size());
  double out = log_zero;
  std::vector<std::unique_ptr<Program>> progs;
  progs.reserve(fabric.size());
  for (std::uint32_t i = 0; i < fabric.size(); ++i)
    progs.push_back(std::make_unique<detail::ReduceProgram>(contributions[i], tag, &out));
  fabric.run(progs);
  return out;
}

}  // namespace edgewise
