#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace edgewise {

struct ResourceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Worker-count exponent minimizing k 2^k (n-k)^d: k* = n(ln2 + 1)/(ln2 + 1 + d).
// Efficiency peaks near 2^{k*} workers; d = 0 degenerates to k* = n.
inline double k_star(int n, int d) {
  const double c = std::log(2.0) + 1.0;
  return static_cast<double>(n) * c / (c + static_cast<double>(d));
}

// Score-table bytes one worker needs for a full all-edges run: n A-tables
// plus the F/R/qFR/Gamma tables and the lattice contribution buffers, all
// dense over 2^{n-k} blocks of 8-byte log scores. Process overhead (stacks,
// code, allocator slack) is not included.
inline std::uint64_t estimate_worker_table_bytes(int n, int k) {
  return (std::uint64_t{8} << (n - k)) * (static_cast<std::uint64_t>(n) + 8);
}

}  // namespace edgewise
