#pragma once

#include <bit>
#include <cassert>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace edgewise {

using mask_t = std::uint64_t;

inline int popcount(mask_t x) { return std::popcount(x); }

// All-ones mask over n bits; valid for 1 <= n <= 64.
inline mask_t full_mask(int n) {
  return n >= 64 ? ~mask_t{0} : (mask_t{1} << n) - 1;
}

// Exact binomial coefficients up to n = 64 (fits in uint64 for all r).
inline std::uint64_t choose(int n, int r) {
  static const auto table = [] {
    std::vector<std::vector<std::uint64_t>> c(65);
    for (int i = 0; i <= 64; ++i) {
      c[i].resize(i + 1);
      c[i][0] = c[i][i] = 1;
      for (int j = 1; j < i; ++j) c[i][j] = c[i - 1][j - 1] + c[i - 1][j];
    }
    return c;
  }();
  if (r < 0 || r > n) return 0;
  return table[n][r];
}

// A subset of the variable index set {0..n-1}; variable v occupies bit v.
// The mask doubles as the id of the hypercube node that owns the subset.
struct VarSet {
  mask_t bits = 0;
  int n = 0;

  VarSet() = default;
  VarSet(mask_t bits_, int n_) : bits(bits_), n(n_) {
    assert(n_ >= 1 && n_ <= 64);
    assert(bits_ <= full_mask(n_));
  }

  static VarSet empty(int n) { return VarSet(0, n); }
  static VarSet full(int n) { return VarSet(full_mask(n), n); }

  bool contains(int v) const { return bits >> v & 1; }
  VarSet with(int v) const { return VarSet(bits | mask_t{1} << v, n); }
  VarSet without(int v) const { return VarSet(bits & ~(mask_t{1} << v), n); }
  VarSet complement() const { return VarSet(~bits & full_mask(n), n); }
  int size() const { return popcount(bits); }

  std::vector<int> elements() const {
    std::vector<int> out;
    out.reserve(size());
    for (mask_t b = bits; b; b &= b - 1) out.push_back(std::countr_zero(b));
    return out;
  }

  friend bool operator==(const VarSet&, const VarSet&) = default;
};

// Every T <= base with |T| <= d, each once, ordered by ascending cardinality
// then ascending bits. Uses Gosper's hack over the compressed index space of
// base's elements; the expansion to real bit positions is monotone, so the
// numeric order survives.
inline std::vector<VarSet> subsets_upto(VarSet base, int d) {
  if (d < 0 || d > base.size()) throw std::invalid_argument("subsets_upto: bound out of range");
  const std::vector<int> pos = base.elements();
  const int b = static_cast<int>(pos.size());
  auto expand = [&](mask_t compressed) {
    mask_t out = 0;
    for (mask_t c = compressed; c; c &= c - 1) out |= mask_t{1} << pos[std::countr_zero(c)];
    return out;
  };
  std::vector<VarSet> out;
  std::uint64_t total = 0;
  for (int c = 0; c <= d; ++c) total += choose(b, c);
  out.reserve(total);
  out.emplace_back(0, base.n);
  for (int c = 1; c <= d; ++c) {
    mask_t x = (mask_t{1} << c) - 1;
    while (x < (mask_t{1} << b)) {
      out.emplace_back(expand(x), base.n);
      // Gosper: next c-bit mask in ascending numeric order.
      mask_t lo = x & -x;
      mask_t carry = x + lo;
      x = carry | ((x ^ carry) >> 2) / lo;
    }
  }
  return out;
}

// Split of an n-bit subset id into (worker id, block index) on a k-D
// hypercube. The k low bits name the worker, the n-k high bits the block.
// The mirrored form complements the worker bits; it is the layout the
// backward function lives in, so that R(S) sits where F(V-S) sits.
struct HypercubeAddress {
  std::uint32_t worker = 0;
  mask_t block = 0;
};

inline HypercubeAddress split_address(VarSet s, int k, bool mirror = false) {
  assert(k >= 0 && k <= s.n);
  mask_t low = k == 0 ? 0 : (s.bits & full_mask(k));
  if (mirror && k > 0) low = ~low & full_mask(k);
  return {static_cast<std::uint32_t>(low), s.bits >> k};
}

inline VarSet join_address(HypercubeAddress a, int n, int k, bool mirror = false) {
  mask_t low = a.worker;
  if (mirror && k > 0) low = ~low & full_mask(k);
  return VarSet(a.block << k | low, n);
}

}  // namespace edgewise
