#pragma once

// Set partitions of {0..k-1} and the moment -> cumulant inversion
//   kappa(1..k) = sum_pi (|pi|-1)! (-1)^(|pi|-1) prod_{B in pi} M_B.

#include <cstdint>
#include <functional>
#include <vector>

namespace mlve {

/// Blocks are bitmasks over {0..k-1}.
using SetPartition = std::vector<std::uint32_t>;

inline std::vector<SetPartition> set_partitions(int k) {
  std::vector<SetPartition> out;
  if (k == 0) {
    out.push_back({});
    return out;
  }
  // restricted growth strings a[0] = 0, a[i] <= 1 + max(a[0..i-1])
  std::vector<int> a(k, 0);
  std::function<void(int, int)> rec = [&](int i, int max_label) {
    if (i == k) {
      SetPartition p(max_label + 1, 0u);
      for (int t = 0; t < k; ++t) p[a[t]] |= (1u << t);
      out.push_back(std::move(p));
      return;
    }
    for (int lbl = 0; lbl <= max_label + 1; ++lbl) {
      a[i] = lbl;
      rec(i + 1, lbl > max_label ? lbl : max_label);
    }
  };
  a[0] = 0;
  rec(1, 0);
  return out;
}

/// Integer Moebius coefficient (|pi|-1)! (-1)^(|pi|-1).
inline long long moebius_coefficient(std::size_t blocks) {
  long long f = 1;
  for (std::size_t i = 2; i < blocks; ++i) f *= static_cast<long long>(i);
  return (blocks % 2 == 1) ? f : -f;
}

/// Joint cumulant from a moment table indexed by subset bitmask
/// (moments[0] is the empty moment and is not used).
template <class T>
T cumulant_from_moments(int k, const std::vector<T>& moments) {
  T total{};
  for (const auto& pi : set_partitions(k)) {
    T prod = T(static_cast<double>(moebius_coefficient(pi.size())));
    for (auto block : pi) prod = prod * moments[block];
    total = total + prod;
  }
  return total;
}

}  // namespace mlve
