#pragma once

#include <cstdint>
#include <vector>

#include "correctorlab/errors.hpp"

namespace clab {

/// A set partition, blocks listed in order of their smallest element,
/// elements 0-based ascending within each block.
using Partition = std::vector<std::vector<int>>;

/// All set partitions of {0,...,L-1}, enumerated via restricted-growth
/// strings in lexicographic order. Capped at L = 6.
inline std::vector<Partition> partitions(int L) {
  if (L < 1) throw Error("partition order must be >= 1");
  if (L > 6) throw OrderTooLarge(L);
  std::vector<Partition> out;
  std::vector<int> rgs(static_cast<std::size_t>(L), 0);
  const auto emit = [&] {
    int blocks = 0;
    for (int v : rgs) blocks = std::max(blocks, v + 1);
    Partition p(static_cast<std::size_t>(blocks));
    for (int i = 0; i < L; ++i) p[static_cast<std::size_t>(rgs[static_cast<std::size_t>(i)])].push_back(i);
    out.push_back(std::move(p));
  };
  // Lexicographic successor of a restricted-growth string.
  while (true) {
    emit();
    int i = L - 1;
    for (; i >= 1; --i) {
      int max_prefix = 0;
      for (int j = 0; j < i; ++j) max_prefix = std::max(max_prefix, rgs[static_cast<std::size_t>(j)]);
      if (rgs[static_cast<std::size_t>(i)] <= max_prefix) break;
    }
    if (i < 1) break;
    ++rgs[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < L; ++j) rgs[static_cast<std::size_t>(j)] = 0;
  }
  return out;
}

/// Partitions of the set bits of `mask` (positions kept as in the mask),
/// excluding the one-block partition when `proper_only` is set.
inline std::vector<std::vector<std::uint32_t>> partitions_of_mask(std::uint32_t mask,
                                                                  bool proper_only) {
  std::vector<int> positions;
  for (int b = 0; b < 32; ++b)
    if (mask & (1u << b)) positions.push_back(b);
  const int m = static_cast<int>(positions.size());
  std::vector<std::vector<std::uint32_t>> out;
  for (const Partition& p : partitions(m)) {
    if (proper_only && p.size() == 1) continue;
    std::vector<std::uint32_t> blocks;
    blocks.reserve(p.size());
    for (const auto& block : p) {
      std::uint32_t bm = 0;
      for (int pos : block) bm |= 1u << positions[static_cast<std::size_t>(pos)];
      blocks.push_back(bm);
    }
    out.push_back(std::move(blocks));
  }
  return out;
}

}  // namespace clab
