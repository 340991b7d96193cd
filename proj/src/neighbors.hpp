#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "gridsweep/md.hpp"

namespace gridsweep::md::detail {

using Pair = std::pair<std::uint32_t, std::uint32_t>;

/// All pairs (i < j) closer than `cutoff` under the box's minimum image.
/// Bins into cells when every periodic axis holds at least three of them,
/// otherwise falls back to the all-pairs loop.
std::vector<Pair> find_pairs(const Box& box, std::span<const Vec3> positions, double cutoff);

}  // namespace gridsweep::md::detail
