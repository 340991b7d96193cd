#include "neighbors.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace gridsweep::md::detail {

namespace {

std::vector<Pair> all_pairs(const Box& box, std::span<const Vec3> pos, double c2) {
  std::vector<Pair> out;
  const auto n = static_cast<std::uint32_t>(pos.size());
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = i + 1; j < n; ++j)
      if (box.minimum_image(pos[i] - pos[j]).norm2() < c2) out.emplace_back(i, j);
  return out;
}

}  // namespace

std::vector<Pair> find_pairs(const Box& box, std::span<const Vec3> pos, double cutoff) {
  const double c2 = cutoff * cutoff;
  if (pos.size() < 64) return all_pairs(box, pos, c2);

  std::array<int, 3> ncell{};
  std::array<double, 3> lo{}, width{};
  for (int a = 0; a < 3; ++a) {
    double extent;
    if (box.periodic(a)) {
      lo[a] = 0.0;
      extent = box.length[a];
      ncell[a] = static_cast<int>(std::floor(extent / cutoff));
      if (ncell[a] < 3) return all_pairs(box, pos, c2);
    } else {
      auto [mn, mx] = std::minmax_element(pos.begin(), pos.end(),
                                          [a](const Vec3& p, const Vec3& q) { return p[a] < q[a]; });
      lo[a] = (*mn)[a];
      extent = (*mx)[a] - lo[a];
      ncell[a] = std::max(1, static_cast<int>(std::floor(extent / cutoff)));
    }
    width[a] = extent > 0.0 ? extent / ncell[a] : 1.0;
  }

  auto coord = [&](const Vec3& p, int a) {
    const int c = static_cast<int>(std::floor((p[a] - lo[a]) / width[a]));
    return std::clamp(c, 0, ncell[a] - 1);
  };
  const std::size_t total = static_cast<std::size_t>(ncell[0]) * ncell[1] * ncell[2];
  auto flat = [&](int cx, int cy, int cz) {
    return (static_cast<std::size_t>(cx) * ncell[1] + cy) * ncell[2] + cz;
  };

  // Counting sort of atoms into cells.
  std::vector<std::uint32_t> start(total + 1, 0), cell_of(pos.size()), order(pos.size());
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const Vec3 p = box.wrap(pos[i]);
    cell_of[i] = static_cast<std::uint32_t>(flat(coord(p, 0), coord(p, 1), coord(p, 2)));
    ++start[cell_of[i] + 1];
  }
  for (std::size_t c = 0; c < total; ++c) start[c + 1] += start[c];
  {
    std::vector<std::uint32_t> fill(start.begin(), start.end() - 1);
    for (std::size_t i = 0; i < pos.size(); ++i) order[fill[cell_of[i]]++] = static_cast<std::uint32_t>(i);
  }

  std::vector<Pair> out;
  for (int cx = 0; cx < ncell[0]; ++cx)
    for (int cy = 0; cy < ncell[1]; ++cy)
      for (int cz = 0; cz < ncell[2]; ++cz) {
        const std::size_t here = flat(cx, cy, cz);
        for (int dx = -1; dx <= 1; ++dx)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dz = -1; dz <= 1; ++dz) {
              std::array<int, 3> nc{cx + dx, cy + dy, cz + dz};
              bool skip = false;
              for (int a = 0; a < 3; ++a) {
                if (nc[a] >= 0 && nc[a] < ncell[a]) continue;
                if (box.periodic(a))
                  nc[a] = (nc[a] + ncell[a]) % ncell[a];
                else
                  skip = true;
              }
              if (skip) continue;
              const std::size_t there = flat(nc[0], nc[1], nc[2]);
              for (auto ii = start[here]; ii < start[here + 1]; ++ii)
                for (auto jj = start[there]; jj < start[there + 1]; ++jj) {
                  const auto i = order[ii], j = order[jj];
                  if (i < j && box.minimum_image(pos[i] - pos[j]).norm2() < c2) out.emplace_back(i, j);
                }
            }
      }
  return out;
}

}  // namespace gridsweep::md::detail
