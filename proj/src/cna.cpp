#include <algorithm>
#include <array>

#include <fmt/format.h>

#include "gridsweep/error.hpp"
#include "gridsweep/md.hpp"
#include "neighbors.hpp"

namespace gridsweep::md {

const char* to_string(Structure s) {
  switch (s) {
    case Structure::fcc: return "FCC";
    case Structure::hcp: return "HCP";
    case Structure::unk: return "UNK";
  }
  return "UNK";
}

namespace {

bool bonded(const std::vector<std::uint32_t>& sorted_nbrs, std::uint32_t j) {
  return std::binary_search(sorted_nbrs.begin(), sorted_nbrs.end(), j);
}

// Bonds in the largest bond-connected cluster.
int longest_chain(const std::vector<std::array<int, 2>>& bonds) {
  const int nb = static_cast<int>(bonds.size());
  std::vector<int> group(static_cast<std::size_t>(nb));
  for (int b = 0; b < nb; ++b) group[static_cast<std::size_t>(b)] = b;
  auto find = [&](int b) {
    while (group[static_cast<std::size_t>(b)] != b) b = group[static_cast<std::size_t>(b)];
    return b;
  };
  for (int p = 0; p < nb; ++p)
    for (int q = p + 1; q < nb; ++q) {
      const auto& s = bonds[static_cast<std::size_t>(p)];
      const auto& t = bonds[static_cast<std::size_t>(q)];
      if (s[0] == t[0] || s[0] == t[1] || s[1] == t[0] || s[1] == t[1])
        group[static_cast<std::size_t>(find(q))] = find(p);
    }
  std::vector<int> size(static_cast<std::size_t>(nb), 0);
  int best = 0;
  for (int b = 0; b < nb; ++b) best = std::max(best, ++size[static_cast<std::size_t>(find(b))]);
  return best;
}

}  // namespace

std::vector<Structure> cna_labels(const Crystal& crystal, double cutoff) {
  if (!(cutoff > 0.0)) throw ParameterError("CNA cutoff must be positive");
  for (int a = 0; a < 3; ++a)
    if (crystal.box.periodic(a) && crystal.box.length[a] <= 2.0 * cutoff)
      throw ParameterError(fmt::format("periodic box length {} is not above twice the CNA cutoff",
                                       crystal.box.length[a]));

  const std::size_t n = crystal.size();
  std::vector<std::vector<std::uint32_t>> nbrs(n);
  for (const auto& [i, j] : detail::find_pairs(crystal.box, crystal.positions, cutoff)) {
    nbrs[i].push_back(j);
    nbrs[j].push_back(i);
  }
  for (auto& v : nbrs) std::sort(v.begin(), v.end());

  std::vector<Structure> labels(n, Structure::unk);
  std::vector<std::uint32_t> common;
  std::vector<std::array<int, 2>> bonds;
  for (std::size_t i = 0; i < n; ++i) {
    if (nbrs[i].size() != 12) continue;
    int n421 = 0, n422 = 0;
    for (const std::uint32_t j : nbrs[i]) {
      common.clear();
      std::set_intersection(nbrs[i].begin(), nbrs[i].end(), nbrs[j].begin(), nbrs[j].end(),
                            std::back_inserter(common));
      if (common.size() != 4) break;
      bonds.clear();
      for (int p = 0; p < 4; ++p)
        for (int q = p + 1; q < 4; ++q)
          if (bonded(nbrs[common[static_cast<std::size_t>(p)]], common[static_cast<std::size_t>(q)]))
            bonds.push_back({p, q});
      if (bonds.size() != 2) break;
      const int chain = longest_chain(bonds);
      if (chain == 1) ++n421;
      else ++n422;
    }
    if (n421 == 12) labels[i] = Structure::fcc;
    else if (n421 == 6 && n422 == 6) labels[i] = Structure::hcp;
  }
  return labels;
}

Concentrations defect_concentrations(std::span<const Structure> labels, std::span<const Grip> grip) {
  if (labels.size() != grip.size())
    throw ParameterError(fmt::format("{} labels for {} atoms", labels.size(), grip.size()));
  Concentrations c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (grip[i] != Grip::none) continue;
    switch (labels[i]) {
      case Structure::fcc: ++c.n_fcc; break;
      case Structure::hcp: ++c.n_hcp; break;
      case Structure::unk: ++c.n_unk; break;
    }
  }
  if (c.counted() == 0) throw ParameterError("no free atoms to classify");
  return c;
}

}  // namespace gridsweep::md
