#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "gridsweep/error.hpp"
#include "gridsweep/md.hpp"
#include "gridsweep/rng.hpp"

using namespace gridsweep;
using namespace gridsweep::md;

namespace {

const LennardJones kLj;
const double kA = equilibrium_lattice_constant(kLj);

Crystal periodic_fcc(int n, double temperature = 0.0, std::uint64_t seed = 1) {
  Crystal c = build_crystal(n, n, n, kA, temperature, seed, 0);
  make_fully_periodic(c);
  return c;
}

Vec3 momentum(const Crystal& c) {
  Vec3 p;
  for (const auto& v : c.velocities) p += v;
  return p;
}

double max_displacement(const Crystal& a, const Crystal& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, a.box.minimum_image(a.positions[i] - b.positions[i]).norm());
  return m;
}

// Per-atom energy of a perfect FCC lattice, summed directly over lattice sites.
double lattice_energy(double a) {
  double e = 0.0;
  for (int i = -6; i <= 6; ++i)
    for (int j = -6; j <= 6; ++j)
      for (int k = -6; k <= 6; ++k) {
        if ((i + j + k) % 2 != 0 || (i == 0 && j == 0 && k == 0)) continue;
        e += 0.5 * kLj.energy(0.25 * a * a * (i * i + j * j + k * k));
      }
  return e;
}

// Random rotation from a normalized quaternion.
std::array<Vec3, 3> random_rotation(Rng& rng) {
  double q[4];
  double n = 0.0;
  for (double& x : q) {
    x = rng.normal();
    n += x * x;
  }
  for (double& x : q) x /= std::sqrt(n);
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  return {Vec3{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
          Vec3{2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
          Vec3{2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}};
}

// CNA signature of one site computed from scratch: neighbour sets by direct
// distance test, then common neighbours, bonds among them and the bond
// cluster sizes by repeated merging.
std::multiset<std::array<int, 3>> site_signatures(const Crystal& c, std::size_t i, double rc) {
  auto nb = [&](std::size_t p, std::size_t q) {
    return p != q && c.box.minimum_image(c.positions[p] - c.positions[q]).norm() < rc;
  };
  std::vector<std::size_t> ni;
  for (std::size_t j = 0; j < c.size(); ++j)
    if (nb(i, j)) ni.push_back(j);
  std::multiset<std::array<int, 3>> sigs;
  for (std::size_t j : ni) {
    std::vector<std::size_t> common;
    for (std::size_t k : ni)
      if (nb(j, k)) common.push_back(k);
    std::vector<std::pair<std::size_t, std::size_t>> bonds;
    for (std::size_t p = 0; p < common.size(); ++p)
      for (std::size_t q = p + 1; q < common.size(); ++q)
        if (nb(common[p], common[q])) bonds.emplace_back(common[p], common[q]);
    // Largest set of bonds connected through shared atoms.
    std::vector<std::set<std::size_t>> clusters;
    std::vector<int> cluster_bonds;
    for (const auto& [u, v] : bonds) {
      std::set<std::size_t> merged{u, v};
      int count = 1;
      for (std::size_t k = clusters.size(); k-- > 0;) {
        if (clusters[k].count(u) || clusters[k].count(v)) {
          merged.insert(clusters[k].begin(), clusters[k].end());
          count += cluster_bonds[k];
          clusters.erase(clusters.begin() + static_cast<long>(k));
          cluster_bonds.erase(cluster_bonds.begin() + static_cast<long>(k));
        }
      }
      clusters.push_back(merged);
      cluster_bonds.push_back(count);
    }
    const int longest = cluster_bonds.empty() ? 0 : *std::max_element(cluster_bonds.begin(), cluster_bonds.end());
    sigs.insert({static_cast<int>(common.size()), static_cast<int>(bonds.size()), longest});
  }
  return sigs;
}

long long count(const std::vector<Structure>& labels, Structure s) {
  return std::count(labels.begin(), labels.end(), s);
}

}  // namespace

TEST_CASE("lattice constant is the zero-pressure point") {
  // Near 2^(1/6) sqrt(2) sigma, lowered slightly by the attractive tail.
  CHECK(kA > 1.50);
  CHECK(kA < 1.5874);
  const double h = 1e-5;
  const double slope = (lattice_energy(kA + h) - lattice_energy(kA - h)) / (2 * h);
  CHECK(std::abs(slope) < 1e-6);
  CHECK(lattice_energy(kA) < lattice_energy(kA + 0.01));
  CHECK(lattice_energy(kA) < lattice_energy(kA - 0.01));
}

TEST_CASE("truncated-shifted pair potential") {
  CHECK(kLj.energy(2.5 * 2.5) == 0.0);
  CHECK(kLj.energy(3.0 * 3.0) == 0.0);
  CHECK(kLj.force_over_r(3.0 * 3.0) == 0.0);
  const double rmin = std::pow(2.0, 1.0 / 6.0);
  CHECK(std::abs(kLj.force_over_r(rmin * rmin)) < 1e-12);
  CHECK(kLj.force_over_r(0.9 * 0.9) > 0.0);  // repulsive inside the minimum
  CHECK(kLj.force_over_r(1.5 * 1.5) < 0.0);
  // Force is minus the numerical slope of the energy.
  const double r = 1.3, h = 1e-6;
  const double slope = (kLj.energy((r + h) * (r + h)) - kLj.energy((r - h) * (r - h))) / (2 * h);
  CHECK(kLj.force_over_r(r * r) * r == doctest::Approx(-slope).epsilon(1e-7));
}

TEST_CASE("build_crystal") {
  CHECK(build_crystal(2, 2, 2, kA, 0.0, 1).size() == 32);

  const Crystal cold = build_crystal(3, 5, 3, kA, 0.0, 1);
  for (const auto& v : cold.velocities) CHECK(v == Vec3{});

  const Crystal warm = build_crystal(4, 4, 4, kA, 0.5, 42);
  CHECK(momentum(warm).norm() < 1e-12);

  for (const Crystal* c : {&cold, &warm})
    for (const auto& p : c->positions) {
      CHECK(p.x >= 0.0);
      CHECK(p.x < c->box.length.x);
      CHECK(p.z >= 0.0);
      CHECK(p.z < c->box.length.z);
    }

  CHECK_THROWS_AS(build_crystal(1, 4, 4, kA, 0.0, 1), ParameterError);
  CHECK_THROWS_AS(build_crystal(4, 4, 4, -1.0, 0.0, 1), ParameterError);
  CHECK_THROWS_AS(build_crystal(4, 4, 4, kA, -0.1, 1), ParameterError);
}

TEST_CASE("grips and temperature") {
  const Crystal c = build_crystal(4, 6, 4, kA, 0.02, 9);
  const auto bottom = std::count(c.grip.begin(), c.grip.end(), Grip::bottom);
  const auto top = std::count(c.grip.begin(), c.grip.end(), Grip::top);
  CHECK(bottom == 4 * 4 * 2 * 4);
  CHECK(top == bottom);
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.grip[i] == Grip::bottom) CHECK(c.positions[i].y < 2 * kA);
    if (c.grip[i] == Grip::top) CHECK(c.positions[i].y > 4 * kA);
    if (c.grip[i] != Grip::none) CHECK(c.velocities[i] == Vec3{});
  }
  // Kinetic temperature of the free atoms equals the target.
  double k = 0.0;
  std::size_t n_free = 0;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (c.grip[i] == Grip::none) k += 0.5 * c.velocities[i].norm2(), ++n_free;
  CHECK(2.0 * k / (3.0 * static_cast<double>(n_free) - 3.0) == doctest::Approx(0.02).epsilon(1e-12));

  // Too short for two grips: none marked.
  const Crystal short_c = build_crystal(4, 4, 4, kA, 0.0, 1);
  CHECK_FALSE(short_c.has_grips());
}

TEST_CASE("0 K lattice at rest stays put") {
  MDParams p;
  p.strain_rate = 0.0;
  const Crystal start = build_crystal(4, 6, 4, kA, 0.0, 1);
  Crystal c = start;
  for (int s = 0; s < 100; ++s) c = integrate_step(c, p);
  CHECK(max_displacement(start, c) < 1e-8);

  Crystal bulk = periodic_fcc(4);
  const Crystal bulk0 = bulk;
  for (int s = 0; s < 100; ++s) bulk = integrate_step(bulk, p);
  CHECK(max_displacement(bulk0, bulk) < 1e-8);
}

TEST_CASE("two-atom oscillation period converges") {
  auto period = [](double dt) {
    Crystal c;
    c.box.length = {100, 100, 100};
    c.box.boundary = {Boundary::free, Boundary::free, Boundary::free};
    const double r0 = std::pow(2.0, 1.0 / 6.0) * 1.02;
    c.positions = {{50, 50, 50}, {50 + r0, 50, 50}};
    c.velocities.assign(2, Vec3{});
    c.grip.assign(2, Grip::none);
    Integrator integ(c, kLj, dt);
    // Turning points at maximal separation: relative velocity crosses zero downward.
    std::vector<double> turns;
    double prev = 0.0, t = 0.0;
    while (turns.size() < 3) {
      integ.step();
      t += dt;
      const double v = integ.state().velocities[1].x - integ.state().velocities[0].x;
      if (prev > 0.0 && v <= 0.0) turns.push_back(t - dt * v / (v - prev));
      prev = v;
    }
    return 0.5 * (turns[2] - turns[0]);
  };
  const double coarse = period(0.005);
  const double fine = period(0.005 / 100);
  CHECK(std::abs(coarse / fine - 1.0) < 1e-3);
  // Near the harmonic period 2 pi / sqrt(k / mu), k = 57.15, mu = 1/2.
  CHECK(fine == doctest::Approx(2 * M_PI / std::sqrt(2 * 57.146)).epsilon(0.05));
}

TEST_CASE("NVE conservation") {
  SUBCASE("bulk") {
    Integrator integ(periodic_fcc(4, 0.1, 3), kLj, 0.005);
    const double e0 = integ.total_energy();
    const Vec3 p0 = integ.momentum();
    for (int s = 0; s < 1000; ++s) integ.step();
    CHECK(std::abs((integ.total_energy() - e0) / e0) < 1e-4);
    CHECK((integ.momentum() - p0).norm() < 1e-10);
  }
  SUBCASE("static grips") {
    Integrator integ(build_crystal(4, 6, 4, kA, 0.05, 8), kLj, 0.005);
    const double e0 = integ.total_energy();
    for (int s = 0; s < 1000; ++s) integ.step();
    CHECK(std::abs((integ.total_energy() - e0) / e0) < 1e-4);
  }
}

TEST_CASE("atoms too close blow up") {
  Crystal c;
  c.box.length = {20, 20, 20};
  c.box.boundary = {Boundary::free, Boundary::free, Boundary::free};
  c.positions = {{5, 5, 5}, {5.45, 5, 5}};
  c.velocities.assign(2, Vec3{});
  c.grip.assign(2, Grip::none);
  CHECK_THROWS_AS(integrate_step(c, MDParams{}), MdBlowUp);

  MDParams p;
  p.dt = 0.2;  // far too coarse
  p.target_strain = 0.1;
  p.temperature = 0.5;
  try {
    run_tensile(p, Geometry{}, 1);
    FAIL("no blow-up");
  } catch (const MdBlowUp& e) {
    CHECK(std::isfinite(e.strain()));
    CHECK(e.strain() >= 0.0);
    CHECK(e.strain() <= p.target_strain);
  }
}

TEST_CASE("box smaller than the neighbour list") {
  Crystal c = build_crystal(2, 6, 4, kA, 0.0, 1);
  CHECK_THROWS_AS(Integrator(c, kLj, 0.005), ParameterError);
}

TEST_CASE("CNA on perfect lattices") {
  const Crystal fcc = periodic_fcc(4);
  const auto labels = cna_labels(fcc, 0.854 * kA);
  CHECK(count(labels, Structure::fcc) == static_cast<long long>(fcc.size()));

  const Crystal hcp = build_hcp(4, 3, 3, kA / std::sqrt(2.0));
  const auto hl = cna_labels(hcp, 0.854 * kA);
  CHECK(count(hl, Structure::hcp) == static_cast<long long>(hcp.size()));

  std::multiset<std::array<int, 3>> expected_hcp;
  for (int k = 0; k < 6; ++k) expected_hcp.insert({4, 2, 1}), expected_hcp.insert({4, 2, 2});
  CHECK(site_signatures(hcp, 7, 0.854 * kA) == expected_hcp);
  std::multiset<std::array<int, 3>> expected_fcc;
  for (int k = 0; k < 12; ++k) expected_fcc.insert({4, 2, 1});
  CHECK(site_signatures(fcc, 11, 0.854 * kA) == expected_fcc);
}

TEST_CASE("CNA edge cases") {
  Crystal lone;
  lone.box.length = {10, 10, 10};
  lone.box.boundary = {Boundary::free, Boundary::free, Boundary::free};
  lone.positions = {{1, 1, 1}};
  lone.velocities.assign(1, Vec3{});
  lone.grip.assign(1, Grip::none);
  CHECK(cna_labels(lone, 1.3) == std::vector<Structure>{Structure::unk});

  // Free surfaces of a finite block are not FCC.
  Crystal block = build_crystal(3, 3, 3, kA, 0.0, 1, 0);
  block.box.boundary = {Boundary::free, Boundary::free, Boundary::free};
  const auto l = cna_labels(block, 0.854 * kA);
  CHECK(count(l, Structure::unk) > 0);
  CHECK(count(l, Structure::fcc) > 0);

  CHECK_THROWS_AS(cna_labels(periodic_fcc(4), 0.0), ParameterError);
}

TEST_CASE("CNA is invariant under rigid motion") {
  Crystal c = build_crystal(5, 5, 5, kA, 0.0, 1, 0);
  c.box.boundary = {Boundary::free, Boundary::free, Boundary::free};
  Rng rng(2024);
  for (auto& p : c.positions) p += Vec3{0.01 * rng.normal(), 0.01 * rng.normal(), 0.01 * rng.normal()};
  const auto ref = cna_labels(c, 0.854 * kA);
  CHECK(count(ref, Structure::fcc) > 0);
  CHECK(count(ref, Structure::unk) > 0);
  for (int r = 0; r < 10; ++r) {
    const auto m = random_rotation(rng);
    const Vec3 shift{rng.normal() * 10, rng.normal() * 10, rng.normal() * 10};
    Crystal moved = c;
    for (auto& p : moved.positions) p = Vec3{m[0].dot(p), m[1].dot(p), m[2].dot(p)} + shift;
    CHECK(cna_labels(moved, 0.854 * kA) == ref);
  }

  // Periodic translation with wrap.
  Crystal bulk = periodic_fcc(4, 0.0);
  for (auto& p : bulk.positions) p = bulk.box.wrap(p + Vec3{0.37, -1.91, 2.2});
  CHECK(count(cna_labels(bulk, 0.854 * kA), Structure::fcc) == static_cast<long long>(bulk.size()));
}

TEST_CASE("defect concentrations") {
  using S = Structure;
  const std::vector<S> all_fcc(5, S::fcc);
  const std::vector<Grip> none(5, Grip::none);
  auto c = defect_concentrations(all_fcc, none);
  CHECK(c.fcc() == 1.0);
  CHECK(c.hcp() == 0.0);
  CHECK(c.unk() == 0.0);

  const std::vector<S> mixed{S::fcc, S::fcc, S::hcp, S::unk};
  std::vector<Grip> g(4, Grip::none);
  c = defect_concentrations(mixed, g);
  CHECK(c.fcc() == 0.5);
  CHECK(c.hcp() == 0.25);
  CHECK(c.unk() == 0.25);

  g[0] = Grip::bottom;
  c = defect_concentrations(mixed, g);
  CHECK(c.n_fcc == 1);
  CHECK(c.n_hcp == 1);
  CHECK(c.n_unk == 1);
  CHECK(c.fcc() == doctest::Approx(1.0 / 3.0));
  CHECK(c.counted() == 3);

  CHECK_THROWS_AS(defect_concentrations(mixed, std::vector<Grip>(4, Grip::top)), ParameterError);
  CHECK_THROWS_AS(defect_concentrations(mixed, std::vector<Grip>(3, Grip::none)), ParameterError);
}

TEST_CASE("grip stress") {
  const Crystal rest = build_crystal(4, 6, 4, kA, 0.0, 1);
  CHECK(std::abs(grip_stress(rest, kLj)) < 1e-6);

  // Under a uniform stretch the grips are thicker than the cutoff, so every
  // pair across the top interface sees bulk surroundings: the traction must
  // equal the homogeneous stress dU/dL / A of the same stretch in a box that
  // is periodic along y as well.
  auto stretched = [&](double eps) {
    Crystal c = rest;
    for (auto& p : c.positions) p.y *= 1.0 + eps;
    c.box.length.y *= 1.0 + eps;
    return c;
  };
  auto bulk = [&](double eps) {
    Crystal c = stretched(eps);
    make_fully_periodic(c);
    return c;
  };
  const double area = rest.box.length.x * rest.box.length.z;
  const double length = rest.box.length.y;
  for (double eps : {0.004, -0.004, 0.02}) {
    const double h = 1e-5;
    const double dudl =
        (potential_energy(bulk(eps + h), kLj) - potential_energy(bulk(eps - h), kLj)) / (2 * h * length);
    const double sigma = grip_stress(stretched(eps), kLj);
    CHECK((eps > 0 ? sigma > 0.0 : sigma < 0.0));
    CHECK(sigma == doctest::Approx(dudl / area).epsilon(1e-5));
  }
}

TEST_CASE("tensile run") {
  MDParams p;
  SUBCASE("zero target gives one clean record") {
    p.target_strain = 0.0;
    const auto r = run_tensile(p, Geometry{}, 3);
    REQUIRE(r.size() == 1);
    CHECK(r[0].strain == 0.0);
    CHECK(r[0].c_hcp == 0.0);
    CHECK(r[0].c_unk == 0.0);
    CHECK(r[0].c_fcc == 1.0);
  }
  SUBCASE("checkpoint grid and defect nucleation") {
    const auto r = run_tensile(p, Geometry{4, 6, 4, 2}, 5);
    REQUIRE(r.size() == 21);
    for (std::size_t k = 0; k < r.size(); ++k) {
      CHECK(r[k].strain == doctest::Approx(0.01 * static_cast<double>(k)).epsilon(1e-12));
      if (k > 0) CHECK(r[k].strain > r[k - 1].strain);
      CHECK(r[k].c_fcc + r[k].c_hcp + r[k].c_unk == doctest::Approx(1.0).epsilon(1e-15));
    }
    CHECK(r.back().c_unk > 0.0);
    CHECK(r[3].sigma_top > r[0].sigma_top);  // elastic loading raises the traction
  }
  SUBCASE("a target off the grid still lands") {
    p.target_strain = 0.025;
    const auto r = run_tensile(p, Geometry{}, 5);
    REQUIRE(r.size() == 4);
    CHECK(r.back().strain == 0.025);
  }
}

TEST_CASE("doubling nx keeps the grid and a clean start") {
  MDParams p;
  p.target_strain = 0.02;
  const auto small = run_tensile(p, Geometry{4, 6, 4, 2}, 1);
  const auto wide = run_tensile(p, Geometry{8, 6, 4, 2}, 1);
  REQUIRE(small.size() == wide.size());
  for (std::size_t k = 0; k < small.size(); ++k) CHECK(small[k].strain == wide[k].strain);
  CHECK(small[0].c_unk == 0.0);
  CHECK(wide[0].c_unk == 0.0);
}

TEST_CASE("seeded runs are reproducible") {
  MDParams p;
  p.target_strain = 0.02;
  std::ostringstream a, b, c;
  write_records_csv(a, run_tensile(p, Geometry{}, 11));
  write_records_csv(b, run_tensile(p, Geometry{}, 11));
  write_records_csv(c, run_tensile(p, Geometry{}, 12));
  CHECK(a.str() == b.str());
  CHECK(a.str() != c.str());
  CHECK(a.str().starts_with("strain,c_fcc,c_hcp,c_unk,sigma_top,energy\n"));

  std::istringstream in(a.str());
  const auto back = read_records_csv(in);
  std::ostringstream again;
  write_records_csv(again, back);
  CHECK(again.str() == a.str());
}

TEST_CASE("parameter validation") {
  MDParams p;
  p.dt = 0.0;
  CHECK_THROWS_AS(p.validate(), ParameterError);
  p = MDParams{};
  p.potential.cutoff = 0.9;
  CHECK_THROWS_AS(p.validate(), ParameterError);
  p = MDParams{};
  p.target_strain = 1.5;
  CHECK_THROWS_AS(p.validate(), ParameterError);
  p = MDParams{};
  CHECK_THROWS_AS(run_tensile(p, Geometry{4, 4, 4, 2}, 1), ParameterError);  // no free layer
  CHECK_THROWS_AS(run_tensile(p, Geometry{1, 6, 4, 2}, 1), ParameterError);
}
