#include "gridsweep/md.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include <fmt/format.h>

#include "gridsweep/error.hpp"
#include "gridsweep/io.hpp"
#include "gridsweep/rng.hpp"
#include "neighbors.hpp"

namespace gridsweep::md {

using namespace gridsweep::io;

Vec3 Box::minimum_image(Vec3 d) const {
  for (int a = 0; a < 3; ++a)
    if (periodic(a)) d[a] -= length[a] * std::round(d[a] / length[a]);
  return d;
}

Vec3 Box::wrap(Vec3 p) const {
  for (int a = 0; a < 3; ++a)
    if (periodic(a)) {
      p[a] -= length[a] * std::floor(p[a] / length[a]);
      if (p[a] >= length[a]) p[a] = 0.0;  // -tiny wraps to exactly L
    }
  return p;
}

bool Crystal::has_grips() const {
  return std::any_of(grip.begin(), grip.end(), [](Grip g) { return g != Grip::none; });
}

namespace {

std::size_t count_free(const Crystal& c) {
  return static_cast<std::size_t>(std::count(c.grip.begin(), c.grip.end(), Grip::none));
}

double free_kinetic(const Crystal& c) {
  double k = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (c.grip[i] == Grip::none) k += 0.5 * c.velocities[i].norm2();
  return k;
}

// Degrees of freedom of the free atoms once net momentum is removed.
double free_dof(std::size_t n_free) {
  return n_free > 1 ? 3.0 * static_cast<double>(n_free) - 3.0 : 0.0;
}

void set_temperature(Crystal& c, double temperature) {
  const double dof = free_dof(count_free(c));
  const double k = free_kinetic(c);
  if (dof <= 0.0 || k <= 0.0) return;
  const double scale = std::sqrt(0.5 * dof * temperature / k);
  for (std::size_t i = 0; i < c.size(); ++i)
    if (c.grip[i] == Grip::none) c.velocities[i] *= scale;
}

void check_dims(int nx, int ny, int nz, int minimum) {
  if (nx < minimum || ny < minimum || nz < minimum)
    throw ParameterError(fmt::format("crystal dimensions must be at least {}, got {}x{}x{}", minimum,
                                     nx, ny, nz));
}

}  // namespace

Crystal build_crystal(int nx, int ny, int nz, double a, double temperature, std::uint64_t seed,
                      int grip_layers) {
  check_dims(nx, ny, nz, 2);
  if (!(a > 0.0) || !std::isfinite(a)) throw ParameterError("lattice constant must be positive");
  if (!(temperature >= 0.0) || !std::isfinite(temperature))
    throw ParameterError("temperature must be non-negative");
  if (grip_layers < 0) throw ParameterError("grip layers must be non-negative");

  static constexpr Vec3 kBasis[4] = {{0, 0, 0}, {0.5, 0.5, 0}, {0.5, 0, 0.5}, {0, 0.5, 0.5}};
  const bool gripped = grip_layers > 0 && ny > 2 * grip_layers;

  Crystal c;
  c.lattice_constant = a;
  c.box.length = {nx * a, ny * a, nz * a};
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      for (int k = 0; k < nz; ++k)
        for (const Vec3& b : kBasis) {
          c.positions.push_back({(i + b.x + 0.25) * a, (j + b.y + 0.25) * a, (k + b.z + 0.25) * a});
          Grip g = Grip::none;
          if (gripped && j < grip_layers) g = Grip::bottom;
          if (gripped && j >= ny - grip_layers) g = Grip::top;
          c.grip.push_back(g);
        }

  c.velocities.assign(c.size(), Vec3{});
  const std::size_t n_free = count_free(c);
  if (temperature > 0.0 && n_free > 1) {
    Rng rng(seed);
    Vec3 p;
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (c.grip[i] != Grip::none) continue;
      c.velocities[i] = {rng.normal(), rng.normal(), rng.normal()};
      p += c.velocities[i];
    }
    p *= 1.0 / static_cast<double>(n_free);
    for (std::size_t i = 0; i < c.size(); ++i)
      if (c.grip[i] == Grip::none) c.velocities[i] -= p;
    set_temperature(c, temperature);
  }
  return c;
}

Crystal build_hcp(int nx, int ny, int nz, double d) {
  check_dims(nx, ny, nz, 1);
  if (!(d > 0.0)) throw ParameterError("nearest-neighbour distance must be positive");
  const double b = std::sqrt(3.0) * d;
  const double h = std::sqrt(8.0 / 3.0) * d;
  // Orthohexagonal cell: two A-layer and two B-layer atoms.
  const Vec3 basis[4] = {{0, 0, 0}, {0.5 * d, 0.5 * b, 0}, {0.5 * d, b / 6.0, 0.5 * h},
                         {0, b * 2.0 / 3.0, 0.5 * h}};
  Crystal c;
  c.lattice_constant = std::sqrt(2.0) * d;  // FCC cube edge with the same spacing
  c.box.length = {nx * d, ny * b, nz * h};
  c.box.boundary = {Boundary::periodic, Boundary::periodic, Boundary::periodic};
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      for (int k = 0; k < nz; ++k)
        for (const Vec3& s : basis) c.positions.push_back(Vec3{i * d, j * b, k * h} + s);
  c.velocities.assign(c.size(), Vec3{});
  c.grip.assign(c.size(), Grip::none);
  return c;
}

void make_fully_periodic(Crystal& crystal) {
  crystal.box.boundary = {Boundary::periodic, Boundary::periodic, Boundary::periodic};
  std::fill(crystal.grip.begin(), crystal.grip.end(), Grip::none);
}

double LennardJones::energy(double r2) const {
  const double rc2 = cutoff * cutoff;
  if (r2 >= rc2) return 0.0;
  auto raw = [this](double q2) {
    const double s2 = sigma * sigma / q2;
    const double s6 = s2 * s2 * s2;
    return 4.0 * epsilon * (s6 * s6 - s6);
  };
  return raw(r2) - raw(rc2);
}

double LennardJones::force_over_r(double r2) const {
  if (r2 >= cutoff * cutoff) return 0.0;
  const double s2 = sigma * sigma / r2;
  const double s6 = s2 * s2 * s2;
  return 24.0 * epsilon * (2.0 * s6 * s6 - s6) / r2;
}

double equilibrium_lattice_constant(const LennardJones& pot) {
  // Virial sum_j r_j * F(r_j) over one atom's FCC neighbours; zero at zero pressure.
  auto virial = [&pot](double a) {
    const double rc = pot.cutoff;
    const int m = static_cast<int>(std::ceil(2.0 * rc / a)) + 1;
    double w = 0.0;
    for (int i = -m; i <= m; ++i)
      for (int j = -m; j <= m; ++j)
        for (int k = -m; k <= m; ++k) {
          if ((i + j + k) % 2 != 0 || (i == 0 && j == 0 && k == 0)) continue;
          const double r2 = 0.25 * a * a * (i * i + j * j + k * k);
          w += pot.force_over_r(r2) * r2;
        }
    return w;
  };
  // Bracket around the nearest-neighbour pair minimum, 2^(1/6) sigma * sqrt(2).
  const double a0 = std::pow(2.0, 1.0 / 6.0) * std::sqrt(2.0) * pot.sigma;
  double lo = 0.9 * a0, hi = 1.1 * a0;
  if (!(virial(lo) > 0.0 && virial(hi) < 0.0))
    throw ParameterError("cannot bracket the zero-pressure lattice constant");
  for (int it = 0; it < 200 && hi - lo > 1e-15 * a0; ++it) {
    const double mid = 0.5 * (lo + hi);
    (virial(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

void MDParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ParameterError(fmt::format("{} must be positive", name));
  };
  positive(dt, "dt");
  positive(strain_rate, "strain_rate");
  positive(checkpoint_dstrain, "checkpoint_dstrain");
  positive(potential.epsilon, "epsilon");
  positive(potential.sigma, "sigma");
  positive(cna_cutoff, "cna_cutoff");
  if (!(potential.cutoff > potential.sigma) || !std::isfinite(potential.cutoff))
    throw ParameterError("cutoff must exceed sigma");
  if (!(temperature >= 0.0) || !std::isfinite(temperature))
    throw ParameterError("temperature must be non-negative");
  if (!(target_strain >= 0.0 && target_strain <= 1.0))
    throw ParameterError("target_strain must lie in [0, 1]");
  if (equilibration_steps < 0) throw ParameterError("equilibration_steps must be non-negative");
}

// Integrator ------------------------------------------------------------------------

Integrator::Integrator(Crystal state, const LennardJones& pot, double dt)
    : state_(std::move(state)), pot_(pot), dt_(dt) {
  if (!(dt > 0.0)) throw ParameterError("dt must be positive");
  if (state_.velocities.size() != state_.size() || state_.grip.size() != state_.size())
    throw ParameterError("crystal arrays differ in length");
  skin_ = 0.3 * pot_.sigma;
  for (int a = 0; a < 3; ++a)
    if (state_.box.periodic(a) && state_.box.length[a] < 2.0 * (pot_.cutoff + skin_))
      throw ParameterError(fmt::format("periodic box length {} along axis {} is below twice the "
                                       "neighbour-list radius {}",
                                       state_.box.length[a], a, pot_.cutoff + skin_));
  n_free_ = count_free(state_);
  for (auto& p : state_.positions) p = state_.box.wrap(p);
  rebuild_neighbors();
  compute_forces();
}

void Integrator::rebuild_neighbors() {
  const auto pairs = detail::find_pairs(state_.box, state_.positions, pot_.cutoff + skin_);
  neighbor_start_.assign(state_.size() + 1, 0);
  for (const auto& [i, j] : pairs) ++neighbor_start_[i + 1];
  for (std::size_t i = 0; i < state_.size(); ++i) neighbor_start_[i + 1] += neighbor_start_[i];
  neighbors_.resize(pairs.size());
  std::vector<std::uint32_t> fill(neighbor_start_.begin(), neighbor_start_.end() - 1);
  for (const auto& [i, j] : pairs) neighbors_[fill[i]++] = j;
  positions_at_build_ = state_.positions;
}

bool Integrator::needs_rebuild() const {
  const double limit2 = 0.25 * skin_ * skin_;
  for (std::size_t i = 0; i < state_.size(); ++i)
    if (state_.box.minimum_image(state_.positions[i] - positions_at_build_[i]).norm2() > limit2)
      return true;
  return false;
}

void Integrator::compute_forces() {
  const double rc2 = pot_.cutoff * pot_.cutoff;
  const double close2 = 0.25 * pot_.sigma * pot_.sigma;
  forces_.assign(state_.size(), Vec3{});
  potential_ = 0.0;
  const auto& x = state_.positions;
  // Positions are wrapped, so one shift per periodic axis suffices.
  const Vec3 len = state_.box.length;
  const bool per[3] = {state_.box.periodic(0), state_.box.periodic(1), state_.box.periodic(2)};
  for (std::uint32_t i = 0; i < state_.size(); ++i)
    for (auto k = neighbor_start_[i]; k < neighbor_start_[i + 1]; ++k) {
      const std::uint32_t j = neighbors_[k];
      Vec3 d = x[i] - x[j];
      for (int a = 0; a < 3; ++a) {
        if (!per[a]) continue;
        if (d[a] > 0.5 * len[a]) d[a] -= len[a];
        else if (d[a] < -0.5 * len[a]) d[a] += len[a];
      }
      const double r2 = d.norm2();
      if (r2 >= rc2) continue;
      if (r2 < close2)
        throw MdBlowUp(fmt::format("atoms {} and {} closer than half sigma (r = {})", i, j,
                                   std::sqrt(r2)),
                       std::numeric_limits<double>::quiet_NaN());
      const Vec3 f = pot_.force_over_r(r2) * d;
      forces_[i] += f;
      forces_[j] -= f;
      potential_ += pot_.energy(r2);
    }
}

void Integrator::step() {
  auto& x = state_.positions;
  auto& v = state_.velocities;
  const double h = 0.5 * dt_;
  for (std::size_t i = 0; i < state_.size(); ++i) {
    if (state_.grip[i] == Grip::none) v[i] += h * forces_[i];
    x[i] = state_.box.wrap(x[i] + dt_ * v[i]);
  }
  if (needs_rebuild()) rebuild_neighbors();
  compute_forces();
  for (std::size_t i = 0; i < state_.size(); ++i)
    if (state_.grip[i] == Grip::none) v[i] += h * forces_[i];
}

void Integrator::set_grip_speed(double speed) {
  for (std::size_t i = 0; i < state_.size(); ++i) {
    if (state_.grip[i] == Grip::bottom) state_.velocities[i] = {0.0, -speed, 0.0};
    if (state_.grip[i] == Grip::top) state_.velocities[i] = {0.0, speed, 0.0};
  }
}

void Integrator::rescale_temperature(double temperature) { set_temperature(state_, temperature); }

double Integrator::kinetic_energy() const { return md::kinetic_energy(state_); }

double Integrator::temperature() const {
  const double dof = free_dof(n_free_);
  return dof > 0.0 ? 2.0 * free_kinetic(state_) / dof : 0.0;
}

Vec3 Integrator::momentum() const {
  Vec3 p;
  for (const Vec3& v : state_.velocities) p += v;
  return p;
}

Crystal integrate_step(const Crystal& state, const MDParams& params) {
  Integrator integ(state, params.potential, params.dt);
  integ.set_grip_speed(0.5 * params.strain_rate * state.lattice_constant);
  integ.step();
  return integ.state();
}

double potential_energy(const Crystal& crystal, const LennardJones& pot) {
  double u = 0.0;
  for (const auto& [i, j] : detail::find_pairs(crystal.box, crystal.positions, pot.cutoff))
    u += pot.energy(crystal.box.minimum_image(crystal.positions[i] - crystal.positions[j]).norm2());
  return u;
}

double kinetic_energy(const Crystal& crystal) {
  double k = 0.0;
  for (const Vec3& v : crystal.velocities) k += 0.5 * v.norm2();
  return k;
}

double grip_stress(const Crystal& crystal, const LennardJones& pot) {
  double fy = 0.0;
  for (const auto& [i, j] : detail::find_pairs(crystal.box, crystal.positions, pot.cutoff)) {
    const Grip gi = crystal.grip[i], gj = crystal.grip[j];
    // Only top-grip / free pairs; sign is the force on the top-grip atom.
    double sign = 0.0;
    if (gi == Grip::top && gj == Grip::none) sign = 1.0;
    if (gj == Grip::top && gi == Grip::none) sign = -1.0;
    if (sign == 0.0) continue;
    const Vec3 d = crystal.box.minimum_image(crystal.positions[i] - crystal.positions[j]);
    fy += sign * pot.force_over_r(d.norm2()) * d.y;
  }
  return -fy / (crystal.box.length.x * crystal.box.length.z);
}

// Tensile run -----------------------------------------------------------------------

namespace {

double grip_separation(const Crystal& c) {
  double top = 0.0, bottom = 0.0;
  std::size_t nt = 0, nb = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.grip[i] == Grip::top) top += c.positions[i].y, ++nt;
    if (c.grip[i] == Grip::bottom) bottom += c.positions[i].y, ++nb;
  }
  return top / static_cast<double>(nt) - bottom / static_cast<double>(nb);
}

DefectRecord snapshot(const Integrator& integ, const MDParams& params, double strain) {
  const Crystal& c = integ.state();
  const auto labels = cna_labels(c, params.cna_cutoff * c.lattice_constant);
  const auto conc = defect_concentrations(labels, c.grip);
  return {strain, conc.fcc(), conc.hcp(), conc.unk(), grip_stress(c, params.potential),
          integ.total_energy(), integ.momentum().norm()};
}

}  // namespace

std::vector<DefectRecord> run_tensile(const MDParams& params, const Geometry& geometry,
                                      std::uint64_t seed) {
  params.validate();
  check_dims(geometry.nx, geometry.ny, geometry.nz, 2);
  if (geometry.grip_layers < 1 || geometry.ny <= 2 * geometry.grip_layers)
    throw ParameterError(fmt::format("ny = {} leaves no free layer between two grips of {} layers",
                                     geometry.ny, geometry.grip_layers));

  const double a = equilibrium_lattice_constant(params.potential);
  Integrator integ(build_crystal(geometry.nx, geometry.ny, geometry.nz, a, params.temperature,
                                 seed, geometry.grip_layers),
                   params.potential, params.dt);

  double strain = 0.0;
  try {
    for (int s = 0; s < params.equilibration_steps; ++s) {
      integ.step();
      integ.rescale_temperature(params.temperature);
    }

    std::vector<DefectRecord> records{snapshot(integ, params, 0.0)};
    if (params.target_strain == 0.0) return records;

    std::vector<double> marks;
    const double tol = 1e-9 * params.checkpoint_dstrain;
    for (long k = 1;; ++k) {
      const double e = static_cast<double>(k) * params.checkpoint_dstrain;
      if (e > params.target_strain + tol) break;
      marks.push_back(e);
    }
    if (marks.empty() || marks.back() < params.target_strain - tol) marks.push_back(params.target_strain);

    const double l0 = grip_separation(integ.state());
    const double speed = params.strain_rate * a;  // separation rate
    integ.set_grip_speed(0.5 * speed);
    for (const double mark : marks) {
      // Shrink dt so the checkpoint lands exactly on a step.
      const double span = (mark - strain) * l0 / speed;
      const double n = std::max(1.0, std::ceil(span / params.dt - 1e-9));
      integ.set_dt(span / n);
      const double from = strain;
      for (double s = 1; s <= n; ++s) {
        integ.step();
        strain = from + (mark - from) * s / n;
      }
      strain = mark;
      records.push_back(snapshot(integ, params, mark));
    }
    return records;
  } catch (const MdBlowUp& e) {
    throw MdBlowUp(fmt::format("{} at strain {}", e.what(), strain), strain);
  }
}

void write_records_csv(std::ostream& out, const std::vector<DefectRecord>& records) {
  CsvWriter w(out, {"strain", "c_fcc", "c_hcp", "c_unk", "sigma_top", "energy"});
  for (const auto& r : records)
    w.row({format_double(r.strain), format_double(r.c_fcc), format_double(r.c_hcp),
           format_double(r.c_unk), format_double(r.sigma_top), format_double(r.energy)});
}

std::vector<DefectRecord> read_records_csv(std::istream& in) {
  const CsvTable t = read_csv(in);
  const char* names[] = {"strain", "c_fcc", "c_hcp", "c_unk", "sigma_top", "energy"};
  std::vector<std::size_t> col;
  for (const char* n : names) col.push_back(t.column(n));
  std::vector<DefectRecord> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const int line = static_cast<int>(r) + 2;
    double v[6];
    for (int k = 0; k < 6; ++k) v[k] = parse_double(t.rows[r][col[k]], names[k], line);
    out.push_back({v[0], v[1], v[2], v[3], v[4], v[5]});
  }
  return out;
}

}  // namespace gridsweep::md
