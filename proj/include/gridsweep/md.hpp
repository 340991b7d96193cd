#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace gridsweep::md {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double& operator[](int i) { return i == 0 ? x : i == 1 ? y : z; }
  double operator[](int i) const { return i == 0 ? x : i == 1 ? y : z; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }
  friend Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
  friend Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
  friend Vec3 operator*(double s, Vec3 a) { return a *= s; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm2() const { return dot(*this); }
  double norm() const { return std::sqrt(norm2()); }
};

enum class Boundary { periodic, free };

/// Orthorhombic box with its origin at 0.
struct Box {
  Vec3 length;
  std::array<Boundary, 3> boundary{Boundary::periodic, Boundary::free, Boundary::periodic};

  bool periodic(int axis) const { return boundary[static_cast<std::size_t>(axis)] == Boundary::periodic; }
  Vec3 minimum_image(Vec3 d) const;
  Vec3 wrap(Vec3 p) const;
};

enum class Grip : std::uint8_t { none, bottom, top };

/// Atom positions and velocities in reduced Lennard-Jones units (sigma,
/// epsilon, unit mass). The tensile axis is y.
struct Crystal {
  std::vector<Vec3> positions;
  std::vector<Vec3> velocities;
  Box box;
  double lattice_constant = 1.0;
  std::vector<Grip> grip;

  std::size_t size() const { return positions.size(); }
  bool has_grips() const;
};

/// Unit-cell layers held by each grip. Two cell layers (four atomic planes)
/// cover the default 2.5 sigma cutoff, so free atoms at rest see a bulk
/// environment.
inline constexpr int kDefaultGripLayers = 2;

/// FCC crystal of nx*ny*nz cubic cells (each at least 2). Periodic in x and z, free along y.
/// The bottom and top `grip_layers` cell layers are marked as grips when
/// ny > 2 * grip_layers; otherwise no atom is gripped. Velocities are
/// Maxwell-Boltzmann at `temperature` with zero net momentum.
Crystal build_crystal(int nx, int ny, int nz, double a, double temperature, std::uint64_t seed,
                      int grip_layers = kDefaultGripLayers);

/// Ideal HCP (c/a = sqrt(8/3)) in an orthohexagonal box, periodic in all axes, at rest.
Crystal build_hcp(int nx, int ny, int nz, double nn_distance);

/// Drop grips and make the tensile axis periodic too (bulk crystal).
void make_fully_periodic(Crystal& crystal);

/// Lennard-Jones pair potential truncated at `cutoff` and shifted to zero there.
struct LennardJones {
  double epsilon = 1.0;
  double sigma = 1.0;
  double cutoff = 2.5;

  double energy(double r2) const;
  /// -dU/dr / r, so that the force on i from j is force_over_r * (r_i - r_j).
  double force_over_r(double r2) const;
};

/// Zero-pressure FCC lattice constant at 0 K for this potential.
double equilibrium_lattice_constant(const LennardJones& pot);

struct MDParams {
  double dt = 0.005;
  double temperature = 0.01;
  double strain_rate = 0.02;  // grip separation speed, lattice spacings per unit time
  double target_strain = 0.20;
  double checkpoint_dstrain = 0.01;
  LennardJones potential;
  int equilibration_steps = 500;
  double cna_cutoff = 0.854;  // fraction of the lattice constant

  void validate() const;
};

struct Geometry {
  int nx = 4;
  int ny = 6;
  int nz = 4;
  int grip_layers = kDefaultGripLayers;
};

/// Velocity-Verlet integrator with a Verlet neighbour list. Grip atoms move
/// rigidly along y at -grip_speed (bottom) and +grip_speed (top) and ignore forces.
class Integrator {
 public:
  Integrator(Crystal state, const LennardJones& pot, double dt);

  void step();
  void set_dt(double dt) { dt_ = dt; }
  void set_grip_speed(double speed);
  /// Rescale free-atom velocities to the given temperature (no-op when at rest).
  void rescale_temperature(double temperature);

  const Crystal& state() const { return state_; }
  double potential_energy() const { return potential_; }
  double kinetic_energy() const;
  double total_energy() const { return potential_energy() + kinetic_energy(); }
  double temperature() const;
  Vec3 momentum() const;

 private:
  void rebuild_neighbors();
  void compute_forces();
  bool needs_rebuild() const;

  Crystal state_;
  LennardJones pot_;
  double dt_;
  double skin_ = 0.3;
  std::vector<Vec3> forces_;
  std::vector<Vec3> positions_at_build_;
  std::vector<std::uint32_t> neighbor_start_;
  std::vector<std::uint32_t> neighbors_;
  double potential_ = 0.0;
  std::size_t n_free_ = 0;
};

/// One velocity-Verlet step of `state`, grips moving at +-strain_rate/2 spacings per unit time.
Crystal integrate_step(const Crystal& state, const MDParams& params);

double potential_energy(const Crystal& crystal, const LennardJones& pot);
double kinetic_energy(const Crystal& crystal);

/// Tensile traction on the top grip: minus the y-force the free atoms exert
/// on top-grip atoms, over the x-z cross-section. Positive in tension.
double grip_stress(const Crystal& crystal, const LennardJones& pot);

// Common neighbour analysis ------------------------------------------------------

enum class Structure : std::uint8_t { fcc, hcp, unk };

const char* to_string(Structure s);

/// Classify every atom by its common-neighbour signatures within `cutoff`
/// (absolute length): twelve (4,2,1) bonds is FCC, six (4,2,1) plus six
/// (4,2,2) is HCP, anything else UNK.
std::vector<Structure> cna_labels(const Crystal& crystal, double cutoff);

struct Concentrations {
  long long n_fcc = 0;
  long long n_hcp = 0;
  long long n_unk = 0;

  long long counted() const { return n_fcc + n_hcp + n_unk; }
  double fcc() const { return static_cast<double>(n_fcc) / static_cast<double>(counted()); }
  double hcp() const { return static_cast<double>(n_hcp) / static_cast<double>(counted()); }
  double unk() const { return static_cast<double>(n_unk) / static_cast<double>(counted()); }
};

/// Fractions over atoms outside the grips. Throws ParameterError when the
/// spans differ in length or every atom is gripped.
Concentrations defect_concentrations(std::span<const Structure> labels,
                                     std::span<const Grip> grip);

// Tensile run -----------------------------------------------------------------------

struct DefectRecord {
  double strain = 0.0;
  double c_fcc = 0.0;
  double c_hcp = 0.0;
  double c_unk = 0.0;
  double sigma_top = 0.0;
  double energy = 0.0;
  double momentum = 0.0;  // |total momentum|, diagnostic only (not written to CSV)
};

/// Build, equilibrate with velocity rescaling, then pull the grips apart at
/// `strain_rate` until `target_strain`, recording a DefectRecord at every
/// multiple of `checkpoint_dstrain` (and at the target). Strain is the grip
/// separation change over the initial separation. Throws MdBlowUp carrying
/// the strain reached.
std::vector<DefectRecord> run_tensile(const MDParams& params, const Geometry& geometry,
                                      std::uint64_t seed);

void write_records_csv(std::ostream& out, const std::vector<DefectRecord>& records);
std::vector<DefectRecord> read_records_csv(std::istream& in);

}  // namespace gridsweep::md
