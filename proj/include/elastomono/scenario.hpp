#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "elastomono/assembly.hpp"
#include "elastomono/material.hpp"
#include "elastomono/mesh.hpp"

namespace elastomono {

/// How the count threshold of the monotonicity tests is chosen.
enum class McapPolicy { Theory, Calibrate, Explicit };

struct McapChoice {
  McapPolicy policy = McapPolicy::Theory;
  int value = 0;  // used by Explicit

  static McapChoice parse(const std::string& text) {
    if (text == "theory") return {McapPolicy::Theory, 0};
    if (text == "calibrate") return {McapPolicy::Calibrate, 0};
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != text.size() || text.empty() || v < 0)
      throw std::invalid_argument("mcap must be 'theory', 'calibrate' or a nonnegative integer, got '" +
                                  text + "'");
    return {McapPolicy::Explicit, v};
  }

  std::string to_string() const {
    switch (policy) {
      case McapPolicy::Theory: return "theory";
      case McapPolicy::Calibrate: return "calibrate";
      default: return std::to_string(value);
    }
  }
};

/// One reproducible experiment: geometry, boundary split, materials,
/// frequency, test grid and noise. Units: m, Pa, kg/m^3, rad/s.
struct Scenario {
  std::string name = "scenario";
  std::array<double, 3> extent{1.0, 1.0, 1.0};
  std::array<int, 3> mesh_resolution{10, 10, 10};
  std::vector<Side> dirichlet{Side::ZMin};
  std::array<int, 2> patch_grid{10, 10};
  LoadDirections load_mode = LoadDirections::Normal;
  Lame background{6e5, 6e3, 3e3};
  std::vector<InclusionSpec> inclusions;
  double omega = 50.0;
  std::array<int, 3> voxel_resolution{5, 5, 5};
  Contrast declared_contrast{1.4e6, 1.4e4, 2e3};
  double linearized_fraction = 0.1;
  double eta = 0.0;
  std::uint64_t seed = 0;
  bool symmetric_noise = true;
  McapChoice mcap;
  std::optional<double> delta_override;

  std::vector<AlphaSetting> standard_settings() const { return default_alpha_settings(declared_contrast); }
  std::vector<AlphaSetting> linearized_settings() const {
    return default_alpha_settings(declared_contrast, linearized_fraction);
  }
};

/// Discretized scenario geometry.
struct Discretization {
  Mesh mesh;
  BoundaryLayout layout;
  VoxelGrid grid;
  LoadSet loads;
};

/// Throws std::invalid_argument naming the offending field.
inline void validate_scenario(const Scenario& s, bool for_reconstruction = true) {
  validate_background(s.background);
  if (!std::isfinite(s.omega)) throw std::invalid_argument("omega must be finite");
  if (for_reconstruction && s.omega == 0.0) throw std::invalid_argument("omega must be nonzero for reconstruction");
  if (!(s.eta >= 0.0) || !std::isfinite(s.eta)) throw std::invalid_argument("eta must be >= 0");
  if (!(s.linearized_fraction > 0.0)) throw std::invalid_argument("linearized alpha fraction must be > 0");
  if (s.declared_contrast.lambda < 0.0 || s.declared_contrast.mu < 0.0 || s.declared_contrast.rho < 0.0)
    throw std::invalid_argument("declared contrast must be >= 0");
  if (!(s.declared_contrast.rho < s.background.rho))
    throw std::invalid_argument("declared density contrast must stay below rho0");
  if (s.delta_override && !(*s.delta_override >= 0.0)) throw std::invalid_argument("delta override must be >= 0");
}

inline Discretization discretize(const Scenario& s) {
  Discretization d;
  d.mesh = build_mesh(s.extent, s.mesh_resolution);
  d.layout = partition_boundary(d.mesh, s.dirichlet, s.patch_grid);
  d.grid = voxel_grid(d.mesh, s.voxel_resolution);
  d.loads = assemble_loads(d.mesh, d.layout, s.load_mode);
  return d;
}

struct WaveReport {
  double v_p = 0.0;  // m/s
  double v_s = 0.0;
  double l_p = 0.0;  // m
  double l_s = 0.0;
};

/// Body-wave speeds and wavelengths of the homogeneous background.
inline WaveReport wavelengths(double lambda0, double mu0, double rho0, double omega) {
  if (!(lambda0 > 0.0 && mu0 > 0.0 && rho0 > 0.0 && omega > 0.0))
    throw std::invalid_argument("wavelengths need positive lambda0, mu0, rho0 and omega");
  WaveReport w;
  w.v_p = std::sqrt((lambda0 + 2.0 * mu0) / rho0);
  w.v_s = std::sqrt(mu0 / rho0);
  w.l_p = 2.0 * std::numbers::pi * w.v_p / omega;
  w.l_s = 2.0 * std::numbers::pi * w.v_s / omega;
  return w;
}

}  // namespace elastomono
