#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "elastomono/mesh.hpp"

namespace elastomono {

/// Homogeneous isotropic material: Lame parameters in Pa, density in kg/m^3.
struct Lame {
  double lambda = 0.0;
  double mu = 0.0;
  double rho = 0.0;
};

/// Nonnegative coefficient offsets (lambda, mu, rho) applied on a test block.
/// Stiffness offsets are added, the density offset is subtracted.
struct Contrast {
  double lambda = 0.0;
  double mu = 0.0;
  double rho = 0.0;

  bool is_zero() const { return lambda == 0.0 && mu == 0.0 && rho == 0.0; }
  Contrast scaled(double s) const { return {lambda * s, mu * s, rho * s}; }
};

/// Per-element coefficients.
struct MaterialField {
  std::vector<double> lambda;
  std::vector<double> mu;
  std::vector<double> rho;

  int size() const { return static_cast<int>(lambda.size()); }

  bool strictly_positive() const {
    for (int e = 0; e < size(); ++e)
      if (!(lambda[e] > 0.0 && mu[e] > 0.0 && rho[e] > 0.0)) return false;
    return true;
  }

  friend bool operator==(const MaterialField&, const MaterialField&) = default;
};

inline MaterialField uniform_field(const Lame& m, int num_elements) {
  return {std::vector<double>(num_elements, m.lambda), std::vector<double>(num_elements, m.mu),
          std::vector<double>(num_elements, m.rho)};
}

/// Declared lower/upper bounds on the inclusion jumps.
struct JumpBounds {
  double n1 = 0.0;
  double n2 = 0.0;
  double n3 = 0.0;
  double N3 = std::numeric_limits<double>::infinity();  // capped at rho0 when validated
};

/// One inclusion: lambda = lambda0 + jump_lambda, mu = mu0 + jump_mu,
/// rho = rho0 - jump_rho on the voxels of `region`.
struct InclusionSpec {
  VoxelSet region;
  double jump_lambda = 0.0;
  double jump_mu = 0.0;
  double jump_rho = 0.0;
  JumpBounds bounds;

  /// Inclusion given by its absolute material instead of jumps.
  static InclusionSpec from_absolute(const Lame& background, VoxelSet region, const Lame& inside) {
    InclusionSpec spec;
    spec.region = normalized(std::move(region));
    spec.jump_lambda = inside.lambda - background.lambda;
    spec.jump_mu = inside.mu - background.mu;
    spec.jump_rho = background.rho - inside.rho;
    return spec;
  }
};

inline void validate_background(const Lame& bg) {
  if (!(bg.lambda > 0.0 && bg.mu > 0.0 && bg.rho > 0.0) || !std::isfinite(bg.lambda) ||
      !std::isfinite(bg.mu) || !std::isfinite(bg.rho))
    throw std::invalid_argument("background lambda0, mu0, rho0 must be positive and finite");
}

/// Checks the inclusion model constraints; the message names the violated bound.
inline void validate_inclusion(const InclusionSpec& inc, const Lame& bg, const VoxelGrid& grid) {
  if (inc.region.empty()) throw std::invalid_argument("inclusion region is empty");
  for (int v : inc.region) {
    if (v < 0 || v >= grid.num_voxels())
      throw std::invalid_argument("inclusion voxel " + std::to_string(v) + " out of range");
    if (grid.touches_boundary(v))
      throw std::invalid_argument("inclusion voxel " + std::to_string(v) +
                                  " touches the boundary; inclusions must lie strictly inside");
  }
  if (inc.jump_lambda < 0.0)
    throw std::invalid_argument("jump_lambda must be >= 0 (lambda >= lambda0)");
  if (inc.jump_mu < 0.0) throw std::invalid_argument("jump_mu must be >= 0 (mu >= mu0)");
  if (inc.jump_rho < 0.0) throw std::invalid_argument("jump_rho must be >= 0 (rho <= rho0)");
  if (inc.jump_lambda == 0.0 && inc.jump_mu == 0.0 && inc.jump_rho == 0.0)
    throw std::invalid_argument("inclusion has no active jump");
  const auto& b = inc.bounds;
  if (inc.jump_lambda > 0.0 && !(inc.jump_lambda > b.n1))
    throw std::invalid_argument("jump_lambda must exceed the lower bound n1");
  if (inc.jump_mu > 0.0 && !(inc.jump_mu > b.n2))
    throw std::invalid_argument("jump_mu must exceed the lower bound n2");
  if (inc.jump_rho > 0.0) {
    if (!(inc.jump_rho > b.n3)) throw std::invalid_argument("jump_rho must exceed the lower bound n3");
    if (std::isfinite(b.N3) && !(b.N3 < bg.rho))
      throw std::invalid_argument("upper bound N3 must be below rho0");
    if (!(inc.jump_rho < std::min(b.N3, bg.rho)))
      throw std::invalid_argument("jump_rho must stay below the upper bound N3 < rho0");
  }
}

inline MaterialField make_material_field(const Lame& background,
                                         std::span<const InclusionSpec> inclusions,
                                         const VoxelGrid& grid) {
  validate_background(background);
  MaterialField field = uniform_field(background, static_cast<int>(grid.element_to_voxel.size()));
  for (const auto& inc : inclusions) {
    validate_inclusion(inc, background, grid);
    for (int e : grid.elements_of(inc.region)) {
      field.lambda[e] += inc.jump_lambda;
      field.mu[e] += inc.jump_mu;
      field.rho[e] -= inc.jump_rho;
    }
  }
  if (!field.strictly_positive())
    throw std::invalid_argument("overlapping inclusions drive rho to <= 0");
  return field;
}

/// Test coefficients: background plus `alpha` on the test block `block`.
inline MaterialField make_test_coefficients(const Lame& background, const VoxelSet& block,
                                            const Contrast& alpha, const VoxelGrid& grid) {
  validate_background(background);
  if (alpha.lambda < 0.0 || alpha.mu < 0.0 || alpha.rho < 0.0)
    throw std::invalid_argument("test contrasts alpha must be >= 0");
  if (!(alpha.rho < background.rho))
    throw std::invalid_argument("alpha3 must stay below rho0");
  MaterialField field = uniform_field(background, static_cast<int>(grid.element_to_voxel.size()));
  for (int e : grid.elements_of(block)) {
    field.lambda[e] += alpha.lambda;
    field.mu[e] += alpha.mu;
    field.rho[e] -= alpha.rho;
  }
  return field;
}

/// One parameter variation of the test coefficients.
struct AlphaSetting {
  std::string label;
  Contrast alpha;
};

/// Singleton variations {lambda}, {mu}, {rho} plus the joint one, each at the
/// declared contrast times `scale`. Zero components are skipped.
inline std::vector<AlphaSetting> default_alpha_settings(const Contrast& declared, double scale = 1.0) {
  const Contrast a = declared.scaled(scale);
  std::vector<AlphaSetting> out;
  if (a.lambda > 0.0) out.push_back({"lambda", {a.lambda, 0.0, 0.0}});
  if (a.mu > 0.0) out.push_back({"mu", {0.0, a.mu, 0.0}});
  if (a.rho > 0.0) out.push_back({"rho", {0.0, 0.0, a.rho}});
  const int active = (a.lambda > 0.0) + (a.mu > 0.0) + (a.rho > 0.0);
  if (active > 1) out.push_back({"all", a});
  if (out.empty()) throw std::invalid_argument("declared contrast is zero; no test settings");
  return out;
}

/// Union of the inclusion regions.
inline VoxelSet inclusion_support(std::span<const InclusionSpec> inclusions) {
  VoxelSet all;
  for (const auto& inc : inclusions) all.insert(all.end(), inc.region.begin(), inc.region.end());
  return normalized(std::move(all));
}

}  // namespace elastomono
