#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "elastomono/material.hpp"
#include "elastomono/mesh.hpp"

namespace elastomono {

using SparseMatrix = Eigen::SparseMatrix<double>;
using StiffnessMatrix = SparseMatrix;
using MassMatrix = SparseMatrix;
using ElementMatrix = Eigen::Matrix<double, 24, 24>;

/// Unit-coefficient element matrices of one brick element. The element
/// stiffness is mu * shear + lambda * volumetric, the mass is rho * mass.
/// Local dof 3*a + c is component c of local node a.
struct ElementMatrices {
  ElementMatrix shear;       // int 2 sym(grad u) : sym(grad v)
  ElementMatrix volumetric;  // int div u div v
  ElementMatrix mass;        // int u . v
};

namespace detail {

inline constexpr std::array<std::array<int, 3>, 8> kCorner = {
    {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}}};

inline constexpr double kGauss = 0.57735026918962576451;  // 1/sqrt(3)

}  // namespace detail

/// 2x2x2 Gauss integration of the trilinear brick with edge lengths h.
inline ElementMatrices element_matrices(const Eigen::Vector3d& h) {
  ElementMatrices em;
  em.shear.setZero();
  em.volumetric.setZero();
  em.mass.setZero();
  const double weight = h.prod() / 8.0;  // Jacobian determinant, unit Gauss weights
  for (int q = 0; q < 8; ++q) {
    const std::array<double, 3> xi = {detail::kCorner[q][0] ? detail::kGauss : -detail::kGauss,
                                      detail::kCorner[q][1] ? detail::kGauss : -detail::kGauss,
                                      detail::kCorner[q][2] ? detail::kGauss : -detail::kGauss};
    std::array<double, 8> N{};
    std::array<Eigen::Vector3d, 8> grad;
    for (int a = 0; a < 8; ++a) {
      std::array<double, 3> s{}, f{};
      for (int d = 0; d < 3; ++d) {
        s[d] = detail::kCorner[a][d] ? 1.0 : -1.0;
        f[d] = 0.5 * (1.0 + s[d] * xi[d]);
      }
      N[a] = f[0] * f[1] * f[2];
      grad[a] = {0.5 * s[0] * f[1] * f[2] * 2.0 / h[0], 0.5 * s[1] * f[0] * f[2] * 2.0 / h[1],
                 0.5 * s[2] * f[0] * f[1] * 2.0 / h[2]};
    }
    for (int a = 0; a < 8; ++a)
      for (int b = 0; b < 8; ++b) {
        const double gg = grad[a].dot(grad[b]);
        for (int c = 0; c < 3; ++c)
          for (int d = 0; d < 3; ++d) {
            const int r = 3 * a + c, s = 3 * b + d;
            em.shear(r, s) += weight * ((c == d ? gg : 0.0) + grad[a][d] * grad[b][c]);
            em.volumetric(r, s) += weight * grad[a][c] * grad[b][d];
            if (c == d) em.mass(r, s) += weight * N[a] * N[b];
          }
      }
  }
  return em;
}

inline std::array<int, 24> element_dofs(const Mesh& mesh, int e) {
  std::array<int, 24> dofs{};
  for (int a = 0; a < 8; ++a)
    for (int c = 0; c < 3; ++c) dofs[3 * a + c] = 3 * mesh.elements[e][a] + c;
  return dofs;
}

namespace detail {

template <class CoefFn>
SparseMatrix assemble_global(const Mesh& mesh, CoefFn&& element_matrix) {
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(mesh.num_elements()) * 24 * 24);
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const ElementMatrix ke = element_matrix(e);
    const auto dofs = element_dofs(mesh, e);
    for (int r = 0; r < 24; ++r)
      for (int s = 0; s < 24; ++s)
        if (ke(r, s) != 0.0) triplets.emplace_back(dofs[r], dofs[s], ke(r, s));
  }
  SparseMatrix A(mesh.num_dofs(), mesh.num_dofs());
  A.setFromTriplets(triplets.begin(), triplets.end());
  return A;
}

}  // namespace detail

inline StiffnessMatrix assemble_stiffness(const Mesh& mesh, const MaterialField& field) {
  if (field.size() != mesh.num_elements())
    throw std::invalid_argument("material field does not match the mesh");
  const ElementMatrices em = element_matrices(mesh.spacing());
  return detail::assemble_global(mesh, [&](int e) -> ElementMatrix {
    return field.mu[e] * em.shear + field.lambda[e] * em.volumetric;
  });
}

inline MassMatrix assemble_mass(const Mesh& mesh, const std::vector<double>& rho) {
  if (static_cast<int>(rho.size()) != mesh.num_elements())
    throw std::invalid_argument("density field does not match the mesh");
  const ElementMatrices em = element_matrices(mesh.spacing());
  return detail::assemble_global(mesh, [&](int e) -> ElementMatrix { return rho[e] * em.mass; });
}

enum class LoadDirections { Normal, NormalTangential };

/// Boundary loads: one constant traction per (patch, direction), each with
/// unit L2(Gamma_N) norm, so the load Gram matrix is the identity.
struct LoadSet {
  LoadDirections mode = LoadDirections::Normal;
  Eigen::MatrixXd vectors;        // num_dofs x m, column i is F_i = int g_i . phi dS
  std::vector<double> l2_norms;   // ||g_i||, all 1 by construction
  std::vector<int> patch;         // patch id per load
  std::vector<int> direction;     // 0 normal, 1/2 the tangent axes of the side
  std::vector<double> patch_area; // per patch

  int size() const { return static_cast<int>(vectors.cols()); }
};

inline int directions_per_patch(LoadDirections mode) {
  return mode == LoadDirections::Normal ? 1 : 3;
}

inline LoadSet assemble_loads(const Mesh& mesh, const BoundaryLayout& layout, LoadDirections mode) {
  const int npatch = layout.num_patches();
  const int ndir = directions_per_patch(mode);
  LoadSet loads;
  loads.mode = mode;
  loads.patch_area.assign(npatch, 0.0);
  for (std::size_t f = 0; f < mesh.boundary_faces.size(); ++f)
    if (layout.patch_of_face[f] >= 0) loads.patch_area[layout.patch_of_face[f]] += mesh.boundary_faces[f].area;

  const int m = npatch * ndir;
  loads.vectors = Eigen::MatrixXd::Zero(mesh.num_dofs(), m);
  loads.l2_norms.assign(m, 1.0);
  loads.patch.resize(m);
  loads.direction.resize(m);
  for (int p = 0; p < npatch; ++p)
    for (int d = 0; d < ndir; ++d) {
      loads.patch[p * ndir + d] = p;
      loads.direction[p * ndir + d] = d;
    }

  // 2x2 Gauss on the bilinear face: int N_a dS over each face.
  std::array<double, 4> node_weight{};
  const double g = detail::kGauss;
  const std::array<std::array<double, 2>, 4> corner = {{{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}};
  for (int q = 0; q < 4; ++q) {
    const double s = corner[q][0] * g, t = corner[q][1] * g;
    for (int a = 0; a < 4; ++a)
      node_weight[a] += 0.25 * (1.0 + corner[a][0] * s) * (1.0 + corner[a][1] * t) / 4.0;
  }

  for (std::size_t f = 0; f < mesh.boundary_faces.size(); ++f) {
    const int p = layout.patch_of_face[f];
    if (p < 0) continue;
    const auto& face = mesh.boundary_faces[f];
    const double magnitude = 1.0 / std::sqrt(loads.patch_area[p]);
    const auto [ta, tb] = tangent_axes(face.side);
    for (int d = 0; d < ndir; ++d) {
      Eigen::Vector3d dir = face.normal;
      if (d == 1) dir = Eigen::Vector3d::Unit(ta);
      if (d == 2) dir = Eigen::Vector3d::Unit(tb);
      for (int a = 0; a < 4; ++a)
        for (int c = 0; c < 3; ++c)
          loads.vectors(3 * face.nodes[a] + c, p * ndir + d) +=
              magnitude * dir[c] * face.area * node_weight[a];
    }
  }
  return loads;
}

}  // namespace elastomono
