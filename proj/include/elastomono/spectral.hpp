#pragma once

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include "elastomono/assembly.hpp"
#include "elastomono/mesh.hpp"

namespace elastomono {

/// Ascending eigenvalues of a dense symmetric matrix (lower triangle is read).
inline Eigen::VectorXd eig_sym(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols()) throw std::invalid_argument("eig_sym needs a square matrix");
  if (!A.allFinite()) throw std::invalid_argument("eig_sym: matrix has non-finite entries");
  if (A.rows() == 0) return {};
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(A, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eig_sym: eigensolver did not converge");
  return solver.eigenvalues();
}

/// Number of entries strictly below the threshold in an ascending list.
inline int count_below(const Eigen::VectorXd& sorted, double threshold) {
  const auto* first = sorted.data();
  return static_cast<int>(std::lower_bound(first, first + sorted.size(), threshold) - first);
}

struct EigenReport {
  Eigen::VectorXd eigenvalues;  // ascending
  double threshold = 0.0;
  int count_below = 0;
  std::string label;
};

inline EigenReport make_eigen_report(const Eigen::MatrixXd& A, double threshold, std::string label = {}) {
  EigenReport r;
  r.eigenvalues = eig_sym(A);
  r.threshold = threshold;
  r.count_below = count_below(r.eigenvalues, threshold);
  r.label = std::move(label);
  return r;
}

/// Size below which an eigenvalue is indistinguishable from zero after a
/// backward-stable eigensolve: n * eps * max |eigenvalue|.
inline double roundoff_floor(const Eigen::VectorXd& eigenvalues) {
  if (eigenvalues.size() == 0) return 0.0;
  return static_cast<double>(eigenvalues.size()) * std::numeric_limits<double>::epsilon() *
         eigenvalues.cwiseAbs().maxCoeff();
}

/// Report for a test difference: counts eigenvalues below -max(delta, floor),
/// so round-off around exact cancellations is never counted.
inline EigenReport make_count_report(const Eigen::MatrixXd& A, double delta, std::string label = {}) {
  EigenReport r;
  r.eigenvalues = eig_sym(A);
  r.threshold = -std::max(delta, roundoff_floor(r.eigenvalues));
  r.count_below = count_below(r.eigenvalues, r.threshold);
  r.label = std::move(label);
  return r;
}

/// Number of positive sigma in (-K + omega^2 M_rho) x = sigma M_unit x on the
/// dofs off the clamped boundary. By Sylvester's law of inertia this equals
/// the number of negative pivots of an LDL^T factorization of K - omega^2 M_rho.
inline int positive_mode_count(const StiffnessMatrix& K, const MassMatrix& M_rho,
                               const MassMatrix& M_unit, double omega, const BoundaryLayout& layout) {
  const int n = static_cast<int>(K.rows());
  if (M_rho.rows() != n || M_unit.rows() != n || static_cast<std::size_t>(n) != 3 * layout.dirichlet_node.size())
    throw std::invalid_argument("positive_mode_count: mismatched matrix sizes");
  std::vector<int> reduced_index(n, -1);
  int nfree = 0;
  for (int dof = 0; dof < n; ++dof)
    if (!layout.dirichlet_node[dof / 3]) reduced_index[dof] = nfree++;
  auto restrict = [&](const SparseMatrix& A) {
    std::vector<Eigen::Triplet<double>> t;
    for (int col = 0; col < A.outerSize(); ++col)
      for (SparseMatrix::InnerIterator it(A, col); it; ++it)
        if (reduced_index[col] >= 0 && reduced_index[it.row()] >= 0)
          t.emplace_back(reduced_index[it.row()], reduced_index[col], it.value());
    SparseMatrix R(nfree, nfree);
    R.setFromTriplets(t.begin(), t.end());
    return R;
  };
  Eigen::SimplicialLLT<SparseMatrix> mass_check(restrict(M_unit));
  if (mass_check.info() != Eigen::Success)
    throw std::logic_error("positive_mode_count: unit mass matrix is not positive definite");
  const SparseMatrix A = restrict(SparseMatrix(K - (omega * omega) * M_rho));
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(A);
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error("positive_mode_count: zero pivot, omega^2 is an eigenvalue");
  const Eigen::VectorXd D = ldlt.vectorD();
  return static_cast<int>((D.array() < 0.0).count());
}

/// Mode count with a mesh-convergence check against a once-refined mesh.
struct ModeCount {
  int count = 0;
  int refined_count = 0;
  bool converged = false;
};

inline int background_mode_count(const Mesh& mesh, std::span<const Side> dirichlet, const Lame& bg,
                                 double omega) {
  const auto layout = partition_boundary(mesh, dirichlet, {1, 1});
  const auto field = uniform_field(bg, mesh.num_elements());
  const auto K = assemble_stiffness(mesh, field);
  const auto M = assemble_mass(mesh, field.rho);
  const auto M1 = assemble_mass(mesh, std::vector<double>(mesh.num_elements(), 1.0));
  return positive_mode_count(K, M, M1, omega, layout);
}

inline ModeCount background_mode_count_checked(const Mesh& mesh, std::span<const Side> dirichlet,
                                               const Lame& bg, double omega) {
  ModeCount mc;
  mc.count = background_mode_count(mesh, dirichlet, bg, omega);
  const Mesh fine = build_mesh(mesh.extent, {2 * mesh.resolution[0], 2 * mesh.resolution[1],
                                             2 * mesh.resolution[2]});
  mc.refined_count = background_mode_count(fine, dirichlet, bg, omega);
  mc.converged = mc.count == mc.refined_count;
  return mc;
}

}  // namespace elastomono
