#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCholesky>

#include "elastomono/assembly.hpp"
#include "elastomono/mesh.hpp"
#include "elastomono/parallel.hpp"

namespace elastomono {

/// Raised when K - omega^2 M is numerically singular on the free dofs.
class ResonanceError : public std::runtime_error {
 public:
  ResonanceError(const std::string& what, double rcond) : std::runtime_error(what), rcond_(rcond) {}
  double rcond() const { return rcond_; }

 private:
  double rcond_;
};

/// Raised for structurally singular systems (static problem without clamping).
class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Inertia {
  int positive = 0;
  int negative = 0;
  int zero = 0;
};

/// Reciprocal condition number below which the system counts as resonant.
inline constexpr double kResonanceRcond = 1e-12;

/// Relative residual above which a solve is refined.
inline constexpr double kRefineTolerance = 1e-11;

/// Factorized A = K - omega^2 M restricted to the dofs off the clamped boundary.
/// Immutable; copies share the factorization.
class SystemFactorization {
 public:
  using Solver = Eigen::SimplicialLDLT<SparseMatrix>;

  double omega() const { return omega_; }
  double rcond() const { return rcond_; }
  const Inertia& inertia() const { return inertia_; }
  int num_dofs() const { return static_cast<int>(reduced_index_.size()); }
  int num_free() const { return static_cast<int>(free_dofs_.size()); }
  const std::vector<int>& free_dofs() const { return free_dofs_; }
  const SparseMatrix& reduced_matrix() const { return *reduced_; }

  /// Solves the reduced system for a block of right-hand sides. Columns whose
  /// relative residual exceeds kRefineTolerance get up to two steps of
  /// iterative refinement; each column is processed independently.
  Eigen::MatrixXd solve_reduced(const Eigen::MatrixXd& rhs) const {
    Eigen::MatrixXd X = solver_->solve(rhs);
    for (int step = 0; step < 2; ++step) {
      const Eigen::MatrixXd R = rhs - (*reduced_) * X;
      std::vector<int> cols;
      for (int j = 0; j < R.cols(); ++j)
        if (R.col(j).norm() > kRefineTolerance * rhs.col(j).norm()) cols.push_back(j);
      if (cols.empty()) break;
      Eigen::MatrixXd Rs(R.rows(), static_cast<Eigen::Index>(cols.size()));
      for (std::size_t c = 0; c < cols.size(); ++c) Rs.col(c) = R.col(cols[c]);
      const Eigen::MatrixXd dX = solver_->solve(Rs);
      for (std::size_t c = 0; c < cols.size(); ++c) X.col(cols[c]) += dX.col(c);
    }
    return X;
  }

  /// Full-size loads in (one per column), full-size displacements out (zero on clamped dofs).
  Eigen::MatrixXd solve(const Eigen::MatrixXd& loads) const {
    if (loads.rows() != num_dofs())
      throw std::invalid_argument("load vector size does not match the system");
    Eigen::MatrixXd rhs(num_free(), loads.cols());
    for (int i = 0; i < num_free(); ++i) rhs.row(i) = loads.row(free_dofs_[i]);
    const Eigen::MatrixXd x = solve_reduced(rhs);
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(num_dofs(), loads.cols());
    for (int i = 0; i < num_free(); ++i) u.row(free_dofs_[i]) = x.row(i);
    return u;
  }

  /// Applies the full (unreduced) A to a full-size vector.
  Eigen::VectorXd apply_full(const Eigen::VectorXd& u) const { return (*full_) * u; }

 private:
  friend SystemFactorization factorize_system(const StiffnessMatrix&, const MassMatrix&, double,
                                              const BoundaryLayout&);

  double omega_ = 0.0;
  double rcond_ = 0.0;
  Inertia inertia_;
  std::vector<int> free_dofs_;
  std::vector<int> reduced_index_;
  std::shared_ptr<const SparseMatrix> full_;
  std::shared_ptr<const SparseMatrix> reduced_;
  std::shared_ptr<const Solver> solver_;
};

namespace detail {

inline SparseMatrix restrict_to(const SparseMatrix& A, const std::vector<int>& reduced_index, int nfree) {
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(A.nonZeros());
  for (int col = 0; col < A.outerSize(); ++col) {
    const int rc = reduced_index[col];
    if (rc < 0) continue;
    for (SparseMatrix::InnerIterator it(A, col); it; ++it) {
      const int rr = reduced_index[it.row()];
      if (rr >= 0) triplets.emplace_back(rr, rc, it.value());
    }
  }
  SparseMatrix R(nfree, nfree);
  R.setFromTriplets(triplets.begin(), triplets.end());
  return R;
}

inline double norm1(const SparseMatrix& A) {
  double best = 0.0;
  for (int col = 0; col < A.outerSize(); ++col) {
    double s = 0.0;
    for (SparseMatrix::InnerIterator it(A, col); it; ++it) s += std::abs(it.value());
    best = std::max(best, s);
  }
  return best;
}

/// Hager/Higham estimate of ||A^-1||_1 for symmetric A from a solve callback.
template <class Solve>
double inverse_norm1_estimate(int n, Solve&& solve) {
  Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 / n);
  double est = 0.0;
  for (int iter = 0; iter < 5; ++iter) {
    const Eigen::VectorXd y = solve(x);
    const double est_new = y.lpNorm<1>();
    if (!std::isfinite(est_new)) return std::numeric_limits<double>::infinity();
    if (iter > 0 && est_new <= est) break;
    est = est_new;
    Eigen::VectorXd sign(n);
    for (int i = 0; i < n; ++i) sign[i] = y[i] >= 0.0 ? 1.0 : -1.0;
    const Eigen::VectorXd z = solve(sign);
    Eigen::Index j = 0;
    const double zmax = z.cwiseAbs().maxCoeff(&j);
    if (iter > 0 && zmax <= z.dot(x)) break;
    x.setZero();
    x[j] = 1.0;
  }
  Eigen::VectorXd b(n);
  for (int i = 0; i < n; ++i) b[i] = (i % 2 ? -1.0 : 1.0) * (1.0 + (n > 1 ? double(i) / (n - 1) : 0.0));
  const double alt = 2.0 * solve(b).template lpNorm<1>() / (3.0 * n);
  return std::max(est, alt);
}

}  // namespace detail

inline SystemFactorization factorize_system(const StiffnessMatrix& K, const MassMatrix& M,
                                            double omega, const BoundaryLayout& layout) {
  if (K.rows() != M.rows() || K.cols() != M.cols() || K.rows() != K.cols())
    throw std::invalid_argument("stiffness and mass matrices have mismatched shapes");
  if (static_cast<std::size_t>(K.rows()) != 3 * layout.dirichlet_node.size())
    throw std::invalid_argument("boundary layout does not match the system size");
  if (!layout.has_dirichlet() && omega == 0.0)
    throw SingularSystemError("static problem without Dirichlet boundary has rigid-body modes");

  SystemFactorization fact;
  fact.omega_ = omega;
  const int n = static_cast<int>(K.rows());
  fact.reduced_index_.assign(n, -1);
  for (int dof = 0; dof < n; ++dof) {
    if (layout.dirichlet_node[dof / 3]) continue;
    fact.reduced_index_[dof] = static_cast<int>(fact.free_dofs_.size());
    fact.free_dofs_.push_back(dof);
  }
  const int nfree = fact.num_free();
  auto full = std::make_shared<SparseMatrix>(K - (omega * omega) * M);
  auto reduced = std::make_shared<SparseMatrix>(detail::restrict_to(*full, fact.reduced_index_, nfree));
  // TODO: reuse the symbolic analysis across fields that share a mesh and layout.
  auto solver = std::make_shared<SystemFactorization::Solver>(*reduced);
  fact.full_ = full;
  fact.reduced_ = reduced;
  fact.solver_ = solver;

  if (solver->info() != Eigen::Success)
    throw ResonanceError("factorization broke down (zero pivot): omega is a resonance", 0.0);
  const Eigen::VectorXd D = solver->vectorD();
  for (int i = 0; i < D.size(); ++i) {
    if (D[i] > 0.0) ++fact.inertia_.positive;
    else if (D[i] < 0.0) ++fact.inertia_.negative;
    else ++fact.inertia_.zero;
  }
  const double inv_norm = detail::inverse_norm1_estimate(
      nfree, [&](const Eigen::VectorXd& b) -> Eigen::VectorXd { return solver->solve(b); });
  fact.rcond_ = 1.0 / (detail::norm1(*reduced) * inv_norm);
  if (!(fact.rcond_ >= kResonanceRcond) || fact.inertia_.zero > 0)
    throw ResonanceError("system is numerically singular (rcond " + std::to_string(fact.rcond_) +
                             "): omega is at or near a resonance",
                         std::isfinite(fact.rcond_) ? fact.rcond_ : 0.0);
  return fact;
}

/// Displacement for one full-size load vector: A U = F on the free dofs.
inline Eigen::VectorXd solve_bvp(const SystemFactorization& fact, const Eigen::VectorXd& load) {
  return fact.solve(Eigen::MatrixXd(load)).col(0);
}

/// Displacements for every load of a LoadSet under one material field.
struct SolutionBank {
  Eigen::MatrixXd displacements;  // num_dofs x m
  double omega = 0.0;

  int size() const { return static_cast<int>(displacements.cols()); }
};

inline SolutionBank solve_bank(const SystemFactorization& fact, const LoadSet& loads, int threads = 1) {
  if (loads.vectors.rows() != fact.num_dofs())
    throw std::invalid_argument("load set does not match the system size");
  SolutionBank bank;
  bank.omega = fact.omega();
  bank.displacements.resize(fact.num_dofs(), loads.size());
  constexpr int kChunk = 16;
  const int chunks = (loads.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, threads, [&](int c) {
    const int first = c * kChunk;
    const int count = std::min(kChunk, loads.size() - first);
    bank.displacements.middleCols(first, count) = fact.solve(loads.vectors.middleCols(first, count));
  });
  return bank;
}

/// Discrete NtD operator in the load basis: values(i, j) = F_i^T U_j, symmetrized.
struct NtDMatrix {
  Eigen::MatrixXd values;
  double asymmetry = 0.0;  // ||L - L^T||_F / ||L||_F before symmetrization

  int size() const { return static_cast<int>(values.rows()); }
};

inline NtDMatrix ntd_from_bank(const SolutionBank& bank, const LoadSet& loads) {
  if (bank.displacements.rows() != loads.vectors.rows() || bank.size() != loads.size())
    throw std::invalid_argument("solution bank does not match the load set");
  NtDMatrix ntd;
  const Eigen::MatrixXd raw = loads.vectors.transpose() * bank.displacements;
  const double scale = raw.norm();
  ntd.asymmetry = scale > 0.0 ? (raw - raw.transpose()).norm() / scale : 0.0;
  ntd.values = 0.5 * (raw + raw.transpose());
  return ntd;
}

inline NtDMatrix ntd_matrix(const SystemFactorization& fact, const LoadSet& loads, int threads = 1) {
  return ntd_from_bank(solve_bank(fact, loads, threads), loads);
}

/// Forward model for one material field: assemble, factorize, solve every load.
inline SolutionBank solve_field(const Mesh& mesh, const BoundaryLayout& layout, const LoadSet& loads,
                                const MaterialField& field, double omega, int threads = 1) {
  const auto K = assemble_stiffness(mesh, field);
  const auto M = assemble_mass(mesh, field.rho);
  return solve_bank(factorize_system(K, M, omega, layout), loads, threads);
}

/// Signed coefficient perturbation (lambda_hat, mu_hat, rho_hat).
struct Perturbation {
  double lambda = 0.0;
  double mu = 0.0;
  double rho = 0.0;
};

/// Per-block Gram matrices of the background solutions:
/// shear(i,j) = int_B 2 sym grad u_i : sym grad u_j, volumetric(i,j) =
/// int_B div u_i div u_j, mass(i,j) = int_B u_i . u_j.
struct FrechetGrams {
  Eigen::MatrixXd shear;
  Eigen::MatrixXd volumetric;
  Eigen::MatrixXd mass;
};

inline FrechetGrams frechet_grams(const Mesh& mesh, const SolutionBank& bank, const VoxelGrid& grid,
                                  const VoxelSet& block) {
  if (bank.displacements.rows() != mesh.num_dofs())
    throw std::invalid_argument("solution bank does not match the mesh");
  if (static_cast<int>(grid.element_to_voxel.size()) != mesh.num_elements())
    throw std::invalid_argument("voxel grid does not match the mesh");
  const int m = bank.size();
  FrechetGrams g{Eigen::MatrixXd::Zero(m, m), Eigen::MatrixXd::Zero(m, m), Eigen::MatrixXd::Zero(m, m)};
  const ElementMatrices em = element_matrices(mesh.spacing());
  Eigen::MatrixXd Ue(24, m);
  for (int e : grid.elements_of(block)) {
    const auto dofs = element_dofs(mesh, e);
    for (int r = 0; r < 24; ++r) Ue.row(r) = bank.displacements.row(dofs[r]);
    g.shear.noalias() += Ue.transpose() * (em.shear * Ue);
    g.volumetric.noalias() += Ue.transpose() * (em.volumetric * Ue);
    g.mass.noalias() += Ue.transpose() * (em.mass * Ue);
  }
  for (Eigen::MatrixXd* G : {&g.shear, &g.volumetric, &g.mass}) {
    const Eigen::MatrixXd sym = 0.5 * (*G + G->transpose());
    *G = sym;
  }
  return g;
}

/// Linearized NtD response: -(mu_hat S + lambda_hat V - omega^2 rho_hat W).
inline Eigen::MatrixXd frechet_matrix(const FrechetGrams& grams, double omega, const Perturbation& p) {
  return -(p.mu * grams.shear + p.lambda * grams.volumetric - (omega * omega * p.rho) * grams.mass);
}

inline Eigen::MatrixXd frechet_matrix(const Mesh& mesh, const SolutionBank& bank, const VoxelGrid& grid,
                                      const VoxelSet& block, const Perturbation& p) {
  return frechet_matrix(frechet_grams(mesh, bank, grid, block), bank.omega, p);
}

}  // namespace elastomono
