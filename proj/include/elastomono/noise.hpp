#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "elastomono/spectral.hpp"

namespace elastomono {

/// Operator 2-norm. Symmetric input uses the eigenvalues, anything else the SVD.
inline double spectral_norm(const Eigen::MatrixXd& A) {
  if (A.size() == 0) return 0.0;
  if (A.rows() == A.cols() && A == A.transpose()) {
    const Eigen::VectorXd ev = eig_sym(A);
    return std::max(std::abs(ev[0]), std::abs(ev[ev.size() - 1]));
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  return svd.singularValues()[0];
}

/// Uniform double in [-1, 1) from the top 53 bits of a mt19937_64 draw.
/// The mapping is spelled out so sequences agree across standard libraries.
inline double uniform_pm1(std::mt19937_64& gen) {
  const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
  return 2.0 * u - 1.0;
}

/// E = E~ / ||E~||_2 with E~ entrywise uniform on [-1, 1], filled row-major
/// from mt19937_64(seed). With `symmetrize`, E~ is replaced by (E~ + E~^T)/2
/// before normalizing.
inline Eigen::MatrixXd noise_matrix(int m, std::uint64_t seed, bool symmetrize = true) {
  if (m < 1) throw std::invalid_argument("noise matrix dimension must be >= 1");
  std::mt19937_64 gen(seed);
  Eigen::MatrixXd E(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) E(i, j) = uniform_pm1(gen);
  if (symmetrize) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < i; ++j) {
        const double s = 0.5 * (E(i, j) + E(j, i));
        E(i, j) = s;
        E(j, i) = s;
      }
  }
  return E / spectral_norm(E);
}

struct NoisySpec {
  double eta = 0.0;
  std::uint64_t seed = 0;
  double delta = 0.0;      // eta * ||Lambda||_2
  double ntd_norm = 0.0;   // ||Lambda||_2
  bool symmetric = true;
};

struct NoisyNtD {
  Eigen::MatrixXd values;
  NoisySpec spec;
};

/// Lambda^delta = Lambda + eta ||Lambda||_2 E.
inline NoisyNtD perturb(const Eigen::MatrixXd& ntd, double eta, std::uint64_t seed, bool symmetrize = true) {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw std::invalid_argument("noise level eta must be >= 0");
  if (ntd.rows() != ntd.cols()) throw std::invalid_argument("NtD matrix must be square");
  NoisyNtD out;
  out.spec.eta = eta;
  out.spec.seed = seed;
  out.spec.symmetric = symmetrize;
  out.spec.ntd_norm = spectral_norm(ntd);
  out.spec.delta = eta * out.spec.ntd_norm;
  if (eta == 0.0 || ntd.size() == 0) {
    out.values = ntd;
    return out;
  }
  out.values = ntd + out.spec.delta * noise_matrix(static_cast<int>(ntd.rows()), seed, symmetrize);
  return out;
}

}  // namespace elastomono
