#pragma once

// Independent reference implementations used only by the tests. Nothing here
// calls into the library's assembly, eigen or fill routines.

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/// Trilinear shape function of local corner (cx, cy, cz) on [0,hx]x[0,hy]x[0,hz]
/// and its gradient, in physical coordinates.
struct Shape {
  double value;
  Eigen::Vector3d grad;
};

inline Shape shape(const std::array<int, 3>& corner, const Eigen::Vector3d& x, const Eigen::Vector3d& h) {
  std::array<double, 3> f{}, df{};
  for (int d = 0; d < 3; ++d) {
    const double t = x[d] / h[d];
    f[d] = corner[d] ? t : 1.0 - t;
    df[d] = (corner[d] ? 1.0 : -1.0) / h[d];
  }
  return {f[0] * f[1] * f[2], {df[0] * f[1] * f[2], f[0] * df[1] * f[2], f[0] * f[1] * df[2]}};
}

/// Local corners in the library's node order (bottom face counter-clockwise, then top).
inline const std::array<std::array<int, 3>, 8>& corners() {
  static const std::array<std::array<int, 3>, 8> c = {
      {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}}};
  return c;
}

/// 3-point Gauss-Legendre rule on [0, 1].
inline std::array<std::pair<double, double>, 3> gauss3() {
  const double a = std::sqrt(0.6);
  return {{{0.5 * (1 - a), 5.0 / 18.0}, {0.5, 8.0 / 18.0}, {0.5 * (1 + a), 5.0 / 18.0}}};
}

/// Element stiffness from the full isotropic elasticity tensor
/// C_ijkl = lambda d_ij d_kl + mu (d_ik d_jl + d_il d_jk).
inline Eigen::MatrixXd element_stiffness(const Eigen::Vector3d& h, double lambda, double mu) {
  auto C = [&](int i, int j, int k, int l) {
    return lambda * (i == j) * (k == l) + mu * ((i == k) * (j == l) + (i == l) * (j == k));
  };
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(24, 24);
  const auto g = gauss3();
  for (const auto& [px, wx] : g)
    for (const auto& [py, wy] : g)
      for (const auto& [pz, wz] : g) {
        const Eigen::Vector3d x(px * h[0], py * h[1], pz * h[2]);
        const double w = wx * wy * wz * h.prod();
        // strain[a][c](i,j) of the basis field N_a e_c
        std::array<std::array<Eigen::Matrix3d, 3>, 8> strain;
        for (int a = 0; a < 8; ++a) {
          const auto s = shape(corners()[a], x, h);
          for (int c = 0; c < 3; ++c) {
            Eigen::Matrix3d G = Eigen::Matrix3d::Zero();
            G.row(c) = s.grad.transpose();  // (grad u)_ij = d_j u_i
            strain[a][c] = 0.5 * (G + G.transpose());
          }
        }
        for (int a = 0; a < 8; ++a)
          for (int c = 0; c < 3; ++c)
            for (int b = 0; b < 8; ++b)
              for (int d = 0; d < 3; ++d) {
                double e = 0.0;
                for (int i = 0; i < 3; ++i)
                  for (int j = 0; j < 3; ++j)
                    for (int k = 0; k < 3; ++k)
                      for (int l = 0; l < 3; ++l)
                        e += C(i, j, k, l) * strain[a][c](i, j) * strain[b][d](k, l);
                K(3 * a + c, 3 * b + d) += w * e;
              }
      }
  return K;
}

inline Eigen::MatrixXd element_mass(const Eigen::Vector3d& h, double rho) {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(24, 24);
  const auto g = gauss3();
  for (const auto& [px, wx] : g)
    for (const auto& [py, wy] : g)
      for (const auto& [pz, wz] : g) {
        const Eigen::Vector3d x(px * h[0], py * h[1], pz * h[2]);
        const double w = wx * wy * wz * h.prod();
        for (int a = 0; a < 8; ++a)
          for (int b = 0; b < 8; ++b) {
            const double nn = shape(corners()[a], x, h).value * shape(corners()[b], x, h).value;
            for (int c = 0; c < 3; ++c) M(3 * a + c, 3 * b + c) += w * rho * nn;
          }
      }
  return M;
}

/// Dense global matrices on an n0 x n1 x n2 brick mesh of the box `extent`,
/// per-element coefficients in x-fastest element order.
struct DenseSystem {
  Eigen::MatrixXd K;
  Eigen::MatrixXd M;
};

inline DenseSystem assemble(const std::array<double, 3>& extent, const std::array<int, 3>& n,
                            const std::vector<double>& lambda, const std::vector<double>& mu,
                            const std::vector<double>& rho) {
  const Eigen::Vector3d h(extent[0] / n[0], extent[1] / n[1], extent[2] / n[2]);
  const int nodes = (n[0] + 1) * (n[1] + 1) * (n[2] + 1);
  DenseSystem s{Eigen::MatrixXd::Zero(3 * nodes, 3 * nodes), Eigen::MatrixXd::Zero(3 * nodes, 3 * nodes)};
  const Eigen::MatrixXd Kunit_l = element_stiffness(h, 1.0, 0.0);
  const Eigen::MatrixXd Kunit_m = element_stiffness(h, 0.0, 1.0);
  const Eigen::MatrixXd Munit = element_mass(h, 1.0);
  int e = 0;
  for (int k = 0; k < n[2]; ++k)
    for (int j = 0; j < n[1]; ++j)
      for (int i = 0; i < n[0]; ++i, ++e) {
        std::array<int, 8> node{};
        for (int a = 0; a < 8; ++a) {
          const auto& c = corners()[a];
          node[a] = (i + c[0]) + (n[0] + 1) * ((j + c[1]) + (n[1] + 1) * (k + c[2]));
        }
        const Eigen::MatrixXd Ke = lambda[e] * Kunit_l + mu[e] * Kunit_m;
        for (int a = 0; a < 8; ++a)
          for (int b = 0; b < 8; ++b)
            for (int c = 0; c < 3; ++c)
              for (int d = 0; d < 3; ++d) {
                s.K(3 * node[a] + c, 3 * node[b] + d) += Ke(3 * a + c, 3 * b + d);
                s.M(3 * node[a] + c, 3 * node[b] + d) += rho[e] * Munit(3 * a + c, 3 * b + d);
              }
      }
  return s;
}

/// Householder reduction to tridiagonal form (diagonal, off-diagonal).
inline std::pair<std::vector<double>, std::vector<double>> tridiagonalize(Eigen::MatrixXd A) {
  const int n = static_cast<int>(A.rows());
  for (int k = 0; k + 2 < n; ++k) {
    Eigen::VectorXd x = A.col(k).tail(n - k - 1);
    const double alpha = -std::copysign(x.norm(), x[0]);
    if (alpha == 0.0) continue;
    Eigen::VectorXd v = x;
    v[0] -= alpha;
    const double vn = v.norm();
    if (vn == 0.0) continue;
    v /= vn;
    // A <- H A H with H = I - 2 v v^T acting on rows/cols k+1..n-1
    auto block = A.bottomRightCorner(n - k - 1, n - k - 1);
    const Eigen::VectorXd p = block * v;
    const double K = v.dot(p);
    const Eigen::VectorXd q = p - K * v;
    block -= 2.0 * (v * q.transpose() + q * v.transpose());
    A(k + 1, k) = alpha;
    A(k, k + 1) = alpha;
    for (int i = k + 2; i < n; ++i) A(i, k) = A(k, i) = 0.0;
  }
  std::vector<double> d(n), e(n > 0 ? n - 1 : 0);
  for (int i = 0; i < n; ++i) d[i] = A(i, i);
  for (int i = 0; i + 1 < n; ++i) e[i] = A(i + 1, i);
  return {d, e};
}

/// Number of eigenvalues of the tridiagonal matrix strictly below x (Sturm count).
inline int sturm_count(const std::vector<double>& d, const std::vector<double>& e, double x) {
  int count = 0;
  double q = 1.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double off = i == 0 ? 0.0 : e[i - 1] * e[i - 1];
    q = d[i] - x - (i == 0 ? 0.0 : off / q);
    if (q == 0.0) q = -1e-300;
    if (q < 0.0) ++count;
  }
  return count;
}

/// Ascending eigenvalues of a symmetric matrix by bisection on Sturm counts.
inline std::vector<double> eigenvalues_bisection(const Eigen::MatrixXd& A) {
  const auto [d, e] = tridiagonalize(A);
  const int n = static_cast<int>(d.size());
  double lo = 0.0, hi = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = (i > 0 ? std::abs(e[i - 1]) : 0.0) + (i + 1 < n ? std::abs(e[i]) : 0.0);
    lo = std::min(lo, d[i] - r);
    hi = std::max(hi, d[i] + r);
  }
  lo -= 1e-12 * (1.0 + std::abs(lo));
  hi += 1e-12 * (1.0 + std::abs(hi));
  std::vector<double> out(n);
  for (int k = 0; k < n; ++k) {
    double a = lo, b = hi;
    for (int it = 0; it < 2100 && b - a > 2e-16 * std::max(std::abs(a), std::abs(b)); ++it) {
      const double mid = 0.5 * (a + b);
      if (mid == a || mid == b) break;
      if (sturm_count(d, e, mid) > k) b = mid;
      else a = mid;
    }
    out[k] = 0.5 * (a + b);
  }
  return out;
}

/// Largest singular value by power iteration on A^T A.
inline double power_norm(const Eigen::MatrixXd& A, int iterations = 2000) {
  Eigen::VectorXd x = Eigen::VectorXd::Ones(A.cols());
  double sigma = 0.0;
  for (int it = 0; it < iterations; ++it) {
    const Eigen::VectorXd y = A.transpose() * (A * x);
    const double ny = y.norm();
    if (ny == 0.0) return 0.0;
    x = y / ny;
    const double next = std::sqrt(ny);
    if (std::abs(next - sigma) <= 1e-15 * next) return next;
    sigma = next;
  }
  return sigma;
}

/// Spectral norm of a symmetric matrix as max |eigenvalue| from bisection.
inline double symmetric_norm(const Eigen::MatrixXd& A) {
  const auto ev = eigenvalues_bisection(A);
  return ev.empty() ? 0.0 : std::max(std::abs(ev.front()), std::abs(ev.back()));
}

inline Eigen::MatrixXd random_symmetric(int n, std::mt19937_64& gen, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::MatrixXd A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) A(i, j) = A(j, i) = u(gen);
  return A;
}

/// Voxels in `set` plus voxels not reachable from the outside of the grid
/// through voxels outside `set`. Grid given by its resolution, ids x-fastest.
inline std::vector<int> filled(const std::vector<int>& set, const std::array<int, 3>& r) {
  const int n = r[0] * r[1] * r[2];
  std::vector<char> in(n, 0), outside(n, 0);
  for (int v : set) in[v] = 1;
  std::queue<std::array<int, 3>> q;
  for (int k = 0; k < r[2]; ++k)
    for (int j = 0; j < r[1]; ++j)
      for (int i = 0; i < r[0]; ++i) {
        const bool border = i == 0 || j == 0 || k == 0 || i == r[0] - 1 || j == r[1] - 1 || k == r[2] - 1;
        const int v = i + r[0] * (j + r[1] * k);
        if (border && !in[v]) {
          outside[v] = 1;
          q.push({i, j, k});
        }
      }
  const int step[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  while (!q.empty()) {
    const auto c = q.front();
    q.pop();
    for (const auto& s : step) {
      const int i = c[0] + s[0], j = c[1] + s[1], k = c[2] + s[2];
      if (i < 0 || j < 0 || k < 0 || i >= r[0] || j >= r[1] || k >= r[2]) continue;
      const int v = i + r[0] * (j + r[1] * k);
      if (in[v] || outside[v]) continue;
      outside[v] = 1;
      q.push({i, j, k});
    }
  }
  std::vector<int> out;
  for (int v = 0; v < n; ++v)
    if (!outside[v]) out.push_back(v);
  return out;
}

}  // namespace oracle
