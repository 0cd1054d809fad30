#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "elastomono/forward.hpp"
#include "elastomono/noise.hpp"
#include "elastomono/parallel.hpp"
#include "elastomono/scenario.hpp"
#include "elastomono/spectral.hpp"

namespace elastomono {

enum class Method { Standard, Linearized };

inline std::string method_name(Method m) { return m == Method::Standard ? "standard" : "linearized"; }

/// Acceptance rule: standard accepts count <= cap, linearized count < cap.
inline bool accepts(Method method, int count, int m_cap) {
  return method == Method::Standard ? count <= m_cap : count < m_cap;
}

struct TestVerdict {
  int voxel = -1;
  std::vector<int> counts;  // one per parameter setting
  bool accepted = false;
  int m_cap = 0;
  double delta = 0.0;
};

/// Number of eigenvalues of `difference` strictly below -delta. Eigenvalues
/// within the round-off floor are treated as zero, which only matters for
/// delta at round-off level (noiseless data).
inline int negative_count(const Eigen::MatrixXd& difference, double delta) {
  return make_count_report(difference, delta).count_below;
}

inline TestVerdict standard_test(const Eigen::MatrixXd& ntd_noisy, const Eigen::MatrixXd& ntd_test,
                                 double delta, int m_cap) {
  if (ntd_noisy.rows() != ntd_test.rows() || ntd_noisy.cols() != ntd_test.cols())
    throw std::invalid_argument("standard_test: matrices use different load bases");
  if (!(delta >= 0.0)) throw std::invalid_argument("standard_test: delta must be >= 0");
  TestVerdict v;
  v.counts = {negative_count(ntd_test - ntd_noisy, delta)};
  v.accepted = accepts(Method::Standard, v.counts[0], m_cap);
  v.m_cap = m_cap;
  v.delta = delta;
  return v;
}

inline TestVerdict linearized_test(const Eigen::MatrixXd& ntd0, const Eigen::MatrixXd& frechet,
                                   const Eigen::MatrixXd& ntd_noisy, double delta, int m_cap) {
  if (ntd0.rows() != ntd_noisy.rows() || frechet.rows() != ntd_noisy.rows() ||
      ntd0.cols() != ntd_noisy.cols() || frechet.cols() != ntd_noisy.cols())
    throw std::invalid_argument("linearized_test: matrices use different load bases");
  if (!(delta >= 0.0)) throw std::invalid_argument("linearized_test: delta must be >= 0");
  TestVerdict v;
  v.counts = {negative_count(ntd0 + frechet - ntd_noisy, delta)};
  v.accepted = accepts(Method::Linearized, v.counts[0], m_cap);
  v.m_cap = m_cap;
  v.delta = delta;
  return v;
}

/// Accepted voxels plus every component of the complement that cannot
/// reach the boundary through non-accepted voxels.
inline VoxelSet fill_enclosed(const VoxelSet& accepted, const VoxelGrid& grid) {
  const int nv = grid.num_voxels();
  std::vector<char> blocked(nv + 1, 0), reached(nv + 1, 0);
  for (int v : accepted) {
    if (v < 0 || v >= nv) throw std::invalid_argument("fill_enclosed: voxel id out of range");
    blocked[v] = 1;
  }
  std::vector<int> stack{grid.boundary_node()};
  reached[grid.boundary_node()] = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int w : grid.adjacency[v])
      if (!blocked[w] && !reached[w]) {
        reached[w] = 1;
        stack.push_back(w);
      }
  }
  VoxelSet filled;
  for (int v = 0; v < nv; ++v)
    if (!reached[v]) filled.push_back(v);
  return filled;
}

/// Scenario with everything the tests reuse: discretization, true field,
/// simulated data Lambda and the background solutions.
struct ReconContext {
  Scenario scenario;
  Discretization disc;
  MaterialField true_field;
  VoxelSet truth;             // voxelized outer support of the inclusions
  NtDMatrix data;             // Lambda for the true coefficients
  SolutionBank background_bank;
  NtDMatrix background;       // Lambda_0

  int num_voxels() const { return disc.grid.num_voxels(); }
  int num_loads() const { return disc.loads.size(); }
};

/// Hooks for reusing expensive NtD solves (e.g. an on-disk cache).
struct SolveCache {
  std::function<std::optional<SolutionBank>(const MaterialField&)> load;
  std::function<void(const MaterialField&, const SolutionBank&)> store;
};

inline SolutionBank solve_cached(const Discretization& d, const MaterialField& field, double omega,
                                 int threads, const SolveCache* cache) {
  if (cache && cache->load)
    if (auto hit = cache->load(field)) return *hit;
  SolutionBank bank = solve_field(d.mesh, d.layout, d.loads, field, omega, threads);
  if (cache && cache->store) cache->store(field, bank);
  return bank;
}

/// `for_reconstruction = false` admits omega = 0 (forward-only runs).
inline ReconContext prepare(const Scenario& scenario, int threads = 1, const SolveCache* cache = nullptr,
                            bool for_reconstruction = true) {
  validate_scenario(scenario, for_reconstruction);
  ReconContext ctx;
  ctx.scenario = scenario;
  ctx.disc = discretize(scenario);
  ctx.true_field = make_material_field(scenario.background, scenario.inclusions, ctx.disc.grid);
  ctx.truth = fill_enclosed(inclusion_support(scenario.inclusions), ctx.disc.grid);
  const auto bg_field = uniform_field(scenario.background, ctx.disc.mesh.num_elements());
  ctx.background_bank = solve_cached(ctx.disc, bg_field, scenario.omega, threads, cache);
  ctx.background = ntd_from_bank(ctx.background_bank, ctx.disc.loads);
  if (scenario.inclusions.empty()) {
    ctx.data = ctx.background;
  } else {
    ctx.data = ntd_from_bank(solve_cached(ctx.disc, ctx.true_field, scenario.omega, threads, cache),
                             ctx.disc.loads);
  }
  return ctx;
}

/// Per-voxel test operators, one matrix per parameter setting: Lambda^flat
/// for the standard test, Lambda_0 + Lambda_0'[a1, a2, -a3] for the
/// linearized one. The noisy data is subtracted later.
using OperatorSource = std::function<std::vector<Eigen::MatrixXd>(int voxel)>;

/// Hooks for reusing test NtD matrices across runs. Must be thread safe.
struct NtdCache {
  std::function<std::optional<Eigen::MatrixXd>(const MaterialField&)> load;
  std::function<void(const MaterialField&, const Eigen::MatrixXd&)> store;
};

/// Each call runs one forward solve set per setting (unless cached).
inline OperatorSource standard_operators(const ReconContext& ctx, std::vector<AlphaSetting> settings,
                                         const NtdCache* cache = nullptr) {
  return [&ctx, settings = std::move(settings), cache](int voxel) {
    std::vector<Eigen::MatrixXd> ops;
    ops.reserve(settings.size());
    for (const auto& s : settings) {
      const auto field = make_test_coefficients(ctx.scenario.background, {voxel}, s.alpha, ctx.disc.grid);
      if (cache && cache->load)
        if (auto hit = cache->load(field)) {
          ops.push_back(std::move(*hit));
          continue;
        }
      const auto bank = solve_field(ctx.disc.mesh, ctx.disc.layout, ctx.disc.loads, field, ctx.scenario.omega);
      ops.push_back(ntd_from_bank(bank, ctx.disc.loads).values);
      if (cache && cache->store) cache->store(field, ops.back());
    }
    return ops;
  };
}

/// Uses only the background solutions; no forward solves per voxel.
inline OperatorSource linearized_operators(const ReconContext& ctx, std::vector<AlphaSetting> settings) {
  return [&ctx, settings = std::move(settings)](int voxel) {
    const auto grams = frechet_grams(ctx.disc.mesh, ctx.background_bank, ctx.disc.grid, {voxel});
    std::vector<Eigen::MatrixXd> ops;
    ops.reserve(settings.size());
    for (const auto& s : settings)
      ops.push_back(ctx.background.values +
                    frechet_matrix(grams, ctx.scenario.omega, {s.alpha.lambda, s.alpha.mu, -s.alpha.rho}));
    return ops;
  };
}

inline OperatorSource operators_for(const ReconContext& ctx, Method method, const NtdCache* cache = nullptr) {
  return method == Method::Standard ? standard_operators(ctx, ctx.scenario.standard_settings(), cache)
                                    : linearized_operators(ctx, ctx.scenario.linearized_settings());
}

inline std::vector<AlphaSetting> settings_for(const Scenario& s, Method method) {
  return method == Method::Standard ? s.standard_settings() : s.linearized_settings();
}

/// In-memory copy of every voxel's operators, for repeated noise studies.
struct OperatorBank {
  std::vector<std::vector<Eigen::MatrixXd>> ops;

  OperatorSource source() const {
    return [this](int voxel) { return ops.at(voxel); };
  }
};

inline OperatorBank materialize(const OperatorSource& source, int num_voxels, int threads = 1) {
  OperatorBank bank;
  bank.ops.resize(num_voxels);
  parallel_for(num_voxels, threads, [&](int v) { bank.ops[v] = source(v); });
  return bank;
}

/// Noisy measurement and the threshold delta used against it.
struct NoisyData {
  Eigen::MatrixXd values;
  double delta = 0.0;
};

/// counts[voxel][setting]
using CountTable = std::vector<std::vector<int>>;

/// Evaluates every voxel's operators once against each noisy input.
inline std::vector<CountTable> evaluate_counts(const OperatorSource& source, int num_voxels,
                                               std::span<const NoisyData> inputs, int threads = 1) {
  std::vector<CountTable> tables(inputs.size(), CountTable(num_voxels));
  parallel_for(num_voxels, threads, [&](int v) {
    const auto ops = source(v);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      auto& row = tables[k][v];
      row.reserve(ops.size());
      for (const auto& op : ops) {
        if (op.rows() != inputs[k].values.rows())
          throw std::invalid_argument("test operator and data use different load bases");
        row.push_back(negative_count(op - inputs[k].values, inputs[k].delta));
      }
    }
  });
  return tables;
}

/// A voxel passes if any setting passes, so its score is the smallest count.
inline int voxel_score(const std::vector<int>& counts) {
  return counts.empty() ? std::numeric_limits<int>::max() : *std::min_element(counts.begin(), counts.end());
}

/// Threshold window for a known ground truth, in "count <= cap" form:
/// any cap in [m_min, m_max] reproduces the truth exactly.
struct GapBounds {
  int m_min = 0;
  int m_max = 0;
  bool feasible = false;
};

inline GapBounds gap_bounds(const CountTable& counts, const VoxelSet& truth, int num_loads) {
  GapBounds g;
  g.m_min = 0;
  g.m_max = num_loads;
  for (int v = 0; v < static_cast<int>(counts.size()); ++v) {
    const int s = voxel_score(counts[v]);
    if (std::binary_search(truth.begin(), truth.end(), v)) g.m_min = std::max(g.m_min, s);
    else g.m_max = std::min(g.m_max, s - 1);
  }
  g.feasible = g.m_min <= g.m_max;
  return g;
}

/// Cap that reproduces a noiseless calibration as generously as possible.
inline int calibrated_cap(Method method, const GapBounds& g) {
  return method == Method::Standard ? g.m_max : g.m_max + 1;
}

struct ReconResult {
  Method method = Method::Standard;
  std::array<int, 3> resolution{};
  VoxelSet accepted;
  VoxelSet filled;
  CountTable counts;
  std::vector<std::string> setting_labels;
  int m_cap = 0;
  McapChoice mcap;
  NoisySpec noise;
  double delta = 0.0;
  std::optional<int> mode_count;        // M_s of the background
  std::optional<GapBounds> calibration; // noiseless window, when calibrated
};

inline ReconResult decide(Method method, CountTable counts, int m_cap, const VoxelGrid& grid) {
  ReconResult r;
  r.method = method;
  r.resolution = grid.resolution;
  r.m_cap = m_cap;
  for (int v = 0; v < static_cast<int>(counts.size()); ++v)
    if (accepts(method, voxel_score(counts[v]), m_cap)) r.accepted.push_back(v);
  r.filled = fill_enclosed(r.accepted, grid);
  r.counts = std::move(counts);
  return r;
}

struct ReconOptions {
  double eta = 0.0;
  std::uint64_t seed = 0;
  McapChoice mcap;
  std::optional<double> delta_override;
  bool symmetric_noise = true;
  int threads = 1;
};

inline ReconOptions options_from(const Scenario& s, int threads = 1) {
  return {s.eta, s.seed, s.mcap, s.delta_override, s.symmetric_noise, threads};
}

/// M_s of the background on the scenario mesh.
inline int scenario_mode_count(const ReconContext& ctx) {
  return background_mode_count(ctx.disc.mesh, ctx.scenario.dirichlet, ctx.scenario.background,
                               ctx.scenario.omega);
}

/// Shared driver for both algorithms, against any operator source.
inline ReconResult reconstruct_with(const ReconContext& ctx, Method method, const OperatorSource& source,
                                    const std::vector<AlphaSetting>& settings, const ReconOptions& opt) {
  const NoisyNtD noisy = perturb(ctx.data.values, opt.eta, opt.seed, opt.symmetric_noise);
  std::vector<NoisyData> inputs{{noisy.values, opt.delta_override.value_or(noisy.spec.delta)}};
  const bool calibrate = opt.mcap.policy == McapPolicy::Calibrate;
  if (calibrate) inputs.push_back({ctx.data.values, 0.0});
  auto tables = evaluate_counts(source, ctx.num_voxels(), inputs, opt.threads);

  int m_cap = opt.mcap.value;
  std::optional<int> mode_count;
  std::optional<GapBounds> calibration;
  if (opt.mcap.policy == McapPolicy::Theory) {
    mode_count = scenario_mode_count(ctx);
    m_cap = method == Method::Standard ? *mode_count : *mode_count + 1;
  } else if (calibrate) {
    calibration = gap_bounds(tables[1], ctx.truth, ctx.num_loads());
    m_cap = calibrated_cap(method, *calibration);
  }
  ReconResult r = decide(method, std::move(tables[0]), m_cap, ctx.disc.grid);
  for (const auto& s : settings) r.setting_labels.push_back(s.label);
  r.mcap = opt.mcap;
  r.noise = noisy.spec;
  r.delta = inputs[0].delta;
  r.mode_count = mode_count;
  r.calibration = calibration;
  return r;
}

inline ReconResult reconstruct_standard(const ReconContext& ctx, const ReconOptions& opt) {
  const auto settings = ctx.scenario.standard_settings();
  return reconstruct_with(ctx, Method::Standard, standard_operators(ctx, settings), settings, opt);
}

inline ReconResult reconstruct_linearized(const ReconContext& ctx, const ReconOptions& opt) {
  const auto settings = ctx.scenario.linearized_settings();
  return reconstruct_with(ctx, Method::Linearized, linearized_operators(ctx, settings), settings, opt);
}

inline ReconResult reconstruct(const ReconContext& ctx, Method method, const ReconOptions& opt) {
  return method == Method::Standard ? reconstruct_standard(ctx, opt) : reconstruct_linearized(ctx, opt);
}

struct SweepRow {
  double eta = 0.0;
  double delta = 0.0;
  int m_min = 0;
  int m_max = 0;
  bool feasible = false;
};

struct SweepReport {
  Method method = Method::Standard;
  std::uint64_t seed = 0;
  double ntd_norm = 0.0;
  std::vector<SweepRow> rows;
};

/// Threshold window [M_min, M_max] per noise level against the known truth.
inline SweepReport m_delta_sweep(const ReconContext& ctx, Method method, const OperatorSource& source,
                                 std::span<const double> etas, std::uint64_t seed,
                                 bool symmetric_noise = true, int threads = 1) {
  SweepReport rep;
  rep.method = method;
  rep.seed = seed;
  std::vector<NoisyData> inputs;
  for (double eta : etas) {
    const NoisyNtD noisy = perturb(ctx.data.values, eta, seed, symmetric_noise);
    rep.ntd_norm = noisy.spec.ntd_norm;
    inputs.push_back({noisy.values, noisy.spec.delta});
    rep.rows.push_back({eta, noisy.spec.delta, 0, 0, false});
  }
  const auto tables = evaluate_counts(source, ctx.num_voxels(), inputs, threads);
  for (std::size_t k = 0; k < tables.size(); ++k) {
    const GapBounds g = gap_bounds(tables[k], ctx.truth, ctx.num_loads());
    rep.rows[k].m_min = g.m_min;
    rep.rows[k].m_max = g.m_max;
    rep.rows[k].feasible = g.feasible;
  }
  return rep;
}

inline SweepReport m_delta_sweep(const ReconContext& ctx, Method method, std::span<const double> etas,
                                 std::uint64_t seed, int threads = 1) {
  return m_delta_sweep(ctx, method, operators_for(ctx, method), etas, seed, ctx.scenario.symmetric_noise,
                       threads);
}

/// Halves the linearized contrast fraction until the largest inside-voxel
/// count stops changing (or max_halvings is reached). Needs the truth.
inline double calibrate_linearized_fraction(const ReconContext& ctx, int max_halvings = 6, int threads = 1) {
  double fraction = ctx.scenario.linearized_fraction;
  std::optional<int> previous;
  const std::vector<NoisyData> clean{{ctx.data.values, 0.0}};
  for (int h = 0; h <= max_halvings; ++h) {
    const auto settings = default_alpha_settings(ctx.scenario.declared_contrast, fraction);
    const auto table = evaluate_counts(linearized_operators(ctx, settings), ctx.num_voxels(), clean, threads)[0];
    const int inside = gap_bounds(table, ctx.truth, ctx.num_loads()).m_min;
    if (previous && *previous == inside) return fraction * 2.0;
    previous = inside;
    fraction *= 0.5;
  }
  return fraction * 2.0;
}

}  // namespace elastomono
