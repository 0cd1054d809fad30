// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. Artifacts are kept under ./acceptance_artifacts.
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "elastomono/config.hpp"
#include "elastomono/io.hpp"
#include "elastomono/recon.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace elastomono;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

template <class F>
void report(int id, const std::string& name, F&& criterion) {
  const auto t0 = Clock::now();
  const Outcome o = criterion();
  const double secs = seconds_since(t0);
  std::printf("CRITERION %2d %s  %s: %s [%.2f s]\n", id, o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(),
              secs);
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

const fs::path kArtifacts = fs::absolute("acceptance_artifacts");
const std::string kFixture = ELASTOMONO_SCENARIO_DIR "/two_inclusions.json";
const std::vector<std::uint64_t> kSeeds{1, 2, 3};

// ---------------------------------------------------------------- 1

Outcome noise_identity() {
  std::mt19937_64 gen(20240601);
  std::uniform_int_distribution<int> size(5, 60);
  std::uniform_real_distribution<double> log_scale(-8.0, 0.0), eta(1e-4, 0.1);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto L = oracle::random_symmetric(size(gen), gen, std::pow(10.0, log_scale(gen)));
    const double e = eta(gen);
    const std::uint64_t seed = gen();
    const auto noisy = perturb(L, e, seed);
    const double target = e * oracle::symmetric_norm(L);
    worst = std::max(worst, std::abs(oracle::symmetric_norm(noisy.values - L) - target) / target);
  }
  return {worst <= 1e-12, "max relative deviation " + fmt("%.2e", worst) + " over 20 triples"};
}

// ---------------------------------------------------------------- 2

Outcome wave_lengths() {
  const auto w = wavelengths(6e5, 6e3, 3e3, 50.0);
  const bool ok = w.l_p >= 1.78 && w.l_p <= 1.80 && w.l_s >= 0.17 && w.l_s <= 0.19;
  return {ok, "l_p = " + fmt("%.4f", w.l_p) + " m, l_s = " + fmt("%.4f", w.l_s) + " m"};
}

// ---------------------------------------------------------------- 3

struct SmallProblem {
  Mesh mesh;
  BoundaryLayout layout;
  LoadSet loads;
  VoxelGrid grid;
  Lame bg{6e5, 6e3, 3e3};
  double omega = 50.0;

  SmallProblem()
      : mesh(build_mesh({1, 1, 1}, {4, 4, 4})),
        layout(partition_boundary(mesh, std::vector<Side>{Side::ZMin}, {2, 2})),
        loads(assemble_loads(mesh, layout, LoadDirections::Normal)),
        grid(voxel_grid(mesh, {2, 2, 2})) {}
};

Outcome forward_correctness() {
  const SmallProblem p;
  const auto field = make_test_coefficients(p.bg, {p.grid.voxel_index(1, 1, 1)}, {1.4e6, 1.4e4, 2e3}, p.grid);
  const auto bank = solve_field(p.mesh, p.layout, p.loads, field, p.omega);
  const auto ntd = ntd_from_bank(bank, p.loads);

  const auto ref = oracle::assemble(p.mesh.extent, p.mesh.resolution, field.lambda, field.mu, field.rho);
  std::vector<int> idx;
  for (int d = 0; d < p.mesh.num_dofs(); ++d)
    if (!p.layout.dirichlet_node[d / 3]) idx.push_back(d);
  const int n = static_cast<int>(idx.size());
  Eigen::MatrixXd A(n, n), F(n, p.loads.size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) A(i, j) = ref.K(idx[i], idx[j]) - p.omega * p.omega * ref.M(idx[i], idx[j]);
    F.row(i) = p.loads.vectors.row(idx[i]);
  }
  const Eigen::MatrixXd X = A.fullPivLu().solve(F);
  Eigen::MatrixXd U = Eigen::MatrixXd::Zero(p.mesh.num_dofs(), p.loads.size());
  for (int i = 0; i < n; ++i) U.row(idx[i]) = X.row(i);
  const double rel = (bank.displacements - U).norm() / U.norm();
  const bool ok = rel <= 1e-8 && ntd.asymmetry <= 1e-8;
  return {ok, "4^3 mesh, solve vs dense LU " + fmt("%.2e", rel) + ", NtD asymmetry " + fmt("%.2e", ntd.asymmetry)};
}

// ---------------------------------------------------------------- 4

Outcome frechet_consistency() {
  const SmallProblem p;
  const auto bank = solve_field(p.mesh, p.layout, p.loads, uniform_field(p.bg, p.mesh.num_elements()), p.omega);
  const Eigen::MatrixXd L0 = ntd_from_bank(bank, p.loads).values;
  const VoxelSet block{p.grid.voxel_index(1, 1, 1)};
  const Contrast dir{p.bg.lambda, p.bg.mu, p.bg.rho};
  const Eigen::MatrixXd D = frechet_matrix(p.mesh, bank, p.grid, block, {dir.lambda, dir.mu, -dir.rho});
  auto residual = [&](double t) {
    const auto f = make_test_coefficients(p.bg, block, dir.scaled(t), p.grid);
    const auto Lt = ntd_from_bank(solve_field(p.mesh, p.layout, p.loads, f, p.omega), p.loads).values;
    return (Lt - L0 - t * D).norm();
  };
  const double t = 2.5e-3;
  const double r1 = residual(t), r2 = residual(t / 2), r3 = residual(t / 4);
  const double o1 = std::log2(r1 / r2), o2 = std::log2(r2 / r3);
  const bool ok = o1 >= 1.8 && o1 <= 2.2 && o2 >= 1.8 && o2 <= 2.2;
  return {ok, "observed orders " + fmt("%.3f", o1) + ", " + fmt("%.3f", o2) + " (t = 2.5e-3, halved twice)"};
}

// ---------------------------------------------------------------- 5

Outcome eigen_oracle() {
  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> log_scale(-6.0, 6.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + (trial * 37) % 64;
    const auto A = oracle::random_symmetric(trial == 99 ? 64 : n, gen, std::pow(10.0, log_scale(gen)));
    const Eigen::VectorXd ev = eig_sym(A);
    const auto ref = oracle::eigenvalues_bisection(A);
    const double scale = oracle::symmetric_norm(A);
    for (int i = 0; i < ev.size(); ++i) worst = std::max(worst, std::abs(ev[i] - ref[i]) / scale);
  }
  return {worst <= 1e-10, "max |eig - sturm| / ||A|| = " + fmt("%.2e", worst) + " over 100 matrices"};
}

// ---------------------------------------------------------------- 6, 10

struct CliRun {
  int code = -1;
  double secs = 0.0;
  fs::path out;
};

CliRun run_cli(const std::string& command, const std::string& tag, int threads, const std::string& cache) {
  CliRun r;
  r.out = kArtifacts / tag;
  fs::remove_all(r.out);
  std::string cmd = std::string("env -u ELASTOMONO_CACHE_DIR ") + ELASTOMONO_CLI_PATH + " " + command +
                    " --config " + kFixture + " --threads " + std::to_string(threads) + " --out " + r.out.string();
  if (!cache.empty()) cmd += " --cache " + cache;
  cmd += " 2> " + (kArtifacts / (tag + ".log")).string();
  const auto t0 = Clock::now();
  const int status = std::system(cmd.c_str());
  r.secs = seconds_since(t0);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliRuns {
  CliRun std1, std8, lin1, lin8;
  fs::path cache = kArtifacts / "cache";
};

Outcome check_reconstruction(const CliRun& r, double limit, const std::string& label) {
  if (r.code != 0) return {false, label + " exited with " + std::to_string(r.code)};
  const json j = json::parse(slurp(r.out / "reconstruction.json"));
  const bool exact = j["filled"] == j["truth"] && j["truth"].size() == 2;
  std::ostringstream s;
  s << label << " filled " << j["filled"].dump() << " truth " << j["truth"].dump() << " cap " << j["m_cap"]
    << " window [" << j["calibration"]["M_min"] << ", " << j["calibration"]["M_max"] << "] in "
    << fmt("%.1f", r.secs) << " s (limit " << limit << " s)";
  return {exact && r.secs < limit, s.str()};
}

Outcome noiseless_reconstruction(CliRuns& runs) {
  fs::remove_all(runs.cache);
  runs.std1 = run_cli("reconstruct-standard", "standard_t1", 1, runs.cache.string());
  runs.lin1 = run_cli("reconstruct-linearized", "linearized_t1", 1, "");
  const auto s = check_reconstruction(runs.std1, 600.0, "standard");
  const auto l = check_reconstruction(runs.lin1, 60.0, "linearized");
  return {s.pass && l.pass, s.detail + "; " + l.detail};
}

Outcome determinism(CliRuns& runs) {
  runs.std8 = run_cli("reconstruct-standard", "standard_t8", 8, "");
  runs.lin8 = run_cli("reconstruct-linearized", "linearized_t8", 8, "");
  std::vector<std::string> differing;
  int compared = 0;
  for (const auto& [a, b] : {std::pair{&runs.std1, &runs.std8}, std::pair{&runs.lin1, &runs.lin8}})
    for (const char* f : {"counts.csv", "reconstruction.vtk", "reconstruction.json"}) {
      ++compared;
      const auto pa = a->out / f, pb = b->out / f;
      if (!fs::exists(pa) || !fs::exists(pb) || slurp(pa) != slurp(pb)) differing.push_back(b->out.filename().string() + "/" + f);
    }
  std::string detail = std::to_string(compared - static_cast<int>(differing.size())) + "/" +
                       std::to_string(compared) + " artifacts bitwise identical (threads 1 vs 8, independent runs)";
  for (const auto& d : differing) detail += " differs: " + d;
  const bool ok = differing.empty() && runs.std8.code == 0 && runs.lin8.code == 0;
  return {ok, detail};
}

// ---------------------------------------------------------------- 7, 8, 9

struct MethodData {
  Method method;
  OperatorBank bank;
  int cap = 0;
  VoxelSet reference;  // accepted voxels at eta = 0
  std::map<std::uint64_t, double> eta_star;
  std::map<std::uint64_t, std::vector<std::pair<double, bool>>> tested;
  double joint_eta_star = 0.0;
};

struct Fixture {
  ReconContext ctx;
  MethodData standard{Method::Standard, {}, 0, {}, {}, {}, 0.0};
  MethodData linearized{Method::Linearized, {}, 0, {}, {}, {}, 0.0};
};

VoxelSet accepted_at(const Fixture& fx, const MethodData& md, double eta, std::uint64_t seed) {
  const auto noisy = perturb(fx.ctx.data.values, eta, seed, fx.ctx.scenario.symmetric_noise);
  const std::vector<NoisyData> in{{noisy.values, noisy.spec.delta}};
  auto table = evaluate_counts(md.bank.source(), fx.ctx.num_voxels(), in, 1)[0];
  return decide(md.method, std::move(table), md.cap, fx.ctx.disc.grid).accepted;
}

void calibrate(const Fixture& fx, MethodData& md) {
  const std::vector<NoisyData> clean{{fx.ctx.data.values, 0.0}};
  auto table = evaluate_counts(md.bank.source(), fx.ctx.num_voxels(), clean, 1)[0];
  md.cap = calibrated_cap(md.method, gap_bounds(table, fx.ctx.truth, fx.ctx.num_loads()));
  md.reference = decide(md.method, std::move(table), md.cap, fx.ctx.disc.grid).accepted;
}

// Largest eta found by doubling and bisection for which the verdicts of
// this seed still match the noiseless reconstruction.
void search_eta_star(const Fixture& fx, MethodData& md, std::uint64_t seed) {
  auto& tested = md.tested[seed];
  auto same = [&](double eta) {
    const bool ok = accepted_at(fx, md, eta, seed) == md.reference;
    tested.emplace_back(eta, ok);
    return ok;
  };
  double lo = 0.0, hi = 1e-3;
  if (same(hi)) {
    lo = hi;
    while (hi < 1.0 && same(hi * 2.0)) hi *= 2.0, lo = hi;
    hi *= 2.0;
  } else {
    while (hi > 1e-9 && !same(hi / 2.0)) hi /= 2.0;
    lo = hi / 2.0;
    if (hi <= 1e-9) lo = 0.0;
  }
  while (lo > 0.0 && hi - lo > 1e-3 * lo) {
    const double mid = 0.5 * (lo + hi);
    (same(mid) ? lo : hi) = mid;
  }
  md.eta_star[seed] = lo;
}

Outcome noise_robustness(Fixture& fx) {
  std::ostringstream s;
  bool ok = true;
  for (MethodData* md : {&fx.standard, &fx.linearized}) {
    calibrate(fx, *md);
    double joint = 1e300;
    for (auto seed : kSeeds) {
      search_eta_star(fx, *md, seed);
      joint = std::min(joint, md->eta_star[seed]);
    }
    md->joint_eta_star = joint;
    bool below_ok = joint > 0.0 && md->reference == fx.ctx.truth;
    int checks = 0;
    for (auto seed : kSeeds) {
      for (const auto& [eta, same] : md->tested[seed])
        if (eta <= joint) below_ok = below_ok && same, ++checks;
      for (int k = 1; k <= 8; ++k, ++checks)
        below_ok = below_ok && accepted_at(fx, *md, joint * k / 8.0, seed) == md->reference;
    }
    bool breaks = false;
    for (auto seed : kSeeds) breaks = breaks || accepted_at(fx, *md, 2.0 * joint, seed) != md->reference;
    ok = ok && below_ok && breaks;
    s << method_name(md->method) << ": eta* = " << fmt("%.4g", joint) << " (seeds";
    for (auto seed : kSeeds) s << " " << fmt("%.4g", md->eta_star[seed]);
    s << "), cap " << md->cap << ", " << checks << " checks below eta* " << (below_ok ? "agree" : "DISAGREE")
      << ", verdicts at 2 eta* " << (breaks ? "change" : "UNCHANGED") << "; ";
  }
  return {ok, s.str()};
}

// Smallest power-of-two multiple of eta* at which the threshold window is
// infeasible for every seed.
double feasibility_breakdown(const Fixture& fx, const MethodData& md) {
  for (double eta = 2.0 * md.joint_eta_star; eta <= 1.0; eta *= 2.0) {
    std::vector<NoisyData> in;
    for (auto seed : kSeeds) {
      const auto noisy = perturb(fx.ctx.data.values, eta, seed, fx.ctx.scenario.symmetric_noise);
      in.push_back({noisy.values, noisy.spec.delta});
    }
    const auto tables = evaluate_counts(md.bank.source(), fx.ctx.num_voxels(), in, 1);
    bool all_lost = true;
    for (const auto& t : tables) all_lost = all_lost && !gap_bounds(t, fx.ctx.truth, fx.ctx.num_loads()).feasible;
    if (all_lost) return eta;
  }
  return 1.0;
}

Outcome gap_behaviour(const Fixture& fx) {
  std::ostringstream s;
  bool ok = true;
  for (const MethodData* md : {&fx.standard, &fx.linearized}) {
    // 0, then geometric levels from eta*/8 up to the breakdown level
    const double lo = md->joint_eta_star / 8.0, hi = feasibility_breakdown(fx, *md);
    std::vector<double> etas{0.0};
    const int levels = 30;
    for (int k = 0; k < levels; ++k) etas.push_back(lo * std::pow(hi / lo, k / double(levels - 1)));
    int jitter_violations = 0, feasible_below_failures = 0;
    bool lost_everywhere = true;
    std::string first_loss;
    for (auto seed : kSeeds) {
      const auto rep = m_delta_sweep(fx.ctx, md->method, md->bank.source(), etas, seed,
                                     fx.ctx.scenario.symmetric_noise, 1);
      bool lost = false;
      for (std::size_t k = 0; k < rep.rows.size(); ++k) {
        const auto& r = rep.rows[k];
        if (k > 0) {
          const auto& p = rep.rows[k - 1];
          if ((r.m_max - r.m_min) > (p.m_max - p.m_min) + 1) ++jitter_violations;
        }
        if (r.eta <= md->joint_eta_star && !r.feasible) ++feasible_below_failures;
        if (r.eta > md->joint_eta_star && !r.feasible && !lost) {
          lost = true;
          first_loss += " " + fmt("%.3g", r.eta);
        }
      }
      lost_everywhere = lost_everywhere && lost;
      std::ofstream(kArtifacts / ("sweep_" + method_name(md->method) + "_seed" + std::to_string(seed) + ".csv"))
          << sweep_csv(rep);
    }
    const bool m_ok = jitter_violations == 0 && feasible_below_failures == 0 && lost_everywhere;
    ok = ok && m_ok;
    s << method_name(md->method) << ": " << etas.size() << " levels up to " << fmt("%.3g", hi) << " x 3 seeds, "
      << jitter_violations << " gap increases > 1, " << feasible_below_failures
      << " infeasible rows at eta <= eta*, first infeasible eta per seed" << (first_loss.empty() ? " none" : first_loss)
      << "; ";
  }
  return {ok, s.str()};
}

Outcome relative_robustness(const Fixture& fx, const CliRuns& runs) {
  std::ostringstream s;
  bool ok = true;
  for (auto seed : kSeeds) {
    const double a = fx.standard.eta_star.at(seed), b = fx.linearized.eta_star.at(seed);
    ok = ok && a >= b;
    s << "seed " << seed << ": " << fmt("%.4g", a) << " vs " << fmt("%.4g", b) << "; ";
  }
  const bool fast = runs.lin1.code == 0 && runs.std1.code == 0 && runs.lin1.secs < runs.std1.secs / 10.0;
  s << "wall clock linearized " << fmt("%.1f", runs.lin1.secs) << " s vs standard " << fmt("%.1f", runs.std1.secs)
    << " s (ratio " << fmt("%.3f", runs.lin1.secs / runs.std1.secs) << ")";
  return {ok && fast, s.str()};
}

}  // namespace

int main() {
  fs::create_directories(kArtifacts);
  report(1, "noise identity", noise_identity);
  report(2, "wavelengths", wave_lengths);
  report(3, "forward correctness", forward_correctness);
  report(4, "Frechet consistency", frechet_consistency);
  report(5, "eigen oracle", eigen_oracle);

  CliRuns runs;
  report(6, "noiseless reconstruction", [&] { return noiseless_reconstruction(runs); });

  // Criteria 7-9 reuse the standard operators cached by the criterion 6 run.
  Fixture fx;
  {
    const Scenario scenario = load_scenario(kFixture);
    DiskCache cache(runs.cache);
    const auto solve_hooks = cache.hooks(scenario);
    const auto ntd_hooks = cache.ntd_hooks(scenario);
    fx.ctx = prepare(scenario, 1, &solve_hooks);
    fx.standard.bank =
        materialize(standard_operators(fx.ctx, scenario.standard_settings(), &ntd_hooks), fx.ctx.num_voxels());
    fx.linearized.bank = materialize(linearized_operators(fx.ctx, scenario.linearized_settings()), fx.ctx.num_voxels());
    std::printf("# operator banks ready: %d cache hits, %d misses\n", cache.hits(), cache.misses());
  }
  report(7, "noise robustness", [&] { return noise_robustness(fx); });
  report(8, "gap behaviour", [&] { return gap_behaviour(fx); });
  report(9, "relative robustness", [&] { return relative_robustness(fx, runs); });
  report(10, "determinism", [&] { return determinism(runs); });

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
