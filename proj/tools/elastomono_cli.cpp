// Batch driver: forward solves, both reconstruction algorithms, noise sweeps
// and eigenvalue dumps for one scenario file.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "elastomono/config.hpp"
#include "elastomono/io.hpp"
#include "elastomono/recon.hpp"

namespace em = elastomono;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode : int { kOk = 0, kConfigError = 2, kResonance = 3, kInfeasibleSweep = 4, kInternal = 5 };

constexpr const char* kCacheEnv = "ELASTOMONO_CACHE_DIR";

class InfeasibleSweep : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::string command;
  std::string config;
  std::string eta;
  std::optional<std::uint64_t> seed;
  std::string mcap;
  std::optional<double> delta_override;
  int threads = em::hardware_threads();
  std::string cache;
  std::string out = "out";
  std::string method = "linearized";
  std::vector<std::string> voxels;
};

std::mutex log_mutex;

void log_line(const std::string& msg) {
  std::lock_guard lock(log_mutex);
  std::cerr << msg << "\n";
}

double parse_double(const std::string& text, const char* what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw em::ConfigError(std::string("cannot parse ") + what + " '" + text + "'");
  return v;
}

/// "F" or "start:stop:step" (inclusive of stop up to rounding).
std::vector<double> parse_eta_list(const std::string& text) {
  const auto first = text.find(':');
  if (first == std::string::npos) return {parse_double(text, "eta")};
  const auto second = text.find(':', first + 1);
  if (second == std::string::npos) throw em::ConfigError("eta range must be start:stop:step");
  const double start = parse_double(text.substr(0, first), "eta start");
  const double stop = parse_double(text.substr(first + 1, second - first - 1), "eta stop");
  const double step = parse_double(text.substr(second + 1), "eta step");
  if (!(step > 0.0) || !(stop >= start) || !(start >= 0.0))
    throw em::ConfigError("eta range needs 0 <= start <= stop and step > 0");
  const long n = std::lround(std::floor((stop - start) / step + 1e-9)) + 1;
  std::vector<double> etas;
  for (long k = 0; k < n; ++k) etas.push_back(start + static_cast<double>(k) * step);
  return etas;
}

em::Method parse_method(const std::string& text) {
  if (text == "standard") return em::Method::Standard;
  if (text == "linearized") return em::Method::Linearized;
  throw em::ConfigError("method must be 'standard' or 'linearized'");
}

/// Scenario file with command-line overrides applied.
em::Scenario resolve_scenario(const Flags& f) {
  em::Scenario s = em::load_scenario(f.config);
  if (!f.eta.empty() && f.command != "sweep") s.eta = parse_double(f.eta, "eta");
  if (f.seed) s.seed = *f.seed;
  if (!f.mcap.empty()) {
    try {
      s.mcap = em::McapChoice::parse(f.mcap);
    } catch (const std::invalid_argument& e) {
      throw em::ConfigError(e.what());
    }
  }
  if (f.delta_override) s.delta_override = *f.delta_override;
  try {
    em::validate_scenario(s, f.command != "forward");
  } catch (const std::invalid_argument& e) {
    throw em::ConfigError(e.what());
  }
  return s;
}

json metadata(const Flags& f, const em::Scenario& s) {
  return json{{"tool", "elastomono"},
              {"format_version", em::kCacheFormatVersion},
              {"command", f.command},
              {"seed", s.seed},
              {"config", em::scenario_to_json(s)}};
}

/// One comment line carrying the metadata, for CSV artifacts.
std::string csv_preamble(const json& meta) { return "# " + meta.dump() + "\n"; }

json voxel_list(const em::VoxelSet& set, const em::VoxelGrid& grid) {
  json out = json::array();
  for (int v : set) {
    const auto c = grid.voxel_coords(v);
    out.push_back({c[0], c[1], c[2]});
  }
  return out;
}

std::string hash_matrix(const Eigen::MatrixXd& M) {
  em::Fnv1a h;
  h.value(static_cast<std::int64_t>(M.rows()));
  h.value(static_cast<std::int64_t>(M.cols()));
  h.bytes(M.data(), sizeof(double) * M.size());
  return em::hex64(h.digest());
}

std::string matrix_csv(const Eigen::MatrixXd& M) {
  std::ostringstream out;
  for (int i = 0; i < M.rows(); ++i) {
    for (int j = 0; j < M.cols(); ++j) out << (j ? "," : "") << em::format_double(M(i, j));
    out << "\n";
  }
  return out.str();
}

struct Session {
  Flags flags;
  em::Scenario scenario;
  json meta;
  fs::path out;
  std::unique_ptr<em::DiskCache> cache;
  em::SolveCache solve_hooks;
  em::NtdCache ntd_hooks;

  explicit Session(const Flags& f) : flags(f), scenario(resolve_scenario(f)), meta(metadata(f, scenario)), out(f.out) {
    std::string dir = f.cache;
    if (dir.empty())
      if (const char* env = std::getenv(kCacheEnv)) dir = env;
    if (!dir.empty()) {
      cache = std::make_unique<em::DiskCache>(dir, log_line);
      solve_hooks = cache->hooks(scenario);
      ntd_hooks = cache->ntd_hooks(scenario);
    }
  }

  const em::SolveCache* solve_cache() const { return cache ? &solve_hooks : nullptr; }
  const em::NtdCache* ntd_cache() const { return cache ? &ntd_hooks : nullptr; }

  em::ReconContext context(bool for_reconstruction = true) const {
    return em::prepare(scenario, flags.threads, solve_cache(), for_reconstruction);
  }

  em::OperatorSource operators(const em::ReconContext& ctx, em::Method method) const {
    return em::operators_for(ctx, method, ntd_cache());
  }

  void write(const std::string& name, const std::string& content) const {
    em::write_file_atomic(out / name, content);
    log_line("wrote " + (out / name).string());
  }
};

int run_forward(const Session& s) {
  const auto ctx = s.context(false);
  const auto noisy = em::perturb(ctx.data.values, s.scenario.eta, s.scenario.seed, s.scenario.symmetric_noise);
  json result = s.meta;
  result["num_dofs"] = ctx.disc.mesh.num_dofs();
  result["num_loads"] = ctx.num_loads();
  result["ntd_norm"] = noisy.spec.ntd_norm;
  result["delta"] = noisy.spec.delta;
  result["ntd_asymmetry"] = ctx.data.asymmetry;
  result["ntd_hash"] = hash_matrix(ctx.data.values);
  result["noisy_ntd_hash"] = hash_matrix(noisy.values);
  result["background_mode_count"] = em::scenario_mode_count(ctx);
  const auto& bg = s.scenario.background;
  if (s.scenario.omega > 0.0) {
    const auto w = em::wavelengths(bg.lambda, bg.mu, bg.rho, s.scenario.omega);
    result["waves"] = json{{"v_p_m_s", w.v_p}, {"v_s_m_s", w.v_s}, {"l_p_m", w.l_p}, {"l_s_m", w.l_s}};
  }
  s.write("ntd.csv", csv_preamble(s.meta) + matrix_csv(ctx.data.values));
  s.write("ntd_eigenvalues.csv",
          csv_preamble(s.meta) + em::eigen_report_csv(em::make_eigen_report(noisy.values, -noisy.spec.delta, "ntd")));
  s.write("forward.json", result.dump(2) + "\n");
  return kOk;
}

int run_reconstruct(const Session& s, em::Method method) {
  const auto ctx = s.context();
  const auto settings = em::settings_for(s.scenario, method);
  const auto result =
      em::reconstruct_with(ctx, method, s.operators(ctx, method), settings, em::options_from(s.scenario, s.flags.threads));
  json j = s.meta;
  j["method"] = em::method_name(method);
  j["resolution"] = result.resolution;
  j["accepted"] = voxel_list(result.accepted, ctx.disc.grid);
  j["filled"] = voxel_list(result.filled, ctx.disc.grid);
  j["truth"] = voxel_list(ctx.truth, ctx.disc.grid);
  j["m_cap"] = result.m_cap;
  j["mcap_policy"] = result.mcap.to_string();
  j["eta"] = result.noise.eta;
  j["delta"] = result.delta;
  j["ntd_norm"] = result.noise.ntd_norm;
  j["settings"] = json::array();
  for (const auto& st : settings)
    j["settings"].push_back({{"label", st.label},
                             {"alpha_lambda_pa", st.alpha.lambda},
                             {"alpha_mu_pa", st.alpha.mu},
                             {"alpha_rho_kg_m3", st.alpha.rho}});
  if (result.mode_count) j["background_mode_count"] = *result.mode_count;
  if (result.calibration)
    j["calibration"] = {{"M_min", result.calibration->m_min},
                        {"M_max", result.calibration->m_max},
                        {"feasible", result.calibration->feasible}};
  s.write("counts.csv", csv_preamble(s.meta) + em::counts_csv(result, ctx.disc.grid));
  s.write("reconstruction.vtk", em::reconstruction_vtk(result, ctx.disc.grid, s.scenario.extent));
  s.write("reconstruction.json", j.dump(2) + "\n");
  return kOk;
}

int run_sweep(const Session& s) {
  const auto method = parse_method(s.flags.method);
  const auto etas = parse_eta_list(s.flags.eta.empty() ? "0:0.03:0.0025" : s.flags.eta);
  const auto ctx = s.context();
  const auto report = em::m_delta_sweep(ctx, method, s.operators(ctx, method), etas, s.scenario.seed,
                                        s.scenario.symmetric_noise, s.flags.threads);
  json j = s.meta;
  j["method"] = em::method_name(method);
  j["ntd_norm"] = report.ntd_norm;
  j["rows"] = json::array();
  bool any_feasible = false;
  for (const auto& r : report.rows) {
    j["rows"].push_back({{"eta", r.eta}, {"delta", r.delta}, {"M_min", r.m_min}, {"M_max", r.m_max}, {"feasible", r.feasible}});
    any_feasible = any_feasible || r.feasible;
  }
  s.write("sweep.csv", csv_preamble(s.meta) + em::sweep_csv(report));
  s.write("sweep.json", j.dump(2) + "\n");
  if (!any_feasible) throw InfeasibleSweep("no noise level in the sweep admits a threshold reproducing the truth");
  return kOk;
}

int run_spectra(const Session& s) {
  const auto method = parse_method(s.flags.method);
  const auto ctx = s.context();
  const auto& grid = ctx.disc.grid;
  em::VoxelSet voxels;
  for (const auto& text : s.flags.voxels) {
    std::array<int, 3> c{};
    char sep1 = 0, sep2 = 0;
    std::istringstream in(text);
    if (!(in >> c[0] >> sep1 >> c[1] >> sep2 >> c[2]) || sep1 != ',' || sep2 != ',' || !in.eof())
      throw em::ConfigError("voxel must be given as i,j,k, got '" + text + "'");
    for (int a = 0; a < 3; ++a)
      if (c[a] < 0 || c[a] >= grid.resolution[a]) throw em::ConfigError("voxel '" + text + "' outside the grid");
    voxels.push_back(grid.voxel_index(c[0], c[1], c[2]));
  }
  if (voxels.empty())
    for (int v = 0; v < grid.num_voxels(); ++v) voxels.push_back(v);
  voxels = em::normalized(std::move(voxels));

  const auto noisy = em::perturb(ctx.data.values, s.scenario.eta, s.scenario.seed, s.scenario.symmetric_noise);
  const double delta = s.scenario.delta_override.value_or(noisy.spec.delta);
  const auto settings = em::settings_for(s.scenario, method);
  const auto source = s.operators(ctx, method);
  std::vector<std::vector<em::EigenReport>> reports(voxels.size());
  em::parallel_for(static_cast<int>(voxels.size()), s.flags.threads, [&](int k) {
    const auto ops = source(voxels[k]);
    for (std::size_t a = 0; a < ops.size(); ++a)
      reports[k].push_back(em::make_count_report(ops[a] - noisy.values, delta, settings[a].label));
  });
  std::ostringstream out;
  out << csv_preamble(s.meta) << "voxel,i,j,k,setting,index,eigenvalue,below_threshold\n";
  for (std::size_t k = 0; k < voxels.size(); ++k) {
    const auto c = grid.voxel_coords(voxels[k]);
    for (const auto& r : reports[k])
      for (int i = 0; i < r.eigenvalues.size(); ++i)
        out << voxels[k] << "," << c[0] << "," << c[1] << "," << c[2] << "," << r.label << "," << i << ","
            << em::format_double(r.eigenvalues[i]) << "," << (r.eigenvalues[i] < r.threshold ? 1 : 0) << "\n";
  }
  s.write("spectra_" + em::method_name(method) + ".csv", out.str());
  s.write("ntd_eigenvalues.csv",
          csv_preamble(s.meta) + em::eigen_report_csv(em::make_eigen_report(noisy.values, -delta, "ntd")));
  return kOk;
}

void write_error_record(const fs::path& out, int code, const std::string& kind, const std::string& message) {
  try {
    const json j{{"exit_code", code}, {"kind", kind}, {"message", message}};
    em::write_file_atomic(out / "error.json", j.dump(2) + "\n");
  } catch (const std::exception& e) {
    log_line(std::string("could not write error record: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monotonicity-based inclusion detection for time-harmonic linear elasticity"};
  app.require_subcommand(1);
  Flags f;

  auto add_common = [&f](CLI::App* sub) {
    sub->add_option("--config", f.config, "Scenario JSON file")->required();
    sub->add_option("--seed", f.seed, "Noise seed (overrides the config)");
    sub->add_option("--mcap", f.mcap, "Count threshold: theory, calibrate or a nonnegative integer");
    sub->add_option("--delta-override", f.delta_override, "Absolute noise level passed to the tests");
    sub->add_option("--threads", f.threads, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--cache", f.cache, std::string("Cache directory (default: $") + kCacheEnv + ")");
    sub->add_option("--out", f.out, "Output directory")->capture_default_str();
  };

  auto* forward = app.add_subcommand("forward", "Simulate the NtD matrix of the scenario");
  add_common(forward);
  forward->add_option("--eta", f.eta, "Relative noise level");
  auto* rstd = app.add_subcommand("reconstruct-standard", "Reconstruct with the standard monotonicity test");
  add_common(rstd);
  rstd->add_option("--eta", f.eta, "Relative noise level");
  auto* rlin = app.add_subcommand("reconstruct-linearized", "Reconstruct with the linearized monotonicity test");
  add_common(rlin);
  rlin->add_option("--eta", f.eta, "Relative noise level");
  auto* sweep = app.add_subcommand("sweep", "Threshold window [M_min, M_max] over a range of noise levels");
  add_common(sweep);
  sweep->add_option("--eta", f.eta, "Noise levels as start:stop:step or a single value")
      ->default_str("0:0.03:0.0025");
  sweep->add_option("--method", f.method, "standard or linearized")->capture_default_str();
  auto* spectra = app.add_subcommand("spectra", "Eigenvalues of every test operator minus the data");
  add_common(spectra);
  spectra->add_option("--eta", f.eta, "Relative noise level");
  spectra->add_option("--method", f.method, "standard or linearized")->capture_default_str();
  spectra->add_option("--voxel", f.voxels, "Restrict to voxels given as i,j,k");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }
  f.command = app.get_subcommands().front()->get_name();

  try {
    const Session session(f);
    if (f.command == "forward") return run_forward(session);
    if (f.command == "reconstruct-standard") return run_reconstruct(session, em::Method::Standard);
    if (f.command == "reconstruct-linearized") return run_reconstruct(session, em::Method::Linearized);
    if (f.command == "sweep") return run_sweep(session);
    return run_spectra(session);
  } catch (const em::ConfigError& e) {
    log_line(std::string("config error: ") + e.what());
    write_error_record(f.out, kConfigError, "config", e.what());
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    log_line(std::string("config error: ") + e.what());
    write_error_record(f.out, kConfigError, "config", e.what());
    return kConfigError;
  } catch (const em::ResonanceError& e) {
    log_line(std::string("resonance: ") + e.what());
    write_error_record(f.out, kResonance, "resonance", e.what());
    return kResonance;
  } catch (const em::SingularSystemError& e) {
    log_line(std::string("singular system: ") + e.what());
    write_error_record(f.out, kResonance, "singular", e.what());
    return kResonance;
  } catch (const InfeasibleSweep& e) {
    log_line(std::string("infeasible sweep: ") + e.what());
    write_error_record(f.out, kInfeasibleSweep, "infeasible-sweep", e.what());
    return kInfeasibleSweep;
  } catch (const std::exception& e) {
    log_line(std::string("internal error: ") + e.what());
    write_error_record(f.out, kInternal, "internal", e.what());
    return kInternal;
  }
}
