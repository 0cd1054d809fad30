#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "elastomono/scenario.hpp"

namespace elastomono {

/// Malformed or invalid scenario file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline Lame material_from_json(const json& j, const std::string& where) {
  reject_unknown(j, {"lambda_pa", "mu_pa", "rho_kg_m3"}, where);
  return {j.at("lambda_pa").get<double>(), j.at("mu_pa").get<double>(), j.at("rho_kg_m3").get<double>()};
}

inline json material_to_json(double lambda, double mu, double rho) {
  return json{{"lambda_pa", lambda}, {"mu_pa", mu}, {"rho_kg_m3", rho}};
}

}  // namespace detail

/// Parses a scenario from JSON text. Every key is unit-suffixed; unknown keys
/// are rejected. Inclusions give either absolute values (lambda_pa, mu_pa,
/// rho_kg_m3) or jumps (jump_lambda_pa, jump_mu_pa, jump_rho_kg_m3).
inline Scenario scenario_from_json(const nlohmann::json& j) {
  using detail::json;
  try {
    detail::reject_unknown(j,
                           {"name", "extent_m", "mesh_resolution", "dirichlet_sides", "patch_grid",
                            "load_directions", "background", "omega_rad_s", "voxel_resolution", "inclusions",
                            "declared_contrast", "linearized_alpha_fraction", "noise", "mcap",
                            "delta_override"},
                           "scenario");
    Scenario s;
    s.name = detail::get_or<std::string>(j, "name", s.name);
    s.extent = detail::get_or(j, "extent_m", s.extent);
    s.mesh_resolution = detail::get_or(j, "mesh_resolution", s.mesh_resolution);
    if (j.contains("dirichlet_sides")) {
      s.dirichlet.clear();
      for (const auto& name : j.at("dirichlet_sides")) s.dirichlet.push_back(side_from_name(name.get<std::string>()));
    }
    s.patch_grid = detail::get_or(j, "patch_grid", s.patch_grid);
    const auto dirs = detail::get_or<std::string>(j, "load_directions", "normal");
    if (dirs == "normal") s.load_mode = LoadDirections::Normal;
    else if (dirs == "normal+tangential") s.load_mode = LoadDirections::NormalTangential;
    else throw ConfigError("load_directions must be 'normal' or 'normal+tangential'");
    if (j.contains("background")) s.background = detail::material_from_json(j.at("background"), "background");
    s.omega = detail::get_or(j, "omega_rad_s", s.omega);
    s.voxel_resolution = detail::get_or(j, "voxel_resolution", s.voxel_resolution);
    if (j.contains("declared_contrast")) {
      const Lame c = detail::material_from_json(j.at("declared_contrast"), "declared_contrast");
      s.declared_contrast = {c.lambda, c.mu, c.rho};
    }
    s.linearized_fraction = detail::get_or(j, "linearized_alpha_fraction", s.linearized_fraction);
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      detail::reject_unknown(n, {"eta", "seed", "symmetric"}, "noise");
      s.eta = detail::get_or(n, "eta", s.eta);
      s.seed = detail::get_or<std::uint64_t>(n, "seed", s.seed);
      s.symmetric_noise = detail::get_or(n, "symmetric", s.symmetric_noise);
    }
    if (j.contains("mcap")) {
      const auto& m = j.at("mcap");
      s.mcap = m.is_number_integer() ? McapChoice{McapPolicy::Explicit, m.get<int>()}
                                     : McapChoice::parse(m.get<std::string>());
      if (s.mcap.value < 0) throw ConfigError("mcap must be nonnegative");
    }
    if (j.contains("delta_override") && !j.at("delta_override").is_null())
      s.delta_override = j.at("delta_override").get<double>();

    for (const auto& inc : detail::get_or(j, "inclusions", json::array())) {
      detail::reject_unknown(inc,
                             {"voxels", "lambda_pa", "mu_pa", "rho_kg_m3", "jump_lambda_pa", "jump_mu_pa",
                              "jump_rho_kg_m3", "bounds"},
                             "inclusion");
      InclusionSpec spec;
      const auto& res = s.voxel_resolution;
      for (const auto& ijk : inc.at("voxels")) {
        const auto c = ijk.get<std::array<int, 3>>();
        for (int a = 0; a < 3; ++a)
          if (c[a] < 0 || c[a] >= res[a]) throw ConfigError("inclusion voxel index outside the voxel grid");
        spec.region.push_back(c[0] + res[0] * (c[1] + res[1] * c[2]));
      }
      spec.region = normalized(std::move(spec.region));
      const bool absolute = inc.contains("lambda_pa") || inc.contains("mu_pa") || inc.contains("rho_kg_m3");
      const bool jumps = inc.contains("jump_lambda_pa") || inc.contains("jump_mu_pa") || inc.contains("jump_rho_kg_m3");
      if (absolute && jumps) throw ConfigError("inclusion mixes absolute values and jumps");
      if (absolute) {
        spec.jump_lambda = detail::get_or(inc, "lambda_pa", s.background.lambda) - s.background.lambda;
        spec.jump_mu = detail::get_or(inc, "mu_pa", s.background.mu) - s.background.mu;
        spec.jump_rho = s.background.rho - detail::get_or(inc, "rho_kg_m3", s.background.rho);
      } else {
        spec.jump_lambda = detail::get_or(inc, "jump_lambda_pa", 0.0);
        spec.jump_mu = detail::get_or(inc, "jump_mu_pa", 0.0);
        spec.jump_rho = detail::get_or(inc, "jump_rho_kg_m3", 0.0);
      }
      if (inc.contains("bounds")) {
        const auto& b = inc.at("bounds");
        detail::reject_unknown(b, {"n1_pa", "n2_pa", "n3_kg_m3", "N3_kg_m3"}, "inclusion bounds");
        spec.bounds.n1 = detail::get_or(b, "n1_pa", 0.0);
        spec.bounds.n2 = detail::get_or(b, "n2_pa", 0.0);
        spec.bounds.n3 = detail::get_or(b, "n3_kg_m3", 0.0);
        spec.bounds.N3 = detail::get_or(b, "N3_kg_m3", spec.bounds.N3);
      }
      s.inclusions.push_back(std::move(spec));
    }
    return s;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("malformed scenario: ") + e.what());
  }
}

/// Fully resolved scenario; scenario_from_json(scenario_to_json(s)) == s.
inline nlohmann::json scenario_to_json(const Scenario& s) {
  using detail::json;
  json j;
  j["name"] = s.name;
  j["extent_m"] = s.extent;
  j["mesh_resolution"] = s.mesh_resolution;
  j["dirichlet_sides"] = json::array();
  for (Side side : s.dirichlet) j["dirichlet_sides"].push_back(side_name(side));
  j["patch_grid"] = s.patch_grid;
  j["load_directions"] = s.load_mode == LoadDirections::Normal ? "normal" : "normal+tangential";
  j["background"] = detail::material_to_json(s.background.lambda, s.background.mu, s.background.rho);
  j["omega_rad_s"] = s.omega;
  j["voxel_resolution"] = s.voxel_resolution;
  j["declared_contrast"] =
      detail::material_to_json(s.declared_contrast.lambda, s.declared_contrast.mu, s.declared_contrast.rho);
  j["linearized_alpha_fraction"] = s.linearized_fraction;
  j["noise"] = json{{"eta", s.eta}, {"seed", s.seed}, {"symmetric", s.symmetric_noise}};
  if (s.mcap.policy == McapPolicy::Explicit) j["mcap"] = s.mcap.value;
  else j["mcap"] = s.mcap.to_string();
  j["delta_override"] = s.delta_override ? json(*s.delta_override) : json(nullptr);
  j["inclusions"] = json::array();
  const auto& res = s.voxel_resolution;
  for (const auto& inc : s.inclusions) {
    json ji;
    ji["voxels"] = json::array();
    for (int v : inc.region)
      ji["voxels"].push_back({v % res[0], (v / res[0]) % res[1], v / (res[0] * res[1])});
    ji["jump_lambda_pa"] = inc.jump_lambda;
    ji["jump_mu_pa"] = inc.jump_mu;
    ji["jump_rho_kg_m3"] = inc.jump_rho;
    json b{{"n1_pa", inc.bounds.n1}, {"n2_pa", inc.bounds.n2}, {"n3_kg_m3", inc.bounds.n3}};
    if (std::isfinite(inc.bounds.N3)) b["N3_kg_m3"] = inc.bounds.N3;
    ji["bounds"] = b;
    j["inclusions"].push_back(ji);
  }
  return j;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return scenario_from_json(j);
}

}  // namespace elastomono
