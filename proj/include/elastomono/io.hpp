#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "elastomono/recon.hpp"
#include "elastomono/scenario.hpp"
#include "elastomono/spectral.hpp"

namespace elastomono {

/// Bumped whenever the cache layout or anything feeding the cache key changes.
inline constexpr std::uint32_t kCacheFormatVersion = 1;

/// Shortest round-trip decimal text for a double.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// 64-bit FNV-1a over a byte stream.
class Fnv1a {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ULL;
    }
  }
  template <class T>
  void value(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    bytes(&v, sizeof v);
  }
  void doubles(const std::vector<double>& v) {
    value(static_cast<std::uint64_t>(v.size()));
    bytes(v.data(), v.size() * sizeof(double));
  }
  std::uint64_t digest() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

inline std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

/// Content key of one forward solve set: mesh, layout, loads, field, omega.
inline std::uint64_t solve_key(const Scenario& s, const MaterialField& field) {
  Fnv1a h;
  h.value(kCacheFormatVersion);
  h.value(s.extent);
  h.value(s.mesh_resolution);
  h.value(static_cast<std::uint64_t>(s.dirichlet.size()));
  for (Side side : s.dirichlet) h.value(static_cast<int>(side));
  h.value(s.patch_grid);
  h.value(static_cast<int>(s.load_mode));
  h.value(s.omega);
  h.doubles(field.lambda);
  h.doubles(field.mu);
  h.doubles(field.rho);
  return h.digest();
}

/// Writes to a sibling temporary file, then renames over the target.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace detail {
inline constexpr char kMatrixMagic[8] = {'E', 'M', 'M', 'A', 'T', 'R', 'X', '1'};
}

/// Binary matrix file: 8-byte magic "EMMATRX1", u32 format version, u64 key,
/// i64 rows, i64 cols, then rows*cols native doubles in column-major order.
inline void write_matrix_binary(const std::filesystem::path& path, std::uint64_t key, const Eigen::MatrixXd& M) {
  std::string buf(detail::kMatrixMagic, 8);
  auto put = [&buf](const auto& v) { buf.append(reinterpret_cast<const char*>(&v), sizeof v); };
  put(kCacheFormatVersion);
  put(key);
  put(static_cast<std::int64_t>(M.rows()));
  put(static_cast<std::int64_t>(M.cols()));
  buf.append(reinterpret_cast<const char*>(M.data()), sizeof(double) * M.size());
  write_file_atomic(path, buf);
}

/// nullopt when the file is missing, truncated, from another format version
/// or keyed differently.
inline std::optional<Eigen::MatrixXd> read_matrix_binary(const std::filesystem::path& path, std::uint64_t key) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t stored_key = 0;
  std::int64_t rows = 0, cols = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&stored_key), sizeof stored_key);
  in.read(reinterpret_cast<char*>(&rows), sizeof rows);
  in.read(reinterpret_cast<char*>(&cols), sizeof cols);
  if (!in || std::memcmp(magic, detail::kMatrixMagic, 8) != 0 || version != kCacheFormatVersion ||
      stored_key != key || rows < 0 || cols < 0)
    return std::nullopt;
  Eigen::MatrixXd M(rows, cols);
  in.read(reinterpret_cast<char*>(M.data()), static_cast<std::streamsize>(sizeof(double) * M.size()));
  if (!in) return std::nullopt;
  return M;
}

/// Directory of cached forward results, one file per solve key: solution
/// banks (`bank-*.bin`) and test NtD matrices (`ntd-*.bin`).
class DiskCache {
 public:
  explicit DiskCache(std::filesystem::path dir, std::function<void(const std::string&)> log = {})
      : dir_(std::move(dir)), log_(std::move(log)) {}

  const std::filesystem::path& dir() const { return dir_; }

  std::filesystem::path path_for(const std::string& kind, std::uint64_t key) const {
    return dir_ / (kind + "-" + hex64(key) + ".bin");
  }

  SolveCache hooks(const Scenario& s) {
    SolveCache c;
    c.load = [this, s](const MaterialField& f) -> std::optional<SolutionBank> {
      auto M = load("bank", solve_key(s, f));
      if (!M) return std::nullopt;
      return SolutionBank{std::move(*M), s.omega};
    };
    c.store = [this, s](const MaterialField& f, const SolutionBank& bank) {
      store("bank", solve_key(s, f), bank.displacements);
    };
    return c;
  }

  NtdCache ntd_hooks(const Scenario& s) {
    NtdCache c;
    c.load = [this, s](const MaterialField& f) { return load("ntd", solve_key(s, f)); };
    c.store = [this, s](const MaterialField& f, const Eigen::MatrixXd& M) { store("ntd", solve_key(s, f), M); };
    return c;
  }

  int hits() const { return hits_.load(); }
  int misses() const { return misses_.load(); }

 private:
  std::optional<Eigen::MatrixXd> load(const std::string& kind, std::uint64_t key) {
    const auto path = path_for(kind, key);
    auto M = read_matrix_binary(path, key);
    ++(M ? hits_ : misses_);
    if (log_) log_((M ? "cache hit " : "cache miss ") + path.string());
    return M;
  }

  void store(const std::string& kind, std::uint64_t key, const Eigen::MatrixXd& M) {
    write_matrix_binary(path_for(kind, key), key, M);
  }

  std::filesystem::path dir_;
  std::function<void(const std::string&)> log_;
  std::atomic<int> hits_{0};
  std::atomic<int> misses_{0};
};

/// Comment line with threshold and count, then `index,eigenvalue` rows.
inline std::string eigen_report_csv(const EigenReport& r) {
  std::ostringstream out;
  out << "# label=" << r.label << ",threshold=" << format_double(r.threshold) << ",count_below=" << r.count_below
      << "\n";
  out << "index,eigenvalue\n";
  for (int i = 0; i < r.eigenvalues.size(); ++i) out << i << "," << format_double(r.eigenvalues[i]) << "\n";
  return out.str();
}

/// Per-voxel negative-eigenvalue counts of a reconstruction.
inline std::string counts_csv(const ReconResult& r, const VoxelGrid& grid) {
  std::ostringstream out;
  out << "voxel,i,j,k";
  for (const auto& label : r.setting_labels) out << ",count_" << label;
  out << ",score,accepted,filled\n";
  for (int v = 0; v < static_cast<int>(r.counts.size()); ++v) {
    const auto c = grid.voxel_coords(v);
    out << v << "," << c[0] << "," << c[1] << "," << c[2];
    for (int n : r.counts[v]) out << "," << n;
    out << "," << voxel_score(r.counts[v]) << ","
        << std::binary_search(r.accepted.begin(), r.accepted.end(), v) << ","
        << std::binary_search(r.filled.begin(), r.filled.end(), v) << "\n";
  }
  return out.str();
}

inline std::string sweep_csv(const SweepReport& rep) {
  std::ostringstream out;
  out << "eta,delta,M_min,M_max,feasible\n";
  for (const auto& row : rep.rows)
    out << format_double(row.eta) << "," << format_double(row.delta) << "," << row.m_min << "," << row.m_max << ","
        << (row.feasible ? 1 : 0) << "\n";
  return out.str();
}

/// Legacy ASCII VTK structured points with per-voxel cell data.
inline std::string reconstruction_vtk(const ReconResult& r, const VoxelGrid& grid, const std::array<double, 3>& extent) {
  std::ostringstream out;
  const auto& n = grid.resolution;
  out << "# vtk DataFile Version 3.0\nelastomono " << method_name(r.method) << " reconstruction\nASCII\n";
  out << "DATASET STRUCTURED_POINTS\n";
  out << "DIMENSIONS " << n[0] + 1 << " " << n[1] + 1 << " " << n[2] + 1 << "\n";
  out << "ORIGIN 0 0 0\n";
  out << "SPACING " << format_double(extent[0] / n[0]) << " " << format_double(extent[1] / n[1]) << " "
      << format_double(extent[2] / n[2]) << "\n";
  out << "CELL_DATA " << grid.num_voxels() << "\n";
  auto scalar = [&](const char* name, auto&& fn) {
    out << "SCALARS " << name << " int 1\nLOOKUP_TABLE default\n";
    for (int v = 0; v < grid.num_voxels(); ++v) out << fn(v) << "\n";
  };
  scalar("filled", [&](int v) { return int(std::binary_search(r.filled.begin(), r.filled.end(), v)); });
  scalar("accepted", [&](int v) { return int(std::binary_search(r.accepted.begin(), r.accepted.end(), v)); });
  scalar("score", [&](int v) { return voxel_score(r.counts[v]); });
  return out.str();
}

}  // namespace elastomono
