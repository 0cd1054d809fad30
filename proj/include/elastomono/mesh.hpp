#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace elastomono {

/// Box sides, in the fixed order used for boundary faces and patch numbering.
enum class Side : int { XMin = 0, XMax, YMin, YMax, ZMin, ZMax };

inline constexpr std::array<Side, 6> kAllSides = {Side::XMin, Side::XMax, Side::YMin,
                                                  Side::YMax, Side::ZMin, Side::ZMax};

inline int normal_axis(Side s) { return static_cast<int>(s) / 2; }
inline bool is_max_side(Side s) { return static_cast<int>(s) % 2 == 1; }

/// The two in-plane axes of a side, in increasing order.
inline std::array<int, 2> tangent_axes(Side s) {
  switch (normal_axis(s)) {
    case 0: return {1, 2};
    case 1: return {0, 2};
    default: return {0, 1};
  }
}

inline std::string side_name(Side s) {
  static const std::array<const char*, 6> names = {"xmin", "xmax", "ymin", "ymax", "zmin", "zmax"};
  return names[static_cast<int>(s)];
}

inline Side side_from_name(const std::string& name) {
  if (name == "bottom") return Side::ZMin;
  if (name == "top") return Side::ZMax;
  for (Side s : kAllSides)
    if (side_name(s) == name) return s;
  throw std::invalid_argument("unknown box side '" + name + "'");
}

struct BoundaryFace {
  int element = 0;
  Side side = Side::XMin;
  std::array<int, 4> nodes{};  // cyclic order around the face
  int u = 0;                   // face index along tangent_axes(side)[0]
  int v = 0;                   // face index along tangent_axes(side)[1]
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
  double area = 0.0;
};

/// Structured axis-aligned hexahedral mesh of the box [0,ex]x[0,ey]x[0,ez].
/// Nodes are numbered x-fastest; trilinear elements use the usual
/// counter-clockwise bottom-then-top local node order.
struct Mesh {
  std::array<double, 3> extent{1.0, 1.0, 1.0};
  std::array<int, 3> resolution{1, 1, 1};
  std::vector<Eigen::Vector3d> nodes;
  std::vector<std::array<int, 8>> elements;
  std::vector<BoundaryFace> boundary_faces;

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_elements() const { return static_cast<int>(elements.size()); }
  int num_dofs() const { return 3 * num_nodes(); }

  Eigen::Vector3d spacing() const {
    return {extent[0] / resolution[0], extent[1] / resolution[1], extent[2] / resolution[2]};
  }

  int node_index(int i, int j, int k) const {
    return i + (resolution[0] + 1) * (j + (resolution[1] + 1) * k);
  }

  int element_index(int i, int j, int k) const {
    return i + resolution[0] * (j + resolution[1] * k);
  }

  std::array<int, 3> element_coords(int e) const {
    const int i = e % resolution[0];
    const int j = (e / resolution[0]) % resolution[1];
    const int k = e / (resolution[0] * resolution[1]);
    return {i, j, k};
  }

  double element_volume() const {
    const auto h = spacing();
    return h[0] * h[1] * h[2];
  }

  double total_boundary_area() const {
    double a = 0.0;
    for (const auto& f : boundary_faces) a += f.area;
    return a;
  }
};

inline Mesh build_mesh(const std::array<double, 3>& extent, const std::array<int, 3>& resolution) {
  for (int a = 0; a < 3; ++a) {
    if (!(extent[a] > 0.0) || !std::isfinite(extent[a]))
      throw std::invalid_argument("mesh extent must be positive and finite");
    if (resolution[a] < 1) throw std::invalid_argument("mesh resolution must be >= 1 per axis");
  }
  Mesh mesh;
  mesh.extent = extent;
  mesh.resolution = resolution;
  const auto [nx, ny, nz] = resolution;
  const Eigen::Vector3d h = mesh.spacing();

  mesh.nodes.reserve(static_cast<std::size_t>(nx + 1) * (ny + 1) * (nz + 1));
  for (int k = 0; k <= nz; ++k)
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i <= nx; ++i) mesh.nodes.emplace_back(i * h[0], j * h[1], k * h[2]);

  mesh.elements.reserve(static_cast<std::size_t>(nx) * ny * nz);
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        mesh.elements.push_back({mesh.node_index(i, j, k), mesh.node_index(i + 1, j, k),
                                 mesh.node_index(i + 1, j + 1, k), mesh.node_index(i, j + 1, k),
                                 mesh.node_index(i, j, k + 1), mesh.node_index(i + 1, j, k + 1),
                                 mesh.node_index(i + 1, j + 1, k + 1),
                                 mesh.node_index(i, j + 1, k + 1)});
      }

  for (Side side : kAllSides) {
    const int axis = normal_axis(side);
    const auto [ta, tb] = tangent_axes(side);
    const int fixed = is_max_side(side) ? resolution[axis] : 0;
    const int elem_layer = is_max_side(side) ? resolution[axis] - 1 : 0;
    for (int v = 0; v < resolution[tb]; ++v)
      for (int u = 0; u < resolution[ta]; ++u) {
        BoundaryFace face;
        face.side = side;
        face.u = u;
        face.v = v;
        std::array<int, 3> e{}, n0{};
        e[axis] = elem_layer;
        e[ta] = u;
        e[tb] = v;
        face.element = mesh.element_index(e[0], e[1], e[2]);
        n0[axis] = fixed;
        n0[ta] = u;
        n0[tb] = v;
        const std::array<std::array<int, 2>, 4> corners = {{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
        for (int c = 0; c < 4; ++c) {
          auto n = n0;
          n[ta] += corners[c][0];
          n[tb] += corners[c][1];
          face.nodes[c] = mesh.node_index(n[0], n[1], n[2]);
        }
        face.normal = Eigen::Vector3d::Zero();
        face.normal[axis] = is_max_side(side) ? 1.0 : -1.0;
        face.area = h[ta] * h[tb];
        mesh.boundary_faces.push_back(face);
      }
  }
  return mesh;
}

/// Split of the boundary faces into the clamped part and numbered traction patches.
struct BoundaryLayout {
  std::vector<Side> dirichlet_sides;
  std::array<int, 2> patch_grid{1, 1};
  std::vector<char> dirichlet_face;  // per boundary face
  std::vector<int> patch_of_face;    // per boundary face, -1 on the clamped part
  std::vector<Side> patch_side;      // per patch
  std::vector<char> dirichlet_node;  // per mesh node

  int num_patches() const { return static_cast<int>(patch_side.size()); }
  bool has_dirichlet() const { return !dirichlet_sides.empty(); }
};

inline BoundaryLayout partition_boundary(const Mesh& mesh, std::span<const Side> dirichlet,
                                         const std::array<int, 2>& patch_grid) {
  if (patch_grid[0] < 1 || patch_grid[1] < 1)
    throw std::invalid_argument("patch grid must be >= 1 per axis");
  BoundaryLayout layout;
  layout.patch_grid = patch_grid;
  for (Side s : kAllSides)
    if (std::find(dirichlet.begin(), dirichlet.end(), s) != dirichlet.end())
      layout.dirichlet_sides.push_back(s);
  if (layout.dirichlet_sides.size() == kAllSides.size())
    throw std::invalid_argument("Neumann boundary must be nonempty");

  auto is_dirichlet = [&](Side s) {
    return std::find(layout.dirichlet_sides.begin(), layout.dirichlet_sides.end(), s) !=
           layout.dirichlet_sides.end();
  };

  // Patch ids are assigned side by side in kAllSides order, row-major in (u, v).
  std::array<int, 6> first_patch{};
  int next = 0;
  for (Side s : kAllSides) {
    first_patch[static_cast<int>(s)] = next;
    if (is_dirichlet(s)) continue;
    const auto [ta, tb] = tangent_axes(s);
    if (mesh.resolution[ta] % patch_grid[0] != 0 || mesh.resolution[tb] % patch_grid[1] != 0)
      throw std::invalid_argument("patch grid " + std::to_string(patch_grid[0]) + "x" +
                                  std::to_string(patch_grid[1]) +
                                  " does not divide the face resolution of side " + side_name(s));
    for (int p = 0; p < patch_grid[0] * patch_grid[1]; ++p) layout.patch_side.push_back(s);
    next += patch_grid[0] * patch_grid[1];
  }

  const auto nfaces = mesh.boundary_faces.size();
  layout.dirichlet_face.assign(nfaces, 0);
  layout.patch_of_face.assign(nfaces, -1);
  layout.dirichlet_node.assign(mesh.nodes.size(), 0);
  for (std::size_t f = 0; f < nfaces; ++f) {
    const auto& face = mesh.boundary_faces[f];
    if (is_dirichlet(face.side)) {
      layout.dirichlet_face[f] = 1;
      for (int n : face.nodes) layout.dirichlet_node[n] = 1;
      continue;
    }
    const auto [ta, tb] = tangent_axes(face.side);
    const int pu = face.u / (mesh.resolution[ta] / patch_grid[0]);
    const int pv = face.v / (mesh.resolution[tb] / patch_grid[1]);
    layout.patch_of_face[f] = first_patch[static_cast<int>(face.side)] + pu + patch_grid[0] * pv;
  }
  return layout;
}

/// Sorted list of voxel ids.
using VoxelSet = std::vector<int>;

inline VoxelSet normalized(VoxelSet s) {
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

/// Coarse grid of test blocks, each a brick of whole mesh elements.
struct VoxelGrid {
  std::array<int, 3> resolution{1, 1, 1};
  std::vector<std::vector<int>> voxel_to_elements;
  std::vector<int> element_to_voxel;
  // Face neighbours; index num_voxels() is the virtual boundary node.
  std::vector<std::vector<int>> adjacency;

  int num_voxels() const { return static_cast<int>(voxel_to_elements.size()); }
  int boundary_node() const { return num_voxels(); }

  int voxel_index(int i, int j, int k) const {
    return i + resolution[0] * (j + resolution[1] * k);
  }

  std::array<int, 3> voxel_coords(int v) const {
    return {v % resolution[0], (v / resolution[0]) % resolution[1],
            v / (resolution[0] * resolution[1])};
  }

  bool touches_boundary(int v) const {
    const auto c = voxel_coords(v);
    for (int a = 0; a < 3; ++a)
      if (c[a] == 0 || c[a] == resolution[a] - 1) return true;
    return false;
  }

  /// Element ids covered by a voxel set.
  std::vector<int> elements_of(const VoxelSet& voxels) const {
    std::vector<int> out;
    for (int v : voxels) {
      if (v < 0 || v >= num_voxels()) throw std::invalid_argument("voxel id out of range");
      out.insert(out.end(), voxel_to_elements[v].begin(), voxel_to_elements[v].end());
    }
    std::sort(out.begin(), out.end());
    return out;
  }
};

inline VoxelGrid voxel_grid(const Mesh& mesh, const std::array<int, 3>& resolution) {
  for (int a = 0; a < 3; ++a) {
    if (resolution[a] < 1 || mesh.resolution[a] % resolution[a] != 0)
      throw std::invalid_argument("voxel resolution must divide the mesh resolution per axis");
  }
  VoxelGrid grid;
  grid.resolution = resolution;
  const int nv = resolution[0] * resolution[1] * resolution[2];
  grid.voxel_to_elements.resize(nv);
  grid.element_to_voxel.resize(mesh.num_elements());
  std::array<int, 3> ratio{};
  for (int a = 0; a < 3; ++a) ratio[a] = mesh.resolution[a] / resolution[a];
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto c = mesh.element_coords(e);
    const int v = grid.voxel_index(c[0] / ratio[0], c[1] / ratio[1], c[2] / ratio[2]);
    grid.voxel_to_elements[v].push_back(e);
    grid.element_to_voxel[e] = v;
  }

  grid.adjacency.assign(nv + 1, {});
  for (int v = 0; v < nv; ++v) {
    const auto c = grid.voxel_coords(v);
    for (int a = 0; a < 3; ++a)
      for (int step : {-1, 1}) {
        auto n = c;
        n[a] += step;
        if (n[a] < 0 || n[a] >= resolution[a]) continue;
        grid.adjacency[v].push_back(grid.voxel_index(n[0], n[1], n[2]));
      }
    if (grid.touches_boundary(v)) {
      grid.adjacency[v].push_back(nv);
      grid.adjacency[nv].push_back(v);
    }
  }
  return grid;
}

}  // namespace elastomono
