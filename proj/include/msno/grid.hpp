#pragma once

#include <Eigen/Core>
#include <utility>
#include <vector>

namespace msno {

// Nested structured meshes on the unit square: n_coarse x n_coarse square
// coarse cells, refined into a fine grid of n_fine x n_fine nodes.
struct GridPair {
  int n_coarse = 0;
  int n_fine = 0;
  int m = 0;  // fine cells per coarse cell and per dimension
  double H = 0.0;
  double h = 0.0;

  int fine_node_count() const { return n_fine * n_fine; }
  int node(int x, int y) const { return y * n_fine + x; }
  double coord(int i) const { return h * i; }
  bool on_boundary(int x, int y) const {
    return x == 0 || y == 0 || x == n_fine - 1 || y == n_fine - 1;
  }
  int interior_per_dim() const { return n_fine - 2; }
  int interior_count() const { return interior_per_dim() * interior_per_dim(); }
  // Interior dof numbering, row-major over interior nodes; -1 on the boundary.
  int interior_index(int x, int y) const {
    if (on_boundary(x, y)) return -1;
    return (y - 1) * interior_per_dim() + (x - 1);
  }
  int coarse_nodes_per_dim() const { return n_coarse + 1; }
  int local_domain_count() const { return coarse_nodes_per_dim() * coarse_nodes_per_dim(); }
};

GridPair build_grid(int n_coarse, int n_fine);

enum class DomainKind { Full, Half, Corner };

const char* domain_kind_name(DomainKind k);

// Rectangular window of fine nodes; fields on it are indexed y*nx + x.
struct PatchBox {
  int x0 = 0, y0 = 0;
  int nx = 0, ny = 0;
  int node_count() const { return nx * ny; }
};

struct LocalDomain {
  int index = 0;
  int cx = 0, cy = 0;  // coarse-node grid coordinates of x_i
  DomainKind kind = DomainKind::Full;
  PatchBox patch;
  int orientation = 0;  // 90-degree CCW rotations to the canonical pose
  std::vector<std::pair<int, int>> cells;
};

// One domain per coarse node, ordered lexicographically by (row, column).
std::vector<LocalDomain> enumerate_local_domains(const GridPair& grid);

struct PartitionFunction {
  int domain_index = 0;
  Eigen::VectorXd values;  // on the domain patch
};

// Coarse Q1 hat of node x_i sampled at the fine nodes of the patch.
PartitionFunction partition_of_unity(const GridPair& grid, const LocalDomain& domain);

// Rotates an nx-by-ny nodal field by 90 degrees CCW, k times. Pure index
// permutation; values are moved, never recomputed.
Eigen::VectorXd rotate_patch_field(const Eigen::VectorXd& field, int nx, int ny, int k);

// Patch dimensions after k CCW rotations.
std::pair<int, int> rotated_shape(int nx, int ny, int k);

// Rotates a patch field into the domain's canonical pose. Full: identity.
// Half: coarse node on the top edge midpoint. Corner: node at top-left.
std::pair<Eigen::VectorXd, int> canonicalize(const Eigen::VectorXd& patch_field,
                                             const LocalDomain& domain);

// Exact inverse of canonicalize for the returned code.
Eigen::VectorXd decanonicalize(const Eigen::VectorXd& canonical_field,
                               const LocalDomain& domain, int code);

}  // namespace msno
