#include "msno/grid.hpp"

#include <cmath>
#include <stdexcept>

namespace msno {

GridPair build_grid(int n_coarse, int n_fine) {
  if (n_coarse < 2) throw std::invalid_argument("build_grid: n_coarse must be >= 2");
  if (n_fine < 3) throw std::invalid_argument("build_grid: n_fine must be >= 3");
  if ((n_fine - 1) % n_coarse != 0)
    throw std::invalid_argument("build_grid: fine grid does not refine the coarse grid "
                                "(n_fine - 1 not divisible by n_coarse)");
  GridPair g;
  g.n_coarse = n_coarse;
  g.n_fine = n_fine;
  g.m = (n_fine - 1) / n_coarse;
  g.H = 1.0 / n_coarse;
  g.h = 1.0 / (n_fine - 1);
  if (g.m < 1 || !(g.h < g.H))
    throw std::invalid_argument("build_grid: fine grid must be strictly finer than coarse");
  return g;
}

const char* domain_kind_name(DomainKind k) {
  switch (k) {
    case DomainKind::Full: return "full";
    case DomainKind::Half: return "half";
    case DomainKind::Corner: return "corner";
  }
  return "?";
}

namespace {

// Orientation code: number of 90-degree CCW rotations taking this pose to the
// canonical one. Half domains cycle left->bottom->right->top under CCW;
// corners cycle BL->BR->TR->TL.
int orientation_code(const GridPair& g, int cx, int cy, DomainKind kind) {
  const int n = g.n_coarse;
  switch (kind) {
    case DomainKind::Full:
      return 0;
    case DomainKind::Half:
      if (cy == n) return 0;  // node on top edge
      if (cx == n) return 1;  // right edge
      if (cy == 0) return 2;  // bottom edge
      return 3;               // left edge
    case DomainKind::Corner:
      if (cx == 0 && cy == n) return 0;  // top-left
      if (cx == n && cy == n) return 1;  // top-right
      if (cx == n && cy == 0) return 2;  // bottom-right
      return 3;                          // bottom-left
  }
  return 0;
}

}  // namespace

std::vector<LocalDomain> enumerate_local_domains(const GridPair& grid) {
  std::vector<LocalDomain> domains;
  domains.reserve(grid.local_domain_count());
  const int n = grid.n_coarse;
  for (int cy = 0; cy <= n; ++cy) {
    for (int cx = 0; cx <= n; ++cx) {
      LocalDomain d;
      d.index = cy * (n + 1) + cx;
      d.cx = cx;
      d.cy = cy;
      for (int j = cy - 1; j <= cy; ++j)
        for (int i = cx - 1; i <= cx; ++i)
          if (i >= 0 && i < n && j >= 0 && j < n) d.cells.emplace_back(i, j);
      switch (d.cells.size()) {
        case 4: d.kind = DomainKind::Full; break;
        case 2: d.kind = DomainKind::Half; break;
        case 1: d.kind = DomainKind::Corner; break;
        default: throw std::logic_error("enumerate_local_domains: impossible cell count");
      }
      const int x0 = std::max(cx - 1, 0) * grid.m;
      const int x1 = std::min(cx + 1, n) * grid.m;
      const int y0 = std::max(cy - 1, 0) * grid.m;
      const int y1 = std::min(cy + 1, n) * grid.m;
      d.patch = PatchBox{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
      d.orientation = orientation_code(grid, cx, cy, d.kind);
      domains.push_back(std::move(d));
    }
  }
  return domains;
}

PartitionFunction partition_of_unity(const GridPair& grid, const LocalDomain& domain) {
  PartitionFunction chi;
  chi.domain_index = domain.index;
  const PatchBox& p = domain.patch;
  chi.values.resize(p.node_count());
  const double inv_m = 1.0 / grid.m;
  for (int ly = 0; ly < p.ny; ++ly) {
    const double ty = std::abs((p.y0 + ly) - domain.cy * grid.m) * inv_m;
    const double hy = ty < 1.0 ? 1.0 - ty : 0.0;
    for (int lx = 0; lx < p.nx; ++lx) {
      const double tx = std::abs((p.x0 + lx) - domain.cx * grid.m) * inv_m;
      const double hx = tx < 1.0 ? 1.0 - tx : 0.0;
      chi.values[ly * p.nx + lx] = hx * hy;
    }
  }
  return chi;
}

Eigen::VectorXd rotate_patch_field(const Eigen::VectorXd& field, int nx, int ny, int k) {
  if (field.size() != static_cast<Eigen::Index>(nx) * ny)
    throw std::invalid_argument("rotate_patch_field: field size does not match nx*ny");
  Eigen::VectorXd cur = field;
  int cx = nx, cy = ny;
  for (int r = 0; r < ((k % 4) + 4) % 4; ++r) {
    Eigen::VectorXd next(cur.size());
    const int nnx = cy, nny = cx;
    for (int y = 0; y < cy; ++y)
      for (int x = 0; x < cx; ++x) {
        const int xp = cy - 1 - y;
        const int yp = x;
        next[yp * nnx + xp] = cur[y * cx + x];
      }
    cur.swap(next);
    cx = nnx;
    cy = nny;
  }
  return cur;
}

std::pair<int, int> rotated_shape(int nx, int ny, int k) {
  return (k % 2 == 0) ? std::make_pair(nx, ny) : std::make_pair(ny, nx);
}

std::pair<Eigen::VectorXd, int> canonicalize(const Eigen::VectorXd& patch_field,
                                             const LocalDomain& domain) {
  if (patch_field.size() != domain.patch.node_count())
    throw std::invalid_argument("canonicalize: field shape does not match domain patch");
  const int code = domain.orientation;
  return {rotate_patch_field(patch_field, domain.patch.nx, domain.patch.ny, code), code};
}

Eigen::VectorXd decanonicalize(const Eigen::VectorXd& canonical_field,
                               const LocalDomain& domain, int code) {
  auto [cnx, cny] = rotated_shape(domain.patch.nx, domain.patch.ny, code);
  if (canonical_field.size() != static_cast<Eigen::Index>(cnx) * cny)
    throw std::invalid_argument("decanonicalize: field shape does not match canonical patch");
  return rotate_patch_field(canonical_field, cnx, cny, (4 - code) % 4);
}

}  // namespace msno
