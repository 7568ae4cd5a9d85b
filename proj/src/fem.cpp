#include "msno/fem.hpp"

#include <Eigen/SparseCholesky>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "msno/parallel.hpp"

namespace msno {

SparseSymmetricMatrix::SparseSymmetricMatrix(Eigen::SparseMatrix<double> lower)
    : lower_(std::move(lower)) {
  lower_.makeCompressed();
}

const Eigen::SparseMatrix<double>& SparseSymmetricMatrix::expanded() const {
  if (!full_) {
    auto full = std::make_shared<Eigen::SparseMatrix<double>>(
        lower_.selfadjointView<Eigen::Lower>());
    full->makeCompressed();
    full_ = std::move(full);
  }
  return *full_;
}

Eigen::VectorXd SparseSymmetricMatrix::apply(const Eigen::VectorXd& x) const {
  return lower_.selfadjointView<Eigen::Lower>() * x;
}

PatchBox whole_domain(const GridPair& grid) {
  return PatchBox{0, 0, grid.n_fine, grid.n_fine};
}

namespace {

void check_kappa(const GridPair& grid, const Eigen::VectorXd& kappa) {
  if (kappa.size() != grid.fine_node_count())
    throw std::invalid_argument("assembly: kappa size does not match fine grid");
  if ((kappa.array() <= 0.0).any())
    throw std::invalid_argument("assembly: kappa must be positive everywhere");
}

enum class ElemKind { Stiffness, Mass };

// Each fine square (i,j) contributes two P1 triangles:
//   (v00, v10, v11) and (v00, v11, v01), diagonal from (0,0) to (1,1).
// Per-element 3x3 matrices computed from the standard (b_i, c_i) formulas;
// kappa enters as the mean of the triangle's vertex values.
SparseSymmetricMatrix assemble_p1(const GridPair& grid, const Eigen::VectorXd& kappa,
                                  const PatchBox& box, ElemKind kind, bool parallel) {
  check_kappa(grid, kappa);
  if (box.x0 < 0 || box.y0 < 0 || box.x0 + box.nx > grid.n_fine ||
      box.y0 + box.ny > grid.n_fine || box.nx < 2 || box.ny < 2)
    throw std::invalid_argument("assembly: box out of range");

  const int cells_x = box.nx - 1;
  const int cells_y = box.ny - 1;
  const int n_elems = 2 * cells_x * cells_y;
  const double h = grid.h;
  const double area = 0.5 * h * h;

  // 6 lower-triangle entries per triangle, written into per-element slots so
  // the triplet order is independent of the thread count.
  std::vector<Eigen::Triplet<double>> trips(static_cast<size_t>(n_elems) * 6);

  auto local = [&](int lx, int ly) { return ly * box.nx + lx; };
  auto global = [&](int lx, int ly) { return grid.node(box.x0 + lx, box.y0 + ly); };

#pragma omp parallel for schedule(static) if (parallel)
  for (int cell = 0; cell < cells_x * cells_y; ++cell) {
    const int ci = cell % cells_x;
    const int cj = cell / cells_x;
    // Triangle vertices in local numbering and physical coordinates.
    const int v00 = local(ci, cj), v10 = local(ci + 1, cj);
    const int v01 = local(ci, cj + 1), v11 = local(ci + 1, cj + 1);
    const double k00 = kappa[global(ci, cj)], k10 = kappa[global(ci + 1, cj)];
    const double k01 = kappa[global(ci, cj + 1)], k11 = kappa[global(ci + 1, cj + 1)];

    const int tri_nodes[2][3] = {{v00, v10, v11}, {v00, v11, v01}};
    const double tri_x[2][3] = {{0, h, h}, {0, h, 0}};
    const double tri_y[2][3] = {{0, 0, h}, {0, h, h}};
    const double tri_kappa[2] = {(k00 + k10 + k11) / 3.0, (k00 + k11 + k01) / 3.0};

    for (int t = 0; t < 2; ++t) {
      double b[3], c[3];
      for (int a = 0; a < 3; ++a) {
        const int a1 = (a + 1) % 3, a2 = (a + 2) % 3;
        b[a] = tri_y[t][a1] - tri_y[t][a2];
        c[a] = tri_x[t][a2] - tri_x[t][a1];
      }
      const double kt = tri_kappa[t];
      size_t slot = (static_cast<size_t>(cell) * 2 + t) * 6;
      for (int a = 0; a < 3; ++a) {
        for (int bidx = 0; bidx <= a; ++bidx) {
          double val;
          if (kind == ElemKind::Stiffness)
            val = kt * (b[a] * b[bidx] + c[a] * c[bidx]) / (4.0 * area);
          else
            val = kt * area / 12.0 * (a == bidx ? 2.0 : 1.0);
          int r = tri_nodes[t][a], cc = tri_nodes[t][bidx];
          if (r < cc) std::swap(r, cc);
          trips[slot++] = Eigen::Triplet<double>(r, cc, val);
        }
      }
    }
  }

  Eigen::SparseMatrix<double> lower(box.node_count(), box.node_count());
  lower.setFromTriplets(trips.begin(), trips.end());
  return SparseSymmetricMatrix(std::move(lower));
}

}  // namespace

SparseSymmetricMatrix assemble_stiffness(const GridPair& grid, const Eigen::VectorXd& kappa,
                                         const PatchBox& box) {
  return assemble_p1(grid, kappa, box, ElemKind::Stiffness, worker_count() > 1);
}

SparseSymmetricMatrix assemble_mass_weighted(const GridPair& grid, const Eigen::VectorXd& kappa,
                                             const PatchBox& box) {
  return assemble_p1(grid, kappa, box, ElemKind::Mass, worker_count() > 1);
}

SparseSymmetricMatrix assemble_stiffness_serial(const GridPair& grid,
                                                const Eigen::VectorXd& kappa,
                                                const PatchBox& box) {
  return assemble_p1(grid, kappa, box, ElemKind::Stiffness, false);
}

SparseSymmetricMatrix assemble_mass_weighted_serial(const GridPair& grid,
                                                    const Eigen::VectorXd& kappa,
                                                    const PatchBox& box) {
  return assemble_p1(grid, kappa, box, ElemKind::Mass, false);
}

namespace {

// Consistent P1 load vector over all fine nodes: b = M f with unit mass.
Eigen::VectorXd consistent_load(const GridPair& grid, const Eigen::VectorXd& f) {
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(grid.fine_node_count());
  SparseSymmetricMatrix mass = assemble_mass_weighted(grid, ones, whole_domain(grid));
  return mass.apply(f);
}

Eigen::VectorXd restrict_interior(const GridPair& grid, const Eigen::VectorXd& full) {
  Eigen::VectorXd v(grid.interior_count());
  for (int y = 1; y < grid.n_fine - 1; ++y)
    for (int x = 1; x < grid.n_fine - 1; ++x) v[grid.interior_index(x, y)] = full[grid.node(x, y)];
  return v;
}

Eigen::VectorXd extend_with_boundary_zeros(const GridPair& grid, const Eigen::VectorXd& interior) {
  Eigen::VectorXd full = Eigen::VectorXd::Zero(grid.fine_node_count());
  for (int y = 1; y < grid.n_fine - 1; ++y)
    for (int x = 1; x < grid.n_fine - 1; ++x) full[grid.node(x, y)] = interior[grid.interior_index(x, y)];
  return full;
}

Eigen::SparseMatrix<double> interior_submatrix(const GridPair& grid,
                                               const SparseSymmetricMatrix& full_lower) {
  const auto& L = full_lower.lower();
  std::vector<int> map(grid.fine_node_count(), -1);
  for (int y = 1; y < grid.n_fine - 1; ++y)
    for (int x = 1; x < grid.n_fine - 1; ++x) map[grid.node(x, y)] = grid.interior_index(x, y);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(L.nonZeros());
  for (int k = 0; k < L.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(L, k); it; ++it) {
      const int r = map[it.row()], c = map[it.col()];
      if (r >= 0 && c >= 0) trips.emplace_back(r, c, it.value());
    }
  Eigen::SparseMatrix<double> out(grid.interior_count(), grid.interior_count());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

}  // namespace

DirichletSystem assemble_dirichlet_system(const GridPair& grid, const Eigen::VectorXd& kappa,
                                          const Eigen::VectorXd& f) {
  if (f.size() != grid.fine_node_count())
    throw std::invalid_argument("assemble_dirichlet_system: forcing size mismatch");
  SparseSymmetricMatrix neumann = assemble_stiffness(grid, kappa, whole_domain(grid));
  DirichletSystem sys;
  sys.A = SparseSymmetricMatrix(interior_submatrix(grid, neumann));
  sys.b = restrict_interior(grid, consistent_load(grid, f));
  return sys;
}

namespace {

FineSolution solve_spd_interior(const GridPair& grid, const DirichletSystem& sys) {
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> solver;
  solver.compute(sys.A.lower());
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("solve_fine_diffusion: sparse factorization failed");
  Eigen::VectorXd u_int = solver.solve(sys.b);
  FineSolution sol;
  sol.values = extend_with_boundary_zeros(grid, u_int);
  const double bn = sys.b.norm();
  sol.diagnostics.residual = bn > 0 ? (sys.A.apply(u_int) - sys.b).norm() / bn : 0.0;
  sol.diagnostics.picard_iterations = 1;
  return sol;
}

}  // namespace

FineSolution solve_fine_diffusion(const GridPair& grid, const Eigen::VectorXd& kappa,
                                  const Eigen::VectorXd& f) {
  return solve_spd_interior(grid, assemble_dirichlet_system(grid, kappa, f));
}

FineSolution solve_fine_richards(const GridPair& grid, const Eigen::VectorXd& kappa,
                                 const Eigen::VectorXd& f, const PicardOptions& opts) {
  if (opts.tol <= 0 || opts.max_iter < 1)
    throw std::invalid_argument("solve_fine_richards: invalid Picard options");
  check_kappa(grid, kappa);

  FineSolution sol;
  sol.values = Eigen::VectorXd::Zero(grid.fine_node_count());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> solver;
  bool pattern_ready = false;

  for (int it = 1; it <= opts.max_iter; ++it) {
    const Eigen::VectorXd kappa_eff = kappa.array() / (1.0 + sol.values.array().abs());
    DirichletSystem sys = assemble_dirichlet_system(grid, kappa_eff, f);
    if (!pattern_ready) {
      solver.analyzePattern(sys.A.lower());
      pattern_ready = true;
    }
    solver.factorize(sys.A.lower());
    if (solver.info() != Eigen::Success)
      throw std::runtime_error("solve_fine_richards: sparse factorization failed");
    Eigen::VectorXd u_int = solver.solve(sys.b);
    Eigen::VectorXd u_new = extend_with_boundary_zeros(grid, u_int);

    const double un = u_new.norm();
    const double update = (u_new - sol.values).norm();
    sol.diagnostics.final_update = un > 0 ? update / un : update;
    sol.diagnostics.update_history.push_back(sol.diagnostics.final_update);
    sol.diagnostics.picard_iterations = it;
    const double bn = sys.b.norm();
    sol.diagnostics.residual = bn > 0 ? (sys.A.apply(u_int) - sys.b).norm() / bn : 0.0;
    sol.values = std::move(u_new);
    if (sol.diagnostics.final_update <= opts.tol) {
      sol.diagnostics.converged = true;
      return sol;
    }
  }
  sol.diagnostics.converged = false;
  return sol;
}

std::pair<double, double> relative_errors(const FineSolution& u_ref, const FineSolution& u,
                                          const GridPair& grid) {
  if (u_ref.values.size() != u.values.size() || u_ref.values.size() != grid.fine_node_count())
    throw std::invalid_argument("relative_errors: size mismatch");
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(grid.fine_node_count());
  SparseSymmetricMatrix mass = assemble_mass_weighted(grid, ones, whole_domain(grid));
  SparseSymmetricMatrix stiff = assemble_stiffness(grid, ones, whole_domain(grid));
  const Eigen::VectorXd e = u_ref.values - u.values;
  const double ref_l2 = u_ref.values.dot(mass.apply(u_ref.values));
  const double ref_h1 = u_ref.values.dot(stiff.apply(u_ref.values));
  if (ref_l2 <= 0.0 || ref_h1 <= 0.0)
    throw std::domain_error("relative_errors: reference solution has zero norm");
  const double l2 = std::sqrt(e.dot(mass.apply(e)) / ref_l2);
  const double h1 = std::sqrt(e.dot(stiff.apply(e)) / ref_h1);
  return {l2, h1};
}

}  // namespace msno
