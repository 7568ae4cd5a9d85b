#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <memory>
#include <vector>

#include "msno/grid.hpp"

namespace msno {

// Symmetric sparse matrix, stored as its lower triangle.
class SparseSymmetricMatrix {
 public:
  SparseSymmetricMatrix() = default;
  explicit SparseSymmetricMatrix(Eigen::SparseMatrix<double> lower);

  int dimension() const { return static_cast<int>(lower_.rows()); }
  const Eigen::SparseMatrix<double>& lower() const { return lower_; }
  // Full symmetric expansion, built on first use.
  const Eigen::SparseMatrix<double>& expanded() const;
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;

 private:
  Eigen::SparseMatrix<double> lower_;
  mutable std::shared_ptr<const Eigen::SparseMatrix<double>> full_;
};

struct PicardOptions {
  double tol = 1e-6;
  int max_iter = 50;
};

struct SolveDiagnostics {
  int picard_iterations = 0;
  double final_update = 0.0;
  bool converged = true;
  double residual = 0.0;
  bool tikhonov_fallback = false;
  std::vector<double> update_history;  // relative Picard updates per iteration
};

// Fine-grid solution with homogeneous Dirichlet boundary (boundary nodes 0).
struct FineSolution {
  Eigen::VectorXd values;  // all fine nodes
  SolveDiagnostics diagnostics;
};

PatchBox whole_domain(const GridPair& grid);

// P1 assembly over the fine squares of `box` (each split along the fixed
// lower-left/upper-right diagonal), natural boundary conditions, local
// row-major node numbering within the box. kappa is the global nodal field;
// each triangle uses the mean of its three vertex values.
SparseSymmetricMatrix assemble_stiffness(const GridPair& grid, const Eigen::VectorXd& kappa,
                                         const PatchBox& box);
SparseSymmetricMatrix assemble_mass_weighted(const GridPair& grid, const Eigen::VectorXd& kappa,
                                             const PatchBox& box);

// Forced single-threaded element loops; bitwise identical to the above.
SparseSymmetricMatrix assemble_stiffness_serial(const GridPair& grid,
                                                const Eigen::VectorXd& kappa,
                                                const PatchBox& box);
SparseSymmetricMatrix assemble_mass_weighted_serial(const GridPair& grid,
                                                    const Eigen::VectorXd& kappa,
                                                    const PatchBox& box);

// Interior Dirichlet system: kappa-weighted stiffness over interior dofs and
// the consistent P1 load vector of the nodal forcing f.
struct DirichletSystem {
  SparseSymmetricMatrix A;
  Eigen::VectorXd b;
};
DirichletSystem assemble_dirichlet_system(const GridPair& grid, const Eigen::VectorXd& kappa,
                                          const Eigen::VectorXd& f);

FineSolution solve_fine_diffusion(const GridPair& grid, const Eigen::VectorXd& kappa,
                                  const Eigen::VectorXd& f);

// Picard iteration for the steady Richards problem with Haverkamp
// conductivity kappa(x) / (1 + |u|), starting from u = 0.
FineSolution solve_fine_richards(const GridPair& grid, const Eigen::VectorXd& kappa,
                                 const Eigen::VectorXd& f, const PicardOptions& opts = {});

// Relative L2 and H1 errors of u against u_ref via unweighted P1 quadrature.
std::pair<double, double> relative_errors(const FineSolution& u_ref, const FineSolution& u,
                                          const GridPair& grid);

}  // namespace msno
