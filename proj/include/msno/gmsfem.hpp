#pragma once

#include <Eigen/Core>

#include "msno/fem.hpp"
#include "msno/grid.hpp"
#include "msno/msbasis.hpp"

namespace msno {

struct CoarseSystem {
  Eigen::MatrixXd A0;
  Eigen::VectorXd f0;
};

// A0 = R A R^T, f0 = R b (basis vectors are rows of R).
CoarseSystem project(const SparseSymmetricMatrix& A, const Eigen::VectorXd& b,
                     const RestrictionMatrix& R);

struct CoarseSolveResult {
  Eigen::VectorXd u0;
  bool tikhonov_fallback = false;
  double residual = 0.0;
};

// Dense symmetric factorization with a diagonal Tikhonov fallback
// (delta = 1e-12 * trace / dim) when the pivot check or residual fails.
CoarseSolveResult solve_coarse(const CoarseSystem& sys);

// Fine interior values R^T u0 with boundary zeros reattached.
FineSolution reconstruct(const Eigen::VectorXd& u0, const RestrictionMatrix& R,
                         const GridPair& grid);

FineSolution solve_gmsfem_diffusion(const GridPair& grid, const Eigen::VectorXd& kappa,
                                    const Eigen::VectorXd& f, const RestrictionMatrix& R);

// Picard loop with the fixed restriction matrix; each iteration reassembles
// the fine stiffness at the current reconstructed iterate and re-projects.
FineSolution solve_gmsfem_richards(const GridPair& grid, const Eigen::VectorXd& kappa,
                                   const Eigen::VectorXd& f, const RestrictionMatrix& R,
                                   const PicardOptions& opts = {});

// Inference samples at which accumulated training costs balance the
// classical offline savings; +inf when T_gmsfem <= T_inf.
double breakeven(double t_data, double t_train, double t_inf, double t_gmsfem);

}  // namespace msno
