#include "msno/gmsfem.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace msno {

CoarseSystem project(const SparseSymmetricMatrix& A, const Eigen::VectorXd& b,
                     const RestrictionMatrix& R) {
  if (R.mat.cols() != A.dimension() || b.size() != A.dimension())
    throw std::invalid_argument("project: dimension mismatch between A, b and R");
  const Eigen::SparseMatrix<double> RA = R.mat * A.expanded();
  CoarseSystem sys;
  sys.A0 = Eigen::MatrixXd(RA * R.mat.transpose());
  sys.A0 = 0.5 * (sys.A0 + sys.A0.transpose().eval());
  sys.f0 = R.mat * b;
  return sys;
}

CoarseSolveResult solve_coarse(const CoarseSystem& sys) {
  const int n = static_cast<int>(sys.A0.rows());
  if (n == 0 || sys.A0.cols() != n || sys.f0.size() != n)
    throw std::invalid_argument("solve_coarse: malformed coarse system");

  auto attempt = [&](const Eigen::MatrixXd& M, Eigen::VectorXd& u, double& resid) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
    if (ldlt.info() != Eigen::Success) return false;
    const Eigen::VectorXd d = ldlt.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    if (d.minCoeff() <= 1e-14 * dmax) return false;
    u = ldlt.solve(sys.f0);
    const double fn = sys.f0.norm();
    resid = fn > 0 ? (M * u - sys.f0).norm() / fn : 0.0;
    return resid <= 1e-8;
  };

  CoarseSolveResult out;
  if (attempt(sys.A0, out.u0, out.residual)) return out;

  const double delta = 1e-12 * sys.A0.trace() / n;
  Eigen::MatrixXd reg = sys.A0 + delta * Eigen::MatrixXd::Identity(n, n);
  out.tikhonov_fallback = true;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(reg);
  out.u0 = ldlt.solve(sys.f0);
  const double fn = sys.f0.norm();
  out.residual = fn > 0 ? (reg * out.u0 - sys.f0).norm() / fn : 0.0;
  if (!out.u0.allFinite() || out.residual > 1e-3) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(sys.A0);
    std::ostringstream msg;
    msg << "solve_coarse: system singular after Tikhonov fallback (dim " << n << ", rank "
        << lu.rank() << ", residual " << out.residual << ")";
    throw std::runtime_error(msg.str());
  }
  return out;
}

FineSolution reconstruct(const Eigen::VectorXd& u0, const RestrictionMatrix& R,
                         const GridPair& grid) {
  if (u0.size() != R.mat.rows())
    throw std::invalid_argument("reconstruct: coarse vector size mismatch");
  const Eigen::VectorXd interior = R.mat.transpose() * u0;
  FineSolution sol;
  sol.values = Eigen::VectorXd::Zero(grid.fine_node_count());
  for (int y = 1; y < grid.n_fine - 1; ++y)
    for (int x = 1; x < grid.n_fine - 1; ++x)
      sol.values[grid.node(x, y)] = interior[grid.interior_index(x, y)];
  return sol;
}

FineSolution solve_gmsfem_diffusion(const GridPair& grid, const Eigen::VectorXd& kappa,
                                    const Eigen::VectorXd& f, const RestrictionMatrix& R) {
  DirichletSystem sys = assemble_dirichlet_system(grid, kappa, f);
  CoarseSystem coarse = project(sys.A, sys.b, R);
  CoarseSolveResult cs = solve_coarse(coarse);
  FineSolution sol = reconstruct(cs.u0, R, grid);
  sol.diagnostics.residual = cs.residual;
  sol.diagnostics.tikhonov_fallback = cs.tikhonov_fallback;
  sol.diagnostics.picard_iterations = 1;
  return sol;
}

FineSolution solve_gmsfem_richards(const GridPair& grid, const Eigen::VectorXd& kappa,
                                   const Eigen::VectorXd& f, const RestrictionMatrix& R,
                                   const PicardOptions& opts) {
  if (opts.tol <= 0 || opts.max_iter < 1)
    throw std::invalid_argument("solve_gmsfem_richards: invalid Picard options");

  FineSolution sol;
  sol.values = Eigen::VectorXd::Zero(grid.fine_node_count());
  for (int it = 1; it <= opts.max_iter; ++it) {
    const Eigen::VectorXd kappa_eff = kappa.array() / (1.0 + sol.values.array().abs());
    DirichletSystem sys = assemble_dirichlet_system(grid, kappa_eff, f);
    CoarseSystem coarse = project(sys.A, sys.b, R);
    CoarseSolveResult cs = solve_coarse(coarse);
    FineSolution next = reconstruct(cs.u0, R, grid);

    const double un = next.values.norm();
    const double update = (next.values - sol.values).norm();
    sol.diagnostics.final_update = un > 0 ? update / un : update;
    sol.diagnostics.update_history.push_back(sol.diagnostics.final_update);
    sol.diagnostics.picard_iterations = it;
    sol.diagnostics.residual = cs.residual;
    sol.diagnostics.tikhonov_fallback =
        sol.diagnostics.tikhonov_fallback || cs.tikhonov_fallback;
    sol.values = std::move(next.values);
    if (sol.diagnostics.final_update <= opts.tol) {
      sol.diagnostics.converged = true;
      return sol;
    }
  }
  sol.diagnostics.converged = false;
  return sol;
}

double breakeven(double t_data, double t_train, double t_inf, double t_gmsfem) {
  if (t_data < 0 || t_train < 0 || t_inf < 0 || t_gmsfem < 0)
    throw std::invalid_argument("breakeven: times must be nonnegative");
  if (t_gmsfem <= t_inf) return std::numeric_limits<double>::infinity();
  return (t_data + t_train) / (t_gmsfem - t_inf);
}

}  // namespace msno
