#include "msno/msbasis.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <array>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "msno/parallel.hpp"
#include "msno/rng.hpp"

namespace msno {

std::pair<SparseSymmetricMatrix, SparseSymmetricMatrix> assemble_local_matrices(
    const GridPair& grid, const Eigen::VectorXd& kappa, const LocalDomain& domain) {
  return {assemble_stiffness(grid, kappa, domain.patch),
          assemble_mass_weighted(grid, kappa, domain.patch)};
}

void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  int arg = 0;
  double best = std::abs(v[0]);
  for (int i = 1; i < v.size(); ++i) {
    const double a = std::abs(v[i]);
    if (a > best) {  // strict: exact ties keep the lowest index
      best = a;
      arg = i;
    }
  }
  if (v[arg] < 0) v = -v;
}

namespace {

double max_relative_residual(const SparseSymmetricMatrix& A, const SparseSymmetricMatrix& S,
                             const Eigen::VectorXd& lam, const Eigen::MatrixXd& X) {
  // ||A phi|| vanishes at the zero eigenvalue (constant eigenvector), so the
  // scale falls back to the backward-error form max|diag(A)| * ||phi||.
  const double a_norm = A.lower().diagonal().cwiseAbs().maxCoeff();
  double worst = 0.0;
  for (int j = 0; j < X.cols(); ++j) {
    const Eigen::VectorXd ax = A.apply(X.col(j));
    const double denom = std::max(ax.norm(), a_norm * X.col(j).norm());
    worst = std::max(worst, (ax - lam[j] * S.apply(X.col(j))).norm() / denom);
  }
  return worst;
}

void finalize_pairs(LocalEigenpairs& out) {
  for (int j = 0; j < out.eigenvectors.cols(); ++j) fix_sign(out.eigenvectors.col(j));
}

}  // namespace

LocalEigenpairs solve_local_eigenproblem_dense(const SparseSymmetricMatrix& A,
                                               const SparseSymmetricMatrix& S, int n_requested) {
  const int n = A.dimension();
  if (n_requested < 1 || n_requested > n)
    throw std::invalid_argument("solve_local_eigenproblem: n_requested out of range");
  Eigen::MatrixXd Ad = Eigen::MatrixXd(A.expanded());
  Eigen::MatrixXd Sd = Eigen::MatrixXd(S.expanded());
  Eigen::LLT<Eigen::MatrixXd> llt(Sd);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("solve_local_eigenproblem: mass matrix is not SPD");
  const Eigen::MatrixXd L = llt.matrixL();
  Eigen::MatrixXd C = L.triangularView<Eigen::Lower>().solve(Ad);
  C = L.triangularView<Eigen::Lower>().solve(C.transpose().eval());
  C = 0.5 * (C + C.transpose().eval());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("solve_local_eigenproblem: dense eigensolve failed");

  LocalEigenpairs out;
  out.eigenvalues = es.eigenvalues().head(n_requested);
  out.eigenvectors = L.transpose().triangularView<Eigen::Upper>().solve(
      es.eigenvectors().leftCols(n_requested));
  out.used_dense_fallback = true;
  finalize_pairs(out);
  out.max_rel_residual = max_relative_residual(A, S, out.eigenvalues, out.eigenvectors);
  return out;
}

namespace {

// Shift-invert Lanczos for A phi = lambda S phi with A PSD, S SPD: run the
// symmetric Lanczos process for T = (A + rho S)^-1 S in the S-inner product;
// the largest Ritz values of T map to the smallest lambda.
struct LanczosResult {
  Eigen::VectorXd lam;
  Eigen::MatrixXd X;
  bool converged = false;
};

LanczosResult lanczos_smallest(const SparseSymmetricMatrix& A, const SparseSymmetricMatrix& S,
                               int n_requested, double residual_tol, int max_iter) {
  const int n = A.dimension();
  const double rho =
      std::max(1e-12, 1e-6 * A.lower().diagonal().sum() / S.lower().diagonal().sum());

  Eigen::SparseMatrix<double> K = A.lower() + rho * S.lower();
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> shifted;
  shifted.compute(K);
  LanczosResult res;
  if (shifted.info() != Eigen::Success) return res;

  const int m = std::min(max_iter, n);
  Eigen::MatrixXd V(n, m);   // S-orthonormal Lanczos vectors
  Eigen::MatrixXd SV(n, m);  // S * V, cached for reorthogonalization
  Eigen::VectorXd alpha(m), beta(m);

  CounterRng rng(0x6D736E6F, static_cast<uint64_t>(n));
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal(i);
  Eigen::VectorXd sv = S.apply(v);
  v /= std::sqrt(v.dot(sv));
  sv = S.apply(v);
  V.col(0) = v;
  SV.col(0) = sv;

  int k = 0;  // number of completed Lanczos vectors - 1
  Eigen::VectorXd ritz_lam;
  Eigen::MatrixXd ritz_y;

  auto extract = [&](int dim) {
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(dim, dim);
    for (int i = 0; i < dim; ++i) {
      T(i, i) = alpha[i];
      if (i + 1 < dim) T(i + 1, i) = T(i, i + 1) = beta[i];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    // Largest theta of the shifted operator <-> smallest lambda.
    const int want = std::min(n_requested, dim);
    ritz_lam.resize(want);
    ritz_y = Eigen::MatrixXd(dim, want);
    for (int j = 0; j < want; ++j) {
      const int src = dim - 1 - j;
      const double theta = es.eigenvalues()[src];
      ritz_lam[j] = theta > 0 ? 1.0 / theta - rho : std::numeric_limits<double>::infinity();
      ritz_y.col(j) = es.eigenvectors().col(src);
    }
    // Residual bound for T: |beta_dim * y_last|; small enough in the shifted
    // metric implies convergence of the original pair after refinement.
    bool ok = dim == n;
    if (!ok && dim >= n_requested) {
      ok = true;
      for (int j = 0; j < want; ++j) {
        const double theta = es.eigenvalues()[dim - 1 - j];
        if (std::abs(beta[dim - 1] * ritz_y(dim - 1, j)) >
            0.1 * residual_tol * std::max(std::abs(theta), 1e-30))
          ok = false;
      }
    }
    return ok;
  };

  bool done = false;
  for (k = 0; k < m; ++k) {
    Eigen::VectorXd w = shifted.solve(SV.col(k));
    alpha[k] = w.dot(SV.col(k));
    w -= alpha[k] * V.col(k);
    if (k > 0) w -= beta[k - 1] * V.col(k - 1);
    // Full reorthogonalization, two passes.
    for (int pass = 0; pass < 2; ++pass)
      for (int i = 0; i <= k; ++i) w -= SV.col(i).dot(w) * V.col(i);

    Eigen::VectorXd sw = S.apply(w);
    double nrm = std::sqrt(std::max(w.dot(sw), 0.0));
    beta[k] = nrm;
    if (k + 1 >= n_requested && (k + 1) % 8 == 0 && extract(k + 1)) {
      done = true;
      ++k;
      break;
    }
    if (k + 1 < m) {
      if (nrm < 1e-14) {
        // Invariant subspace hit; restart direction orthogonal to V.
        for (int i = 0; i < n; ++i) w[i] = rng.normal(static_cast<uint64_t>(n) + i + k * n);
        for (int pass = 0; pass < 2; ++pass)
          for (int i = 0; i <= k; ++i) w -= SV.col(i).dot(w) * V.col(i);
        sw = S.apply(w);
        nrm = std::sqrt(std::max(w.dot(sw), 0.0));
        if (nrm < 1e-14) break;
        beta[k] = 0.0;
      }
      V.col(k + 1) = w / nrm;
      SV.col(k + 1) = S.apply(V.col(k + 1));
    }
  }
  if (!done) done = extract(std::min(k, m));

  const int dim = std::min(k, m);
  if (dim < n_requested) return res;
  if (ritz_lam.size() < n_requested) extract(dim);

  // Rayleigh-Ritz refinement of the Ritz subspace with the original pencil.
  Eigen::MatrixXd W = V.leftCols(dim) * ritz_y;
  Eigen::MatrixXd Aw(n, W.cols()), Sw(n, W.cols());
  for (int j = 0; j < W.cols(); ++j) {
    Aw.col(j) = A.apply(W.col(j));
    Sw.col(j) = S.apply(W.col(j));
  }
  Eigen::MatrixXd Ap = W.transpose() * Aw;
  Eigen::MatrixXd Sp = W.transpose() * Sw;
  Ap = 0.5 * (Ap + Ap.transpose().eval());
  Sp = 0.5 * (Sp + Sp.transpose().eval());
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(Ap, Sp);
  if (ges.info() != Eigen::Success) return res;

  res.lam = ges.eigenvalues().head(n_requested);
  res.X = W * ges.eigenvectors().leftCols(n_requested);
  res.converged = done;
  return res;
}

}  // namespace

LocalEigenpairs solve_local_eigenproblem(const SparseSymmetricMatrix& A,
                                         const SparseSymmetricMatrix& S, int n_requested,
                                         const EigenSolveOptions& opts) {
  const int n = A.dimension();
  if (S.dimension() != n)
    throw std::invalid_argument("solve_local_eigenproblem: dimension mismatch");
  if (n_requested < 1 || n_requested > n)
    throw std::invalid_argument("solve_local_eigenproblem: n_requested out of range");

  if (!opts.force_dense && n > 4 * n_requested) {
    const int maxit = opts.max_lanczos > 0 ? opts.max_lanczos
                                           : std::min(n, std::max(8 * n_requested + 48, 96));
    LanczosResult lr = lanczos_smallest(A, S, n_requested, opts.residual_tol, maxit);
    if (lr.converged) {
      LocalEigenpairs out;
      out.eigenvalues = lr.lam;
      out.eigenvectors = lr.X;
      finalize_pairs(out);
      out.max_rel_residual = max_relative_residual(A, S, out.eigenvalues, out.eigenvectors);
      if (out.max_rel_residual <= opts.residual_tol) return out;
    }
  }
  LocalEigenpairs out = solve_local_eigenproblem_dense(A, S, n_requested);
  if (out.max_rel_residual > opts.residual_tol)
    throw std::runtime_error("solve_local_eigenproblem: residual check failed on dense path");
  return out;
}

namespace {

// kappa-harmonic extension of the four corner-hat traces on one coarse cell:
// one factorization, four right-hand sides.
struct CellExtension {
  // values[c] on the (m+1)^2 cell nodes for the hat of corner c, corners
  // ordered (0,0), (1,0), (0,1), (1,1) in cell-local coarse coordinates.
  std::array<Eigen::VectorXd, 4> values;
};

CellExtension solve_cell_extension(const GridPair& g, const Eigen::VectorXd& kappa, int ci,
                                   int cj) {
  const PatchBox cell{ci * g.m, cj * g.m, g.m + 1, g.m + 1};
  SparseSymmetricMatrix A = assemble_stiffness(g, kappa, cell);
  const int n = cell.node_count();
  std::vector<int> imap(n, -1);
  int ni = 0;
  for (int y = 0; y < cell.ny; ++y)
    for (int x = 0; x < cell.nx; ++x)
      if (x > 0 && y > 0 && x < cell.nx - 1 && y < cell.ny - 1) imap[y * cell.nx + x] = ni++;

  auto hat = [&](int corner, int x, int y) {
    const double s = static_cast<double>(x) / g.m, t = static_cast<double>(y) / g.m;
    const double hs = (corner & 1) ? s : 1.0 - s;
    const double ht = (corner & 2) ? t : 1.0 - t;
    return hs * ht;
  };

  std::vector<Eigen::Triplet<double>> trips;
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(ni, 4);
  const auto& L = A.expanded();
  for (int k = 0; k < L.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(L, k); it; ++it) {
      const int r = imap[it.row()], c = imap[it.col()];
      if (r >= 0 && c >= 0) {
        if (it.row() >= it.col()) trips.emplace_back(r, c, it.value());
      } else if (r >= 0 && c < 0) {
        const int cx = static_cast<int>(it.col()) % cell.nx;
        const int cy = static_cast<int>(it.col()) / cell.nx;
        for (int corner = 0; corner < 4; ++corner)
          rhs(r, corner) -= it.value() * hat(corner, cx, cy);
      }
    }
  Eigen::SparseMatrix<double> Ai(ni, ni);
  Ai.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> solver(Ai);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("harmonic_partition_of_unity: cell factorization failed");

  CellExtension ext;
  Eigen::MatrixXd ui = solver.solve(rhs);
  for (int corner = 0; corner < 4; ++corner) {
    ext.values[corner].resize(n);
    for (int y = 0; y < cell.ny; ++y)
      for (int x = 0; x < cell.nx; ++x) {
        const int idx = y * cell.nx + x;
        ext.values[corner][idx] = imap[idx] >= 0 ? ui(imap[idx], corner) : hat(corner, x, y);
      }
  }
  return ext;
}

}  // namespace

std::vector<PartitionFunction> harmonic_partition_of_unity_all(
    const GridPair& grid, const Eigen::VectorXd& kappa,
    const std::vector<LocalDomain>& domains) {
  const int nc = grid.n_coarse;
  std::vector<CellExtension> cells(static_cast<size_t>(nc) * nc);
  std::exception_ptr first_error;
#pragma omp parallel for schedule(dynamic) if (worker_count() > 1)
  for (int cell = 0; cell < nc * nc; ++cell) {
    try {
      cells[cell] = solve_cell_extension(grid, kappa, cell % nc, cell / nc);
    } catch (...) {
#pragma omp critical
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);

  std::vector<PartitionFunction> chis(domains.size());
  for (size_t d = 0; d < domains.size(); ++d) {
    const LocalDomain& dom = domains[d];
    PartitionFunction chi;
    chi.domain_index = dom.index;
    chi.values = Eigen::VectorXd::Zero(dom.patch.node_count());
    for (auto [ci, cj] : dom.cells) {
      // Which corner of cell (ci, cj) is the domain's node?
      const int corner = (dom.cx - ci) + 2 * (dom.cy - cj);
      const CellExtension& ext = cells[static_cast<size_t>(cj) * nc + ci];
      for (int y = 0; y <= grid.m; ++y)
        for (int x = 0; x <= grid.m; ++x) {
          const int gx = ci * grid.m + x, gy = cj * grid.m + y;
          chi.values[(gy - dom.patch.y0) * dom.patch.nx + (gx - dom.patch.x0)] =
              ext.values[corner][y * (grid.m + 1) + x];
        }
    }
    chis[d] = std::move(chi);
  }
  return chis;
}

PartitionFunction harmonic_partition_of_unity(const GridPair& grid,
                                              const Eigen::VectorXd& kappa,
                                              const LocalDomain& domain) {
  PartitionFunction chi;
  chi.domain_index = domain.index;
  chi.values = Eigen::VectorXd::Zero(domain.patch.node_count());
  for (auto [ci, cj] : domain.cells) {
    const int corner = (domain.cx - ci) + 2 * (domain.cy - cj);
    CellExtension ext = solve_cell_extension(grid, kappa, ci, cj);
    for (int y = 0; y <= grid.m; ++y)
      for (int x = 0; x <= grid.m; ++x) {
        const int gx = ci * grid.m + x, gy = cj * grid.m + y;
        chi.values[(gy - domain.patch.y0) * domain.patch.nx + (gx - domain.patch.x0)] =
            ext.values[corner][y * (grid.m + 1) + x];
      }
  }
  return chi;
}

Eigen::VectorXd pou_gradient_weight(const GridPair& grid, const Eigen::VectorXd& kappa,
                                    const std::vector<LocalDomain>& domains,
                                    const std::vector<PartitionFunction>& chis) {
  if (domains.size() != chis.size())
    throw std::invalid_argument("pou_gradient_weight: domains/chis size mismatch");
  // Accumulate sum_i |grad chi_i|^2 per triangle, then average triangles to
  // nodes (P1 gradients are constant per triangle).
  Eigen::VectorXd node_sum = Eigen::VectorXd::Zero(grid.fine_node_count());
  Eigen::VectorXd node_cnt = Eigen::VectorXd::Zero(grid.fine_node_count());
  const double h = grid.h;
  for (size_t d = 0; d < domains.size(); ++d) {
    const PatchBox& p = domains[d].patch;
    const Eigen::VectorXd& c = chis[d].values;
    for (int cj = 0; cj + 1 < p.ny; ++cj)
      for (int ci = 0; ci + 1 < p.nx; ++ci) {
        const double v00 = c[cj * p.nx + ci], v10 = c[cj * p.nx + ci + 1];
        const double v01 = c[(cj + 1) * p.nx + ci], v11 = c[(cj + 1) * p.nx + ci + 1];
        // Triangle (v00, v10, v11): grad = ((v10-v00)/h, (v11-v10)/h).
        const double g1x = (v10 - v00) / h, g1y = (v11 - v10) / h;
        // Triangle (v00, v11, v01): grad = ((v11-v01)/h, (v01-v00)/h).
        const double g2x = (v11 - v01) / h, g2y = (v01 - v00) / h;
        const int gx = p.x0 + ci, gy = p.y0 + cj;
        const int n00 = grid.node(gx, gy), n10 = grid.node(gx + 1, gy);
        const int n01 = grid.node(gx, gy + 1), n11 = grid.node(gx + 1, gy + 1);
        const double q1 = g1x * g1x + g1y * g1y, q2 = g2x * g2x + g2y * g2y;
        node_sum[n00] += q1 + q2;
        node_sum[n10] += q1;
        node_sum[n11] += q1 + q2;
        node_sum[n01] += q2;
        node_cnt[n00] += 2;
        node_cnt[n10] += 1;
        node_cnt[n11] += 2;
        node_cnt[n01] += 1;
      }
  }
  Eigen::VectorXd weight(grid.fine_node_count());
  const double floor_scale = 1e-12 / (grid.H * grid.H);
  for (int i = 0; i < weight.size(); ++i) {
    const double avg = node_cnt[i] > 0 ? node_sum[i] / node_cnt[i] : 0.0;
    weight[i] = kappa[i] * std::max(avg, floor_scale);
  }
  return weight;
}

BasisSet build_multiscale_basis(const LocalEigenpairs& pairs, const PartitionFunction& chi,
                                int n_bf, const GridPair& grid, const LocalDomain& domain) {
  if (n_bf < 1 || n_bf > pairs.eigenvectors.cols())
    throw std::invalid_argument("build_multiscale_basis: N_bf exceeds computed eigenpairs");
  if (chi.values.size() != domain.patch.node_count() ||
      pairs.eigenvectors.rows() != domain.patch.node_count())
    throw std::invalid_argument("build_multiscale_basis: patch size mismatch");

  BasisSet basis;
  basis.domain_index = domain.index;
  basis.patch = domain.patch;
  basis.psi = pairs.eigenvectors.leftCols(n_bf).array().colwise() * chi.values.array();
  for (int ly = 0; ly < domain.patch.ny; ++ly)
    for (int lx = 0; lx < domain.patch.nx; ++lx)
      if (grid.on_boundary(domain.patch.x0 + lx, domain.patch.y0 + ly))
        basis.psi.row(ly * domain.patch.nx + lx).setZero();
  return basis;
}

RestrictionMatrix assemble_restriction(const std::vector<BasisSet>& bases, const GridPair& grid) {
  if (bases.empty()) throw std::invalid_argument("assemble_restriction: no basis sets");
  const int n_bf = static_cast<int>(bases.front().psi.cols());
  for (const auto& b : bases)
    if (b.psi.cols() != n_bf)
      throw std::invalid_argument("assemble_restriction: inconsistent N_bf across domains");

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(bases.size() * n_bf * bases.front().patch.node_count() / 2);
  for (size_t d = 0; d < bases.size(); ++d) {
    const BasisSet& b = bases[d];
    for (int j = 0; j < n_bf; ++j) {
      const int row = static_cast<int>(d) * n_bf + j;
      for (int ly = 0; ly < b.patch.ny; ++ly)
        for (int lx = 0; lx < b.patch.nx; ++lx) {
          const int col = grid.interior_index(b.patch.x0 + lx, b.patch.y0 + ly);
          const double v = b.psi(ly * b.patch.nx + lx, j);
          if (col >= 0 && v != 0.0) trips.emplace_back(row, col, v);
        }
    }
  }
  RestrictionMatrix R;
  R.n_bf = n_bf;
  R.mat.resize(static_cast<Eigen::Index>(bases.size()) * n_bf, grid.interior_count());
  R.mat.setFromTriplets(trips.begin(), trips.end());
  R.mat.makeCompressed();
  return R;
}

OfflineResult build_basis_sets(const GridPair& grid, const std::vector<LocalDomain>& domains,
                               const Eigen::VectorXd& kappa, const OfflineOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  OfflineResult result;
  result.bases.resize(domains.size());
  result.eigenpairs.resize(domains.size());
  const int n_pairs = opts.n_bf + opts.n_extra;

  std::vector<PartitionFunction> chis;
  if (opts.pou == PouKind::KappaHarmonic) {
    chis = harmonic_partition_of_unity_all(grid, kappa, domains);
  } else {
    chis.resize(domains.size());
    for (size_t d = 0; d < domains.size(); ++d) chis[d] = partition_of_unity(grid, domains[d]);
  }
  Eigen::VectorXd mass_weight = kappa;
  if (opts.weight == SpectralWeight::PouGradient)
    mass_weight = pou_gradient_weight(grid, kappa, domains, chis);

  std::exception_ptr first_error;
#pragma omp parallel for schedule(dynamic) if (worker_count() > 1)
  for (int d = 0; d < static_cast<int>(domains.size()); ++d) {
    try {
      const LocalDomain& dom = domains[d];
      SparseSymmetricMatrix A = assemble_stiffness(grid, kappa, dom.patch);
      SparseSymmetricMatrix S = assemble_mass_weighted(grid, mass_weight, dom.patch);
      LocalEigenpairs pairs = solve_local_eigenproblem(A, S, n_pairs, opts.eigen);
      result.bases[d] = build_multiscale_basis(pairs, chis[d], opts.n_bf, grid, dom);
      result.eigenpairs[d] = std::move(pairs);
    } catch (...) {
#pragma omp critical
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace msno
