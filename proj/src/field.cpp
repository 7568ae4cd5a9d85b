#include "msno/field.hpp"

#include <fftw3.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <vector>

#include "msno/rng.hpp"

namespace msno {

namespace {

void check_kle_params(const KleParams& p) {
  if (p.l_x <= 0 || p.l_y <= 0) throw std::invalid_argument("kle: correlation lengths must be > 0");
  if (p.energy_fraction <= 0 || p.energy_fraction > 1)
    throw std::invalid_argument("kle: energy_fraction must be in (0, 1]");
  if (p.contrast_target <= 1) throw std::invalid_argument("kle: contrast_target must be > 1");
  if (p.aux_grid < 2 || p.aux_grid > 64)
    throw std::invalid_argument("kle: aux_grid must be in [2, 64] for the dense eigensolve");
}

}  // namespace

Eigen::MatrixXd kle_covariance_matrix(const KleParams& params) {
  check_kle_params(params);
  const int n = params.aux_grid;
  const int N = n * n;
  const double step = 1.0 / n;
  Eigen::MatrixXd cov(N, N);
  for (int p = 0; p < N; ++p) {
    const double xp = (p % n + 0.5) * step;
    const double yp = (p / n + 0.5) * step;
    for (int q = 0; q <= p; ++q) {
      const double xq = (q % n + 0.5) * step;
      const double yq = (q / n + 0.5) * step;
      const double dx = (xp - xq) / params.l_x;
      const double dy = (yp - yq) / params.l_y;
      const double v = params.sigma2 * std::exp(-std::sqrt(dx * dx + dy * dy));
      cov(p, q) = v;
      cov(q, p) = v;
    }
  }
  return cov;
}

KleDecomposition kle_eigendecomposition(const KleParams& params) {
  const int n = params.aux_grid;
  const double step = 1.0 / n;
  // Midpoint quadrature gives the symmetric discrete kernel step^2 * C.
  Eigen::MatrixXd kernel = kle_covariance_matrix(params) * (step * step);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(kernel);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("kle_eigendecomposition: dense eigensolve failed");

  const Eigen::VectorXd& lam_asc = es.eigenvalues();
  const double lam_max = lam_asc.maxCoeff();
  if (lam_asc.minCoeff() < -1e-10 * lam_max)
    throw std::runtime_error("kle_eigendecomposition: covariance matrix is not PSD "
                             "within tolerance");

  const int N = n * n;
  KleDecomposition out;
  out.aux_grid = n;
  out.params = params;
  out.eigenvalues.resize(N);
  out.eigenfunctions.resize(N, N);
  for (int k = 0; k < N; ++k) {
    out.eigenvalues[k] = std::max(lam_asc[N - 1 - k], 0.0);
    // Normalize in the discrete L2 inner product: ||phi||^2 = step^2 sum phi^2 = 1.
    out.eigenfunctions.col(k) = es.eigenvectors().col(N - 1 - k) / step;
  }
  const double total = out.eigenvalues.sum();
  double partial = 0.0;
  out.retained = N;
  for (int k = 0; k < N; ++k) {
    partial += out.eigenvalues[k];
    if (partial >= params.energy_fraction * total) {
      out.retained = k + 1;
      break;
    }
  }
  return out;
}

CoefficientField kle_realize_field(const KleDecomposition& decomp, const Eigen::VectorXd& theta,
                                   const GridPair& grid) {
  const int L = decomp.retained;
  if (theta.size() < L) throw std::invalid_argument("kle_realize_field: theta shorter than L");
  const int n = decomp.aux_grid;
  const double step = 1.0 / n;

  Eigen::VectorXd y_aux = Eigen::VectorXd::Zero(n * n);
  for (int k = 0; k < L; ++k)
    y_aux += std::sqrt(decomp.eigenvalues[k]) * theta[k] * decomp.eigenfunctions.col(k);

  // Bilinear interpolation from aux cell centers to fine nodes, clamped at
  // the outermost centers.
  Eigen::VectorXd y(grid.fine_node_count());
  auto sample_axis = [&](double coord, int& i0, double& w) {
    double t = coord / step - 0.5;
    if (t <= 0) { i0 = 0; w = 0.0; return; }
    if (t >= n - 1) { i0 = n - 2; w = 1.0; return; }
    i0 = static_cast<int>(t);
    w = t - i0;
  };
  for (int gy = 0; gy < grid.n_fine; ++gy) {
    int j0; double wy;
    sample_axis(grid.coord(gy), j0, wy);
    for (int gx = 0; gx < grid.n_fine; ++gx) {
      int i0; double wx;
      sample_axis(grid.coord(gx), i0, wx);
      const double v00 = y_aux[j0 * n + i0], v10 = y_aux[j0 * n + i0 + 1];
      const double v01 = y_aux[(j0 + 1) * n + i0], v11 = y_aux[(j0 + 1) * n + i0 + 1];
      y[grid.node(gx, gy)] =
          (1 - wy) * ((1 - wx) * v00 + wx * v10) + wy * ((1 - wx) * v01 + wx * v11);
    }
  }

  const double lo = y.minCoeff(), hi = y.maxCoeff();
  const double span = hi - lo;
  if (span <= 1e-12 * (std::abs(hi) + std::abs(lo) + 1.0))
    throw std::runtime_error("kle_realize_field: degenerate (constant) field realization");

  const double a = std::log(decomp.params.contrast_target);
  CoefficientField field;
  field.values = ((y.array() - lo) / span * a).exp();
  field.contrast_lo = field.values.minCoeff();
  field.contrast_hi = field.values.maxCoeff();
  return field;
}

CoefficientField sample_kle_field(const KleDecomposition& decomp, uint64_t seed,
                                  const GridPair& grid) {
  CounterRng rng(seed, /*stream=*/0);
  Eigen::VectorXd theta(decomp.retained);
  for (int k = 0; k < decomp.retained; ++k) theta[k] = rng.normal(k);
  return kle_realize_field(decomp, theta, grid);
}

namespace {

std::mutex fftw_plan_mutex;  // FFTW plan creation is not thread-safe

}  // namespace

ForcingField sample_forcing(ForcingKind kind, uint64_t seed, const GridPair& grid,
                            const ForcingParams& params) {
  ForcingField f;
  f.kind = kind;
  if (kind == ForcingKind::Unit) {
    f.values = Eigen::VectorXd::Ones(grid.fine_node_count());
    return f;
  }
  if (params.beta <= 0)
    throw std::invalid_argument("sample_forcing: beta must be > 0 for the spectral filter");

  // Periodic grid of n = n_fine - 1 samples (period exactly 1); the last fine
  // node repeats the first by wrap-around.
  const int n = grid.n_fine - 1;
  std::vector<double> noise(static_cast<size_t>(n) * n);
  CounterRng rng(seed, /*stream=*/1);
  for (size_t j = 0; j < noise.size(); ++j) noise[j] = rng.normal(j);

  const int nc = n / 2 + 1;
  std::vector<fftw_complex> spec(static_cast<size_t>(n) * nc);
  fftw_plan fwd, bwd;
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex);
    fwd = fftw_plan_dft_r2c_2d(n, n, noise.data(), spec.data(), FFTW_ESTIMATE);
    bwd = fftw_plan_dft_c2r_2d(n, n, spec.data(), noise.data(), FFTW_ESTIMATE);
  }
  fftw_execute(fwd);

  const double four_pi2 = 4.0 * M_PI * M_PI;
  for (int ky = 0; ky < n; ++ky) {
    const int fy = ky <= n / 2 ? ky : ky - n;
    for (int kx = 0; kx < nc; ++kx) {
      const double k2 = static_cast<double>(fy) * fy + static_cast<double>(kx) * kx;
      const double symbol = params.alpha * std::pow(1.0 + four_pi2 * k2, -params.beta);
      const double scale = symbol / (static_cast<double>(n) * n);  // c2r is unnormalized
      auto& c = spec[static_cast<size_t>(ky) * nc + kx];
      c[0] *= scale;
      c[1] *= scale;
    }
  }
  fftw_execute(bwd);
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex);
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
  }

  f.values.resize(grid.fine_node_count());
  for (int gy = 0; gy < grid.n_fine; ++gy)
    for (int gx = 0; gx < grid.n_fine; ++gx)
      f.values[grid.node(gx, gy)] =
          params.gamma * noise[static_cast<size_t>(gy % n) * n + (gx % n)];
  return f;
}

}  // namespace msno
