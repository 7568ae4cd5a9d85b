#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "msno/fem.hpp"
#include "msno/field.hpp"
#include "msno/grid.hpp"

using namespace msno;

TEST_CASE("covariance matrix matches the exponential kernel directly") {
  KleParams p;
  p.aux_grid = 12;
  Eigen::MatrixXd cov = kle_covariance_matrix(p);
  const int n = p.aux_grid;
  const double step = 1.0 / n;
  for (int a : {0, 5, 37, 100, 143}) {
    for (int b : {0, 3, 71, 143}) {
      const double dx = ((a % n) - (b % n)) * step / p.l_x;
      const double dy = ((a / n) - (b / n)) * step / p.l_y;
      const double expected = p.sigma2 * std::exp(-std::sqrt(dx * dx + dy * dy));
      CHECK(cov(a, b) == doctest::Approx(expected).epsilon(1e-14));
    }
  }
  // Diagonal is the variance itself.
  CHECK(cov(7, 7) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("isotropic correlation lengths give a rotation-invariant covariance") {
  KleParams p;
  p.l_x = p.l_y = 0.3;
  p.aux_grid = 8;
  Eigen::MatrixXd cov = kle_covariance_matrix(p);
  const int n = p.aux_grid;
  auto rot = [n](int idx) {
    const int i = idx % n, j = idx / n;
    return i * n + (n - 1 - j);  // 90-degree grid rotation
  };
  for (int a = 0; a < n * n; a += 7)
    for (int b = 0; b < n * n; b += 5)
      CHECK(cov(a, b) == doctest::Approx(cov(rot(a), rot(b))).epsilon(1e-13));
}

TEST_CASE("KLE eigendecomposition: ordering, orthonormality, residuals") {
  KleParams p;
  p.aux_grid = 16;
  KleDecomposition d = kle_eigendecomposition(p);
  const int N = p.aux_grid * p.aux_grid;
  REQUIRE(d.eigenvalues.size() == N);

  for (int k = 1; k < N; ++k) CHECK(d.eigenvalues[k] <= d.eigenvalues[k - 1]);
  CHECK(d.eigenvalues.minCoeff() >= 0.0);
  CHECK(d.retained >= 1);
  CHECK(d.retained <= N);
  const double partial = d.eigenvalues.head(d.retained).sum();
  CHECK(partial >= p.energy_fraction * d.eigenvalues.sum());
  // Minimality of L.
  if (d.retained > 1)
    CHECK(d.eigenvalues.head(d.retained - 1).sum() < p.energy_fraction * d.eigenvalues.sum());

  const double step = 1.0 / p.aux_grid;
  // Discrete L2 orthonormality.
  for (int j = 0; j < 8; ++j)
    for (int k = 0; k < 8; ++k) {
      const double ip = step * step * d.eigenfunctions.col(j).dot(d.eigenfunctions.col(k));
      CHECK(std::abs(ip - (j == k ? 1.0 : 0.0)) <= 1e-8);
    }

  // Fredholm residual against the dense kernel: step^2 C phi = lambda phi.
  Eigen::MatrixXd cov = kle_covariance_matrix(p);
  for (int k = 0; k < 6; ++k) {
    Eigen::VectorXd lhs = step * step * (cov * d.eigenfunctions.col(k));
    Eigen::VectorXd rhs = d.eigenvalues[k] * d.eigenfunctions.col(k);
    CHECK((lhs - rhs).norm() <= 1e-9 * d.eigenvalues[0] * d.eigenfunctions.col(k).norm());
  }
}

TEST_CASE("sampled fields hit the contrast range exactly and reproduce by seed") {
  KleParams p;
  p.aux_grid = 16;
  KleDecomposition d = kle_eigendecomposition(p);
  GridPair g = build_grid(5, 51);

  CoefficientField f1 = sample_kle_field(d, 1234, g);
  CoefficientField f2 = sample_kle_field(d, 1234, g);
  CHECK((f1.values - f2.values).cwiseAbs().maxCoeff() == 0.0);

  CHECK(f1.contrast_lo == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f1.contrast_hi == doctest::Approx(9600.0).epsilon(1e-12));
  CHECK(f1.values.minCoeff() >= 1.0 - 1e-12);

  CoefficientField f3 = sample_kle_field(d, 999, g);
  CHECK((f1.values - f3.values).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("log kappa is affine in the normalized field") {
  KleParams p;
  p.aux_grid = 16;
  p.contrast_target = 100.0;
  KleDecomposition d = kle_eigendecomposition(p);
  GridPair g = build_grid(2, 21);
  CoefficientField f = sample_kle_field(d, 7, g);
  // log kappa spans [0, ln(contrast)] and stays inside it.
  Eigen::ArrayXd lk = f.values.array().log();
  CHECK(lk.minCoeff() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(lk.maxCoeff() == doctest::Approx(std::log(100.0)).epsilon(1e-12));
}

TEST_CASE("zero expansion coefficients raise the degenerate-field error") {
  KleParams p;
  p.aux_grid = 8;
  KleDecomposition d = kle_eigendecomposition(p);
  GridPair g = build_grid(2, 9);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d.retained);
  CHECK_THROWS_AS(kle_realize_field(d, theta, g), std::runtime_error);
}

TEST_CASE("unit forcing is identically one") {
  GridPair g = build_grid(5, 51);
  ForcingField f = sample_forcing(ForcingKind::Unit, 0, g);
  CHECK(f.values.minCoeff() == 1.0);
  CHECK(f.values.maxCoeff() == 1.0);
}

TEST_CASE("spectral forcing is deterministic and smooths as beta grows") {
  GridPair g = build_grid(5, 101);
  ForcingParams fp;  // gamma 2000, alpha 1, beta 0.5 defaults
  CHECK(fp.gamma == 2000.0);
  CHECK(fp.alpha == 1.0);
  CHECK(fp.beta == 0.5);

  ForcingField a = sample_forcing(ForcingKind::SpectralGaussian, 5, g, fp);
  ForcingField b = sample_forcing(ForcingKind::SpectralGaussian, 5, g, fp);
  CHECK((a.values - b.values).cwiseAbs().maxCoeff() == 0.0);

  // H1 seminorm (unit-coefficient stiffness energy) decreases with beta.
  auto roughness = [&](double beta) {
    ForcingParams q = fp;
    q.beta = beta;
    ForcingField f = sample_forcing(ForcingKind::SpectralGaussian, 5, g, q);
    SparseSymmetricMatrix K =
        assemble_stiffness(g, Eigen::VectorXd::Ones(g.fine_node_count()), whole_domain(g));
    const double energy = f.values.dot(K.apply(f.values));
    const double scale = f.values.squaredNorm();
    return energy / scale;
  };
  const double r_half = roughness(0.5), r_two = roughness(2.0), r_eight = roughness(8.0);
  CHECK(r_two < r_half);
  CHECK(r_eight < r_two);
}

TEST_CASE("invalid beta is rejected") {
  GridPair g = build_grid(2, 9);
  ForcingParams fp;
  fp.beta = 0.0;
  CHECK_THROWS_AS(sample_forcing(ForcingKind::SpectralGaussian, 1, g, fp), std::invalid_argument);
}
