#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "msno/fem.hpp"
#include "msno/field.hpp"
#include "msno/grid.hpp"
#include "msno/rng.hpp"

using namespace msno;

namespace {

// Independent assembly oracle: per-element numerical quadrature with the
// three edge-midpoint points (exact for quadratic integrands), accumulated
// into a dense matrix. Mirrors only the contract, not the implementation.
Eigen::MatrixXd oracle_assemble(const GridPair& g, const Eigen::VectorXd& kappa,
                                const PatchBox& box, bool stiffness) {
  const int n = box.node_count();
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  const double h = g.h;
  for (int cj = 0; cj + 1 < box.ny; ++cj) {
    for (int ci = 0; ci + 1 < box.nx; ++ci) {
      auto loc = [&](int dx, int dy) { return (cj + dy) * box.nx + (ci + dx); };
      auto glob = [&](int dx, int dy) { return g.node(box.x0 + ci + dx, box.y0 + cj + dy); };
      const double x0 = (box.x0 + ci) * h, y0 = (box.y0 + cj) * h;
      const int tris[2][3][2] = {{{0, 0}, {1, 0}, {1, 1}}, {{0, 0}, {1, 1}, {0, 1}}};
      for (auto& tri : tris) {
        double xs[3], ys[3];
        int ids[3];
        double kbar = 0.0;
        for (int a = 0; a < 3; ++a) {
          xs[a] = x0 + tri[a][0] * h;
          ys[a] = y0 + tri[a][1] * h;
          ids[a] = loc(tri[a][0], tri[a][1]);
          kbar += kappa[glob(tri[a][0], tri[a][1])] / 3.0;
        }
        const double two_area = (xs[1] - xs[0]) * (ys[2] - ys[0]) - (xs[2] - xs[0]) * (ys[1] - ys[0]);
        const double area = 0.5 * std::abs(two_area);
        // Barycentric gradients.
        double bg[3][2];
        for (int a = 0; a < 3; ++a) {
          const int a1 = (a + 1) % 3, a2 = (a + 2) % 3;
          bg[a][0] = (ys[a1] - ys[a2]) / two_area;
          bg[a][1] = (xs[a2] - xs[a1]) / two_area;
        }
        // Edge-midpoint quadrature, weights area/3, barycentric coords of the
        // quadrature points.
        const double qp[3][3] = {{0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}, {0.5, 0.0, 0.5}};
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) {
            double val = 0.0;
            if (stiffness) {
              val = kbar * area * (bg[a][0] * bg[b][0] + bg[a][1] * bg[b][1]);
            } else {
              for (auto& q : qp) val += kbar * (area / 3.0) * q[a] * q[b];
            }
            M(ids[a], ids[b]) += val;
          }
      }
    }
  }
  return M;
}

Eigen::VectorXd random_kappa(const GridPair& g, uint64_t seed, double hi = 100.0) {
  CounterRng rng(seed, 3);
  Eigen::VectorXd k(g.fine_node_count());
  for (int i = 0; i < k.size(); ++i) k[i] = 1.0 + (hi - 1.0) * rng.uniform(i);
  return k;
}

}  // namespace

TEST_CASE("assembly matches the per-element quadrature oracle on random patches") {
  GridPair g = build_grid(2, 9);
  Eigen::VectorXd kappa = random_kappa(g, 11);
  PatchBox box{2, 1, 5, 5};  // 4x4 cells
  for (bool stiff : {true, false}) {
    SparseSymmetricMatrix M = stiff ? assemble_stiffness(g, kappa, box)
                                    : assemble_mass_weighted(g, kappa, box);
    Eigen::MatrixXd dense = Eigen::MatrixXd(M.expanded());
    Eigen::MatrixXd expected = oracle_assemble(g, kappa, box, stiff);
    CHECK((dense - expected).cwiseAbs().maxCoeff() <= 1e-12 * expected.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("2x2-cell unit-coefficient patch matches the oracle 9x9 stiffness") {
  GridPair g = build_grid(2, 5);
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(g.fine_node_count());
  PatchBox box{0, 0, 3, 3};
  Eigen::MatrixXd A = Eigen::MatrixXd(assemble_stiffness(g, ones, box).expanded());
  Eigen::MatrixXd expected = oracle_assemble(g, ones, box, true);
  CHECK(A.rows() == 9);
  CHECK((A - expected).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("Neumann stiffness annihilates constants and scales linearly in kappa") {
  GridPair g = build_grid(3, 13);
  Eigen::VectorXd kappa = random_kappa(g, 5);
  SparseSymmetricMatrix A = assemble_stiffness(g, kappa, whole_domain(g));
  Eigen::VectorXd row_sums = A.apply(Eigen::VectorXd::Ones(g.fine_node_count()));
  CHECK(row_sums.cwiseAbs().maxCoeff() <= 1e-10 * kappa.maxCoeff());

  SparseSymmetricMatrix A2 = assemble_stiffness(g, 2.0 * kappa, whole_domain(g));
  Eigen::MatrixXd d1 = Eigen::MatrixXd(A.expanded());
  Eigen::MatrixXd d2 = Eigen::MatrixXd(A2.expanded());
  CHECK((d2 - 2.0 * d1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mass matrix integrates 1 to the region area") {
  GridPair g = build_grid(5, 26);
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(g.fine_node_count());
  SparseSymmetricMatrix S = assemble_mass_weighted(g, ones, whole_domain(g));
  Eigen::VectorXd e = Eigen::VectorXd::Ones(g.fine_node_count());
  CHECK(e.dot(S.apply(e)) == doctest::Approx(1.0).epsilon(1e-12));

  PatchBox box{0, 0, 6, 11};
  SparseSymmetricMatrix Sp = assemble_mass_weighted(g, ones, box);
  Eigen::VectorXd ep = Eigen::VectorXd::Ones(box.node_count());
  CHECK(ep.dot(Sp.apply(ep)) == doctest::Approx(5 * g.h * 10 * g.h).epsilon(1e-12));
}

TEST_CASE("single-cell mass assembles the two standard P1 element matrices") {
  GridPair g = build_grid(2, 5);
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(g.fine_node_count());
  PatchBox box{0, 0, 2, 2};
  Eigen::MatrixXd S = Eigen::MatrixXd(assemble_mass_weighted(g, ones, box).expanded());

  const double area = 0.5 * g.h * g.h;
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(4, 4);
  const int t1[3] = {0, 1, 3}, t2[3] = {0, 3, 2};  // local node ids (y*2+x)
  for (auto& tri : {t1, t2})
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) expected(tri[a], tri[b]) += area / 12.0 * (a == b ? 2.0 : 1.0);
  CHECK((S - expected).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("nonpositive kappa is rejected") {
  GridPair g = build_grid(2, 5);
  Eigen::VectorXd kappa = Eigen::VectorXd::Ones(g.fine_node_count());
  kappa[7] = 0.0;
  CHECK_THROWS_AS(assemble_stiffness(g, kappa, whole_domain(g)), std::invalid_argument);
}

TEST_CASE("parallel and serial assembly agree bitwise") {
  GridPair g = build_grid(5, 51);
  Eigen::VectorXd kappa = random_kappa(g, 21, 9600.0);
  Eigen::MatrixXd a = Eigen::MatrixXd(assemble_stiffness(g, kappa, whole_domain(g)).expanded());
  Eigen::MatrixXd b =
      Eigen::MatrixXd(assemble_stiffness_serial(g, kappa, whole_domain(g)).expanded());
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero forcing yields the zero solution") {
  GridPair g = build_grid(2, 9);
  Eigen::VectorXd kappa = random_kappa(g, 2);
  FineSolution u = solve_fine_diffusion(g, kappa, Eigen::VectorXd::Zero(g.fine_node_count()));
  CHECK(u.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("manufactured solution converges at second order in L2") {
  auto solve_err = [](int n_fine) {
    GridPair g = build_grid(2, n_fine);
    Eigen::VectorXd kappa = Eigen::VectorXd::Ones(g.fine_node_count());
    Eigen::VectorXd f(g.fine_node_count()), exact(g.fine_node_count());
    const double pi = M_PI;
    for (int y = 0; y < g.n_fine; ++y)
      for (int x = 0; x < g.n_fine; ++x) {
        const double sx = std::sin(pi * g.coord(x)), sy = std::sin(pi * g.coord(y));
        f[g.node(x, y)] = 2 * pi * pi * sx * sy;
        exact[g.node(x, y)] = sx * sy;
      }
    FineSolution u = solve_fine_diffusion(g, kappa, f);
    CHECK(u.diagnostics.residual <= 1e-10);
    FineSolution ref;
    ref.values = exact;
    return relative_errors(ref, u, g).first;
  };
  const double e_coarse = solve_err(33);
  const double e_fine = solve_err(65);
  const double rate = std::log2(e_coarse / e_fine);
  CHECK(rate >= 1.8);
  CHECK(rate <= 2.2);
}

TEST_CASE("diffusion solve is inverse-linear in a scaled coefficient") {
  GridPair g = build_grid(2, 9);
  Eigen::VectorXd kappa = random_kappa(g, 8);
  Eigen::VectorXd f = Eigen::VectorXd::Ones(g.fine_node_count());
  FineSolution u1 = solve_fine_diffusion(g, kappa, f);
  FineSolution u3 = solve_fine_diffusion(g, 3.0 * kappa, f);
  CHECK((3.0 * u3.values - u1.values).cwiseAbs().maxCoeff() <=
        1e-12 * u1.values.cwiseAbs().maxCoeff());
}

TEST_CASE("Richards fixed point at zero forcing converges immediately") {
  GridPair g = build_grid(2, 9);
  Eigen::VectorXd kappa = random_kappa(g, 3);
  FineSolution u = solve_fine_richards(g, kappa, Eigen::VectorXd::Zero(g.fine_node_count()));
  CHECK(u.values.cwiseAbs().maxCoeff() == 0.0);
  CHECK(u.diagnostics.picard_iterations == 1);
  CHECK(u.diagnostics.converged);
}

TEST_CASE("Richards with unit forcing dominates the linear solution") {
  // Haverkamp conductivity is weaker (K_r <= 1), so the pressure is larger
  // than the linear-diffusion solution with the same kappa.
  GridPair g = build_grid(3, 25);
  Eigen::VectorXd f = Eigen::VectorXd::Ones(g.fine_node_count());
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Eigen::VectorXd kappa = random_kappa(g, 100 + seed, 50.0);
    FineSolution lin = solve_fine_diffusion(g, kappa, f);
    FineSolution rich = solve_fine_richards(g, kappa, f);
    CHECK(rich.diagnostics.converged);
    CHECK((rich.values - lin.values).minCoeff() >= -1e-9);
    CHECK(rich.values.minCoeff() >= -1e-12);  // discrete maximum principle
  }
}

TEST_CASE("Richards Picard updates decrease after the second iteration") {
  GridPair g = build_grid(3, 25);
  ForcingParams fp;
  for (uint64_t seed = 3; seed < 6; ++seed) {
    Eigen::VectorXd kappa = random_kappa(g, seed, 9600.0);
    ForcingField f = sample_forcing(ForcingKind::SpectralGaussian, seed, g, fp);
    FineSolution u = solve_fine_richards(g, kappa, f.values);
    const auto& hist = u.diagnostics.update_history;
    REQUIRE(hist.size() >= 3);
    int violations = 0;
    for (size_t i = 2; i + 1 < hist.size(); ++i)
      if (hist[i + 1] > hist[i]) ++violations;
    CHECK(violations == 0);
  }
}

TEST_CASE("relative error metric identities") {
  GridPair g = build_grid(2, 9);
  Eigen::VectorXd kappa = random_kappa(g, 1);
  Eigen::VectorXd f = Eigen::VectorXd::Ones(g.fine_node_count());
  FineSolution u = solve_fine_diffusion(g, kappa, f);

  auto [l2_same, h1_same] = relative_errors(u, u, g);
  CHECK(l2_same == 0.0);
  CHECK(h1_same == 0.0);

  FineSolution zero;
  zero.values = Eigen::VectorXd::Zero(g.fine_node_count());
  auto [l2_zero, h1_zero] = relative_errors(u, zero, g);
  CHECK(l2_zero == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(h1_zero == doctest::Approx(1.0).epsilon(1e-14));

  FineSolution scaled;
  scaled.values = u.values * (1.0 + 1e-3);
  auto [l2_sc, h1_sc] = relative_errors(u, scaled, g);
  CHECK(l2_sc == doctest::Approx(1e-3).epsilon(1e-10));
  CHECK(h1_sc == doctest::Approx(1e-3).epsilon(1e-10));

  CHECK_THROWS_AS(relative_errors(zero, u, g), std::domain_error);
}
