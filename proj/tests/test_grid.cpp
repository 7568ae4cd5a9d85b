#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "msno/grid.hpp"
#include "msno/rng.hpp"

using namespace msno;

namespace {

std::map<DomainKind, int> kind_counts(const std::vector<LocalDomain>& domains) {
  std::map<DomainKind, int> counts;
  for (const auto& d : domains) counts[d.kind]++;
  return counts;
}

}  // namespace

TEST_CASE("build_grid accepts nested grids and reports domain counts") {
  GridPair g = build_grid(5, 101);
  CHECK(g.local_domain_count() == 36);
  CHECK(g.m == 20);
  CHECK(g.H == doctest::Approx(0.2));
  CHECK(g.h == doctest::Approx(0.01));

  CHECK(build_grid(10, 251).local_domain_count() == 121);

  GridPair tiny = build_grid(2, 5);
  CHECK(tiny.local_domain_count() == 9);
  auto counts = kind_counts(enumerate_local_domains(tiny));
  CHECK(counts[DomainKind::Full] == 1);
  CHECK(counts[DomainKind::Half] == 4);
  CHECK(counts[DomainKind::Corner] == 4);
}

TEST_CASE("build_grid rejects non-nested refinements") {
  CHECK_THROWS_AS(build_grid(5, 100), std::invalid_argument);
  CHECK_THROWS_AS(build_grid(7, 101), std::invalid_argument);
  CHECK_THROWS_AS(build_grid(1, 11), std::invalid_argument);
}

TEST_CASE("domain kind counts match the closed forms for n_coarse = 2..12") {
  for (int nc = 2; nc <= 12; ++nc) {
    GridPair g = build_grid(nc, 2 * nc + 1);
    auto domains = enumerate_local_domains(g);
    REQUIRE(static_cast<int>(domains.size()) == (nc + 1) * (nc + 1));
    auto counts = kind_counts(domains);
    CHECK(counts[DomainKind::Full] == (nc - 1) * (nc - 1));
    CHECK(counts[DomainKind::Half] == 4 * (nc - 1));
    CHECK(counts[DomainKind::Corner] == 4);
  }
}

TEST_CASE("paper grid sizes: 5x5 and 10x10 type distributions") {
  auto c5 = kind_counts(enumerate_local_domains(build_grid(5, 101)));
  CHECK(c5[DomainKind::Full] == 16);
  CHECK(c5[DomainKind::Half] == 16);
  CHECK(c5[DomainKind::Corner] == 4);

  auto c10 = kind_counts(enumerate_local_domains(build_grid(10, 251)));
  CHECK(c10[DomainKind::Full] == 81);
  CHECK(c10[DomainKind::Half] == 36);
  CHECK(c10[DomainKind::Corner] == 4);
}

TEST_CASE("each coarse cell belongs to exactly four local domains") {
  GridPair g = build_grid(4, 13);
  std::map<std::pair<int, int>, int> cell_refs;
  for (const auto& d : enumerate_local_domains(g))
    for (auto cell : d.cells) cell_refs[cell]++;
  CHECK(static_cast<int>(cell_refs.size()) == g.n_coarse * g.n_coarse);
  for (const auto& [cell, refs] : cell_refs) CHECK(refs == 4);
}

TEST_CASE("full patch spans 2m+1 fine nodes per dimension") {
  GridPair g = build_grid(5, 101);
  for (const auto& d : enumerate_local_domains(g))
    if (d.kind == DomainKind::Full) {
      CHECK(d.patch.nx == 41);
      CHECK(d.patch.ny == 41);
    }
}

TEST_CASE("partition of unity: hat values and global sum") {
  GridPair g = build_grid(3, 13);
  auto domains = enumerate_local_domains(g);

  Eigen::VectorXd total = Eigen::VectorXd::Zero(g.fine_node_count());
  for (const auto& d : domains) {
    PartitionFunction chi = partition_of_unity(g, d);
    // Value 1 exactly at the coarse node.
    const int lx = d.cx * g.m - d.patch.x0;
    const int ly = d.cy * g.m - d.patch.y0;
    CHECK(chi.values[ly * d.patch.nx + lx] == 1.0);
    CHECK(chi.values.minCoeff() >= 0.0);
    CHECK(chi.values.maxCoeff() <= 1.0);
    for (int py = 0; py < d.patch.ny; ++py)
      for (int px = 0; px < d.patch.nx; ++px)
        total[g.node(d.patch.x0 + px, d.patch.y0 + py)] += chi.values[py * d.patch.nx + px];
  }
  for (int i = 0; i < g.fine_node_count(); ++i) CHECK(total[i] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("full-domain hat: 1 at center, 0.5 at coarse edge midpoint") {
  GridPair g = build_grid(5, 101);
  auto domains = enumerate_local_domains(g);
  const LocalDomain* full = nullptr;
  for (const auto& d : domains)
    if (d.kind == DomainKind::Full) { full = &d; break; }
  REQUIRE(full != nullptr);
  PartitionFunction chi = partition_of_unity(g, *full);
  const int cx = full->patch.nx / 2, cy = full->patch.ny / 2;
  CHECK(chi.values[cy * full->patch.nx + cx] == 1.0);
  // Midpoint of a coarse edge emanating from the node: half a coarse cell away.
  CHECK(chi.values[cy * full->patch.nx + cx + g.m / 2] == doctest::Approx(0.5));
}

TEST_CASE("rotation is a permutation and four rotations are the identity") {
  CounterRng rng(7, 0);
  const int nx = 5, ny = 3;
  Eigen::VectorXd f(nx * ny);
  for (int i = 0; i < f.size(); ++i) f[i] = rng.normal(i);
  Eigen::VectorXd r = rotate_patch_field(f, nx, ny, 1);
  auto [rx, ry] = rotated_shape(nx, ny, 1);
  CHECK(rx == ny);
  CHECK(ry == nx);
  Eigen::VectorXd back = rotate_patch_field(r, rx, ry, 3);
  CHECK((back - f).cwiseAbs().maxCoeff() == 0.0);
  CHECK((rotate_patch_field(f, nx, ny, 4) - f).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("canonicalize moves the coarse node to the canonical pose") {
  GridPair g = build_grid(4, 17);
  for (const auto& d : enumerate_local_domains(g)) {
    Eigen::VectorXd marker = Eigen::VectorXd::Zero(d.patch.node_count());
    const int lx = d.cx * g.m - d.patch.x0;
    const int ly = d.cy * g.m - d.patch.y0;
    marker[ly * d.patch.nx + lx] = 1.0;
    auto [canon, code] = canonicalize(marker, d);
    auto [cnx, cny] = rotated_shape(d.patch.nx, d.patch.ny, code);
    int mx = -1, my = -1;
    for (int y = 0; y < cny; ++y)
      for (int x = 0; x < cnx; ++x)
        if (canon[y * cnx + x] == 1.0) { mx = x; my = y; }
    switch (d.kind) {
      case DomainKind::Full:
        CHECK(code == 0);
        CHECK(mx == cnx / 2);
        CHECK(my == cny / 2);
        break;
      case DomainKind::Half:  // top edge midpoint
        CHECK(mx == cnx / 2);
        CHECK(my == cny - 1);
        break;
      case DomainKind::Corner:  // top-left
        CHECK(mx == 0);
        CHECK(my == cny - 1);
        break;
    }
  }
}

TEST_CASE("corner domain at the bottom-right pose canonicalizes with code 2") {
  GridPair g = build_grid(3, 10);
  auto domains = enumerate_local_domains(g);
  const LocalDomain& br = domains[g.n_coarse];  // node (n_coarse, 0)
  REQUIRE(br.kind == DomainKind::Corner);
  CHECK(br.orientation == 2);
}

TEST_CASE("canonicalize then decanonicalize restores fields exactly") {
  GridPair g = build_grid(3, 13);
  CounterRng rng(42, 1);
  uint64_t k = 0;
  for (const auto& d : enumerate_local_domains(g)) {
    Eigen::VectorXd f(d.patch.node_count());
    for (int i = 0; i < f.size(); ++i) f[i] = rng.normal(k++);
    auto [canon, code] = canonicalize(f, d);
    Eigen::VectorXd back = decanonicalize(canon, d, code);
    CHECK((back - f).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("canonicalize rejects shape mismatches") {
  GridPair g = build_grid(3, 13);
  auto domains = enumerate_local_domains(g);
  Eigen::VectorXd wrong = Eigen::VectorXd::Zero(domains[0].patch.node_count() + 1);
  CHECK_THROWS_AS(canonicalize(wrong, domains[0]), std::invalid_argument);
}
