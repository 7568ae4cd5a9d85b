#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <vector>

#include "msno/fem.hpp"
#include "msno/grid.hpp"

namespace msno {

struct LocalEigenpairs {
  Eigen::VectorXd eigenvalues;   // ascending
  Eigen::MatrixXd eigenvectors;  // S-orthonormal columns, deterministic signs
  double max_rel_residual = 0.0;
  bool used_dense_fallback = false;
};

struct EigenSolveOptions {
  double residual_tol = 1e-8;
  bool force_dense = false;
  int max_lanczos = 0;  // 0: pick from n_requested
};

// kappa-weighted Neumann (stiffness) and Mass matrices on the domain patch.
std::pair<SparseSymmetricMatrix, SparseSymmetricMatrix> assemble_local_matrices(
    const GridPair& grid, const Eigen::VectorXd& kappa, const LocalDomain& domain);

// Reference path: dense Cholesky reduction S = L L^T, symmetric eigensolve of
// L^-1 A L^-T, back-transform.
LocalEigenpairs solve_local_eigenproblem_dense(const SparseSymmetricMatrix& A,
                                               const SparseSymmetricMatrix& S, int n_requested);

// Production path: shift-invert Lanczos with full reorthogonalization in the
// S-inner product, Rayleigh-Ritz refinement, and residual verification.
// Falls back to the dense path when verification fails.
LocalEigenpairs solve_local_eigenproblem(const SparseSymmetricMatrix& A,
                                         const SparseSymmetricMatrix& S, int n_requested,
                                         const EigenSolveOptions& opts = {});

// Flips the vector so its largest-magnitude entry (lowest index on exact
// ties) is positive.
void fix_sign(Eigen::Ref<Eigen::VectorXd> v);

// MsFEM hat: on each coarse cell of omega_i, the kappa-harmonic extension of
// the bilinear hat's edge trace. Sums to 1 exactly like the bilinear hats and
// adapts the basis support to the contrast. Computed for all domains at once
// so each cell is factorized once.
std::vector<PartitionFunction> harmonic_partition_of_unity_all(
    const GridPair& grid, const Eigen::VectorXd& kappa,
    const std::vector<LocalDomain>& domains);

PartitionFunction harmonic_partition_of_unity(const GridPair& grid,
                                              const Eigen::VectorXd& kappa,
                                              const LocalDomain& domain);

// Nodal spectral-mass weight kappa * sum_i |grad chi_i|^2: per-triangle P1
// gradients of the hats, averaged to nodes.
Eigen::VectorXd pou_gradient_weight(const GridPair& grid, const Eigen::VectorXd& kappa,
                                    const std::vector<LocalDomain>& domains,
                                    const std::vector<PartitionFunction>& chis);

struct BasisSet {
  int domain_index = 0;
  PatchBox patch;
  Eigen::MatrixXd psi;  // column j is the j-th multiscale basis vector
};

// psi_j = chi ⊙ phi_j for the N_bf smallest eigenvalues; entries at global
// boundary nodes are zeroed.
BasisSet build_multiscale_basis(const LocalEigenpairs& pairs, const PartitionFunction& chi,
                                int n_bf, const GridPair& grid, const LocalDomain& domain);

struct RestrictionMatrix {
  Eigen::SparseMatrix<double, Eigen::RowMajor> mat;  // (N_v * N_bf) x interior dofs
  int n_bf = 0;
};

RestrictionMatrix assemble_restriction(const std::vector<BasisSet>& bases, const GridPair& grid);

enum class PouKind { KappaHarmonic, Bilinear };
enum class SpectralWeight { PouGradient, KappaMass };

struct OfflineOptions {
  int n_bf = 8;
  int n_extra = 4;  // extra eigenpairs for spectral-gap diagnostics
  PouKind pou = PouKind::KappaHarmonic;
  SpectralWeight weight = SpectralWeight::PouGradient;
  EigenSolveOptions eigen;
};

struct OfflineResult {
  std::vector<BasisSet> bases;
  std::vector<LocalEigenpairs> eigenpairs;  // per domain, N_bf + n_extra pairs
  double wall_seconds = 0.0;
};

// Offline stage over all local domains (data-parallel), deterministic output
// order by domain index.
OfflineResult build_basis_sets(const GridPair& grid, const std::vector<LocalDomain>& domains,
                               const Eigen::VectorXd& kappa, const OfflineOptions& opts = {});

}  // namespace msno
