#pragma once

#include <Eigen/Core>
#include <cstdint>

#include "msno/grid.hpp"

namespace msno {

struct CoefficientField {
  Eigen::VectorXd values;  // fine-nodal permeability
  double contrast_lo = 0.0;
  double contrast_hi = 0.0;
};

struct KleParams {
  double l_x = 0.02;
  double l_y = 0.6;
  double sigma2 = 2.0;
  double energy_fraction = 0.95;
  int aux_grid = 10;  // auxiliary eigensolve resolution per dimension
  double contrast_target = 9600.0;
};

struct KleDecomposition {
  Eigen::VectorXd eigenvalues;   // descending, all retained modes
  Eigen::MatrixXd eigenfunctions;  // column k on the aux grid, L2-orthonormal
  int retained = 0;              // minimal L reaching the energy fraction
  int aux_grid = 0;
  KleParams params;
};

// Exponential covariance sampled at aux-grid cell centers.
Eigen::MatrixXd kle_covariance_matrix(const KleParams& params);

KleDecomposition kle_eigendecomposition(const KleParams& params);

// Realize the field from given expansion coefficients (theta). Interpolates
// the truncated expansion to the fine grid, min-max normalizes and maps
// through exp(a * Y_norm) with a = ln(contrast_target).
CoefficientField kle_realize_field(const KleDecomposition& decomp, const Eigen::VectorXd& theta,
                                   const GridPair& grid);

// Draw theta ~ N(0, I) from the counter generator keyed by seed; the same
// seed reproduces the field bit-for-bit.
CoefficientField sample_kle_field(const KleDecomposition& decomp, uint64_t seed,
                                  const GridPair& grid);

enum class ForcingKind { Unit, SpectralGaussian };

struct ForcingParams {
  double gamma = 2000.0;
  double alpha = 1.0;
  double beta = 0.5;
};

struct ForcingField {
  Eigen::VectorXd values;
  ForcingKind kind = ForcingKind::Unit;
};

// Unit: f = 1. SpectralGaussian: periodic white noise filtered by
// alpha * (1 + 4 pi^2 |k|^2)^(-beta) in Fourier space, scaled by gamma.
ForcingField sample_forcing(ForcingKind kind, uint64_t seed, const GridPair& grid,
                            const ForcingParams& params = {});

}  // namespace msno
