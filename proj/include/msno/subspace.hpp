#pragma once

#include <Eigen/Core>
#include <cstdint>

namespace msno {

struct OrthonormalBasis {
  Eigen::MatrixXd Q;  // orthonormal columns
  int rank = 0;       // effective numerical rank of the input
  bool rank_deficient = false;
};

// Thin QR of the column-stacked basis. Deficient columns (R diagonal below
// 1e-10 of the largest) keep the QR completion direction and are flagged.
OrthonormalBasis orthonormalize(const Eigen::MatrixXd& basis_columns);

// N_bf - ||Q_t^T Q_p||_F^2, clamped at zero.
double sal_loss(const OrthonormalBasis& target, const OrthonormalBasis& predicted);

// SAL plus lambda * mean_k ||(P_t - P_p) v_k||^2 with v_k = sum_j c_j psi_j,
// c ~ N(0, I) drawn from the counter generator keyed by seed.
double sal_pr_loss(const OrthonormalBasis& target, const OrthonormalBasis& predicted,
                   const Eigen::MatrixXd& target_psi, double lambda, int n_vectors,
                   uint64_t seed);

// Sign-invariant relative L2 loss, averaged over basis vectors.
double rbfl2_loss(const Eigen::MatrixXd& target_psi, const Eigen::MatrixXd& predicted_psi);

// sqrt(k - ||Q_t^T Q_p||_F^2); cross-checked against the projector form
// (1/sqrt(2)) ||P_t - P_p||_F to 1e-8.
double grassmann_distance(const OrthonormalBasis& target, const OrthonormalBasis& predicted);

}  // namespace msno
