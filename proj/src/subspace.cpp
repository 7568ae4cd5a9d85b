#include "msno/subspace.hpp"

#include <Eigen/QR>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "msno/rng.hpp"

namespace msno {

OrthonormalBasis orthonormalize(const Eigen::MatrixXd& basis_columns) {
  const int n = static_cast<int>(basis_columns.rows());
  const int k = static_cast<int>(basis_columns.cols());
  if (k == 0 || n < k) throw std::invalid_argument("orthonormalize: need n >= k >= 1");
  if (basis_columns.norm() == 0.0)
    throw std::invalid_argument("orthonormalize: all-zero basis");

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis_columns);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
  Eigen::VectorXd rdiag =
      qr.matrixQR().topLeftCorner(k, k).diagonal();
  // Fix column signs so the R diagonal is nonnegative.
  for (int j = 0; j < k; ++j)
    if (rdiag[j] < 0) {
      Q.col(j) = -Q.col(j);
      rdiag[j] = -rdiag[j];
    }
  const double rmax = rdiag.maxCoeff();
  OrthonormalBasis out;
  out.Q = std::move(Q);
  for (int j = 0; j < k; ++j)
    if (rdiag[j] > 1e-10 * rmax) ++out.rank;
  out.rank_deficient = out.rank < k;
  return out;
}

namespace {

void check_shapes(const OrthonormalBasis& a, const OrthonormalBasis& b) {
  if (a.Q.rows() != b.Q.rows() || a.Q.cols() != b.Q.cols())
    throw std::invalid_argument("subspace loss: dimension mismatch");
}

}  // namespace

double sal_loss(const OrthonormalBasis& target, const OrthonormalBasis& predicted) {
  check_shapes(target, predicted);
  const double overlap = (target.Q.transpose() * predicted.Q).squaredNorm();
  return std::max(0.0, static_cast<double>(target.Q.cols()) - overlap);
}

double sal_pr_loss(const OrthonormalBasis& target, const OrthonormalBasis& predicted,
                   const Eigen::MatrixXd& target_psi, double lambda, int n_vectors,
                   uint64_t seed) {
  check_shapes(target, predicted);
  if (n_vectors < 1) throw std::invalid_argument("sal_pr_loss: n_vectors must be >= 1");
  if (lambda < 0) throw std::invalid_argument("sal_pr_loss: lambda must be >= 0");
  if (target_psi.rows() != target.Q.rows())
    throw std::invalid_argument("sal_pr_loss: target basis shape mismatch");

  const int k = static_cast<int>(target_psi.cols());
  CounterRng rng(seed, /*stream=*/2);
  double penalty = 0.0;
  for (int t = 0; t < n_vectors; ++t) {
    Eigen::VectorXd c(k);
    for (int j = 0; j < k; ++j) c[j] = rng.normal(static_cast<uint64_t>(t) * k + j);
    const Eigen::VectorXd v = target_psi * c;
    const Eigen::VectorXd diff =
        target.Q * (target.Q.transpose() * v) - predicted.Q * (predicted.Q.transpose() * v);
    penalty += diff.squaredNorm();
  }
  return sal_loss(target, predicted) + lambda * penalty / n_vectors;
}

double rbfl2_loss(const Eigen::MatrixXd& target_psi, const Eigen::MatrixXd& predicted_psi) {
  if (target_psi.rows() != predicted_psi.rows() || target_psi.cols() != predicted_psi.cols())
    throw std::invalid_argument("rbfl2_loss: shape mismatch");
  const int k = static_cast<int>(target_psi.cols());
  double total = 0.0;
  for (int j = 0; j < k; ++j) {
    const double denom = target_psi.col(j).squaredNorm();
    if (denom == 0.0) throw std::invalid_argument("rbfl2_loss: zero target basis vector");
    const double minus = (target_psi.col(j) - predicted_psi.col(j)).squaredNorm();
    const double plus = (target_psi.col(j) + predicted_psi.col(j)).squaredNorm();
    total += std::min(minus, plus) / denom;
  }
  return total / k;
}

double grassmann_distance(const OrthonormalBasis& target, const OrthonormalBasis& predicted) {
  check_shapes(target, predicted);
  int k = static_cast<int>(target.Q.cols());
  const Eigen::MatrixXd* qt = &target.Q;
  const Eigen::MatrixXd* qp = &predicted.Q;
  Eigen::MatrixXd qt_eff, qp_eff;
  if (target.rank_deficient || predicted.rank_deficient) {
    k = std::min(target.rank, predicted.rank);
    if (k == 0) throw std::invalid_argument("grassmann_distance: zero-rank subspace");
    qt_eff = target.Q.leftCols(k);
    qp_eff = predicted.Q.leftCols(k);
    qt = &qt_eff;
    qp = &qp_eff;
  }
  // k - ||Qt^T Qp||_F^2 rewritten as ||(I - Pt) Qp||_F^2: same value, no
  // cancellation near zero distance.
  const Eigen::MatrixXd resid = *qp - *qt * (qt->transpose() * *qp);
  const double d = resid.norm();

  // Independent route through the explicit projectors.
  const Eigen::MatrixXd pt = *qt * qt->transpose();
  const Eigen::MatrixXd pp = *qp * qp->transpose();
  const double d_proj = (pt - pp).norm() / std::sqrt(2.0);
  if (std::abs(d - d_proj) > 1e-8) {
    std::ostringstream msg;
    msg << "grassmann_distance: formula self-check failed (" << d << " vs " << d_proj << ")";
    throw std::runtime_error(msg.str());
  }
  return d;
}

}  // namespace msno
