#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

namespace msno::ad {

// Precomputed truncated real-DFT factors for one patch shape. Column k of cx
// holds cos(2 pi k x / nx); the *w variants carry the inverse-transform
// weights (1/n for mode 0, 2/n otherwise; patch sizes are odd so there is no
// Nyquist mode).
struct SpectralPlan {
  int nx = 0, ny = 0, mx = 0, my = 0;
  Eigen::MatrixXd cx, sx, cxw, sxw;  // nx x mx
  Eigen::MatrixXd cy, sy, cyw, syw;  // ny x my
};

SpectralPlan make_spectral_plan(int nx, int ny, int modes_x, int modes_y);

struct Var {
  int id = -1;
};

// Reverse-mode tape over dense real matrices. One tape per forward pass;
// scalars are 1x1 matrices.
class Tape {
 public:
  Var input(Eigen::MatrixXd value, bool requires_grad);
  Var constant(Eigen::MatrixXd value) { return input(std::move(value), false); }
  Var scalar(double v);

  const Eigen::MatrixXd& value(Var v) const { return nodes_[v.id].value; }
  const Eigen::MatrixXd& grad(Var v) const;

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double s);
  Var hadamard(Var a, Var b);
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var add_colwise(Var a, Var bias);  // bias is H x 1, broadcast over columns
  Var gelu(Var a);
  Var sum_squares(Var a);          // 1x1
  Var min2(Var a, Var b);          // 1x1; exact ties take a
  Var column(Var a, int j);

  // Thin QR orthonormal factor with the positive-diagonal convention.
  // rank_tol flags near-dependent columns; *rank receives the effective rank.
  Var qr_q(Var a, int* rank = nullptr, double rank_tol = 1e-10);

  // Two-axis factorized spectral convolution: for each axis d, truncated
  // real DFT along d, per-mode channel mixing by complex weights, inverse
  // transform; returns the sum over axes. z is H x (nx*ny) with spatial
  // index y*nx + x. w*_re / w*_im are H x (H*modes), mode-k block at columns
  // [k*H, (k+1)*H).
  Var spectral_conv(Var z, Var wx_re, Var wx_im, Var wy_re, Var wy_im,
                    const SpectralPlan& plan);

  void backward(Var root);

 private:
  struct Node {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    bool requires_grad = false;
    bool grad_seen = false;
    std::function<void(Tape&)> backward_fn;
  };

  Var make(Eigen::MatrixXd value, bool requires_grad, std::function<void(Tape&)> fn);
  void accumulate(Var v, const Eigen::MatrixXd& g);

  std::vector<Node> nodes_;
  friend struct TapeAccess;
};

}  // namespace msno::ad
