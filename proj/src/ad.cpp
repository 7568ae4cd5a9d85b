#include "msno/ad.hpp"

#include <Eigen/QR>
#include <cmath>
#include <stdexcept>

namespace msno::ad {

SpectralPlan make_spectral_plan(int nx, int ny, int modes_x, int modes_y) {
  if (modes_x < 1 || modes_x > nx / 2 + 1 || modes_y < 1 || modes_y > ny / 2 + 1)
    throw std::invalid_argument("make_spectral_plan: modes exceed the real-FFT bound");
  SpectralPlan p;
  p.nx = nx;
  p.ny = ny;
  p.mx = modes_x;
  p.my = modes_y;
  auto fill = [](Eigen::MatrixXd& c, Eigen::MatrixXd& s, Eigen::MatrixXd& cw,
                 Eigen::MatrixXd& sw, int n, int m) {
    c.resize(n, m);
    s.resize(n, m);
    cw.resize(n, m);
    sw.resize(n, m);
    for (int k = 0; k < m; ++k) {
      const double w = (k == 0 ? 1.0 : 2.0) / n;
      for (int x = 0; x < n; ++x) {
        const double t = 2.0 * M_PI * k * x / n;
        c(x, k) = std::cos(t);
        s(x, k) = std::sin(t);
        cw(x, k) = w * c(x, k);
        sw(x, k) = w * s(x, k);
      }
    }
  };
  fill(p.cx, p.sx, p.cxw, p.sxw, nx, modes_x);
  fill(p.cy, p.sy, p.cyw, p.syw, ny, modes_y);
  return p;
}

Var Tape::make(Eigen::MatrixXd value, bool requires_grad, std::function<void(Tape&)> fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backward_fn = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Eigen::MatrixXd value, bool requires_grad) {
  return make(std::move(value), requires_grad, nullptr);
}

Var Tape::scalar(double v) {
  Eigen::MatrixXd m(1, 1);
  m(0, 0) = v;
  return input(std::move(m), false);
}

const Eigen::MatrixXd& Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (!n.grad_seen)
    throw std::logic_error("Tape::grad: no gradient recorded for this node");
  return n.grad;
}

void Tape::accumulate(Var v, const Eigen::MatrixXd& g) {
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return;
  if (!n.grad_seen) {
    n.grad = g;
    n.grad_seen = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var root) {
  Node& r = nodes_[root.id];
  if (r.value.size() != 1) throw std::invalid_argument("Tape::backward: root must be 1x1");
  if (!r.requires_grad)
    throw std::invalid_argument("Tape::backward: root does not depend on any parameter");
  r.grad = Eigen::MatrixXd::Ones(1, 1);
  r.grad_seen = true;
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad_seen && n.backward_fn) n.backward_fn(*this);
  }
}

namespace {

void check_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

Var Tape::add(Var a, Var b) {
  check_same_shape(value(a), value(b), "add");
  const bool rg = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  Var out = make(value(a) + value(b), rg, nullptr);
  if (rg)
    nodes_[out.id].backward_fn = [out, a, b](Tape& t) {
      t.accumulate(a, t.nodes_[out.id].grad);
      t.accumulate(b, t.nodes_[out.id].grad);
    };
  return out;
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(value(a), value(b), "sub");
  const bool rg = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  Var out = make(value(a) - value(b), rg, nullptr);
  if (rg)
    nodes_[out.id].backward_fn = [out, a, b](Tape& t) {
      t.accumulate(a, t.nodes_[out.id].grad);
      t.accumulate(b, -t.nodes_[out.id].grad);
    };
  return out;
}

Var Tape::scale(Var a, double s) {
  const bool rg = nodes_[a.id].requires_grad;
  Var out = make(s * value(a), rg, nullptr);
  if (rg)
    nodes_[out.id].backward_fn = [out, a, s](Tape& t) {
      t.accumulate(a, (s * t.nodes_[out.id].grad).eval());
    };
  return out;
}

Var Tape::hadamard(Var a, Var b) {
  check_same_shape(value(a), value(b), "hadamard");
  const bool rg = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  Var out = make(value(a).cwiseProduct(value(b)), rg, nullptr);
  if (rg)
    nodes_[out.id].backward_fn = [out, a, b](Tape& t) {
      const Eigen::MatrixXd& g = t.nodes_[out.id].grad;
      t.accumulate(a, g.cwiseProduct(t.value(b)));
      t.accumulate(b, g.cwiseProduct(t.value(a)));
    };
  return out;
}

Var Tape::matmul(Var a, Var b) {
  if (value(a).cols() != value(b).rows())
    throw std::invalid_argument("matmul: inner dimension mismatch");
  const bool rg = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  Var out = make(value(a) * value(b), rg, nullptr);
  if (rg)
    nodes_[out.id].backward_fn = [out, a, b](Tape& t) {
      const Eigen::MatrixXd& g = t.nodes_[out.id].grad;
      t.accumulate(a, g * t.value(b).transpose());
      t.accumulate(b, t.value(a).transpose() * g);
    };
  return out;
}

Var Tape::transpose(Var a) {
  const bool rg = nodes_[a.id].requires_grad;
  Var out = make(value(a).transpose(), rg, nullptr);
  if (rg)
    nodes_[out.id].backward_fn = [out, a](Tape& t) {
      t.accumulate(a, t.nodes_[out.id].grad.transpose());
    };
  return out;
}

Var Tape::add_colwise(Var a, Var bias) {
  if (value(bias).cols() != 1 || value(bias).rows() != value(a).rows())
    throw std::invalid_argument("add_colwise: bias must be rows(a) x 1");
  const bool rg = nodes_[a.id].requires_grad || nodes_[bias.id].requires_grad;
  Var out = make(value(a).colwise() + value(bias).col(0), rg, nullptr);
  if (rg)
    nodes_[out.id].backward_fn = [out, a, bias](Tape& t) {
      const Eigen::MatrixXd& g = t.nodes_[out.id].grad;
      t.accumulate(a, g);
      t.accumulate(bias, g.rowwise().sum());
    };
  return out;
}

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

Var Tape::gelu(Var a) {
  const Eigen::MatrixXd& x = value(a);
  Eigen::MatrixXd y = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); });
  const bool rg = nodes_[a.id].requires_grad;
  Var out = make(std::move(y), rg, nullptr);
  if (rg)
    nodes_[out.id].backward_fn = [out, a](Tape& t) {
      const Eigen::MatrixXd& x = t.value(a);
      Eigen::MatrixXd d = x.unaryExpr([](double v) {
        return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
      t.accumulate(a, t.nodes_[out.id].grad.cwiseProduct(d));
    };
  return out;
}

Var Tape::sum_squares(Var a) {
  Eigen::MatrixXd s(1, 1);
  s(0, 0) = value(a).squaredNorm();
  const bool rg = nodes_[a.id].requires_grad;
  Var out = make(std::move(s), rg, nullptr);
  if (rg)
    nodes_[out.id].backward_fn = [out, a](Tape& t) {
      t.accumulate(a, (2.0 * t.nodes_[out.id].grad(0, 0)) * t.value(a));
    };
  return out;
}

Var Tape::min2(Var a, Var b) {
  if (value(a).size() != 1 || value(b).size() != 1)
    throw std::invalid_argument("min2: scalars only");
  const bool take_a = value(a)(0, 0) <= value(b)(0, 0);
  const Var chosen = take_a ? a : b;
  const bool rg = nodes_[chosen.id].requires_grad;
  Var out = make(value(chosen), rg, nullptr);
  if (rg)
    nodes_[out.id].backward_fn = [out, chosen](Tape& t) {
      t.accumulate(chosen, t.nodes_[out.id].grad);
    };
  return out;
}

Var Tape::column(Var a, int j) {
  if (j < 0 || j >= value(a).cols()) throw std::invalid_argument("column: index out of range");
  const bool rg = nodes_[a.id].requires_grad;
  Var out = make(value(a).col(j), rg, nullptr);
  if (rg)
    nodes_[out.id].backward_fn = [out, a, j](Tape& t) {
      Eigen::MatrixXd g = Eigen::MatrixXd::Zero(t.value(a).rows(), t.value(a).cols());
      g.col(j) = t.nodes_[out.id].grad;
      t.accumulate(a, g);
    };
  return out;
}

Var Tape::qr_q(Var a, int* rank, double rank_tol) {
  const Eigen::MatrixXd& A = value(a);
  const int n = static_cast<int>(A.rows());
  const int k = static_cast<int>(A.cols());
  if (n < k || k < 1) throw std::invalid_argument("qr_q: need n >= k >= 1");

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
  Eigen::MatrixXd R = qr.matrixQR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  for (int j = 0; j < k; ++j)
    if (R(j, j) < 0) {
      Q.col(j) = -Q.col(j);
      R.row(j) = -R.row(j);
    }
  if (rank) {
    const double rmax = R.diagonal().cwiseAbs().maxCoeff();
    *rank = 0;
    for (int j = 0; j < k; ++j)
      if (R(j, j) > rank_tol * rmax) ++*rank;
  }

  const bool rg = nodes_[a.id].requires_grad;
  Var out = make(Q, rg, nullptr);
  if (rg) {
    // Standard thin-QR backward: Abar = (Qbar + Q copyltu(M)) R^-T with
    // M = -Qbar^T Q (no R gradient), copyltu = lower triangle mirrored up.
    nodes_[out.id].backward_fn = [out, a, R](Tape& t) {
      const Eigen::MatrixXd& Q = t.value(out);
      const Eigen::MatrixXd& Qbar = t.nodes_[out.id].grad;
      Eigen::MatrixXd M = -Qbar.transpose() * Q;
      Eigen::MatrixXd copyltu = M.triangularView<Eigen::Lower>();
      copyltu += Eigen::MatrixXd(M.triangularView<Eigen::StrictlyLower>()).transpose();
      Eigen::MatrixXd right = Qbar + Q * copyltu;
      // right * R^-T via R y = right^T.
      Eigen::MatrixXd Abar =
          R.triangularView<Eigen::Upper>().solve(right.transpose()).transpose();
      t.accumulate(a, Abar);
    };
  }
  return out;
}

namespace {

// (h, y*nx + x) layout -> rows (h*ny + y), columns x.
Eigen::MatrixXd gather_axis_x(const Eigen::MatrixXd& z, int nx, int ny) {
  const int h = static_cast<int>(z.rows());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(h) * ny, nx);
  for (int c = 0; c < h; ++c)
    for (int y = 0; y < ny; ++y)
      out.row(static_cast<Eigen::Index>(c) * ny + y) = z.row(c).segment(y * nx, nx);
  return out;
}

void scatter_axis_x_add(Eigen::MatrixXd& z, const Eigen::MatrixXd& zr, int nx, int ny) {
  const int h = static_cast<int>(z.rows());
  for (int c = 0; c < h; ++c)
    for (int y = 0; y < ny; ++y)
      z.row(c).segment(y * nx, nx) += zr.row(static_cast<Eigen::Index>(c) * ny + y);
}

// rows (h*nx + x), columns y.
Eigen::MatrixXd gather_axis_y(const Eigen::MatrixXd& z, int nx, int ny) {
  const int h = static_cast<int>(z.rows());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(h) * nx, ny);
  for (int c = 0; c < h; ++c)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) out(static_cast<Eigen::Index>(c) * nx + x, y) = z(c, y * nx + x);
  return out;
}

void scatter_axis_y_add(Eigen::MatrixXd& z, const Eigen::MatrixXd& zc, int nx, int ny) {
  const int h = static_cast<int>(z.rows());
  for (int c = 0; c < h; ++c)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) z(c, y * nx + x) += zc(static_cast<Eigen::Index>(c) * nx + x, y);
}

using ConstBlockMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using BlockMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// One axis of the factorized kernel. Returns the contribution and keeps the
// re/im spectra for the backward pass.
struct AxisForward {
  Eigen::MatrixXd a, b;  // (h*other) x m
};

Eigen::MatrixXd axis_forward(const Eigen::MatrixXd& zr, const Eigen::MatrixXd& wre,
                             const Eigen::MatrixXd& wim, const Eigen::MatrixXd& c,
                             const Eigen::MatrixXd& s, const Eigen::MatrixXd& cw,
                             const Eigen::MatrixXd& sw, int h, int other, AxisForward& keep) {
  const int m = static_cast<int>(c.cols());
  keep.a = zr * c;
  keep.b = -(zr * s);
  Eigen::MatrixXd pre(keep.a.rows(), m), pim(keep.a.rows(), m);
  for (int k = 0; k < m; ++k) {
    ConstBlockMap ak(keep.a.col(k).data(), h, other);
    ConstBlockMap bk(keep.b.col(k).data(), h, other);
    const auto wre_k = wre.middleCols(static_cast<Eigen::Index>(k) * h, h);
    const auto wim_k = wim.middleCols(static_cast<Eigen::Index>(k) * h, h);
    BlockMap pre_k(pre.col(k).data(), h, other);
    BlockMap pim_k(pim.col(k).data(), h, other);
    pre_k = wre_k * ak - wim_k * bk;
    pim_k = wre_k * bk + wim_k * ak;
  }
  return pre * cw.transpose() - pim * sw.transpose();
}

struct AxisGrads {
  Eigen::MatrixXd d_zr, d_wre, d_wim;
};

AxisGrads axis_backward(const Eigen::MatrixXd& gr, const Eigen::MatrixXd& wre,
                        const Eigen::MatrixXd& wim, const Eigen::MatrixXd& c,
                        const Eigen::MatrixXd& s, const Eigen::MatrixXd& cw,
                        const Eigen::MatrixXd& sw, int h, int other, const AxisForward& kept) {
  const int m = static_cast<int>(c.cols());
  Eigen::MatrixXd gpre = gr * cw;
  Eigen::MatrixXd gpim = -(gr * sw);
  Eigen::MatrixXd da(gpre.rows(), m), db(gpre.rows(), m);
  AxisGrads out;
  out.d_wre = Eigen::MatrixXd::Zero(wre.rows(), wre.cols());
  out.d_wim = Eigen::MatrixXd::Zero(wim.rows(), wim.cols());
  for (int k = 0; k < m; ++k) {
    ConstBlockMap ak(kept.a.col(k).data(), h, other);
    ConstBlockMap bk(kept.b.col(k).data(), h, other);
    ConstBlockMap gpre_k(gpre.col(k).data(), h, other);
    ConstBlockMap gpim_k(gpim.col(k).data(), h, other);
    const auto wre_k = wre.middleCols(static_cast<Eigen::Index>(k) * h, h);
    const auto wim_k = wim.middleCols(static_cast<Eigen::Index>(k) * h, h);
    out.d_wre.middleCols(static_cast<Eigen::Index>(k) * h, h) =
        gpre_k * ak.transpose() + gpim_k * bk.transpose();
    out.d_wim.middleCols(static_cast<Eigen::Index>(k) * h, h) =
        gpim_k * ak.transpose() - gpre_k * bk.transpose();
    BlockMap da_k(da.col(k).data(), h, other);
    BlockMap db_k(db.col(k).data(), h, other);
    da_k = wre_k.transpose() * gpre_k + wim_k.transpose() * gpim_k;
    db_k = wre_k.transpose() * gpim_k - wim_k.transpose() * gpre_k;
  }
  out.d_zr = da * c.transpose() - db * s.transpose();
  return out;
}

}  // namespace

Var Tape::spectral_conv(Var z, Var wx_re, Var wx_im, Var wy_re, Var wy_im,
                        const SpectralPlan& plan) {
  const Eigen::MatrixXd& Z = value(z);
  const int h = static_cast<int>(Z.rows());
  if (Z.cols() != static_cast<Eigen::Index>(plan.nx) * plan.ny)
    throw std::invalid_argument("spectral_conv: input does not match the plan's patch shape");
  auto check_w = [&](Var w, int m, const char* name) {
    if (value(w).rows() != h || value(w).cols() != static_cast<Eigen::Index>(h) * m)
      throw std::invalid_argument(std::string("spectral_conv: bad weight shape for ") + name);
  };
  check_w(wx_re, plan.mx, "x/re");
  check_w(wx_im, plan.mx, "x/im");
  check_w(wy_re, plan.my, "y/re");
  check_w(wy_im, plan.my, "y/im");

  auto keep_x = std::make_shared<AxisForward>();
  auto keep_y = std::make_shared<AxisForward>();

  Eigen::MatrixXd zr = gather_axis_x(Z, plan.nx, plan.ny);
  Eigen::MatrixXd yx =
      axis_forward(zr, value(wx_re), value(wx_im), plan.cx, plan.sx, plan.cxw, plan.sxw, h,
                   plan.ny, *keep_x);
  Eigen::MatrixXd zc = gather_axis_y(Z, plan.nx, plan.ny);
  Eigen::MatrixXd yy =
      axis_forward(zc, value(wy_re), value(wy_im), plan.cy, plan.sy, plan.cyw, plan.syw, h,
                   plan.nx, *keep_y);

  Eigen::MatrixXd result = Eigen::MatrixXd::Zero(h, Z.cols());
  scatter_axis_x_add(result, yx, plan.nx, plan.ny);
  scatter_axis_y_add(result, yy, plan.nx, plan.ny);

  const bool rg = nodes_[z.id].requires_grad || nodes_[wx_re.id].requires_grad ||
                  nodes_[wx_im.id].requires_grad || nodes_[wy_re.id].requires_grad ||
                  nodes_[wy_im.id].requires_grad;
  Var out = make(std::move(result), rg, nullptr);
  if (rg) {
    const SpectralPlan* pp = &plan;  // plans outlive tapes by construction
    nodes_[out.id].backward_fn = [out, z, wx_re, wx_im, wy_re, wy_im, pp, keep_x, keep_y,
                                  h](Tape& t) {
      const Eigen::MatrixXd& g = t.nodes_[out.id].grad;
      Eigen::MatrixXd gr = gather_axis_x(g, pp->nx, pp->ny);
      AxisGrads gx = axis_backward(gr, t.value(wx_re), t.value(wx_im), pp->cx, pp->sx, pp->cxw,
                                   pp->sxw, h, pp->ny, *keep_x);
      Eigen::MatrixXd gc = gather_axis_y(g, pp->nx, pp->ny);
      AxisGrads gy = axis_backward(gc, t.value(wy_re), t.value(wy_im), pp->cy, pp->sy, pp->cyw,
                                   pp->syw, h, pp->nx, *keep_y);
      Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(h, t.value(z).cols());
      scatter_axis_x_add(dz, gx.d_zr, pp->nx, pp->ny);
      scatter_axis_y_add(dz, gy.d_zr, pp->nx, pp->ny);
      t.accumulate(z, dz);
      t.accumulate(wx_re, gx.d_wre);
      t.accumulate(wx_im, gx.d_wim);
      t.accumulate(wy_re, gy.d_wre);
      t.accumulate(wy_im, gy.d_wim);
    };
  }
  return out;
}

}  // namespace msno::ad
