#include "dissipic/system_models.hpp"

#include <cmath>

#include "dissipic/interconnect.hpp"
#include "dissipic/matrix_core.hpp"

namespace dissipic {

const char* to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Zero: return "zero";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  if (s == "zero" || s == "identity-zero" || s == "none") return Activation::Zero;
  throw Error(ErrorCode::ConfigError, "unknown activation '" + s + "'");
}

double activate(Activation a, double v) {
  switch (a) {
    case Activation::Tanh: return std::tanh(v);
    case Activation::Relu: return v > 0.0 ? v : 0.0;
    case Activation::Zero: return 0.0;
  }
  return 0.0;
}

double activate_slope(Activation a, double v) {
  switch (a) {
    case Activation::Tanh: {
      const double t = std::tanh(v);
      return 1.0 - t * t;
    }
    case Activation::Relu: return v > 0.0 ? 1.0 : 0.0;
    case Activation::Zero: return 0.0;
  }
  return 0.0;
}

void UncertainLtiPlant::validate() const {
  const auto np = n_p(), nv = n_v(), nw = n_w(), nd = n_d(), ne = n_e(), nu = n_u(), ny = n_y();
  require_shape(A_p, np, np, "A_p");
  require_shape(B_pw, np, nw, "B_pw");
  require_shape(B_pd, np, nd, "B_pd");
  require_shape(B_pu, np, nu, "B_pu");
  require_shape(C_pv, nv, np, "C_pv");
  require_shape(D_pvw, nv, nw, "D_pvw");
  require_shape(D_pvd, nv, nd, "D_pvd");
  require_shape(D_pvu, nv, nu, "D_pvu");
  require_shape(C_pe, ne, np, "C_pe");
  require_shape(D_pew, ne, nw, "D_pew");
  require_shape(D_ped, ne, nd, "D_ped");
  require_shape(D_peu, ne, nu, "D_peu");
  require_shape(C_py, ny, np, "C_py");
  require_shape(D_pyw, ny, nw, "D_pyw");
  require_shape(D_pyd, ny, nd, "D_pyd");
}

UncertainLtiPlant UncertainLtiPlant::zeros(Eigen::Index n_p, Eigen::Index n_v, Eigen::Index n_w, Eigen::Index n_d,
                                           Eigen::Index n_e, Eigen::Index n_u, Eigen::Index n_y) {
  UncertainLtiPlant p;
  p.A_p = Mat::Zero(n_p, n_p);
  p.B_pw = Mat::Zero(n_p, n_w);
  p.B_pd = Mat::Zero(n_p, n_d);
  p.B_pu = Mat::Zero(n_p, n_u);
  p.C_pv = Mat::Zero(n_v, n_p);
  p.D_pvw = Mat::Zero(n_v, n_w);
  p.D_pvd = Mat::Zero(n_v, n_d);
  p.D_pvu = Mat::Zero(n_v, n_u);
  p.C_pe = Mat::Zero(n_e, n_p);
  p.D_pew = Mat::Zero(n_e, n_w);
  p.D_ped = Mat::Zero(n_e, n_d);
  p.D_peu = Mat::Zero(n_e, n_u);
  p.C_py = Mat::Zero(n_y, n_p);
  p.D_pyw = Mat::Zero(n_y, n_w);
  p.D_pyd = Mat::Zero(n_y, n_d);
  return p;
}

void validate(const UncertainLtiSystem& s) {
  const auto n = s.n(), nv = s.n_v(), nw = s.n_w(), nd = s.n_d(), ne = s.n_e();
  require_shape(s.A, n, n, "A");
  require_shape(s.B_w, n, nw, "B_w");
  require_shape(s.B_d, n, nd, "B_d");
  require_shape(s.C_v, nv, n, "C_v");
  require_shape(s.D_vw, nv, nw, "D_vw");
  require_shape(s.D_vd, nv, nd, "D_vd");
  require_shape(s.C_e, ne, n, "C_e");
  require_shape(s.D_ew, ne, nw, "D_ew");
  require_shape(s.D_ed, ne, nd, "D_ed");
}

Mat stacked(const UncertainLtiSystem& s) {
  return block_matrix({{s.A, s.B_w, s.B_d}, {s.C_v, s.D_vw, s.D_vd}, {s.C_e, s.D_ew, s.D_ed}});
}

SystemBlocks<Mat> evaluate(const SystemBlocks<AffineExpr>& s, const Vec& y) {
  return {s.A.evaluate(y),    s.B_w.evaluate(y),  s.B_d.evaluate(y), s.C_v.evaluate(y), s.D_vw.evaluate(y),
          s.D_vd.evaluate(y), s.C_e.evaluate(y), s.D_ew.evaluate(y), s.D_ed.evaluate(y)};
}

void RinnController::validate() const {
  const auto nk = n_k(), nphi = n_phi(), ny = n_y(), nu = n_u();
  require_shape(A_k, nk, nk, "A_k");
  require_shape(B_kw, nk, nphi, "B_kw");
  require_shape(B_ky, nk, ny, "B_ky");
  require_shape(C_kv, nphi, nk, "C_kv");
  require_shape(D_kvw, nphi, nphi, "D_kvw");
  require_shape(D_kvy, nphi, ny, "D_kvy");
  require_shape(C_ku, nu, nk, "C_ku");
  require_shape(D_kuw, nu, nphi, "D_kuw");
  require_shape(D_kuy, nu, ny, "D_kuy");
}

RinnController RinnController::zeros(Eigen::Index n_k, Eigen::Index n_phi, Eigen::Index n_y, Eigen::Index n_u,
                                     Activation act) {
  RinnController k;
  k.A_k = Mat::Zero(n_k, n_k);
  k.B_kw = Mat::Zero(n_k, n_phi);
  k.B_ky = Mat::Zero(n_k, n_y);
  k.C_kv = Mat::Zero(n_phi, n_k);
  k.D_kvw = Mat::Zero(n_phi, n_phi);
  k.D_kvy = Mat::Zero(n_phi, n_y);
  k.C_ku = Mat::Zero(n_u, n_k);
  k.D_kuw = Mat::Zero(n_u, n_phi);
  k.D_kuy = Mat::Zero(n_u, n_y);
  k.activation = act;
  return k;
}

int theta_size(const RinnController& k) {
  int n = 0;
  for (const Mat* b : k.blocks()) n += static_cast<int>(b->size());
  return n;
}

Vec flatten(const RinnController& k) {
  Vec out(theta_size(k));
  Eigen::Index off = 0;
  for (const Mat* b : k.blocks()) {
    out.segment(off, b->size()) = b->reshaped();
    off += b->size();
  }
  return out;
}

RinnController unflatten(const Vec& v, const RinnController& shape) {
  require(v.size() == theta_size(shape), ErrorCode::DimensionMismatch, "parameter vector length mismatch");
  RinnController k = shape;
  Eigen::Index off = 0;
  for (Mat* b : k.blocks()) {
    *b = v.segment(off, b->size()).reshaped(b->rows(), b->cols());
    off += b->size();
  }
  return k;
}

double theta_distance(const RinnController& a, const RinnController& b) { return (flatten(a) - flatten(b)).norm(); }

ControllerBlocks<AffineExpr> controller_expr(const RinnController& shape, int offset) {
  ControllerBlocks<AffineExpr> out;
  auto dst = out.blocks();
  auto src = shape.blocks();
  int var = offset;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Eigen::Index r = src[i]->rows(), c = src[i]->cols();
    std::vector<AffineExpr::Term> terms;
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index ii = 0; ii < r; ++ii) {
        Mat e = Mat::Zero(r, c);
        e(ii, j) = 1.0;
        terms.push_back({var++, std::move(e)});
      }
    *dst[i] = AffineExpr::from_terms(Mat::Zero(r, c), std::move(terms));
  }
  return out;
}

ControllerBlocks<AffineExpr> controller_constant(const RinnController& k) {
  return {k.A_k, k.B_kw, k.B_ky, k.C_kv, k.D_kvw, k.D_kvy, k.C_ku, k.D_kuw, k.D_kuy};
}

Mat SupplyRate::X() const { return block_matrix({{X_dd, X_de}, {X_de.transpose(), X_ee}}); }

void SupplyRate::validate() const {
  require_shape(X_dd, X_dd.rows(), X_dd.rows(), "X_dd");
  require_shape(X_de, X_dd.rows(), X_ee.rows(), "X_de");
  require_shape(X_ee, X_ee.rows(), X_ee.rows(), "X_ee");
  check_symmetric(X_dd, "X_dd");
  check_symmetric(X_ee, "X_ee");
}

SupplyRate SupplyRate::from_matrix(const Mat& x, Eigen::Index n_d) {
  check_symmetric(x, "supply rate X");
  require(n_d >= 0 && n_d <= x.rows(), ErrorCode::DimensionMismatch, "supply partition out of range");
  const Eigen::Index n_e = x.rows() - n_d;
  return {x.topLeftCorner(n_d, n_d), x.topRightCorner(n_d, n_e), x.bottomRightCorner(n_e, n_e)};
}

SupplyRate SupplyRate::zero(Eigen::Index n_d, Eigen::Index n_e) {
  return {Mat::Zero(n_d, n_d), Mat::Zero(n_d, n_e), Mat::Zero(n_e, n_e)};
}

SupplyRate SupplyRate::l2_gain(double gamma2, Eigen::Index n_d, Eigen::Index n_e) {
  return {gamma2 * eye(n_d), Mat::Zero(n_d, n_e), -eye(n_e)};
}

double supply_value(const SupplyRate& x, const Vec& d, const Vec& e) {
  return d.dot(x.X_dd * d) + 2.0 * d.dot(x.X_de * e) + e.dot(x.X_ee * e);
}

namespace {

bool strictly_lower(const Mat& d) {
  for (Eigen::Index j = 0; j < d.cols(); ++j)
    for (Eigen::Index i = 0; i <= j && i < d.rows(); ++i)
      if (d(i, j) != 0.0) return false;
  return true;
}

Vec phi(Activation a, const Vec& v) {
  Vec out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = activate(a, v(i));
  return out;
}

}  // namespace

ControllerOutput eval_controller(const RinnController& k, const Vec& x_k, const Vec& y, const FixedPointCfg& fp) {
  require(x_k.size() == k.n_k() && y.size() == k.n_y(), ErrorCode::DimensionMismatch, "controller input sizes");
  const Eigen::Index nphi = k.n_phi();
  const Vec bias = k.C_kv * x_k + k.D_kvy * y;
  ControllerOutput out;
  Vec w = Vec::Zero(nphi);
  auto residual_of = [&](const Vec& ww) -> Vec { return ww - phi(k.activation, bias + k.D_kvw * ww); };

  if (nphi == 0 || k.activation == Activation::Zero) {
    out.iterations = nphi == 0 ? 0 : 1;
  } else if (strictly_lower(k.D_kvw)) {
    // Explicit network: one forward sweep is exact.
    for (Eigen::Index i = 0; i < nphi; ++i) w(i) = activate(k.activation, bias(i) + k.D_kvw.row(i).head(i).dot(w.head(i)));
    out.iterations = 1;
  } else {
    double res = residual_of(w).lpNorm<Eigen::Infinity>();
    double checkpoint = res;
    int it = 0;
    bool newton = false;
    while (res > fp.tol && it < fp.max_iter) {
      if (!newton) {
        w = (1.0 - fp.alpha) * w + fp.alpha * phi(k.activation, bias + k.D_kvw * w);
      } else {
        const Vec v = bias + k.D_kvw * w;
        Vec slope(nphi);
        for (Eigen::Index i = 0; i < nphi; ++i) slope(i) = activate_slope(k.activation, v(i));
        const Mat jac = Mat::Identity(nphi, nphi) - slope.asDiagonal() * k.D_kvw;
        const Vec r = residual_of(w);
        const Vec step = jac.partialPivLu().solve(r);
        double t = 1.0;
        Vec trial = w - step;
        while (t > 1e-4 && residual_of(trial).lpNorm<Eigen::Infinity>() > (1.0 - 0.25 * t) * res) {
          t *= 0.5;
          trial = w - t * step;
        }
        w = trial;
      }
      ++it;
      res = residual_of(w).lpNorm<Eigen::Infinity>();
      // Switch to Newton when damped Picard contracts too slowly.
      if (!newton && it % 20 == 0) {
        if (res > 0.5 * checkpoint || !std::isfinite(res)) {
          newton = true;
          if (!std::isfinite(res)) w.setZero();
          res = residual_of(w).lpNorm<Eigen::Infinity>();
        }
        checkpoint = res;
      }
    }
    out.iterations = it;
    if (!(res <= fp.tol)) {
      throw Error(ErrorCode::FixedPointDiverged, "implicit layer residual " + std::to_string(res) + " after " +
                                                     std::to_string(it) + " iterations");
    }
  }
  out.w_k = w;
  out.v_k = bias + k.D_kvw * w;
  out.residual = nphi == 0 ? 0.0 : (w - phi(k.activation, out.v_k)).lpNorm<Eigen::Infinity>();
  out.u = k.C_ku * x_k + k.D_kuw * w + k.D_kuy * y;
  out.dx_k = k.A_k * x_k + k.B_kw * w + k.B_ky * y;
  return out;
}

bool check_wellposed(const RinnController& k, const Mat& Lambda) {
  require_shape(Lambda, k.n_phi(), k.n_phi(), "Lambda");
  require(Lambda.isDiagonal(0.0), ErrorCode::NotDiagonal, "Lambda must be diagonal");
  if (k.n_phi() == 0) return true;
  const Mat m = Lambda * k.D_kvw + k.D_kvw.transpose() * Lambda - 2.0 * Lambda;
  return lambda_max(m) < -tol::kStrict;
}

UncertainLtiSystem plant_to_system(const UncertainLtiPlant& p) {
  p.validate();
  return {p.A_p, p.B_pw, p.B_pd, p.C_pv, p.D_pvw, p.D_pvd, p.C_pe, p.D_pew, p.D_ped};
}

UncertainLtiSystem plant_to_system(const UncertainLtiPlant& p, const RinnController& k) { return close_loop(p, k); }

void StateSpace::validate() const {
  require_shape(A, A.rows(), A.rows(), "A");
  require_shape(B, A.rows(), D.cols(), "B");
  require_shape(C, D.rows(), A.rows(), "C");
}

StateSpace StateSpace::gain(const Mat& d) {
  return {Mat::Zero(0, 0), Mat::Zero(0, d.cols()), Mat::Zero(d.rows(), 0), d};
}

Eigen::MatrixXcd StateSpace::freq_matrix(double omega) const {
  const std::complex<double> s(0.0, omega);
  Eigen::MatrixXcd res = D.cast<std::complex<double>>();
  if (n() > 0) {
    const Eigen::MatrixXcd m = s * Eigen::MatrixXcd::Identity(n(), n()) - A.cast<std::complex<double>>();
    res += C.cast<std::complex<double>>() * m.partialPivLu().solve(B.cast<std::complex<double>>());
  }
  return res;
}

std::complex<double> StateSpace::freq(double omega, Eigen::Index out, Eigen::Index in) const {
  return freq_matrix(omega)(out, in);
}

bool is_hurwitz(const Mat& a, double margin) {
  if (a.size() == 0) return true;
  return a.eigenvalues().real().maxCoeff() < -margin;
}

StateSpace series(const StateSpace& first, const StateSpace& second) {
  require(first.outputs() == second.inputs(), ErrorCode::DimensionMismatch, "series connection sizes");
  StateSpace s;
  s.A = block_matrix({{first.A, Mat::Zero(first.n(), second.n())}, {second.B * first.C, second.A}});
  s.B = block_matrix({{first.B}, {second.B * first.D}});
  s.C = block_matrix({{second.D * first.C, second.C}});
  s.D = second.D * first.D;
  return s;
}

StateSpace inverse(const StateSpace& s, ErrorCode on_singular) {
  require(s.D.rows() == s.D.cols(), on_singular, "feedthrough of an inverted system must be square");
  if (condition_number(s.D) > 1e8) throw Error(on_singular, "feedthrough is singular or ill-conditioned");
  const Mat dinv = s.D.inverse();
  return {s.A - s.B * dinv * s.C, s.B * dinv, -dinv * s.C, dinv};
}

StateSpace block_diag(const StateSpace& a, const StateSpace& b) {
  return {dissipic::block_diag({a.A, b.A}), dissipic::block_diag({a.B, b.B}), dissipic::block_diag({a.C, b.C}),
          dissipic::block_diag({a.D, b.D})};
}

}  // namespace dissipic
