#include "dissipic/synthesize.hpp"

#include <algorithm>
#include <cmath>

#include "dissipic/iqc_transform.hpp"
#include "dissipic/matrix_core.hpp"

namespace dissipic {

double theta_hat_distance(const ThetaHat& a, const ThetaHat& b) {
  double sq = 0.0;
  const auto x = a.blocks();
  const auto y = b.blocks();
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(x[i]->rows() == y[i]->rows() && x[i]->cols() == y[i]->cols(), ErrorCode::DimensionMismatch,
            std::string("theta-hat block ") + kThetaHatBlockNames[i]);
    sq += (*x[i] - *y[i]).squaredNorm();
  }
  return std::sqrt(sq);
}

RinnController SynthesisProblem::controller_shape() const {
  return RinnController::zeros(plant.n_p(), n_phi, plant.n_y(), plant.n_u(), activation);
}

SynthesisProblem SynthesisProblem::make(const UncertainLtiPlant& plant, const Mat& M_dp, const SupplyRate& X,
                                        Eigen::Index n_phi, double t_rs, Activation act) {
  plant.validate();
  X.validate();
  check_symmetric(M_dp, "plant multiplier");
  require(M_dp.rows() == plant.n_v() + plant.n_w(), ErrorCode::DimensionMismatch, "plant multiplier size");
  require(X.n_d() == plant.n_d() && X.n_e() == plant.n_e(), ErrorCode::DimensionMismatch, "supply rate channels");
  require(n_phi >= 0, ErrorCode::InvalidArgument, "negative n_phi");
  require(t_rs > 0.0, ErrorCode::InvalidArgument, "t_RS must be positive");
  SynthesisProblem p;
  p.plant = plant;
  p.M_dp = M_dp;
  p.X = X;
  p.n_phi = n_phi;
  p.t_rs = t_rs;
  p.activation = act;
  const Mat mvv = p.Mp_vv();
  if (!is_psd(mvv, 1e-12)) throw Error(ErrorCode::MvvNotPsd, "plant multiplier M_vv block is not PSD");
  require(is_psd(-X.X_ee, 1e-12), ErrorCode::InvalidArgument, "supply rate needs X_ee <= 0");
  p.L_dp = factor_gram(mvv);
  p.L_X = factor_gram(-X.X_ee);
  return p;
}

std::pair<UncertainLtiPlant, Mat> plant_static_form(const UncertainLtiPlant& p, const IqcSpec& iqc) {
  p.validate();
  iqc.validate();
  if (iqc.kind != IqcKind::DynamicIqc) return {p, iqc.M};
  // The plant as an uncertain system with inputs (d, u) and outputs (e, y);
  // the filters only act on the v and w channels.
  const Eigen::Index nd = p.n_d(), nu = p.n_u(), ne = p.n_e(), ny = p.n_y();
  UncertainLtiSystem s;
  s.A = p.A_p;
  s.B_w = p.B_pw;
  s.B_d = block_matrix({{p.B_pd, p.B_pu}});
  s.C_v = p.C_pv;
  s.D_vw = p.D_pvw;
  s.D_vd = block_matrix({{p.D_pvd, p.D_pvu}});
  s.C_e = block_matrix({{p.C_pe}, {p.C_py}});
  s.D_ew = block_matrix({{p.D_pew}, {p.D_pyw}});
  s.D_ed = block_matrix({{p.D_ped, p.D_peu}, {p.D_pyd, zeros(ny, nu)}});
  const UncertainLtiSystem t = transform(extend(s, iqc), iqc);
  UncertainLtiPlant out;
  out.A_p = t.A;
  out.B_pw = t.B_w;
  out.B_pd = t.B_d.leftCols(nd);
  out.B_pu = t.B_d.rightCols(nu);
  out.C_pv = t.C_v;
  out.D_pvw = t.D_vw;
  out.D_pvd = t.D_vd.leftCols(nd);
  out.D_pvu = t.D_vd.rightCols(nu);
  out.C_pe = t.C_e.topRows(ne);
  out.D_pew = t.D_ew.topRows(ne);
  out.D_ped = t.D_ed.topLeftCorner(ne, nd);
  out.D_peu = t.D_ed.topRightCorner(ne, nu);
  out.C_py = t.C_e.bottomRows(ny);
  out.D_pyw = t.D_ew.bottomRows(ny);
  out.D_pyd = t.D_ed.bottomLeftCorner(ny, nd);
  return {out, block_diag({eye(iqc.psi1.outputs()), -eye(iqc.psi2.outputs())})};
}

namespace {

struct CombinedParts {
  Mat M_vw, M_ww, L_delta;
};

CombinedParts combined_parts(const SynthesisProblem& prob, const Mat& Lambda) {
  const Eigen::Index nk = prob.n_phi;
  require_shape(Lambda, nk, nk, "Lambda");
  CombinedParts c;
  c.M_vw = block_diag({prob.Mp_vw(), Lambda});
  c.M_ww = block_diag({prob.Mp_ww(), -2.0 * Lambda});
  c.L_delta = block_matrix({{prob.L_dp, zeros(prob.L_dp.rows(), nk)}});
  return c;
}

bool state_coupled(const RinnController& k) {
  return k.A_k.size() > 0 && (max_abs(k.A_k) > 0.0 || max_abs(k.B_kw) > 0.0 || max_abs(k.B_ky) > 0.0 ||
                              max_abs(k.C_kv) > 0.0 || max_abs(k.C_ku) > 0.0);
}

// Conditioning of I - RS measured against the scale of RS rather than of
// I - RS itself, so an exact cancellation RS = I (all entries at round-off
// level) still counts as singular.
double coupling_condition(const Mat& R, const Mat& S) {
  const Mat irs = Mat::Identity(R.rows(), R.rows()) - R * S;
  if (irs.size() == 0) return 1.0;
  const Vec s = Eigen::JacobiSVD<Mat>(irs).singularValues();
  const double scale = std::max({1.0, s(0), R.norm() * S.norm()});
  const double smin = s(s.size() - 1);
  return smin > 0.0 ? scale / smin : std::numeric_limits<double>::infinity();
}

// X * M^-1 via a transposed solve.
Mat right_solve(const Mat& x, const Mat& m) { return m.transpose().partialPivLu().solve(x.transpose()).transpose(); }

}  // namespace

Mat bmi_lhs(const SynthesisProblem& prob, const UncertainLtiSystem& cl, const Mat& P, const Mat& Lambda) {
  validate(cl);
  const CombinedParts c = combined_parts(prob, Lambda);
  require_shape(P, cl.n(), cl.n(), "P");
  return bmi_lhs_t<Mat>(cl, P, c.M_vw, c.M_ww, c.L_delta, prob.X, prob.L_X);
}

Mat synthesis_lmi_lhs(const SynthesisProblem& prob, const ThetaHat& th) {
  const Eigen::Index np = prob.n_p(), nk = prob.n_phi, nu = prob.plant.n_u(), ny = prob.plant.n_y();
  require_shape(th.S, np, np, "S");
  require_shape(th.R, np, np, "R");
  require_shape(th.N_A11, np, np, "N_A11");
  require_shape(th.N_A12, np, ny, "N_A12");
  require_shape(th.N_A21, nu, np, "N_A21");
  require_shape(th.N_A22, nu, ny, "N_A22");
  require_shape(th.N_B, np, nk, "N_B");
  require_shape(th.N_C, nk, np, "N_C");
  require_shape(th.D_kuw, nu, nk, "D_kuw");
  require_shape(th.Dh_kvy, nk, ny, "Dhat_kvy");
  require_shape(th.Dh_kvw, nk, nk, "Dhat_kvw");
  require_shape(th.Lambda, nk, nk, "Lambda");
  return synthesis_lmi_lhs_t<Mat>(prob, th);
}

ThetaHat construct_theta_hat(const SynthesisProblem& prob, const RinnController& k, const Mat& P, const Mat& Lambda) {
  const UncertainLtiPlant& p = prob.plant;
  const Eigen::Index np = p.n_p(), nk = prob.n_phi;
  k.validate();
  require(k.n_k() == np, ErrorCode::DimensionMismatch, "controller order must equal plant order");
  require(k.n_phi() == nk && k.n_y() == p.n_y() && k.n_u() == p.n_u(), ErrorCode::DimensionMismatch,
          "controller channels do not match the synthesis problem");
  require_shape(P, 2 * np, 2 * np, "P");
  require_shape(Lambda, nk, nk, "Lambda");
  require(Lambda.isDiagonal(0.0), ErrorCode::NotDiagonal, "Lambda must be diagonal");
  check_symmetric(P, "P");
  const Eigen::LLT<Mat> llt(symmetrize(P));
  require(llt.info() == Eigen::Success, ErrorCode::NotPsd, "P must be positive definite");
  const Mat Pinv = llt.solve(eye(2 * np));
  const Mat S = symmetrize(P.topLeftCorner(np, np));
  const Mat U = P.topRightCorner(np, np);
  const Mat R = symmetrize(Pinv.topLeftCorner(np, np));
  const Mat V = Pinv.topRightCorner(np, np);
  if (state_coupled(k) && coupling_condition(R, S) > 1e10) {
    throw Error(ErrorCode::SingularPartition, "I - RS is singular for this storage matrix");
  }

  ThetaHat th;
  th.S = S;
  th.R = R;
  const Mat left = block_matrix({{U, S * p.B_pu}, {zeros(p.n_u(), np), eye(p.n_u())}});
  const Mat mid = block_matrix({{k.A_k, k.B_ky}, {k.C_ku, k.D_kuy}});
  const Mat right = block_matrix({{V.transpose(), zeros(np, p.n_y())}, {p.C_py * R, eye(p.n_y())}});
  Mat na = left * mid * right;
  na.topLeftCorner(np, np) += S * p.A_p * R;
  th.N_A11 = na.topLeftCorner(np, np);
  th.N_A12 = na.topRightCorner(np, p.n_y());
  th.N_A21 = na.bottomLeftCorner(p.n_u(), np);
  th.N_A22 = na.bottomRightCorner(p.n_u(), p.n_y());
  th.N_B = S * p.B_pu * k.D_kuw + U * k.B_kw;
  th.N_C = Lambda * k.D_kvy * p.C_py * R + Lambda * k.C_kv * V.transpose();
  th.D_kuw = k.D_kuw;
  th.Dh_kvy = Lambda * k.D_kvy;
  th.Dh_kvw = Lambda * k.D_kvw;
  th.Lambda = Lambda;
  return th;
}

Reconstruction reconstruct_theta(const SynthesisProblem& prob, const ThetaHat& th) {
  synthesis_lmi_lhs(prob, th);  // shape checks only
  const UncertainLtiPlant& p = prob.plant;
  const Eigen::Index np = p.n_p(), nu = p.n_u(), ny = p.n_y();
  require(th.Lambda.isDiagonal(0.0), ErrorCode::NotDiagonal, "Lambda must be diagonal");
  require(th.Lambda.size() == 0 || th.Lambda.diagonal().minCoeff() > 0.0, ErrorCode::InvalidArgument,
          "Lambda must be positive");
  const Mat& S = th.S;
  const Mat& R = th.R;
  const Mat irs = eye(np) - R * S;
  if (coupling_condition(R, S) > 1e10) throw Error(ErrorCode::SingularIminusRS, "I - RS is numerically singular");
  const Eigen::JacobiSVD<Mat> svd(irs, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec root = svd.singularValues().cwiseSqrt();
  Reconstruction out;
  out.V = svd.matrixU() * root.asDiagonal();
  out.U = svd.matrixV() * root.asDiagonal();
  const Mat& U = out.U;
  const Mat& V = out.V;
  if (condition_number(U) > 1e8 || condition_number(V) > 1e8) {
    throw Error(ErrorCode::IllConditionedUV, "U or V is ill-conditioned");
  }
  const Mat lam_inv = th.Lambda.diagonal().cwiseInverse().asDiagonal();

  RinnController& k = out.k;
  k.activation = prob.activation;
  k.D_kvy = lam_inv * th.Dh_kvy;
  k.D_kvw = lam_inv * th.Dh_kvw;
  k.D_kuw = th.D_kuw;
  const Mat left = block_matrix({{U, S * p.B_pu}, {zeros(nu, np), eye(nu)}});
  const Mat right = block_matrix({{V.transpose(), zeros(np, ny)}, {p.C_py * R, eye(ny)}});
  Mat na = th.N_A();
  na.topLeftCorner(np, np) -= S * p.A_p * R;
  const Mat mid = right_solve(left.partialPivLu().solve(na), right);
  k.A_k = mid.topLeftCorner(np, np);
  k.B_ky = mid.topRightCorner(np, ny);
  k.C_ku = mid.bottomLeftCorner(nu, np);
  k.D_kuy = mid.bottomRightCorner(nu, ny);
  k.B_kw = U.partialPivLu().solve(th.N_B - S * p.B_pu * th.D_kuw);
  k.C_kv = right_solve(lam_inv * (th.N_C - th.Dh_kvy * p.C_py * R), V.transpose());

  const Mat Y = block_matrix({{R, eye(np)}, {V.transpose(), zeros(np, np)}});
  const Mat PY = block_matrix({{eye(np), S}, {zeros(np, np), U.transpose()}});
  out.P = symmetrize(right_solve(PY, Y));
  out.Lambda = th.Lambda;
  return out;
}

ThetaHatMargins theta_hat_margins(const SynthesisProblem& prob, const ThetaHat& th) {
  const Eigen::Index np = prob.n_p(), nk = prob.n_phi;
  ThetaHatMargins m;
  m.lmi = -lambda_max(synthesis_lmi_lhs(prob, th));
  m.S = lambda_min(th.S);
  m.R = lambda_min(th.R);
  m.coupling = lambda_min(block_matrix({{th.R, prob.t_rs * eye(np)}, {prob.t_rs * eye(np), th.S}}));
  m.lambda = nk > 0 ? th.Lambda.diagonal().minCoeff() : std::numeric_limits<double>::infinity();
  m.wellposed = nk > 0 ? -lambda_max(th.Dh_kvw + th.Dh_kvw.transpose() - 2.0 * th.Lambda)
                       : std::numeric_limits<double>::infinity();
  return m;
}

namespace {

struct ThetaHatVars {
  ThetaHatBlocks<AffineExpr> e;
  std::vector<std::optional<Variable>> vars;  // per block, empty when fixed
};

ThetaHatVars add_theta_hat_vars(SdpProblem& sdp, const SynthesisProblem& prob, bool lti) {
  const UncertainLtiPlant& p = prob.plant;
  const Eigen::Index np = p.n_p(), nk = prob.n_phi, nu = p.n_u(), ny = p.n_y();
  ThetaHatVars v;
  auto dst = v.e.blocks();
  const std::array<std::pair<Eigen::Index, Eigen::Index>, 12> shapes = {
      {{np, np}, {np, np}, {np, np}, {np, ny}, {nu, np}, {nu, ny}, {np, nk}, {nk, np}, {nu, nk}, {nk, ny}, {nk, nk}, {nk, nk}}};
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto [r, c] = shapes[i];
    const bool neural = i >= 6 && i <= 10;
    if ((lti && neural) || r * c == 0) {
      *dst[i] = AffineExpr::zero(r, c);
      v.vars.emplace_back();
      continue;
    }
    const VarKind kind = i <= 1 ? VarKind::Symmetric : (i == 11 ? VarKind::Diagonal : VarKind::Full);
    const Variable var = sdp.add_variable(r, c, kind, kThetaHatBlockNames[i]);
    *dst[i] = sdp.expr(var);
    v.vars.push_back(var);
  }
  return v;
}

ThetaHat read_theta_hat(const ThetaHatVars& v, const SdpSolution& sol) {
  ThetaHat th;
  auto dst = th.blocks();
  const auto src = v.e.blocks();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    *dst[i] = v.vars[i] ? sol.value(*v.vars[i]) : src[i]->constant();
  }
  th.S = symmetrize(th.S);
  th.R = symmetrize(th.R);
  return th;
}

AffineExpr stacked_difference(const ThetaHatBlocks<AffineExpr>& e, const ThetaHat& target) {
  std::vector<std::vector<AffineExpr>> rows;
  const auto a = e.blocks();
  const auto b = target.blocks();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]->rows() * a[i]->cols() == 0) continue;
    rows.push_back({vec(*a[i] - *b[i])});
  }
  if (rows.empty()) return AffineExpr::zero(1, 1);
  return affine_block_matrix(rows);
}

// Constraints shared by both stages; the coupling constraint is added by the caller.
void add_set_constraints(SdpProblem& sdp, const SynthesisProblem& prob, const ThetaHatBlocks<AffineExpr>& e) {
  const double eps = prob.eps;
  sdp.add_nsd(synthesis_lmi_lhs_t<AffineExpr>(prob, e), eps, "dissipation");
  sdp.add_psd(e.S, eps, "S");
  sdp.add_psd(e.R, eps, "R");
  for (Eigen::Index i = 0; i < prob.n_phi; ++i) {
    sdp.add_nonneg(e.Lambda.block(i, i, 1, 1) - AffineExpr(Mat::Constant(1, 1, tol::kLambdaMin)), "Lambda_ii");
  }
  if (prob.n_phi > 0) {
    sdp.add_nsd(e.Dh_kvw + transpose(e.Dh_kvw) - 2.0 * e.Lambda, eps, "well-posedness");
  }
}

AffineExpr coupling(const SynthesisProblem& prob, const ThetaHatBlocks<AffineExpr>& e) {
  const Eigen::Index np = prob.n_p();
  const AffineExpr t(Mat(prob.t_rs * eye(np)));
  return affine_block_matrix({{e.R, t}, {t, e.S}});
}

void check_target(const SynthesisProblem& prob, const ThetaHat& target) { synthesis_lmi_lhs(prob, target); }

}  // namespace

ThetaHatProjection theta_hat_project(const SynthesisProblem& prob, const ThetaHat& target, const ProjectOptions& opts) {
  require(opts.beta >= 1.0, ErrorCode::InvalidArgument, "backoff factor must be >= 1");
  check_target(prob, target);

  SdpProblem first;
  const ThetaHatVars v1 = add_theta_hat_vars(first, prob, opts.lti);
  add_set_constraints(first, prob, v1.e);
  first.add_psd(coupling(prob, v1.e), prob.eps, "coupling");
  const Variable tau = add_frobenius_epigraph(first, stacked_difference(v1.e, target));
  first.minimize(first.expr(tau));
  const SdpSolution s1 = solve_sdp(first, opts.sdp);
  if (!s1.feasible()) {
    throw Error(ErrorCode::InfeasibleConstraintSet, "no feasible convexified controller for this plant and supply rate");
  }
  ThetaHatProjection out;
  out.theta_hat = read_theta_hat(v1, s1);
  out.delta_star = theta_hat_distance(out.theta_hat, target);
  out.distance = out.delta_star;
  out.eps_rs = theta_hat_margins(prob, out.theta_hat).coupling;

  // Stage two: widest coupling margin within the backed-off distance. The
  // small slack keeps the distance ball from collapsing onto the stage-one
  // optimum when beta = 1; points the solver returns outside beta * delta* +
  // kDistanceSlack are discarded.
  constexpr double kDistanceSlack = 1e-6;
  const Eigen::Index np = prob.n_p();
  const double radius = opts.beta * out.delta_star + 0.2 * kDistanceSlack;
  SdpProblem second;
  const ThetaHatVars v2 = add_theta_hat_vars(second, prob, opts.lti);
  add_set_constraints(second, prob, v2.e);
  const Variable eps_rs = second.add_scalar("eps_RS");
  const AffineExpr er = second.expr(eps_rs);
  second.add_psd(coupling(prob, v2.e) - scale(er, eye(2 * np)), 0.0, "coupling");
  second.add_nonneg(er - AffineExpr(Mat::Constant(1, 1, prob.eps)), "eps_RS >= eps");
  second.add_nonneg(AffineExpr(Mat::Constant(1, 1, opts.eps_rs_cap)) - er, "eps_RS <= cap");
  second.add_soc(AffineExpr(Mat::Constant(1, 1, radius)), stacked_difference(v2.e, target), "distance");
  second.maximize(er);
  SdpSolution s2;
  try {
    s2 = solve_sdp(second, opts.sdp);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SolverNumericalFailure) throw;
    return out;
  }
  if (!s2.feasible()) return out;
  const ThetaHat th2 = read_theta_hat(v2, s2);
  const ThetaHatMargins m2 = theta_hat_margins(prob, th2);
  const double margin_ok = -tol::kFeas;
  const bool valid = m2.lmi >= margin_ok && m2.S >= margin_ok && m2.R >= margin_ok && m2.lambda >= tol::kLambdaMin * 0.5 &&
                     m2.wellposed >= margin_ok;
  const double d2 = theta_hat_distance(th2, target);
  if (valid && m2.coupling >= out.eps_rs && d2 <= opts.beta * out.delta_star + kDistanceSlack) {
    out.theta_hat = th2;
    out.distance = d2;
    out.eps_rs = m2.coupling;
  }
  return out;
}

ThetaProjection theta_project(const SynthesisProblem& prob, const RinnController& target, const Mat& P,
                              const Mat& Lambda, const SdpOptions& sdp_opts) {
  const UncertainLtiPlant& p = prob.plant;
  const RinnController shape = prob.controller_shape();
  require(target.n_k() == shape.n_k() && target.n_phi() == shape.n_phi() && target.n_y() == shape.n_y() &&
              target.n_u() == shape.n_u(),
          ErrorCode::DimensionMismatch, "controller shape does not match the synthesis problem");
  require_shape(P, p.n_p() + shape.n_k(), p.n_p() + shape.n_k(), "P");
  const CombinedParts c = combined_parts(prob, Lambda);
  const Vec theta0 = flatten(target);

  for (double margin : {prob.eps, 0.0}) {
    SdpProblem sdp;
    const Variable th = sdp.add_variable(theta_size(shape), 1, VarKind::Full, "theta");
    const ControllerBlocks<AffineExpr> k = controller_expr(shape, th.offset);
    const SystemBlocks<AffineExpr> cl = close_loop_blocks<AffineExpr>(p, k);
    sdp.add_nsd(bmi_lhs_t<AffineExpr>(cl, P, c.M_vw, c.M_ww, c.L_delta, prob.X, prob.L_X), margin, "dissipation");
    if (prob.n_phi > 0) {
      const AffineExpr ld = Lambda * k.D_kvw;
      sdp.add_nsd(ld + transpose(ld) - AffineExpr(Mat(2.0 * Lambda)), margin, "well-posedness");
    }
    const Variable tau = add_frobenius_epigraph(sdp, sdp.expr(th) - AffineExpr(Mat(theta0)));
    sdp.minimize(sdp.expr(tau));
    const SdpSolution sol = solve_sdp(sdp, sdp_opts);
    if (!sol.feasible()) continue;
    ThetaProjection out;
    out.k = unflatten(sol.value(th), shape);
    out.k.activation = target.activation;
    out.distance = theta_distance(out.k, target);
    out.margin = margin;
    return out;
  }
  throw Error(ErrorCode::InfeasibleForCertificate, "no controller is certified by the given storage and multiplier");
}

InitResult init_lti(const SynthesisProblem& prob, const ProjectOptions& opts) {
  const Eigen::Index np = prob.n_p(), nk = prob.n_phi;
  const RinnController zero = prob.controller_shape();
  const ThetaHat seed = construct_theta_hat(prob, zero, eye(2 * np), tol::kLambdaMin * eye(nk));
  ProjectOptions o = opts;
  o.lti = true;
  InitResult r;
  r.projection = theta_hat_project(prob, seed, o);
  const Reconstruction rec = reconstruct_theta(prob, r.projection.theta_hat);
  r.k = rec.k;
  r.P = rec.P;
  r.Lambda = rec.Lambda;
  return r;
}

double closed_loop_residual(const SynthesisProblem& prob, const RinnController& k, const Mat& P, const Mat& Lambda) {
  const UncertainLtiSystem cl = close_loop(prob.plant, k);
  const CombinedMultiplier m = combine_multipliers(prob.M_dp, prob.n_vp(), Lambda);
  return lambda_max(lemma1_lhs(cl, m.M(), prob.X, P));
}

}  // namespace dissipic
