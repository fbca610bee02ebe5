#include "dissipic/certify.hpp"

#include "dissipic/iqc_transform.hpp"
#include "dissipic/matrix_core.hpp"

namespace dissipic {

Mat lemma1_lhs(const UncertainLtiSystem& s, const Mat& M, const SupplyRate& X, const Mat& P, double lambda) {
  validate(s);
  check_symmetric(M, "multiplier");
  check_symmetric(P, "storage matrix");
  X.validate();
  require(X.n_d() == s.n_d() && X.n_e() == s.n_e(), ErrorCode::DimensionMismatch, "supply rate channels");
  return lemma1_lhs_t<Mat>(s, Mat(lambda * M), X.X(), P);
}

CertificationProblem certification_problem(const UncertainLtiSystem& sys, const IqcSpec& plant_iqc,
                                           Eigen::Index n_phi) {
  validate(sys);
  plant_iqc.validate();
  require(n_phi >= 0, ErrorCode::InvalidArgument, "negative controller channel count");
  require(sys.n_v() == plant_iqc.n_v + n_phi && sys.n_w() == plant_iqc.n_w + n_phi, ErrorCode::DimensionMismatch,
          "system has n_v=" + std::to_string(sys.n_v()) + ", n_w=" + std::to_string(sys.n_w()) +
              "; plant IQC covers " + std::to_string(plant_iqc.n_v) + "/" + std::to_string(plant_iqc.n_w) +
              " plus " + std::to_string(n_phi) + " controller channels");
  CertificationProblem p;
  p.n_phi = n_phi;
  if (plant_iqc.kind != IqcKind::DynamicIqc) {
    p.sys = sys;
    p.M_dp = plant_iqc.M;
    p.n_vp = plant_iqc.n_v;
    return p;
  }
  const IqcSpec padded = pad_with_identity(plant_iqc, n_phi);
  p.sys = transform(extend(sys, padded), padded);
  p.n_vp = plant_iqc.psi1.outputs();
  p.M_dp = block_diag({eye(p.n_vp), -eye(plant_iqc.psi2.outputs())});
  p.extended = true;
  return p;
}

namespace {

Mat plant_part_M(const CertificationProblem& prob) {
  const Eigen::Index nvp = prob.n_vp, nwp = prob.M_dp.rows() - nvp, nk = prob.n_phi;
  return combined_multiplier<Mat>(prob.M_dp.topLeftCorner(nvp, nvp), prob.M_dp.topRightCorner(nvp, nwp),
                                  prob.M_dp.bottomRightCorner(nwp, nwp), Mat::Zero(nk, nk));
}

}  // namespace

Mat combined_M(const CertificationProblem& prob, double lambda_p, const Mat& Lambda) {
  const Eigen::Index nvp = prob.n_vp, nwp = prob.M_dp.rows() - nvp, nk = prob.n_phi;
  require_shape(Lambda, nk, nk, "Lambda");
  return lambda_p * plant_part_M(prob) +
         combined_multiplier<Mat>(zeros(nvp, nvp), zeros(nvp, nwp), zeros(nwp, nwp), Lambda);
}

double certificate_residual(const CertificationProblem& prob, const SupplyRate& X, const StorageCertificate& cert) {
  return lambda_max(lemma1_lhs(prob.sys, combined_M(prob, cert.lambda_p, cert.Lambda), X, cert.P));
}

VerifyResult verify(const UncertainLtiSystem& sys, const IqcSpec& plant_iqc, Eigen::Index n_phi, const SupplyRate& X,
                    const VerifyOptions& opts) {
  X.validate();
  require(X.n_d() == sys.n_d() && X.n_e() == sys.n_e(), ErrorCode::DimensionMismatch, "supply rate channels");
  VerifyResult res;
  res.problem = certification_problem(sys, plant_iqc, n_phi);
  const CertificationProblem& prob = res.problem;
  const Eigen::Index n = prob.sys.n(), nk = prob.n_phi, nvp = prob.n_vp, nwp = prob.M_dp.rows() - nvp;
  const bool has_plant_channels = prob.M_dp.rows() > 0;

  SdpProblem sdp;
  const Variable pv = sdp.add_variable(n, n, VarKind::Symmetric, "P");
  const AffineExpr P = sdp.expr(pv);
  std::optional<Variable> lam;
  AffineExpr M = AffineExpr(combined_multiplier<Mat>(zeros(nvp, nvp), zeros(nvp, nwp), zeros(nwp, nwp), zeros(nk, nk)));
  if (has_plant_channels) {
    if (opts.fix_lambda) {
      M += AffineExpr(plant_part_M(prob));
    } else {
      lam = sdp.add_scalar("lambda_p");
      const AffineExpr l = sdp.expr(*lam);
      sdp.add_nonneg(l, "lambda_p >= 0");
      sdp.add_nonneg(AffineExpr(Mat::Constant(1, 1, tol::kLambdaMax)) - l, "lambda_p <= max");
      M += scale(l, plant_part_M(prob));
    }
  }
  std::optional<Variable> lk;
  if (nk > 0) {
    lk = sdp.add_variable(nk, nk, VarKind::Diagonal, "Lambda");
    const AffineExpr L = sdp.expr(*lk);
    for (Eigen::Index i = 0; i < nk; ++i) {
      sdp.add_nonneg(L.block(i, i, 1, 1) - AffineExpr(Mat::Constant(1, 1, opts.lambda_k_min)), "Lambda_ii");
    }
    M += combined_multiplier<AffineExpr>(AffineExpr::zero(nvp, nvp), AffineExpr::zero(nvp, nwp),
                                         AffineExpr::zero(nwp, nwp), L);
  }
  const double margin = opts.strict ? opts.eps : 0.0;
  sdp.add_psd(P, margin, "P");
  sdp.add_nsd(lemma1_lhs_t<AffineExpr>(prob.sys, M, X.X(), P), margin, "dissipation");

  SdpOptions so = opts.sdp;
  const SdpSolution sol = solve_sdp(sdp, so);
  res.phase1_margin = sol.phase1_margin;
  if (!sol.feasible()) return res;
  StorageCertificate c;
  c.P = symmetrize(sol.value(pv));
  c.lambda_p = lam ? sol.scalar(*lam) : 1.0;
  c.Lambda = lk ? sol.value(*lk) : Mat::Zero(0, 0);
  c.feasibility_residual = certificate_residual(prob, X, c);
  res.cert = c;
  return res;
}

double trajectory_dissipation_residual(const UncertainLtiSystem& sys, const StaticNonlinearity& delta,
                                       const StorageCertificate& cert, const SupplyRate& X, const Trajectory& traj,
                                       const FixedPointCfg& fp) {
  validate(sys);
  require_shape(cert.P, sys.n(), sys.n(), "certificate P");
  require(traj.x.rows() == sys.n() && traj.d.rows() == sys.n_d(), ErrorCode::DimensionMismatch,
          "trajectory does not match the system");
  const Eigen::Index steps = traj.d.cols();
  require(traj.x.cols() == steps + 1, ErrorCode::DimensionMismatch, "trajectory needs N + 1 states");
  auto e_at = [&](const Vec& x, const Vec& d) -> Vec {
    const Vec w = solve_static_loop(sys.D_vw, sys.C_v * x + sys.D_vd * d, delta, fp);
    return sys.C_e * x + sys.D_ew * w + sys.D_ed * d;
  };
  double supplied = 0.0;
  for (Eigen::Index k = 0; k < steps; ++k) {
    const Vec d = traj.d.col(k);
    const double s0 = supply_value(X, d, e_at(traj.x.col(k), d));
    const double s1 = supply_value(X, d, e_at(traj.x.col(k + 1), d));
    supplied += 0.5 * traj.dt * (s0 + s1);
  }
  const Vec x0 = traj.x.col(0), xT = traj.x.col(steps);
  return xT.dot(cert.P * xT) - x0.dot(cert.P * x0) - supplied;
}

}  // namespace dissipic
