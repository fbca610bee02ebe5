#pragma once

#include <optional>

#include "dissipic/iqc.hpp"
#include "dissipic/sdp.hpp"
#include "dissipic/simulate.hpp"

namespace dissipic {

/// Left-hand side of the static-IQC dissipation inequality
///   [[A'P + PA, PB_w, PB_d], [B_w'P, 0, 0], [B_d'P, 0, 0]]
///   + G' M G - H' X H,   G = [[C_v, D_vw, D_vd], [0, I, 0]],  H = [[0, 0, I], [C_e, D_ew, D_ed]]
/// with any IQC scaling already folded into M. Written once for numeric and
/// affine (decision-variable) P and M.
template <class T>
T lemma1_lhs_t(const UncertainLtiSystem& s, const T& M, const Mat& X, const T& P) {
  const Eigen::Index n = s.n(), nw = s.n_w(), nd = s.n_d(), nv = s.n_v(), ne = s.n_e();
  const Eigen::Index k = n + nw + nd;
  Mat sel_x = Mat::Zero(n, k);
  sel_x.leftCols(n) = eye(n);
  const Mat ab = block_matrix({{s.A, s.B_w, s.B_d}});
  const Mat g = block_matrix({{s.C_v, s.D_vw, s.D_vd}, {zeros(nw, n), eye(nw), zeros(nw, nd)}});
  const Mat h = block_matrix({{zeros(nd, n), zeros(nd, nw), eye(nd)}, {s.C_e, s.D_ew, s.D_ed}});
  require(M.rows() == nv + nw && M.cols() == nv + nw, ErrorCode::DimensionMismatch, "multiplier size");
  require(X.rows() == nd + ne && X.cols() == nd + ne, ErrorCode::DimensionMismatch, "supply rate size");
  require(P.rows() == n && P.cols() == n, ErrorCode::DimensionMismatch, "storage matrix size");
  const T flow = T(sel_x.transpose() * P * ab);
  return flow + transpose(flow) + T(g.transpose() * M * g) - T(Mat(h.transpose() * X * h));
}

Mat lemma1_lhs(const UncertainLtiSystem& s, const Mat& M, const SupplyRate& X, const Mat& P, double lambda = 1.0);

struct VerifyOptions {
  /// Impose P >= eps I and LHS <= -eps I; without it P >= 0 and LHS <= 0.
  bool strict = true;
  double eps = tol::kStrict;
  /// Use lambda = 1 (scaling absorbed into the plant multiplier) instead of a decision variable.
  bool fix_lambda = false;
  /// Lower bound on the controller multiplier entries.
  double lambda_k_min = 0.0;
  SdpOptions sdp;
};

/// Static problem actually certified: for dynamic IQCs, the extended and
/// transformed system with M = diag(I, -I) on the plant channels.
struct CertificationProblem {
  UncertainLtiSystem sys;
  Mat M_dp;
  Eigen::Index n_vp = 0;
  Eigen::Index n_phi = 0;
  bool extended = false;
};

/// Checks shapes and, for a dynamic plant IQC, extends and transforms the
/// closed loop with identity filters on the n_phi controller channels.
CertificationProblem certification_problem(const UncertainLtiSystem& sys, const IqcSpec& plant_iqc, Eigen::Index n_phi);

/// Combined multiplier of a certification problem for given lambda_p, Lambda.
Mat combined_M(const CertificationProblem& prob, double lambda_p, const Mat& Lambda);

struct VerifyResult {
  std::optional<StorageCertificate> cert;
  CertificationProblem problem;
  double phase1_margin = 0.0;

  bool feasible() const { return cert.has_value(); }
};

/// Searches for P, lambda_p in [0, 1e6] and diagonal Lambda >= 0 satisfying the
/// dissipation inequality. Throws SolverNumericalFailure on solver breakdown.
VerifyResult verify(const UncertainLtiSystem& sys, const IqcSpec& plant_iqc, Eigen::Index n_phi, const SupplyRate& X,
                    const VerifyOptions& opts = {});

/// lambda_max of the dissipation inequality at a given certificate.
double certificate_residual(const CertificationProblem& prob, const SupplyRate& X, const StorageCertificate& cert);

/// S(x(T)) - S(x(0)) - integral of s(d, e) along a simulated trajectory. The
/// integral uses the trapezoidal rule per step with d held, so e at the end of
/// each step is recomputed through the loop nonlinearity.
double trajectory_dissipation_residual(const UncertainLtiSystem& sys, const StaticNonlinearity& delta,
                                       const StorageCertificate& cert, const SupplyRate& X, const Trajectory& traj,
                                       const FixedPointCfg& fp = {});

}  // namespace dissipic
