#pragma once

#include <optional>
#include <tuple>

#include "dissipic/certify.hpp"
#include "dissipic/interconnect.hpp"

namespace dissipic {

/// Convexifying variables. N_A is stored by its four blocks
/// [[N_A11 (n_p x n_p), N_A12 (n_p x n_y)], [N_A21 (n_u x n_p), N_A22 (n_u x n_y)]].
template <class T>
struct ThetaHatBlocks {
  T S, R;
  T N_A11, N_A12, N_A21, N_A22;
  T N_B, N_C;
  T D_kuw, Dh_kvy, Dh_kvw;
  T Lambda;

  std::array<const T*, 12> blocks() const {
    return {&S, &R, &N_A11, &N_A12, &N_A21, &N_A22, &N_B, &N_C, &D_kuw, &Dh_kvy, &Dh_kvw, &Lambda};
  }
  std::array<T*, 12> blocks() {
    return {&S, &R, &N_A11, &N_A12, &N_A21, &N_A22, &N_B, &N_C, &D_kuw, &Dh_kvy, &Dh_kvw, &Lambda};
  }
};

inline constexpr std::array<const char*, 12> kThetaHatBlockNames = {
    "S", "R", "N_A11", "N_A12", "N_A21", "N_A22", "N_B", "N_C", "D_kuw", "Dhat_kvy", "Dhat_kvw", "Lambda"};

struct ThetaHat : ThetaHatBlocks<Mat> {
  Mat N_A() const { return block_matrix({{N_A11, N_A12}, {N_A21, N_A22}}); }
};

double theta_hat_distance(const ThetaHat& a, const ThetaHat& b);

/// Plant in static-IQC form together with everything the synthesis LMIs need.
struct SynthesisProblem {
  UncertainLtiPlant plant;
  Mat M_dp;
  SupplyRate X;
  Eigen::Index n_phi = 0;
  Activation activation = Activation::Tanh;
  double t_rs = 1.0;
  /// Margin for the strict inequalities.
  double eps = tol::kStrict;

  // Factors with L_dp' L_dp = M_dp,vv and L_X' L_X = -X_ee.
  Mat L_dp, L_X;

  Eigen::Index n_p() const { return plant.n_p(); }
  Eigen::Index n_vp() const { return plant.n_v(); }
  Eigen::Index n_wp() const { return plant.n_w(); }
  Mat Mp_vv() const { return M_dp.topLeftCorner(n_vp(), n_vp()); }
  Mat Mp_vw() const { return M_dp.topRightCorner(n_vp(), n_wp()); }
  Mat Mp_ww() const { return M_dp.bottomRightCorner(n_wp(), n_wp()); }
  IqcSpec plant_iqc() const { return IqcSpec::quadratic(M_dp, n_vp(), IqcKind::StaticIqc); }
  RinnController controller_shape() const;

  /// Checks shapes, X_ee <= 0 and M_dp,vv >= 0, and computes the factors.
  static SynthesisProblem make(const UncertainLtiPlant& plant, const Mat& M_dp, const SupplyRate& X, Eigen::Index n_phi,
                               double t_rs = 1.0, Activation act = Activation::Tanh);
};

/// Extends and transforms a plant with a dynamic IQC; returns the plant in
/// static form and its multiplier diag(I, -I). Static multipliers pass through.
std::pair<UncertainLtiPlant, Mat> plant_static_form(const UncertainLtiPlant& plant, const IqcSpec& iqc);

/// Schur-complemented dissipation inequality
///   [[F, L'], [L, -I]],  L = [[L_delta [C_v, D_vw, D_vd]], [L_X [C_e, D_ew, D_ed]]]
/// where F keeps the off-diagonal and w-w parts of M and the d-d / d-e parts of X.
/// Affine in the system blocks for fixed P and multipliers.
template <class T>
T bmi_lhs_t(const SystemBlocks<T>& s, const Mat& P, const Mat& M_vw, const Mat& M_ww, const Mat& L_delta,
            const SupplyRate& X, const Mat& L_X) {
  const Eigen::Index n = s.n(), nw = s.n_w(), nd = s.n_d(), k = n + nw + nd;
  Mat sel_x = Mat::Zero(n, k), sel_w = Mat::Zero(nw, k), sel_d = Mat::Zero(nd, k);
  sel_x.leftCols(n) = eye(n);
  sel_w.middleCols(n, nw) = eye(nw);
  sel_d.rightCols(nd) = eye(nd);
  const T ab = block_matrix(std::vector<std::vector<T>>{{s.A, s.B_w, s.B_d}});
  const T g = block_matrix(std::vector<std::vector<T>>{{s.C_v, s.D_vw, s.D_vd}});
  const T h = block_matrix(std::vector<std::vector<T>>{{s.C_e, s.D_ew, s.D_ed}});
  const T flow = T(sel_x.transpose() * P * ab);
  const T cross_m = T(sel_w.transpose() * M_vw.transpose() * g);
  const T cross_x = T(sel_d.transpose() * X.X_de * h);
  const T F = flow + transpose(flow) + cross_m + transpose(cross_m) + T(Mat(sel_w.transpose() * M_ww * sel_w)) -
              T(Mat(sel_d.transpose() * X.X_dd * sel_d)) - cross_x - transpose(cross_x);
  const T L = block_matrix(std::vector<std::vector<T>>{{L_delta * g}, {L_X * h}});
  const Eigen::Index nl = L.rows();
  return block_matrix(std::vector<std::vector<T>>{{F, transpose(L)}, {L, T(Mat(-eye(nl)))}});
}

/// Numeric form for a closed loop with the combined multiplier of (M_dp, Lambda).
Mat bmi_lhs(const SynthesisProblem& prob, const UncertainLtiSystem& closed_loop, const Mat& P, const Mat& Lambda);

/// The congruence-transformed inequality assembled directly from the
/// convexifying variables; affine in them.
template <class T>
T synthesis_lmi_lhs_t(const SynthesisProblem& prob, const ThetaHatBlocks<T>& th) {
  const UncertainLtiPlant& p = prob.plant;
  const Eigen::Index np = p.n_p(), nd = p.n_d(), nwp = p.n_w(), nk = prob.n_phi;
  const Eigen::Index nw = nwp + nk, k = 2 * np + nw + nd;
  using Rows = std::vector<std::vector<T>>;
  const T& S = th.S;
  const T& R = th.R;

  const T ypay = block_matrix(Rows{{p.A_p * R + p.B_pu * th.N_A21, p.A_p + p.B_pu * th.N_A22 * p.C_py},
                                   {th.N_A11, S * p.A_p + th.N_A12 * p.C_py}});
  const T ypbw = block_matrix(Rows{{p.B_pw + p.B_pu * th.N_A22 * p.D_pyw, p.B_pu * th.D_kuw},
                                   {S * p.B_pw + th.N_A12 * p.D_pyw, th.N_B}});
  const T ypbd = block_matrix(Rows{{p.B_pd + p.B_pu * th.N_A22 * p.D_pyd}, {S * p.B_pd + th.N_A12 * p.D_pyd}});

  // Plant rows of [C_v Y, D_vw, D_vd] and the Lambda-scaled controller rows.
  const T gp = block_matrix(Rows{{p.C_pv * R + p.D_pvu * th.N_A21, p.C_pv + p.D_pvu * th.N_A22 * p.C_py,
                                  p.D_pvw + p.D_pvu * th.N_A22 * p.D_pyw, p.D_pvu * th.D_kuw,
                                  p.D_pvd + p.D_pvu * th.N_A22 * p.D_pyd}});
  const T gk = block_matrix(Rows{{th.N_C, th.Dh_kvy * p.C_py, th.Dh_kvy * p.D_pyw, th.Dh_kvw, th.Dh_kvy * p.D_pyd}});
  const T ey = block_matrix(Rows{{p.C_pe * R + p.D_peu * th.N_A21, p.C_pe + p.D_peu * th.N_A22 * p.C_py,
                                  p.D_pew + p.D_peu * th.N_A22 * p.D_pyw, p.D_peu * th.D_kuw,
                                  p.D_ped + p.D_peu * th.N_A22 * p.D_pyd}});

  Mat sel_x = Mat::Zero(2 * np, k), sel_w = Mat::Zero(nw, k), sel_d = Mat::Zero(nd, k);
  sel_x.leftCols(2 * np) = eye(2 * np);
  sel_w.middleCols(2 * np, nw) = eye(nw);
  sel_d.rightCols(nd) = eye(nd);
  const T flow = T(sel_x.transpose() * block_matrix(Rows{{ypay, ypbw, ypbd}}));
  const T mg = block_matrix(Rows{{Mat(prob.Mp_vw().transpose()) * gp}, {gk}});
  const T cross_m = T(sel_w.transpose() * mg);
  const T m_ww = block_matrix(Rows{{T(prob.Mp_ww()), zero_like<T>(nwp, nk)}, {zero_like<T>(nk, nwp), -2.0 * th.Lambda}});
  const T cross_x = T(sel_d.transpose() * prob.X.X_de * ey);
  const T F = flow + transpose(flow) + cross_m + transpose(cross_m) + sel_w.transpose() * m_ww * sel_w -
              T(Mat(sel_d.transpose() * prob.X.X_dd * sel_d)) - cross_x - transpose(cross_x);
  const T L = block_matrix(Rows{{prob.L_dp * gp}, {prob.L_X * ey}});
  const Eigen::Index nl = L.rows();
  return block_matrix(Rows{{F, transpose(L)}, {L, T(Mat(-eye(nl)))}});
}

Mat synthesis_lmi_lhs(const SynthesisProblem& prob, const ThetaHat& th);

/// P = [[S, U], [U', *]], P^-1 = [[R, V], [V', *]]; the variables follow from
/// (theta, P, Lambda). Throws SingularPartition if I - RS is numerically
/// singular while the controller state is coupled to anything.
ThetaHat construct_theta_hat(const SynthesisProblem& prob, const RinnController& k, const Mat& P, const Mat& Lambda);

struct Reconstruction {
  RinnController k;
  Mat P;
  Mat Lambda;
  Mat U, V;
};

/// Recovers (theta, P, Lambda) with V U' = I - RS split by the SVD.
Reconstruction reconstruct_theta(const SynthesisProblem& prob, const ThetaHat& th);

struct ProjectOptions {
  double beta = 1.0;
  /// Fix N_B, N_C, D_kuw, Dhat_kvy, Dhat_kvw at zero (LTI controller).
  bool lti = false;
  double eps_rs_cap = 10.0;
  SdpOptions sdp;
};

struct ThetaHatProjection {
  ThetaHat theta_hat;
  double delta_star = 0.0;  // stage-one minimum distance
  double distance = 0.0;    // distance of the returned point
  double eps_rs = 0.0;      // coupling margin achieved in stage two
};

/// Stage one finds the nearest feasible point (distance delta*); stage two
/// maximizes the coupling margin within beta * delta*. Throws
/// InfeasibleConstraintSet when no feasible point exists.
ThetaHatProjection theta_hat_project(const SynthesisProblem& prob, const ThetaHat& target, const ProjectOptions& opts = {});

/// Margins of a point with respect to the constraint set (all >= 0 when feasible).
struct ThetaHatMargins {
  double lmi = 0.0;          // -lambda_max(LHS)
  double S = 0.0, R = 0.0;   // lambda_min
  double coupling = 0.0;     // lambda_min([[R, t I], [t I, S]])
  double lambda = 0.0;       // min Lambda_ii
  double wellposed = 0.0;    // -lambda_max(Dh_kvw + Dh_kvw' - 2 Lambda)
};
ThetaHatMargins theta_hat_margins(const SynthesisProblem& prob, const ThetaHat& th);

struct ThetaProjection {
  RinnController k;
  double distance = 0.0;
  double margin = 0.0;  // strictness margin the solution was found with
};

/// Nearest controller certified by the fixed (P, Lambda). Throws
/// InfeasibleForCertificate if no controller is certified by them.
ThetaProjection theta_project(const SynthesisProblem& prob, const RinnController& target, const Mat& P,
                              const Mat& Lambda, const SdpOptions& sdp = {});

struct InitResult {
  RinnController k;
  Mat P;
  Mat Lambda;
  ThetaHatProjection projection;
};

/// LTI controller from projecting the variables of theta = 0, P = I,
/// Lambda = eps I onto the LTI-restricted feasible set.
InitResult init_lti(const SynthesisProblem& prob, const ProjectOptions& opts = {});

/// Dissipation-inequality residual (lambda_max) of a closed loop under (P, Lambda), lambda = 1.
double closed_loop_residual(const SynthesisProblem& prob, const RinnController& k, const Mat& P, const Mat& Lambda);

}  // namespace dissipic
