#pragma once

#include <array>
#include <complex>
#include <string>

#include "dissipic/affine_expr.hpp"

namespace dissipic {

enum class Activation { Tanh, Relu, Zero };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

double activate(Activation a, double v);
double activate_slope(Activation a, double v);

/// Uncertain LTI plant. The (y, u) feedthrough is structurally zero.
struct UncertainLtiPlant {
  Mat A_p, B_pw, B_pd, B_pu;
  Mat C_pv, D_pvw, D_pvd, D_pvu;
  Mat C_pe, D_pew, D_ped, D_peu;
  Mat C_py, D_pyw, D_pyd;

  Eigen::Index n_p() const { return A_p.rows(); }
  Eigen::Index n_v() const { return C_pv.rows(); }
  Eigen::Index n_w() const { return B_pw.cols(); }
  Eigen::Index n_d() const { return B_pd.cols(); }
  Eigen::Index n_e() const { return C_pe.rows(); }
  Eigen::Index n_u() const { return B_pu.cols(); }
  Eigen::Index n_y() const { return C_py.rows(); }

  void validate() const;
  static UncertainLtiPlant zeros(Eigen::Index n_p, Eigen::Index n_v, Eigen::Index n_w, Eigen::Index n_d,
                                 Eigen::Index n_e, Eigen::Index n_u, Eigen::Index n_y);
};

/// x' = A x + B_w w + B_d d,  v = C_v x + D_vw w + D_vd d,  e = C_e x + D_ew w + D_ed d.
template <class T>
struct SystemBlocks {
  T A, B_w, B_d;
  T C_v, D_vw, D_vd;
  T C_e, D_ew, D_ed;

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index n_v() const { return C_v.rows(); }
  Eigen::Index n_w() const { return B_w.cols(); }
  Eigen::Index n_d() const { return B_d.cols(); }
  Eigen::Index n_e() const { return C_e.rows(); }
};

using UncertainLtiSystem = SystemBlocks<Mat>;

void validate(const UncertainLtiSystem& s);

/// Stacked [[A, B_w, B_d], [C_v, D_vw, D_vd], [C_e, D_ew, D_ed]].
Mat stacked(const UncertainLtiSystem& s);

SystemBlocks<Mat> evaluate(const SystemBlocks<AffineExpr>& s, const Vec& y);

template <class T>
struct ControllerBlocks {
  T A_k, B_kw, B_ky;
  T C_kv, D_kvw, D_kvy;
  T C_ku, D_kuw, D_kuy;

  std::array<const T*, 9> blocks() const { return {&A_k, &B_kw, &B_ky, &C_kv, &D_kvw, &D_kvy, &C_ku, &D_kuw, &D_kuy}; }
  std::array<T*, 9> blocks() { return {&A_k, &B_kw, &B_ky, &C_kv, &D_kvw, &D_kvy, &C_ku, &D_kuw, &D_kuy}; }
};

inline constexpr std::array<const char*, 9> kControllerBlockNames = {"A_k",  "B_kw", "B_ky", "C_kv", "D_kvw",
                                                                     "D_kvy", "C_ku", "D_kuw", "D_kuy"};

/// Recurrent implicit neural network controller:
///   x_k' = A_k x_k + B_kw w_k + B_ky y
///   v_k  = C_kv x_k + D_kvw w_k + D_kvy y,   w_k = phi(v_k)
///   u    = C_ku x_k + D_kuw w_k + D_kuy y
struct RinnController : ControllerBlocks<Mat> {
  Activation activation = Activation::Tanh;

  Eigen::Index n_k() const { return A_k.rows(); }
  Eigen::Index n_phi() const { return C_kv.rows(); }
  Eigen::Index n_y() const { return B_ky.cols(); }
  Eigen::Index n_u() const { return C_ku.rows(); }

  void validate() const;
  static RinnController zeros(Eigen::Index n_k, Eigen::Index n_phi, Eigen::Index n_y, Eigen::Index n_u,
                              Activation act = Activation::Tanh);
};

using Theta = RinnController;

/// Column-major concatenation of the nine blocks in declaration order.
Vec flatten(const RinnController& k);
/// Inverse of flatten; shapes and activation taken from `shape`.
RinnController unflatten(const Vec& v, const RinnController& shape);
int theta_size(const RinnController& k);
double theta_distance(const RinnController& a, const RinnController& b);

/// Controller blocks as affine expressions of consecutive scalars starting at `offset`.
ControllerBlocks<AffineExpr> controller_expr(const RinnController& shape, int offset);
ControllerBlocks<AffineExpr> controller_constant(const RinnController& k);

struct SupplyRate {
  Mat X_dd, X_de, X_ee;

  Mat X() const;
  Eigen::Index n_d() const { return X_dd.rows(); }
  Eigen::Index n_e() const { return X_ee.rows(); }
  void validate() const;

  static SupplyRate from_matrix(const Mat& x, Eigen::Index n_d);
  static SupplyRate zero(Eigen::Index n_d, Eigen::Index n_e);
  /// gamma2 * |d|^2 - |e|^2
  static SupplyRate l2_gain(double gamma2, Eigen::Index n_d, Eigen::Index n_e);
};

double supply_value(const SupplyRate& x, const Vec& d, const Vec& e);

struct StorageCertificate {
  Mat P;
  Mat Lambda;
  double lambda_p = 1.0;
  double feasibility_residual = 0.0;
};

struct FixedPointCfg {
  double alpha = 0.5;
  double tol = 1e-10;
  int max_iter = 500;
};

struct ControllerOutput {
  Vec u;
  Vec w_k;
  Vec v_k;
  Vec dx_k;
  int iterations = 0;
  double residual = 0.0;
};

/// Solves the implicit layer and evaluates the controller outputs.
ControllerOutput eval_controller(const RinnController& k, const Vec& x_k, const Vec& y, const FixedPointCfg& fp = {});

/// lambda_max(Lambda D_kvw + D_kvw^T Lambda - 2 Lambda) < -tol::kStrict
bool check_wellposed(const RinnController& k, const Mat& Lambda);

UncertainLtiSystem plant_to_system(const UncertainLtiPlant& p);
UncertainLtiSystem plant_to_system(const UncertainLtiPlant& p, const RinnController& k);

/// Plain LTI realization x' = A x + B u, y = C x + D u.
struct StateSpace {
  Mat A, B, C, D;

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index inputs() const { return D.cols(); }
  Eigen::Index outputs() const { return D.rows(); }

  void validate() const;
  static StateSpace gain(const Mat& d);
  std::complex<double> freq(double omega, Eigen::Index out = 0, Eigen::Index in = 0) const;
  Eigen::MatrixXcd freq_matrix(double omega) const;
};

bool is_hurwitz(const Mat& a, double margin = 0.0);

/// second(first(u)).
StateSpace series(const StateSpace& first, const StateSpace& second);
/// Realization of the inverse system; D must be invertible.
StateSpace inverse(const StateSpace& s, ErrorCode on_singular = ErrorCode::InvalidArgument);
StateSpace block_diag(const StateSpace& a, const StateSpace& b);

}  // namespace dissipic
