#include "dissipic/iqc.hpp"

#include "dissipic/matrix_core.hpp"

namespace dissipic {

const char* to_string(IqcKind k) {
  switch (k) {
    case IqcKind::QC: return "qc";
    case IqcKind::StaticIqc: return "static";
    case IqcKind::DynamicIqc: return "dynamic";
  }
  return "?";
}

IqcKind iqc_kind_from_string(const std::string& s) {
  if (s == "qc") return IqcKind::QC;
  if (s == "static") return IqcKind::StaticIqc;
  if (s == "dynamic") return IqcKind::DynamicIqc;
  throw Error(ErrorCode::ConfigError, "unknown IQC kind '" + s + "'");
}

void IqcSpec::validate() const {
  check_symmetric(M, "IQC multiplier");
  if (kind == IqcKind::DynamicIqc) {
    psi1.validate();
    psi2.validate();
    require(psi1.inputs() == n_v && psi2.inputs() == n_w, ErrorCode::DimensionMismatch,
            "filter inputs must match the uncertainty channels");
    require(M.rows() == psi1.outputs() + psi2.outputs(), ErrorCode::DimensionMismatch, "multiplier size");
    require(is_hurwitz(psi1.A) && is_hurwitz(psi2.A), ErrorCode::InvalidArgument, "IQC filters must be stable");
    if (condition_number(psi2.D) > 1e8) throw Error(ErrorCode::SingularDpsi2, "D_psi2 is not invertible");
  } else {
    require(M.rows() == n_v + n_w, ErrorCode::DimensionMismatch,
            "multiplier is " + std::to_string(M.rows()) + "x" + std::to_string(M.cols()) + ", channels " +
                std::to_string(n_v) + "+" + std::to_string(n_w));
  }
}

IqcSpec IqcSpec::quadratic(const Mat& M, Eigen::Index n_v, IqcKind kind) {
  require(kind != IqcKind::DynamicIqc, ErrorCode::InvalidArgument, "use IqcSpec::dynamic for filtered IQCs");
  IqcSpec s;
  s.kind = kind;
  s.M = M;
  s.n_v = n_v;
  s.n_w = M.rows() - n_v;
  s.validate();
  return s;
}

IqcSpec IqcSpec::dynamic(const StateSpace& psi1, const StateSpace& psi2) {
  IqcSpec s;
  s.kind = IqcKind::DynamicIqc;
  s.psi1 = psi1;
  s.psi2 = psi2;
  s.n_v = psi1.inputs();
  s.n_w = psi2.inputs();
  s.M = block_diag({eye(psi1.outputs()), -eye(psi2.outputs())});
  s.validate();
  return s;
}

Mat sector_multiplier(const Mat& Lambda) {
  require(Lambda.rows() == Lambda.cols(), ErrorCode::NonSquare, "Lambda must be square");
  require(Lambda.isDiagonal(0.0), ErrorCode::NotDiagonal, "Lambda must be diagonal");
  require(Lambda.size() == 0 || Lambda.diagonal().minCoeff() >= 0.0, ErrorCode::InvalidArgument,
          "Lambda entries must be nonnegative");
  const Eigen::Index n = Lambda.rows();
  return block_matrix({{Mat::Zero(n, n), Lambda}, {Lambda, -2.0 * Lambda}});
}

bool qc_holds(const Mat& M, const Vec& v, const Vec& w) {
  require(M.rows() == v.size() + w.size() && M.cols() == M.rows(), ErrorCode::DimensionMismatch,
          "multiplier does not match signal sizes");
  Vec z(v.size() + w.size());
  z << v, w;
  return z.dot(M * z) >= -1e-12 * (v.squaredNorm() + w.squaredNorm());
}

Mat norm_bound_multiplier(double gain, double scale, Eigen::Index n_v, Eigen::Index n_w) {
  require(gain > 0.0 && scale > 0.0, ErrorCode::InvalidArgument, "gain and scale must be positive");
  return scale * block_diag({gain * gain * eye(n_v), -eye(n_w)});
}

Mat CombinedMultiplier::M() const { return block_matrix({{M_vv, M_vw}, {M_vw.transpose(), M_ww}}); }

CombinedMultiplier combine_multipliers(const Mat& M_dp, Eigen::Index n_vp, const Mat& Lambda) {
  check_symmetric(M_dp, "plant multiplier");
  require(n_vp >= 0 && n_vp <= M_dp.rows(), ErrorCode::DimensionMismatch, "plant channel partition");
  require(Lambda.isDiagonal(0.0), ErrorCode::NotDiagonal, "Lambda must be diagonal");
  const Eigen::Index nwp = M_dp.rows() - n_vp, nk = Lambda.rows();
  const Mat pvv = M_dp.topLeftCorner(n_vp, n_vp);
  const Mat pvw = M_dp.topRightCorner(n_vp, nwp);
  const Mat pww = M_dp.bottomRightCorner(nwp, nwp);
  if (!is_psd(pvv, 1e-12)) throw Error(ErrorCode::MvvNotPsd, "plant multiplier M_vv block is not PSD");
  CombinedMultiplier c;
  c.M_vv = block_diag({pvv, Mat::Zero(nk, nk)});
  c.M_vw = block_diag({pvw, Lambda});
  c.M_ww = block_diag({pww, -2.0 * Lambda});
  const Mat lp = factor_gram(pvv);
  c.L_delta = block_matrix({{lp, Mat::Zero(lp.rows(), nk)}});
  return c;
}

}  // namespace dissipic
