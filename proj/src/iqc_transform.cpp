#include "dissipic/iqc_transform.hpp"

#include "dissipic/matrix_core.hpp"
#include "dissipic/simulate.hpp"

namespace dissipic {

ExtendedSystem extend(const UncertainLtiSystem& s, const IqcSpec& iqc) {
  validate(s);
  require(iqc.kind == IqcKind::DynamicIqc, ErrorCode::InvalidArgument, "extension needs a dynamic IQC");
  const StateSpace& f1 = iqc.psi1;
  const StateSpace& f2 = iqc.psi2;
  require(f1.inputs() == s.n_v() && f2.inputs() == s.n_w(), ErrorCode::DimensionMismatch,
          "filters take " + std::to_string(f1.inputs()) + "/" + std::to_string(f2.inputs()) +
              " inputs, system has n_v=" + std::to_string(s.n_v()) + ", n_w=" + std::to_string(s.n_w()));
  const Eigen::Index n = s.n(), n1 = f1.n(), n2 = f2.n(), ne = s.n_e();
  ExtendedSystem e;
  e.n_x = n;
  e.n_psi1 = n1;
  e.n_psi2 = n2;
  UncertainLtiSystem& x = e.sys;
  x.A = block_matrix({{s.A, zeros(n, n1), zeros(n, n2)},
                      {f1.B * s.C_v, f1.A, zeros(n1, n2)},
                      {zeros(n2, n), zeros(n2, n1), f2.A}});
  x.B_w = block_matrix({{s.B_w}, {f1.B * s.D_vw}, {f2.B}});
  x.B_d = block_matrix({{s.B_d}, {f1.B * s.D_vd}, {zeros(n2, s.n_d())}});
  x.C_v = block_matrix({{f1.D * s.C_v, f1.C, zeros(f1.outputs(), n2)}});
  x.D_vw = f1.D * s.D_vw;
  x.D_vd = f1.D * s.D_vd;
  x.C_e = block_matrix({{s.C_e, zeros(ne, n1), zeros(ne, n2)}});
  x.D_ew = s.D_ew;
  x.D_ed = s.D_ed;
  e.C_v_orig = block_matrix({{s.C_v, zeros(s.n_v(), n1), zeros(s.n_v(), n2)}});
  e.D_vw_orig = s.D_vw;
  e.D_vd_orig = s.D_vd;
  return e;
}

UncertainLtiSystem transform(const ExtendedSystem& ext, const IqcSpec& iqc) {
  const StateSpace& f2 = iqc.psi2;
  require(f2.D.rows() == f2.D.cols(), ErrorCode::SingularDpsi2, "D_psi2 must be square");
  if (condition_number(f2.D) > 1e8) throw Error(ErrorCode::SingularDpsi2, "D_psi2 is singular or ill-conditioned");
  const UncertainLtiSystem& s = ext.sys;
  const Eigen::Index nt = s.n(), nw = s.n_w(), nd = s.n_d();
  require(f2.inputs() == nw && f2.n() == ext.n_psi2, ErrorCode::DimensionMismatch, "filter does not match extension");
  const Mat dinv = f2.D.inverse();
  // T maps (x~, w~, d) to (x~, w, d).
  Mat t_xw = Mat::Zero(nw, nt);
  t_xw.rightCols(ext.n_psi2) = -dinv * f2.C;
  const Mat T = block_matrix({{eye(nt), zeros(nt, f2.outputs()), zeros(nt, nd)},
                              {t_xw, dinv, zeros(nw, nd)},
                              {zeros(nd, nt), zeros(nd, f2.outputs()), eye(nd)}});
  const Mat top = block_matrix({{s.A, s.B_w, s.B_d}}) * T;
  const Mat mid = block_matrix({{s.C_v, s.D_vw, s.D_vd}}) * T;
  const Mat bot = block_matrix({{s.C_e, s.D_ew, s.D_ed}}) * T;
  const Eigen::Index nwt = f2.outputs();
  UncertainLtiSystem out;
  out.A = top.leftCols(nt);
  out.B_w = top.middleCols(nt, nwt);
  out.B_d = top.rightCols(nd);
  out.C_v = mid.leftCols(nt);
  out.D_vw = mid.middleCols(nt, nwt);
  out.D_vd = mid.rightCols(nd);
  out.C_e = bot.leftCols(nt);
  out.D_ew = bot.middleCols(nt, nwt);
  out.D_ed = bot.rightCols(nd);
  return out;
}

IqcSpec pad_with_identity(const IqcSpec& plant_iqc, Eigen::Index n_extra) {
  require(plant_iqc.kind == IqcKind::DynamicIqc, ErrorCode::InvalidArgument, "padding applies to dynamic IQCs");
  const StateSpace id = StateSpace::gain(eye(n_extra));
  IqcSpec s = plant_iqc;
  s.psi1 = block_diag(plant_iqc.psi1, id);
  s.psi2 = block_diag(plant_iqc.psi2, id);
  s.n_v = s.psi1.inputs();
  s.n_w = s.psi2.inputs();
  s.M = block_diag({eye(s.psi1.outputs()), -eye(s.psi2.outputs())});
  return s;
}

Mat tilde_delta_response(const IqcSpec& iqc, const StateSpace& delta, const Mat& v_tilde, double dt) {
  require(iqc.kind == IqcKind::DynamicIqc, ErrorCode::InvalidArgument, "needs a dynamic IQC");
  const StateSpace psi1_inv = inverse(iqc.psi1, ErrorCode::SingularDpsi1);
  const StateSpace chain = series(series(psi1_inv, delta), iqc.psi2);
  return simulate_lti(chain, Vec::Zero(chain.n()), v_tilde, dt).outputs;
}

}  // namespace dissipic
