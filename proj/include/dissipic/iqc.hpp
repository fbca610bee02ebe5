#pragma once

#include <string>

#include "dissipic/system_models.hpp"

namespace dissipic {

enum class IqcKind { QC, StaticIqc, DynamicIqc };

const char* to_string(IqcKind k);
IqcKind iqc_kind_from_string(const std::string& s);

/// Uncertainty description w = Delta(v). For QC/static kinds M acts on (v, w);
/// for the dynamic kind M = diag(I, -I) acts on (Psi1 v, Psi2 w).
struct IqcSpec {
  IqcKind kind = IqcKind::QC;
  Mat M;
  Eigen::Index n_v = 0;
  Eigen::Index n_w = 0;
  StateSpace psi1, psi2;

  /// Rows/cols of M that belong to the first (v-side) channel.
  Eigen::Index n_z1() const { return kind == IqcKind::DynamicIqc ? psi1.outputs() : n_v; }
  Mat M_vv() const { return M.topLeftCorner(n_z1(), n_z1()); }
  Mat M_vw() const { return M.topRightCorner(n_z1(), M.cols() - n_z1()); }
  Mat M_ww() const { return M.bottomRightCorner(M.rows() - n_z1(), M.cols() - n_z1()); }

  void validate() const;

  static IqcSpec quadratic(const Mat& M, Eigen::Index n_v, IqcKind kind = IqcKind::QC);
  /// Dynamic IQC with filters Psi1 on v and Psi2 on w; M = diag(I, -I).
  static IqcSpec dynamic(const StateSpace& psi1, const StateSpace& psi2);
};

/// [[0, Lambda], [Lambda, -2 Lambda]] for the sector [0, 1].
Mat sector_multiplier(const Mat& Lambda);

bool qc_holds(const Mat& M, const Vec& v, const Vec& w);

/// scale * diag(gain^2 I_{n_v}, -I_{n_w})
Mat norm_bound_multiplier(double gain, double scale, Eigen::Index n_v, Eigen::Index n_w);

/// Multiplier for the combined uncertainty diag(Delta_p, phi) with channels
/// ordered plant first: v = (v_p, v_k), w = (w_p, w_k).
template <class T>
T combined_multiplier(const T& Mp_vv, const T& Mp_vw, const T& Mp_ww, const T& Lambda) {
  const Eigen::Index nvp = Mp_vv.rows(), nwp = Mp_ww.rows(), nk = Lambda.rows();
  auto z = [](Eigen::Index r, Eigen::Index c) { return zero_like<T>(r, c); };
  return block_matrix(std::vector<std::vector<T>>{
      {Mp_vv, z(nvp, nk), Mp_vw, z(nvp, nk)},
      {z(nk, nvp), z(nk, nk), z(nk, nwp), Lambda},
      {transpose(Mp_vw), z(nwp, nk), Mp_ww, z(nwp, nk)},
      {z(nk, nvp), Lambda, z(nk, nwp), -2.0 * Lambda},
  });
}

struct CombinedMultiplier {
  Mat M_vv, M_vw, M_ww;
  Mat L_delta;  // L_delta^T L_delta = M_vv

  Mat M() const;
};

CombinedMultiplier combine_multipliers(const Mat& M_dp, Eigen::Index n_vp, const Mat& Lambda);

}  // namespace dissipic
