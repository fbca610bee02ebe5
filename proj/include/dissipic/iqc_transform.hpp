#pragma once

#include <functional>

#include "dissipic/iqc.hpp"

namespace dissipic {

/// System augmented with the IQC filter states, x~ = (x, psi1, psi2).
/// sys.C_v/D_vw/D_vd produce the filtered signal Psi1 v; the unfiltered
/// v-row of the original system is kept alongside for simulation.
struct ExtendedSystem {
  UncertainLtiSystem sys;
  Mat C_v_orig, D_vw_orig, D_vd_orig;
  Eigen::Index n_x = 0;
  Eigen::Index n_psi1 = 0;
  Eigen::Index n_psi2 = 0;
};

ExtendedSystem extend(const UncertainLtiSystem& sys, const IqcSpec& iqc);

/// Replaces the input w by w~ = Psi2 w, i.e. w = D_psi2^{-1} (w~ - C_psi2 psi2).
/// The result satisfies the static IQC diag(I, -I) on (Psi1 v, w~).
UncertainLtiSystem transform(const ExtendedSystem& ext, const IqcSpec& iqc);

/// Extends a closed loop whose first n_vp/n_wp channels belong to the plant;
/// controller channels pass through identity filters.
IqcSpec pad_with_identity(const IqcSpec& plant_iqc, Eigen::Index n_extra);

/// Samples of Psi2 Delta Psi1^{-1} applied to sampled v~ (zero initial filter
/// states, inputs held over each step of length dt).
Mat tilde_delta_response(const IqcSpec& iqc, const StateSpace& delta, const Mat& v_tilde, double dt);

}  // namespace dissipic
