#pragma once

#include "dissipic/system_models.hpp"

namespace dissipic {

/// Closed loop of plant and controller with x = (x_p, x_k), v = (v_p, v_k),
/// w = (w_p, w_k). Written once for numeric (Mat) and affine (AffineExpr)
/// controller blocks; the result is affine in the controller.
template <class T>
SystemBlocks<T> close_loop_blocks(const UncertainLtiPlant& p, const ControllerBlocks<T>& k) {
  const Mat& Bpu = p.B_pu;
  const Mat& Dpvu = p.D_pvu;
  const Mat& Dpeu = p.D_peu;
  const Mat& Cpy = p.C_py;
  const Mat& Dpyw = p.D_pyw;
  const Mat& Dpyd = p.D_pyd;
  const T DkuyCpy = k.D_kuy * Cpy;
  const T DkuyDpyw = k.D_kuy * Dpyw;
  const T DkuyDpyd = k.D_kuy * Dpyd;

  SystemBlocks<T> s;
  s.A = block_matrix(std::vector<std::vector<T>>{{p.A_p + Bpu * DkuyCpy, Bpu * k.C_ku}, {k.B_ky * Cpy, k.A_k}});
  s.B_w = block_matrix(
      std::vector<std::vector<T>>{{p.B_pw + Bpu * DkuyDpyw, Bpu * k.D_kuw}, {k.B_ky * Dpyw, k.B_kw}});
  s.B_d = block_matrix(std::vector<std::vector<T>>{{p.B_pd + Bpu * DkuyDpyd}, {k.B_ky * Dpyd}});
  s.C_v = block_matrix(
      std::vector<std::vector<T>>{{p.C_pv + Dpvu * DkuyCpy, Dpvu * k.C_ku}, {k.D_kvy * Cpy, k.C_kv}});
  s.D_vw = block_matrix(
      std::vector<std::vector<T>>{{p.D_pvw + Dpvu * DkuyDpyw, Dpvu * k.D_kuw}, {k.D_kvy * Dpyw, k.D_kvw}});
  s.D_vd = block_matrix(std::vector<std::vector<T>>{{p.D_pvd + Dpvu * DkuyDpyd}, {k.D_kvy * Dpyd}});
  s.C_e = block_matrix(std::vector<std::vector<T>>{{p.C_pe + Dpeu * DkuyCpy, Dpeu * k.C_ku}});
  s.D_ew = block_matrix(std::vector<std::vector<T>>{{p.D_pew + Dpeu * DkuyDpyw, Dpeu * k.D_kuw}});
  s.D_ed = T(p.D_ped + Dpeu * DkuyDpyd);
  return s;
}

void check_compatible(const UncertainLtiPlant& p, const RinnController& k);

UncertainLtiSystem close_loop(const UncertainLtiPlant& p, const RinnController& k);

/// Same interconnection computed by eliminating u and y numerically for each
/// basis input; shares no formulas with close_loop.
UncertainLtiSystem close_loop_oracle(const UncertainLtiPlant& p, const RinnController& k);

/// Closed-loop blocks as affine functions of the flattened controller parameters.
struct ClosedLoopAffineMap {
  SystemBlocks<AffineExpr> blocks;
  RinnController shape;
  int offset = 0;

  UncertainLtiSystem evaluate(const RinnController& k) const;
  UncertainLtiSystem constant() const;
};

ClosedLoopAffineMap closed_loop_affine_map(const UncertainLtiPlant& p, const RinnController& shape, int offset = 0);

}  // namespace dissipic
