#include "dissipic/interconnect.hpp"

namespace dissipic {

void check_compatible(const UncertainLtiPlant& p, const RinnController& k) {
  p.validate();
  k.validate();
  if (k.n_y() != p.n_y() || k.n_u() != p.n_u()) {
    throw Error(ErrorCode::DimensionMismatch, "controller is " + std::to_string(k.n_u()) + "x" +
                                                  std::to_string(k.n_y()) + " (u x y), plant expects " +
                                                  std::to_string(p.n_u()) + "x" + std::to_string(p.n_y()));
  }
}

UncertainLtiSystem close_loop(const UncertainLtiPlant& p, const RinnController& k) {
  check_compatible(p, k);
  return close_loop_blocks<Mat>(p, k);
}

UncertainLtiSystem close_loop_oracle(const UncertainLtiPlant& p, const RinnController& k) {
  check_compatible(p, k);
  const Eigen::Index np = p.n_p(), nk = k.n_k(), nvp = p.n_v(), nphi = k.n_phi();
  const Eigen::Index nwp = p.n_w(), nd = p.n_d(), ne = p.n_e(), nu = p.n_u(), ny = p.n_y();
  const Eigen::Index nin = np + nk + nwp + nphi + nd;
  const Eigen::Index nout = np + nk + nvp + nphi + ne;

  // Loop equations in the unknowns (y, u):  y = C_py x_p + D_pyw w_p + D_pyd d,
  // u = C_ku x_k + D_kuw w_k + D_kuy y.
  Mat loop = Mat::Identity(ny + nu, ny + nu);
  loop.block(ny, 0, nu, ny) = -k.D_kuy;
  const Eigen::PartialPivLU<Mat> lu(loop);

  Mat out(nout, nin);
  for (Eigen::Index j = 0; j < nin; ++j) {
    Vec xi = Vec::Zero(nin);
    xi(j) = 1.0;
    const Vec xp = xi.segment(0, np);
    const Vec xk = xi.segment(np, nk);
    const Vec wp = xi.segment(np + nk, nwp);
    const Vec wk = xi.segment(np + nk + nwp, nphi);
    const Vec d = xi.segment(np + nk + nwp + nphi, nd);

    Vec rhs(ny + nu);
    rhs.head(ny) = p.C_py * xp + p.D_pyw * wp + p.D_pyd * d;
    rhs.tail(nu) = k.C_ku * xk + k.D_kuw * wk;
    const Vec sol = lu.solve(rhs);
    const Vec y = sol.head(ny);
    const Vec u = sol.tail(nu);

    Vec col(nout);
    col.segment(0, np) = p.A_p * xp + p.B_pw * wp + p.B_pd * d + p.B_pu * u;
    col.segment(np, nk) = k.A_k * xk + k.B_kw * wk + k.B_ky * y;
    col.segment(np + nk, nvp) = p.C_pv * xp + p.D_pvw * wp + p.D_pvd * d + p.D_pvu * u;
    col.segment(np + nk + nvp, nphi) = k.C_kv * xk + k.D_kvw * wk + k.D_kvy * y;
    col.segment(np + nk + nvp + nphi, ne) = p.C_pe * xp + p.D_pew * wp + p.D_ped * d + p.D_peu * u;
    out.col(j) = col;
  }
  const Eigen::Index n = np + nk, nv = nvp + nphi, nw = nwp + nphi;
  UncertainLtiSystem s;
  s.A = out.block(0, 0, n, n);
  s.B_w = out.block(0, n, n, nw);
  s.B_d = out.block(0, n + nw, n, nd);
  s.C_v = out.block(n, 0, nv, n);
  s.D_vw = out.block(n, n, nv, nw);
  s.D_vd = out.block(n, n + nw, nv, nd);
  s.C_e = out.block(n + nv, 0, ne, n);
  s.D_ew = out.block(n + nv, n, ne, nw);
  s.D_ed = out.block(n + nv, n + nw, ne, nd);
  return s;
}

UncertainLtiSystem ClosedLoopAffineMap::evaluate(const RinnController& k) const {
  require(theta_size(k) == theta_size(shape), ErrorCode::DimensionMismatch, "controller shape differs from map");
  const Vec theta = flatten(k);
  Vec y = Vec::Zero(offset + theta.size());
  y.tail(theta.size()) = theta;
  return dissipic::evaluate(blocks, y);
}

UncertainLtiSystem ClosedLoopAffineMap::constant() const {
  return {blocks.A.constant(),    blocks.B_w.constant(), blocks.B_d.constant(),
          blocks.C_v.constant(),  blocks.D_vw.constant(), blocks.D_vd.constant(),
          blocks.C_e.constant(),  blocks.D_ew.constant(), blocks.D_ed.constant()};
}

ClosedLoopAffineMap closed_loop_affine_map(const UncertainLtiPlant& p, const RinnController& shape, int offset) {
  check_compatible(p, shape);
  return {close_loop_blocks<AffineExpr>(p, controller_expr(shape, offset)), shape, offset};
}

}  // namespace dissipic
