#include "dissipic/conic_solver.hpp"

#include <cmath>
#include <algorithm>
#include <cstdio>
#include <limits>

namespace dissipic {

int ConeDims::size() const {
  int n = l;
  for (int k : q) n += k;
  for (int k : s) n += k * k;
  return n;
}

int ConeDims::degree() const {
  int n = l + static_cast<int>(q.size());
  for (int k : s) n += k;
  return n;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Offsets {
  std::vector<int> q, s;
};

Offsets offsets_of(const ConeDims& d) {
  Offsets o;
  int off = d.l;
  for (int k : d.q) {
    o.q.push_back(off);
    off += k;
  }
  for (int k : d.s) {
    o.s.push_back(off);
    off += k * k;
  }
  return o;
}

using MapMat = Eigen::Map<Mat>;
using CMapMat = Eigen::Map<const Mat>;

Vec identity_of(const ConeDims& d, const Offsets& o) {
  Vec e = Vec::Zero(d.size());
  e.head(d.l).setOnes();
  for (int i : o.q) e(i) = 1.0;
  for (std::size_t k = 0; k < d.s.size(); ++k) {
    MapMat(e.data() + o.s[k], d.s[k], d.s[k]).setIdentity();
  }
  return e;
}

double soc_jnorm2(const Eigen::Ref<const Vec>& v) { return v(0) * v(0) - v.tail(v.size() - 1).squaredNorm(); }

// Largest alpha with x + alpha * d in the second-order cone, x interior.
double soc_max_step(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& d) {
  const Eigen::Index n = x.size();
  const double a = soc_jnorm2(d);
  const double b = x(0) * d(0) - x.tail(n - 1).dot(d.tail(n - 1));
  const double c = std::max(soc_jnorm2(x), 0.0);
  double best = kInf;
  auto consider = [&](double r) {
    if (r > 0.0 && r < best) best = r;
  };
  if (std::abs(a) <= 1e-300 * (1.0 + std::abs(b))) {
    if (b < 0.0) consider(-c / (2.0 * b));
  } else {
    const double disc = b * b - a * c;
    if (disc >= 0.0) {
      const double q = -(b + std::copysign(std::sqrt(disc), b));
      if (q != 0.0) {
        consider(q / a);
        consider(c / q);
      }
    }
  }
  // The cone boundary also includes x0 + alpha d0 = 0 when the quadratic is degenerate.
  if (d(0) < 0.0 && best == kInf) consider(-x(0) / d(0));
  return best;
}

struct Scaling {
  Vec lp;
  std::vector<double> eta;
  std::vector<Vec> w;  // normalized hyperbolic scaling vectors
  std::vector<Mat> r, rinv;
  Vec lambda;
};

enum class Op { W, WT, Winv, WinvT };

void apply_inplace(const Scaling& sc, const ConeDims& d, const Offsets& o, Op op, Eigen::Ref<Vec> v) {
  if (d.l > 0) {
    if (op == Op::W || op == Op::WT)
      v.head(d.l).array() *= sc.lp.array();
    else
      v.head(d.l).array() /= sc.lp.array();
  }
  for (std::size_t k = 0; k < d.q.size(); ++k) {
    const int n = d.q[k];
    auto seg = v.segment(o.q[k], n);
    const Vec& w = sc.w[k];
    const double w0 = w(0);
    const auto w1 = w.tail(n - 1);
    const double v0 = seg(0);
    const double a = w1.dot(seg.tail(n - 1));
    if (op == Op::W || op == Op::WT) {
      seg(0) = sc.eta[k] * (w0 * v0 + a);
      seg.tail(n - 1) = sc.eta[k] * (seg.tail(n - 1) + (v0 + a / (1.0 + w0)) * w1);
    } else {
      seg(0) = (w0 * v0 - a) / sc.eta[k];
      seg.tail(n - 1) = (seg.tail(n - 1) + (a / (1.0 + w0) - v0) * w1) / sc.eta[k];
    }
  }
  for (std::size_t k = 0; k < d.s.size(); ++k) {
    const int n = d.s[k];
    MapMat x(v.data() + o.s[k], n, n);
    Mat out;
    switch (op) {
      case Op::W: out = sc.r[k].transpose() * x * sc.r[k]; break;
      case Op::WT: out = sc.r[k] * x * sc.r[k].transpose(); break;
      case Op::Winv: out = sc.rinv[k].transpose() * x * sc.rinv[k]; break;
      case Op::WinvT: out = sc.rinv[k] * x * sc.rinv[k].transpose(); break;
    }
    x = out;
  }
}

Vec apply(const Scaling& sc, const ConeDims& d, const Offsets& o, Op op, Vec v) {
  apply_inplace(sc, d, o, op, v);
  return v;
}

// Symmetric square-root factor F with F F^T = X (X assumed positive definite).
bool psd_factor(const Mat& x, Mat& f) {
  Eigen::LLT<Mat> llt(x);
  if (llt.info() == Eigen::Success) {
    f = llt.matrixL();
    if (f.diagonal().minCoeff() > 0.0) return true;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(x);
  if (es.info() != Eigen::Success || es.eigenvalues()(0) <= 0.0) return false;
  f = es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal();
  return true;
}

bool compute_scaling(const Vec& s, const Vec& z, const ConeDims& d, const Offsets& o, Scaling& sc) {
  sc.lambda = Vec::Zero(s.size());
  if (d.l > 0) {
    if ((s.head(d.l).array() <= 0.0).any() || (z.head(d.l).array() <= 0.0).any()) return false;
    sc.lp = (s.head(d.l).array() / z.head(d.l).array()).sqrt();
    sc.lambda.head(d.l) = (s.head(d.l).array() * z.head(d.l).array()).sqrt();
  }
  sc.eta.clear();
  sc.w.clear();
  for (std::size_t k = 0; k < d.q.size(); ++k) {
    const int n = d.q[k];
    const Vec sk = s.segment(o.q[k], n);
    const Vec zk = z.segment(o.q[k], n);
    const double sn2 = soc_jnorm2(sk);
    const double zn2 = soc_jnorm2(zk);
    if (!(sn2 > 0.0 && zn2 > 0.0 && sk(0) > 0.0 && zk(0) > 0.0)) return false;
    const double sn = std::sqrt(sn2);
    const double zn = std::sqrt(zn2);
    const Vec sb = sk / sn;
    const Vec zb = zk / zn;
    const double gamma = std::sqrt(0.5 * (1.0 + sb.dot(zb)));
    Vec w(n);
    w(0) = (sb(0) + zb(0)) / (2.0 * gamma);
    w.tail(n - 1) = (sb.tail(n - 1) - zb.tail(n - 1)) / (2.0 * gamma);
    sc.eta.push_back(std::sqrt(sn / zn));
    sc.w.push_back(w);
  }
  sc.r.clear();
  sc.rinv.clear();
  for (std::size_t k = 0; k < d.s.size(); ++k) {
    const int n = d.s[k];
    const Mat sk = symmetrize(CMapMat(s.data() + o.s[k], n, n));
    const Mat zk = symmetrize(CMapMat(z.data() + o.s[k], n, n));
    Mat l1, l2;
    if (!psd_factor(sk, l1) || !psd_factor(zk, l2)) return false;
    Eigen::JacobiSVD<Mat> svd(l2.transpose() * l1, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec sig = svd.singularValues();
    if (sig.minCoeff() <= 0.0) return false;
    const Vec isq = sig.cwiseSqrt().cwiseInverse();
    sc.r.push_back(l1 * svd.matrixV() * isq.asDiagonal());
    sc.rinv.push_back(isq.asDiagonal() * svd.matrixU().transpose() * l2.transpose());
    MapMat(sc.lambda.data() + o.s[k], n, n) = sig.asDiagonal();
  }
  // The hyperbolic blocks of lambda are obtained by scaling z.
  for (std::size_t k = 0; k < d.q.size(); ++k) {
    const int n = d.q[k];
    Vec zk = z.segment(o.q[k], n);
    ConeDims one;
    one.q = {n};
    Offsets oo{{0}, {}};
    Scaling tmp;
    tmp.eta = {sc.eta[k]};
    tmp.w = {sc.w[k]};
    apply_inplace(tmp, one, oo, Op::W, zk);
    sc.lambda.segment(o.q[k], n) = zk;
  }
  return true;
}

// Jordan product u o v.
Vec jordan(const Vec& u, const Vec& v, const ConeDims& d, const Offsets& o) {
  Vec out(u.size());
  out.head(d.l) = u.head(d.l).cwiseProduct(v.head(d.l));
  for (std::size_t k = 0; k < d.q.size(); ++k) {
    const int n = d.q[k];
    const auto a = u.segment(o.q[k], n);
    const auto b = v.segment(o.q[k], n);
    out(o.q[k]) = a.dot(b);
    out.segment(o.q[k] + 1, n - 1) = a(0) * b.tail(n - 1) + b(0) * a.tail(n - 1);
  }
  for (std::size_t k = 0; k < d.s.size(); ++k) {
    const int n = d.s[k];
    const CMapMat a(u.data() + o.s[k], n, n);
    const CMapMat b(v.data() + o.s[k], n, n);
    MapMat(out.data() + o.s[k], n, n) = 0.5 * (a * b + b * a);
  }
  return out;
}

// Solves lambda o x = b for the scaled point lambda (PSD blocks diagonal).
Vec jordan_div(const Vec& lam, const Vec& b, const ConeDims& d, const Offsets& o) {
  Vec out(b.size());
  out.head(d.l) = b.head(d.l).cwiseQuotient(lam.head(d.l));
  for (std::size_t k = 0; k < d.q.size(); ++k) {
    const int n = d.q[k];
    const auto l = lam.segment(o.q[k], n);
    const auto bb = b.segment(o.q[k], n);
    const double det = soc_jnorm2(l);
    const double x0 = (l(0) * bb(0) - l.tail(n - 1).dot(bb.tail(n - 1))) / det;
    out(o.q[k]) = x0;
    out.segment(o.q[k] + 1, n - 1) = (bb.tail(n - 1) - x0 * l.tail(n - 1)) / l(0);
  }
  for (std::size_t k = 0; k < d.s.size(); ++k) {
    const int n = d.s[k];
    const CMapMat bb(b.data() + o.s[k], n, n);
    MapMat x(out.data() + o.s[k], n, n);
    for (int j = 0; j < n; ++j) {
      const double lj = lam(o.s[k] + j * n + j);
      for (int i = 0; i < n; ++i) x(i, j) = 2.0 * bb(i, j) / (lam(o.s[k] + i * n + i) + lj);
    }
  }
  return out;
}

// Largest step alpha with lam + alpha * dir in K (lam is the scaled point).
double max_step_scaled(const Vec& lam, const Vec& dir, const ConeDims& d, const Offsets& o) {
  double best = kInf;
  for (int i = 0; i < d.l; ++i) {
    if (dir(i) < 0.0) best = std::min(best, -lam(i) / dir(i));
  }
  for (std::size_t k = 0; k < d.q.size(); ++k) {
    best = std::min(best, soc_max_step(lam.segment(o.q[k], d.q[k]), dir.segment(o.q[k], d.q[k])));
  }
  for (std::size_t k = 0; k < d.s.size(); ++k) {
    const int n = d.s[k];
    const CMapMat dm(dir.data() + o.s[k], n, n);
    Vec isq(n);
    for (int i = 0; i < n; ++i) isq(i) = 1.0 / std::sqrt(lam(o.s[k] + i * n + i));
    const Mat m = isq.asDiagonal() * symmetrize(dm) * isq.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues()(0);
    if (lmin < 0.0) best = std::min(best, -1.0 / lmin);
  }
  return best;
}

}  // namespace

double cone_min_eig(const Vec& v, const ConeDims& d) {
  const Offsets o = offsets_of(d);
  double m = kInf;
  if (d.l > 0) m = v.head(d.l).minCoeff();
  for (std::size_t k = 0; k < d.q.size(); ++k) {
    const int n = d.q[k];
    m = std::min(m, v(o.q[k]) - v.segment(o.q[k] + 1, n - 1).norm());
  }
  for (std::size_t k = 0; k < d.s.size(); ++k) {
    const int n = d.s[k];
    const Mat x = symmetrize(CMapMat(v.data() + o.s[k], n, n));
    Eigen::SelfAdjointEigenSolver<Mat> es(x, Eigen::EigenvaluesOnly);
    m = std::min(m, es.eigenvalues()(0));
  }
  return m;
}

ConicResult solve_conic(const ConicProblem& prob, const ConicOptions& opts) {
  const ConeDims& d = prob.dims;
  const Offsets o = offsets_of(d);
  const Eigen::Index m = d.size();
  const Eigen::Index n = prob.G.cols();
  require(prob.G.rows() == m && prob.h.size() == m && prob.c.size() == n, ErrorCode::DimensionMismatch,
          "conic problem data sizes are inconsistent");
  const Vec e = identity_of(d, o);
  const double hnorm = std::max(1.0, prob.h.norm());
  const double cnorm = std::max(1.0, prob.c.norm());
  const double degree = std::max(1, d.degree());

  ConicResult res;

  // Starting point: least-squares x, least-norm z, both shifted into the cone.
  Eigen::HouseholderQR<Mat> qr0(prob.G);
  const Mat r0 = qr0.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  if (n > 0 && (r0.diagonal().cwiseAbs().minCoeff() <= 1e-14 * std::max(1.0, r0.diagonal().cwiseAbs().maxCoeff()))) {
    throw Error(ErrorCode::SolverNumericalFailure, "constraint matrix is rank deficient");
  }
  Vec x = qr0.solve(prob.h);
  Vec s = prob.h - prob.G * x;
  Vec z;
  {
    const Vec y = r0.transpose().triangularView<Eigen::Lower>().solve(-prob.c);
    Vec padded = Vec::Zero(m);
    padded.head(n) = y;
    z = qr0.householderQ() * padded;
  }
  auto shift = [&](Vec& v) {
    const double t = -cone_min_eig(v, d);
    if (t >= -1e-8 * std::max(1.0, v.norm())) v += (1.0 + t) * e;
  };
  shift(s);
  shift(z);

  Scaling sc;
  ConicResult best;
  double best_score = kInf;
  int since_best = 0;
  auto finish_best = [&](ConicStatus fallback) {
    best.status = best_score <= opts.near_tol ? ConicStatus::NearOptimal : fallback;
    return best;
  };
  for (int it = 0; it <= opts.max_iter; ++it) {
    const Vec rx = prob.G.transpose() * z + prob.c;
    const Vec rz = prob.G * x + s - prob.h;
    res.pcost = prob.c.dot(x);
    res.dcost = -prob.h.dot(z);
    res.gap = s.dot(z);
    res.pres = rz.norm() / hnorm;
    res.dres = rx.norm() / cnorm;
    res.iterations = it;
    res.x = x;
    res.s = s;
    res.z = z;
    double relgap = kInf;
    if (res.dcost < 0.0)
      relgap = res.gap / -res.dcost;
    else if (res.pcost > 0.0)
      relgap = res.gap / res.pcost;
    if (opts.verbose) {
      std::fprintf(stderr, "%3d pcost % .8e dcost % .8e gap %.2e pres %.2e dres %.2e\n", it, res.pcost, res.dcost,
                   res.gap, res.pres, res.dres);
    }
    if (res.pres <= opts.feastol && res.dres <= opts.feastol && (res.gap <= opts.abstol || relgap <= opts.reltol)) {
      res.status = ConicStatus::Optimal;
      return res;
    }
    if (opts.has_stop_below && res.pres <= opts.feastol && res.pcost <= opts.stop_below) {
      res.status = ConicStatus::StoppedEarly;
      return res;
    }
    const double score = std::max({res.pres, res.dres, std::min(std::abs(res.gap), std::abs(relgap))});
    if (score < best_score) {
      best_score = score;
      best = res;
      since_best = 0;
    } else if (++since_best >= 6 && best_score <= opts.near_tol) {
      return finish_best(ConicStatus::MaxIterations);
    }
    if (it == opts.max_iter) break;

    if (!compute_scaling(s, z, d, o, sc)) return finish_best(ConicStatus::NumericalFailure);
    const Vec& lam = sc.lambda;

    Mat gh = prob.G;
    for (Eigen::Index j = 0; j < n; ++j) apply_inplace(sc, d, o, Op::WinvT, gh.col(j));
    Eigen::HouseholderQR<Mat> qr(gh);
    const Mat rr = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    if (!rr.allFinite() || rr.diagonal().cwiseAbs().minCoeff() <= 1e-300) return finish_best(ConicStatus::NumericalFailure);
    auto solve_normal = [&](const Vec& rhs) {
      const Vec y = rr.transpose().triangularView<Eigen::Lower>().solve(rhs);
      return Vec(rr.triangularView<Eigen::Upper>().solve(y));
    };

    struct Dir {
      Vec dx, dz, ds, dzt, dst;
    };
    auto kkt = [&](const Vec& bx, const Vec& bz, const Vec& bs) {
      Dir out;
      const Vec t = apply(sc, d, o, Op::WinvT, bz) - jordan_div(lam, bs, d, o);
      const Vec rhs = bx + gh.transpose() * t;
      out.dx = solve_normal(rhs);
      // One step of iterative refinement on the normal equations.
      const Vec resid = rhs - gh.transpose() * (gh * out.dx);
      out.dx += solve_normal(resid);
      out.dzt = gh * out.dx - t;
      out.dz = apply(sc, d, o, Op::Winv, out.dzt);
      // Taking ds from the linear equation keeps the primal residual exact.
      out.ds = bz - prob.G * out.dx;
      out.dst = apply(sc, d, o, Op::WinvT, out.ds);
      return out;
    };

    const Vec lamsq = jordan(lam, lam, d, o);
    const double mu = res.gap / degree;
    const Dir aff = kkt(-rx, -rz, -lamsq);
    const double a_aff =
        std::min(1.0, std::min(max_step_scaled(lam, aff.dst, d, o), max_step_scaled(lam, aff.dzt, d, o)));
    const double sigma = std::pow(1.0 - a_aff, 3);

    const Vec bs = -lamsq - jordan(aff.dst, aff.dzt, d, o) + sigma * mu * e;
    const Dir dir = kkt(-rx, -rz, bs);
    double alpha = std::min(max_step_scaled(lam, dir.dst, d, o), max_step_scaled(lam, dir.dzt, d, o));
    alpha = std::min(1.0, opts.step_fraction * alpha);
    if (!(alpha > 0.0) || !dir.dx.allFinite()) return finish_best(ConicStatus::NumericalFailure);
    if (opts.verbose) std::fprintf(stderr, "    step %.3e  affine %.3e  sigma %.2e\n", alpha, a_aff, sigma);
    x += alpha * dir.dx;
    s += alpha * dir.ds;
    z += alpha * dir.dz;
  }
  return finish_best(ConicStatus::MaxIterations);
}

}  // namespace dissipic
