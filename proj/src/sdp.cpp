#include "dissipic/sdp.hpp"

#include <cmath>

namespace dissipic {

Variable SdpProblem::add_variable(Eigen::Index rows, Eigen::Index cols, VarKind kind, std::string name) {
  require(rows >= 0 && cols >= 0, ErrorCode::InvalidArgument, "negative variable shape");
  if (kind != VarKind::Full) require(rows == cols, ErrorCode::NonSquare, "symmetric/diagonal variable must be square");
  Variable v;
  v.rows = rows;
  v.cols = cols;
  v.kind = kind;
  v.offset = num_scalars_;
  switch (kind) {
    case VarKind::Full: v.count = static_cast<int>(rows * cols); break;
    case VarKind::Symmetric: v.count = static_cast<int>(rows * (rows + 1) / 2); break;
    case VarKind::Diagonal: v.count = static_cast<int>(rows); break;
  }
  v.name = std::move(name);
  num_scalars_ += v.count;
  return v;
}

AffineExpr SdpProblem::expr(const Variable& v) const {
  std::vector<AffineExpr::Term> terms;
  terms.reserve(v.count);
  int k = v.offset;
  switch (v.kind) {
    case VarKind::Full:
      for (Eigen::Index j = 0; j < v.cols; ++j)
        for (Eigen::Index i = 0; i < v.rows; ++i) {
          Mat c = Mat::Zero(v.rows, v.cols);
          c(i, j) = 1.0;
          terms.push_back({k++, std::move(c)});
        }
      break;
    case VarKind::Symmetric:
      for (Eigen::Index j = 0; j < v.cols; ++j)
        for (Eigen::Index i = 0; i <= j; ++i) {
          Mat c = Mat::Zero(v.rows, v.cols);
          c(i, j) = 1.0;
          c(j, i) = 1.0;
          terms.push_back({k++, std::move(c)});
        }
      break;
    case VarKind::Diagonal:
      for (Eigen::Index i = 0; i < v.rows; ++i) {
        Mat c = Mat::Zero(v.rows, v.cols);
        c(i, i) = 1.0;
        terms.push_back({k++, std::move(c)});
      }
      break;
  }
  return AffineExpr::from_terms(Mat::Zero(v.rows, v.cols), std::move(terms));
}

Mat variable_value(const Variable& v, const Vec& y) {
  require(v.offset + v.count <= y.size(), ErrorCode::DimensionMismatch, "assignment too short for variable");
  Mat out = Mat::Zero(v.rows, v.cols);
  int k = v.offset;
  switch (v.kind) {
    case VarKind::Full:
      for (Eigen::Index j = 0; j < v.cols; ++j)
        for (Eigen::Index i = 0; i < v.rows; ++i) out(i, j) = y(k++);
      break;
    case VarKind::Symmetric:
      for (Eigen::Index j = 0; j < v.cols; ++j)
        for (Eigen::Index i = 0; i <= j; ++i) {
          out(i, j) = y(k);
          out(j, i) = y(k++);
        }
      break;
    case VarKind::Diagonal:
      for (Eigen::Index i = 0; i < v.rows; ++i) out(i, i) = y(k++);
      break;
  }
  return out;
}

Mat SdpSolution::value(const Variable& v) const { return variable_value(v, y); }

void SdpProblem::check_vars(const AffineExpr& e) const {
  for (const auto& t : e.terms()) {
    require(t.var >= 0 && t.var < num_scalars_, ErrorCode::InvalidArgument,
            "constraint references undeclared variable " + std::to_string(t.var));
  }
}

void SdpProblem::add_psd(const AffineExpr& e, double margin, std::string label) {
  require(e.rows() == e.cols(), ErrorCode::NonSquare, "PSD constraint on a non-square expression");
  check_vars(e);
  if (e.rows() == 0) return;
  AffineExpr sym = symmetric_part(e);
  if (margin != 0.0) sym -= AffineExpr(Mat(margin * eye(e.rows())));
  constraints_.push_back({ConeKind::Psd, std::move(sym), std::move(label)});
}

void SdpProblem::add_nsd(const AffineExpr& e, double margin, std::string label) {
  add_psd(-e, margin, std::move(label));
}

void SdpProblem::add_nonneg(const AffineExpr& e, std::string label) {
  check_vars(e);
  if (e.rows() * e.cols() == 0) return;
  constraints_.push_back({ConeKind::Nonneg, vec(e), std::move(label)});
}

void SdpProblem::add_soc(const AffineExpr& t, const AffineExpr& v, std::string label) {
  require(t.rows() == 1 && t.cols() == 1, ErrorCode::DimensionMismatch, "cone bound must be scalar");
  check_vars(t);
  check_vars(v);
  const AffineExpr col = vec(v);
  constraints_.push_back({ConeKind::Soc, affine_block_matrix({{t}, {col}}), std::move(label)});
}

void SdpProblem::minimize(const AffineExpr& objective) {
  require(objective.rows() == 1 && objective.cols() == 1, ErrorCode::DimensionMismatch, "objective must be scalar");
  check_vars(objective);
  objective_ = objective;
  has_objective_ = true;
}

AffineExpr vec(const AffineExpr& e) {
  const Eigen::Index n = e.rows() * e.cols();
  const Mat c = e.constant().reshaped(n, 1);
  std::vector<AffineExpr::Term> terms;
  terms.reserve(e.terms().size());
  for (const auto& t : e.terms()) terms.push_back({t.var, t.coeff.reshaped(n, 1)});
  return AffineExpr::from_terms(c, std::move(terms));
}

Variable add_frobenius_epigraph(SdpProblem& p, const AffineExpr& diff, std::string name) {
  Variable tau = p.add_scalar(std::move(name));
  p.add_soc(p.expr(tau), diff);
  return tau;
}

namespace {

struct Assembled {
  ConicProblem cp;
  // Row ranges of user constraints, in the order they appear in the cone vector.
  std::vector<std::pair<int, int>> user_rows;
};

// Builds  min c^T [y; t]  s.t.  h - G [y; t] in K  with the ball constraint appended.
Assembled assemble(const SdpProblem& p, bool phase1, double radius) {
  const int n = p.num_scalars();
  const int nx = n + (phase1 ? 1 : 0);
  ConeDims dims;
  std::vector<const SdpProblem::Constraint*> lp, soc, psd;
  for (const auto& c : p.constraints()) {
    switch (c.kind) {
      case SdpProblem::ConeKind::Nonneg:
        lp.push_back(&c);
        dims.l += static_cast<int>(c.expr.rows());
        break;
      case SdpProblem::ConeKind::Soc:
        soc.push_back(&c);
        dims.q.push_back(static_cast<int>(c.expr.rows()));
        break;
      case SdpProblem::ConeKind::Psd:
        psd.push_back(&c);
        dims.s.push_back(static_cast<int>(c.expr.rows()));
        break;
    }
  }
  const bool ball = n > 0;
  if (ball) dims.q.push_back(n + 1);
  // The ball sits between the user cones and the PSD blocks in storage order.
  const int m = dims.size();
  Assembled out;
  ConicProblem& cp = out.cp;
  cp.dims = dims;
  cp.G = Mat::Zero(m, nx);
  cp.h = Vec::Zero(m);
  cp.c = Vec::Zero(nx);

  int row = 0;
  auto put_vector = [&](const AffineExpr& e, bool lp_block) {
    const int k = static_cast<int>(e.rows());
    cp.h.segment(row, k) = e.constant().col(0);
    for (const auto& t : e.terms()) cp.G.block(row, t.var, k, 1) = -t.coeff;
    if (phase1) {
      if (lp_block)
        cp.G.block(row, n, k, 1).setConstant(-1.0);
      else
        cp.G(row, n) = -1.0;
    }
    out.user_rows.emplace_back(row, k);
    row += k;
  };
  for (auto* c : lp) put_vector(c->expr, true);
  for (auto* c : soc) put_vector(c->expr, false);
  if (ball) {
    cp.h(row) = radius;
    cp.G.block(row + 1, 0, n, n) = -Mat::Identity(n, n);
    row += n + 1;
  }
  for (auto* c : psd) {
    const int k = static_cast<int>(c->expr.rows());
    const Mat c0 = symmetrize(c->expr.constant());
    cp.h.segment(row, k * k) = c0.reshaped(k * k, 1);
    for (const auto& t : c->expr.terms()) cp.G.block(row, t.var, k * k, 1) = -symmetrize(t.coeff).reshaped(k * k, 1);
    if (phase1) {
      for (int i = 0; i < k; ++i) cp.G(row + i * k + i, n) = -1.0;
    }
    out.user_rows.emplace_back(row, k * k);
    row += k * k;
  }
  if (phase1) {
    cp.c(n) = 1.0;
  } else if (p.has_objective()) {
    for (const auto& t : p.objective().terms()) cp.c(t.var) = t.coeff(0, 0);
  }
  return out;
}

double min_slack(const SdpProblem& p, const Vec& y) {
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& c : p.constraints()) {
    const Mat v = c.expr.evaluate(y);
    switch (c.kind) {
      case SdpProblem::ConeKind::Nonneg: worst = std::min(worst, v.minCoeff()); break;
      case SdpProblem::ConeKind::Soc:
        worst = std::min(worst, v(0, 0) - v.col(0).tail(v.rows() - 1).norm());
        break;
      case SdpProblem::ConeKind::Psd: {
        Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(v), Eigen::EigenvaluesOnly);
        worst = std::min(worst, es.eigenvalues()(0));
        break;
      }
    }
  }
  return worst;
}

bool converged(ConicStatus s) {
  return s == ConicStatus::Optimal || s == ConicStatus::NearOptimal || s == ConicStatus::StoppedEarly;
}

}  // namespace

SdpSolution solve_sdp(const SdpProblem& p, const SdpOptions& opts) {
  SdpSolution sol;
  const int n = p.num_scalars();
  sol.y = Vec::Zero(n);
  if (p.constraints().empty() && !p.has_objective()) {
    sol.status = SdpStatus::Optimal;
    sol.phase1_margin = std::numeric_limits<double>::infinity();
    sol.min_slack = std::numeric_limits<double>::infinity();
    return sol;
  }

  if (!opts.skip_phase1 || !p.has_objective()) {
    const Assembled a = assemble(p, true, opts.ball_radius);
    ConicOptions co = opts.conic;
    if (opts.phase1_stop_margin > 0.0) {
      co.has_stop_below = true;
      co.stop_below = -opts.phase1_stop_margin;
    }
    const ConicResult r = solve_conic(a.cp, co);
    sol.iterations += r.iterations;
    const Vec y = r.x.head(n);
    const double slack = min_slack(p, y);
    sol.phase1_margin = -r.pcost;
    bool feasible;
    if (converged(r.status)) {
      feasible = r.pcost <= opts.feas_tol || slack >= -opts.feas_tol;
    } else if (slack >= -opts.feas_tol) {
      feasible = true;
      sol.inaccurate = true;
    } else if (r.dres <= 1e-6 && r.dcost > opts.feas_tol) {
      feasible = false;
    } else {
      throw Error(ErrorCode::SolverNumericalFailure,
                  "feasibility phase stalled (pres " + std::to_string(r.pres) + ", dres " + std::to_string(r.dres) +
                      ", t " + std::to_string(r.pcost) + ")");
    }
    sol.y = y;
    sol.min_slack = slack;
    if (!feasible) {
      sol.status = SdpStatus::Infeasible;
      return sol;
    }
    if (!p.has_objective()) {
      sol.status = SdpStatus::Optimal;
      return sol;
    }
  }

  const Assembled a = assemble(p, false, opts.ball_radius);
  const ConicResult r = solve_conic(a.cp, opts.conic);
  sol.iterations += r.iterations;
  const Vec y = r.x.head(n);
  const double slack = min_slack(p, y);
  if (!converged(r.status)) {
    if (slack < -10.0 * opts.feas_tol || r.pres > 1e-6) {
      throw Error(ErrorCode::SolverNumericalFailure,
                  "optimization phase failed (pres " + std::to_string(r.pres) + ", dres " + std::to_string(r.dres) +
                      ", gap " + std::to_string(r.gap) + ")");
    }
    sol.inaccurate = true;
  }
  sol.status = SdpStatus::Optimal;
  sol.y = y;
  sol.min_slack = slack;
  sol.objective = p.objective().evaluate(y)(0, 0);
  return sol;
}

}  // namespace dissipic
