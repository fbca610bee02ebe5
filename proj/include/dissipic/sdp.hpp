#pragma once

#include <string>
#include <vector>

#include "dissipic/affine_expr.hpp"
#include "dissipic/conic_solver.hpp"

namespace dissipic {

enum class VarKind { Full, Symmetric, Diagonal };

/// Handle to a matrix decision variable; its scalars occupy
/// [offset, offset + count) in the flat assignment vector.
struct Variable {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  VarKind kind = VarKind::Full;
  int offset = 0;
  int count = 0;
  std::string name;
};

/// Affine conic program over matrix variables: PSD/NSD constraints,
/// entrywise nonnegativity, second-order cones, optional linear objective.
class SdpProblem {
 public:
  Variable add_variable(Eigen::Index rows, Eigen::Index cols, VarKind kind, std::string name = "");
  Variable add_scalar(std::string name = "") { return add_variable(1, 1, VarKind::Full, std::move(name)); }

  /// Matrix expression of a variable (exactly symmetric / diagonal for those kinds).
  AffineExpr expr(const Variable& v) const;

  /// expr - margin * I is PSD.
  void add_psd(const AffineExpr& e, double margin = 0.0, std::string label = "");
  /// -expr - margin * I is PSD.
  void add_nsd(const AffineExpr& e, double margin = 0.0, std::string label = "");
  /// Every entry of e is >= 0.
  void add_nonneg(const AffineExpr& e, std::string label = "");
  /// ||v||_2 <= t for a 1x1 expression t and a column expression v.
  void add_soc(const AffineExpr& t, const AffineExpr& v, std::string label = "");

  void minimize(const AffineExpr& objective);
  void maximize(const AffineExpr& objective) { minimize(-objective); }

  int num_scalars() const { return num_scalars_; }
  bool has_objective() const { return has_objective_; }

  enum class ConeKind { Nonneg, Soc, Psd };
  struct Constraint {
    ConeKind kind;
    AffineExpr expr;  // must lie in the cone (vectorized column-major for Nonneg/Soc)
    std::string label;
  };
  const std::vector<Constraint>& constraints() const { return constraints_; }
  const AffineExpr& objective() const { return objective_; }

 private:
  void check_vars(const AffineExpr& e) const;

  int num_scalars_ = 0;
  std::vector<Constraint> constraints_;
  AffineExpr objective_ = AffineExpr::zero(1, 1);
  bool has_objective_ = false;
};

/// Column-stacks an affine matrix expression.
AffineExpr vec(const AffineExpr& e);

/// Adds tau with ||diff||_F <= tau and returns tau.
Variable add_frobenius_epigraph(SdpProblem& p, const AffineExpr& diff, std::string name = "tau");

struct SdpOptions {
  double feas_tol = tol::kFeas;
  /// Every program is solved over the ball ||y|| <= ball_radius.
  double ball_radius = 1e4;
  /// Skip the feasibility phase when the caller knows the set is nonempty.
  bool skip_phase1 = false;
  /// Phase I stops once the constraints hold with this much slack (0 = solve fully).
  double phase1_stop_margin = 1e-5;
  ConicOptions conic;
};

enum class SdpStatus { Optimal, Infeasible };

struct SdpSolution {
  SdpStatus status = SdpStatus::Infeasible;
  Vec y;
  double objective = 0.0;
  /// Largest t with all constraints holding with slack t (negative: violation), from phase I.
  double phase1_margin = 0.0;
  /// min over constraints of their cone eigenvalue at y.
  double min_slack = 0.0;
  int iterations = 0;
  bool inaccurate = false;

  bool feasible() const { return status == SdpStatus::Optimal; }
  Mat value(const Variable& v) const;
  double scalar(const Variable& v) const { return value(v)(0, 0); }
};

/// Decides feasibility with a phase-I program, then (if an objective is set)
/// optimizes it. Throws SolverNumericalFailure if the solver breaks down.
SdpSolution solve_sdp(const SdpProblem& p, const SdpOptions& opts = {});

/// Value of a variable under a flat assignment.
Mat variable_value(const Variable& v, const Vec& y);

}  // namespace dissipic
