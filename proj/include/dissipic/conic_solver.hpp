#pragma once

#include <vector>

#include "dissipic/common.hpp"

namespace dissipic {

/// Cone K = R^l_+ x Q^{q_1} x ... x S^{s_1}_+ x ...
/// Semidefinite blocks use full n*n column-major storage of symmetric matrices,
/// so the Euclidean inner product on the stored vector is the trace product.
struct ConeDims {
  int l = 0;
  std::vector<int> q;
  std::vector<int> s;

  int size() const;
  int degree() const;  // l + #q + sum(s)
};

/// minimize c^T x  subject to  G x + s = h,  s in K.
struct ConicProblem {
  Vec c;
  Mat G;
  Vec h;
  ConeDims dims;
};

struct ConicOptions {
  int max_iter = 120;
  double abstol = 1e-8;
  double reltol = 1e-8;
  double feastol = 1e-9;
  /// Accuracy accepted when the iteration stalls before reaching the targets above.
  double near_tol = 1e-6;
  double step_fraction = 0.99;
  bool verbose = false;
  /// When set, stop as soon as an iterate satisfies pres <= feastol and c^T x <= stop_below.
  bool has_stop_below = false;
  double stop_below = 0.0;
};

enum class ConicStatus { Optimal, NearOptimal, MaxIterations, NumericalFailure, StoppedEarly };

struct ConicResult {
  ConicStatus status = ConicStatus::NumericalFailure;
  Vec x, s, z;
  double pcost = 0.0;
  double dcost = 0.0;
  double gap = 0.0;
  double pres = 0.0;
  double dres = 0.0;
  int iterations = 0;
};

/// Primal-dual interior-point method with Nesterov-Todd scaling and Mehrotra
/// predictor-corrector steps. G must have full column rank.
ConicResult solve_conic(const ConicProblem& prob, const ConicOptions& opts = {});

/// Smallest "eigenvalue" of v with respect to the cone (>= 0 iff v in K).
double cone_min_eig(const Vec& v, const ConeDims& dims);

}  // namespace dissipic
