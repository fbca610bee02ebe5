#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace dissipic {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class ErrorCode {
  NonSquare,
  NotSymmetric,
  NoConvergence,
  DimensionMismatch,
  NotPsd,
  NotDiagonal,
  MvvNotPsd,
  SingularDpsi1,
  SingularDpsi2,
  FixedPointDiverged,
  SingularPartition,
  SingularIminusRS,
  IllConditionedUV,
  InfeasibleConstraintSet,
  InfeasibleForCertificate,
  ProjectionInfeasible,
  SolverNumericalFailure,
  NonFiniteState,
  ZeroInputEnergy,
  InvalidArgument,
  ConfigError,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Tolerances shared by every LMI in the library.
namespace tol {
inline constexpr double kStrict = 1e-6;     // margin used for strict matrix inequalities
inline constexpr double kFeas = 1e-7;       // absolute feasibility tolerance on eigenvalues
inline constexpr double kLambdaMin = 1e-6;  // lower bound on the controller multiplier
inline constexpr double kLambdaMax = 1e6;   // upper bound on the plant IQC scaling
}  // namespace tol

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

inline void require_shape(const Mat& m, Eigen::Index rows, Eigen::Index cols, const std::string& name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw Error(ErrorCode::DimensionMismatch,
                name + " is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                    ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

inline Mat transpose(const Mat& m) { return m.transpose(); }

inline Mat zeros(Eigen::Index r, Eigen::Index c) { return Mat::Zero(r, c); }
inline Mat eye(Eigen::Index n) { return Mat::Identity(n, n); }

// Assembles a dense block matrix; block rows must agree on height and block
// columns on width (zero-sized blocks are allowed and carry their shape).
Mat block_matrix(const std::vector<std::vector<Mat>>& blocks);

Mat block_diag(const std::vector<Mat>& blocks);

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

inline double max_abs(const Mat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

}  // namespace dissipic
