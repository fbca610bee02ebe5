#include "dissipic/common.hpp"

#include "dissipic/detail/block_layout.hpp"

namespace dissipic {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonSquare: return "NonSquare";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotPsd: return "NotPsd";
    case ErrorCode::NotDiagonal: return "NotDiagonal";
    case ErrorCode::MvvNotPsd: return "MvvNotPsd";
    case ErrorCode::SingularDpsi1: return "SingularDpsi1";
    case ErrorCode::SingularDpsi2: return "SingularDpsi2";
    case ErrorCode::FixedPointDiverged: return "FixedPointDiverged";
    case ErrorCode::SingularPartition: return "SingularPartition";
    case ErrorCode::SingularIminusRS: return "SingularIminusRS";
    case ErrorCode::IllConditionedUV: return "IllConditionedUV";
    case ErrorCode::InfeasibleConstraintSet: return "InfeasibleConstraintSet";
    case ErrorCode::InfeasibleForCertificate: return "InfeasibleForCertificate";
    case ErrorCode::ProjectionInfeasible: return "ProjectionInfeasible";
    case ErrorCode::SolverNumericalFailure: return "SolverNumericalFailure";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::ZeroInputEnergy: return "ZeroInputEnergy";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}


Mat block_matrix(const std::vector<std::vector<Mat>>& blocks) {
  const detail::Layout lay = detail::block_layout(blocks);
  Eigen::Index rows = 0, cols = 0;
  for (auto h : lay.heights) rows += h;
  for (auto w : lay.widths) cols += w;
  Mat out(rows, cols);
  Eigen::Index r0 = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    Eigen::Index c0 = 0;
    for (std::size_t j = 0; j < lay.widths.size(); ++j) {
      out.block(r0, c0, lay.heights[i], lay.widths[j]) = blocks[i][j];
      c0 += lay.widths[j];
    }
    r0 += lay.heights[i];
  }
  return out;
}

Mat block_diag(const std::vector<Mat>& blocks) {
  Eigen::Index rows = 0, cols = 0;
  for (const auto& b : blocks) {
    rows += b.rows();
    cols += b.cols();
  }
  Mat out = Mat::Zero(rows, cols);
  Eigen::Index r0 = 0, c0 = 0;
  for (const auto& b : blocks) {
    out.block(r0, c0, b.rows(), b.cols()) = b;
    r0 += b.rows();
    c0 += b.cols();
  }
  return out;
}

}  // namespace dissipic
