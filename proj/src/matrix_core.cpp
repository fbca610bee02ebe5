#include "dissipic/matrix_core.hpp"

#include <cmath>
#include <limits>

namespace dissipic {

void check_symmetric(const Mat& m, const char* what) {
  require(m.rows() == m.cols(), ErrorCode::NonSquare, std::string(what) + " is not square");
  const double scale = std::max(1.0, m.norm());
  const double asym = max_abs(m - m.transpose());
  if (m.size() > 0 && asym > 1e-10 * scale) {
    throw Error(ErrorCode::NotSymmetric, std::string(what) + " asymmetry " + std::to_string(asym));
  }
}

SymEig eig_sym(const Mat& m) {
  require(m.rows() == m.cols(), ErrorCode::NonSquare, "eig_sym of a non-square matrix");
  if (m.size() == 0) return {Vec(0), Mat(0, 0)};
  check_symmetric(m, "eig_sym input");
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m));
  require(es.info() == Eigen::Success, ErrorCode::NoConvergence, "symmetric eigensolver did not converge");
  return {es.eigenvalues(), es.eigenvectors()};
}

double lambda_max(const Mat& m) {
  if (m.size() == 0) return -std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(m.rows() - 1);
}

double lambda_min(const Mat& m) {
  if (m.size() == 0) return std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

bool is_psd(const Mat& m, double tol) {
  if (m.size() == 0) return true;
  const SymEig e = eig_sym(m);
  return e.values(0) >= -tol * std::max(1.0, m.norm());
}

SymBlock::SymBlock(std::vector<Eigen::Index> block_sizes) : sizes_(std::move(block_sizes)) {}

Eigen::Index SymBlock::size() const {
  Eigen::Index n = 0;
  for (auto s : sizes_) n += s;
  return n;
}

void SymBlock::set(std::size_t i, std::size_t j, const Mat& block) {
  require(i <= j && j < sizes_.size(), ErrorCode::InvalidArgument, "SymBlock stores upper blocks only");
  require_shape(block, sizes_[i], sizes_[j], "SymBlock block");
  if (i == j) check_symmetric(block, "SymBlock diagonal block");
  upper_[{i, j}] = block;
}

Mat SymBlock::get(std::size_t i, std::size_t j) const {
  if (i > j) return get(j, i).transpose();
  auto it = upper_.find({i, j});
  if (it == upper_.end()) return Mat::Zero(sizes_[i], sizes_[j]);
  return it->second;
}

Mat SymBlock::materialize() const {
  const Eigen::Index n = size();
  Mat out = Mat::Zero(n, n);
  Eigen::Index r0 = 0;
  for (std::size_t i = 0; i < sizes_.size(); ++i) {
    Eigen::Index c0 = r0;
    for (std::size_t j = i; j < sizes_.size(); ++j) {
      auto it = upper_.find({i, j});
      if (it != upper_.end()) out.block(r0, c0, sizes_[i], sizes_[j]) = it->second;
      c0 += sizes_[j];
    }
    r0 += sizes_[i];
  }
  // Mirror the strict upper triangle so the result is exactly symmetric.
  for (Eigen::Index c = 0; c < n; ++c)
    for (Eigen::Index r = c + 1; r < n; ++r) out(r, c) = out(c, r);
  return out;
}

SymBlock schur_complement_nsd(const Mat& top_left, const Mat& off_diag) {
  require(top_left.rows() == top_left.cols(), ErrorCode::DimensionMismatch, "Schur top-left block must be square");
  require(off_diag.cols() == top_left.rows(), ErrorCode::DimensionMismatch,
          "Schur off-diagonal block has " + std::to_string(off_diag.cols()) + " columns, expected " +
              std::to_string(top_left.rows()));
  SymBlock out({top_left.rows(), off_diag.rows()});
  out.set(0, 0, symmetrize(top_left));
  out.set(0, 1, off_diag.transpose());
  out.set(1, 1, -eye(off_diag.rows()));
  return out;
}

Mat factor_gram(const Mat& m, double rank_tol) {
  if (m.size() == 0) return Mat(0, m.cols());
  const SymEig e = eig_sym(m);
  const double top = std::max(0.0, e.values(e.values.size() - 1));
  if (e.values(0) < -rank_tol * std::max(1.0, top) - 1e-12) {
    throw Error(ErrorCode::NotPsd, "matrix has eigenvalue " + std::to_string(e.values(0)));
  }
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = e.values.size() - 1; i >= 0; --i) {
    if (top > 0.0 && e.values(i) > rank_tol * top) keep.push_back(i);
  }
  Mat out(static_cast<Eigen::Index>(keep.size()), m.cols());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = std::sqrt(e.values(keep[r])) * e.vectors.col(keep[r]).transpose();
  }
  return out;
}

double condition_number(const Mat& m) {
  if (m.size() == 0) return 1.0;
  Eigen::JacobiSVD<Mat> svd(m);
  const Vec& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / smin;
}

}  // namespace dissipic
