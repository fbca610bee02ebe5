#pragma once

#include <map>
#include <utility>
#include <vector>

#include "dissipic/common.hpp"

namespace dissipic {

struct SymEig {
  Vec values;  // ascending
  Mat vectors;
};

/// Symmetric eigendecomposition; m must be symmetric within 1e-10 * ||m||.
SymEig eig_sym(const Mat& m);

/// Largest / smallest eigenvalue of the symmetric part of m.
double lambda_max(const Mat& m);
double lambda_min(const Mat& m);

/// True iff lambda_min(m) >= -tol * max(1, ||m||).
bool is_psd(const Mat& m, double tol);

void check_symmetric(const Mat& m, const char* what);

/// Symmetric block matrix stored by its upper triangle. Materializing
/// mirrors the upper blocks, so the result equals its own transpose exactly.
class SymBlock {
 public:
  explicit SymBlock(std::vector<Eigen::Index> block_sizes);

  const std::vector<Eigen::Index>& block_sizes() const { return sizes_; }
  Eigen::Index size() const;

  /// Sets block (i, j) with i <= j. Diagonal blocks must be symmetric.
  void set(std::size_t i, std::size_t j, const Mat& block);
  /// Block (i, j) for any i, j (lower blocks are transposes); unset blocks are zero.
  Mat get(std::size_t i, std::size_t j) const;

  Mat materialize() const;

 private:
  std::vector<Eigen::Index> sizes_;
  std::map<std::pair<std::size_t, std::size_t>, Mat> upper_;
};

/// [[F, L^T], [L, -I]]; NSD iff F + L^T L is NSD.
SymBlock schur_complement_nsd(const Mat& top_left, const Mat& off_diag);

/// Returns L with L^T L = m, one row per eigenvalue above rank_tol * lambda_max.
Mat factor_gram(const Mat& m, double rank_tol = 1e-12);

/// 2-norm condition number (inf for singular or empty-rank matrices).
double condition_number(const Mat& m);

}  // namespace dissipic
