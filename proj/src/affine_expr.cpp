#include "dissipic/affine_expr.hpp"

#include <algorithm>
#include <map>

#include "dissipic/detail/block_layout.hpp"

namespace dissipic {

namespace {

bool all_zero(const Mat& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (m(i, j) != 0.0) return false;
  return true;
}

void prune(std::vector<AffineExpr::Term>& terms) {
  terms.erase(std::remove_if(terms.begin(), terms.end(), [](const auto& t) { return all_zero(t.coeff); }),
              terms.end());
}

}  // namespace

AffineExpr AffineExpr::from_terms(Mat constant, std::vector<Term> terms) {
  AffineExpr out(std::move(constant));
  std::sort(terms.begin(), terms.end(), [](const Term& a, const Term& b) { return a.var < b.var; });
  for (auto& t : terms) {
    require_shape(t.coeff, out.rows(), out.cols(), "affine term coefficient");
    if (!out.terms_.empty() && out.terms_.back().var == t.var) {
      out.terms_.back().coeff += t.coeff;
    } else {
      out.terms_.push_back(std::move(t));
    }
  }
  prune(out.terms_);
  return out;
}

Mat AffineExpr::evaluate(const Vec& y) const {
  Mat out = constant_;
  for (const auto& t : terms_) {
    require(t.var < y.size(), ErrorCode::DimensionMismatch, "variable index outside assignment");
    out += y(t.var) * t.coeff;
  }
  return out;
}

AffineExpr AffineExpr::block(Eigen::Index r0, Eigen::Index c0, Eigen::Index nr, Eigen::Index nc) const {
  AffineExpr out(Mat(constant_.block(r0, c0, nr, nc)));
  for (const auto& t : terms_) out.terms_.push_back({t.var, t.coeff.block(r0, c0, nr, nc)});
  prune(out.terms_);
  return out;
}

AffineExpr AffineExpr::transposed() const {
  AffineExpr out(Mat(constant_.transpose()));
  out.terms_.reserve(terms_.size());
  for (const auto& t : terms_) out.terms_.push_back({t.var, t.coeff.transpose()});
  return out;
}

AffineExpr& AffineExpr::operator+=(const AffineExpr& other) {
  if (rows() != other.rows() || cols() != other.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "affine sum of " + std::to_string(rows()) + "x" +
                                                  std::to_string(cols()) + " and " + std::to_string(other.rows()) +
                                                  "x" + std::to_string(other.cols()));
  }
  constant_ += other.constant_;
  std::vector<Term> merged;
  merged.reserve(terms_.size() + other.terms_.size());
  auto a = terms_.begin();
  auto b = other.terms_.begin();
  while (a != terms_.end() || b != other.terms_.end()) {
    if (b == other.terms_.end() || (a != terms_.end() && a->var < b->var)) {
      merged.push_back(std::move(*a++));
    } else if (a == terms_.end() || b->var < a->var) {
      merged.push_back(*b++);
    } else {
      a->coeff += b->coeff;
      merged.push_back(std::move(*a++));
      ++b;
    }
  }
  terms_ = std::move(merged);
  prune(terms_);
  return *this;
}

AffineExpr& AffineExpr::operator-=(const AffineExpr& other) { return *this += -1.0 * other; }

AffineExpr& AffineExpr::operator*=(double s) {
  constant_ *= s;
  for (auto& t : terms_) t.coeff *= s;
  if (s == 0.0) terms_.clear();
  return *this;
}

AffineExpr AffineExpr::left_multiplied(const Mat& k) const {
  const AffineExpr& a = *this;
  require(k.cols() == a.rows(), ErrorCode::DimensionMismatch,
          "product " + std::to_string(k.rows()) + "x" + std::to_string(k.cols()) + " * " + std::to_string(a.rows()) +
              "x" + std::to_string(a.cols()));
  AffineExpr out(Mat(k * a.constant_));
  out.terms_.reserve(a.terms_.size());
  for (const auto& t : a.terms_) out.terms_.push_back({t.var, k * t.coeff});
  prune(out.terms_);
  return out;
}

AffineExpr AffineExpr::right_multiplied(const Mat& k) const {
  const AffineExpr& a = *this;
  require(a.cols() == k.rows(), ErrorCode::DimensionMismatch,
          "product " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " * " + std::to_string(k.rows()) +
              "x" + std::to_string(k.cols()));
  AffineExpr out(Mat(a.constant_ * k));
  out.terms_.reserve(a.terms_.size());
  for (const auto& t : a.terms_) out.terms_.push_back({t.var, t.coeff * k});
  prune(out.terms_);
  return out;
}

AffineExpr affine_block_matrix(const std::vector<std::vector<AffineExpr>>& blocks) {
  const detail::Layout lay = detail::block_layout(blocks);
  Eigen::Index rows = 0, cols = 0;
  for (auto h : lay.heights) rows += h;
  for (auto w : lay.widths) cols += w;
  Mat constant = Mat::Zero(rows, cols);
  std::map<int, Mat> coeffs;
  Eigen::Index r0 = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    Eigen::Index c0 = 0;
    for (std::size_t j = 0; j < lay.widths.size(); ++j) {
      const AffineExpr& b = blocks[i][j];
      constant.block(r0, c0, b.rows(), b.cols()) = b.constant();
      for (const auto& t : b.terms()) {
        auto it = coeffs.find(t.var);
        if (it == coeffs.end()) it = coeffs.emplace(t.var, Mat::Zero(rows, cols)).first;
        it->second.block(r0, c0, b.rows(), b.cols()) += t.coeff;
      }
      c0 += lay.widths[j];
    }
    r0 += lay.heights[i];
  }
  std::vector<AffineExpr::Term> terms;
  terms.reserve(coeffs.size());
  for (auto& [var, c] : coeffs) terms.push_back({var, std::move(c)});
  return AffineExpr::from_terms(std::move(constant), std::move(terms));
}

AffineExpr embed(const AffineExpr& a, Eigen::Index rows, Eigen::Index cols, Eigen::Index r0, Eigen::Index c0) {
  require(r0 + a.rows() <= rows && c0 + a.cols() <= cols, ErrorCode::DimensionMismatch, "embed out of range");
  Mat constant = Mat::Zero(rows, cols);
  constant.block(r0, c0, a.rows(), a.cols()) = a.constant();
  std::vector<AffineExpr::Term> terms;
  terms.reserve(a.terms().size());
  for (const auto& t : a.terms()) {
    Mat c = Mat::Zero(rows, cols);
    c.block(r0, c0, a.rows(), a.cols()) = t.coeff;
    terms.push_back({t.var, std::move(c)});
  }
  return AffineExpr::from_terms(std::move(constant), std::move(terms));
}

}  // namespace dissipic

namespace dissipic {

AffineExpr scale(const AffineExpr& s, const Mat& m) {
  require(s.rows() == 1 && s.cols() == 1, ErrorCode::DimensionMismatch, "scale expects a scalar expression");
  std::vector<AffineExpr::Term> terms;
  terms.reserve(s.terms().size());
  for (const auto& t : s.terms()) terms.push_back({t.var, t.coeff(0, 0) * m});
  return AffineExpr::from_terms(s.constant()(0, 0) * m, std::move(terms));
}

}  // namespace dissipic
