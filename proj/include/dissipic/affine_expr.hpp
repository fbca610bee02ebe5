#pragma once

#include <concepts>
#include <vector>

#include "dissipic/common.hpp"

namespace dissipic {

/// Matrix-valued expression affine in a flat vector of scalar decision
/// variables: constant + sum_i y_i * coeff_i.
///
/// Only nonzero coefficients are stored, sorted by variable index. The type
/// mirrors the subset of Mat arithmetic that the LMI formulas need, so the
/// same templated formula evaluates either numerically (Mat) or symbolically.
class AffineExpr {
 public:
  struct Term {
    int var;
    Mat coeff;
  };

  AffineExpr() = default;
  AffineExpr(const Mat& constant) : constant_(constant) {}  // NOLINT: implicit by design of the algebra
  template <class Derived>
  AffineExpr(const Eigen::MatrixBase<Derived>& m) : constant_(m) {}  // NOLINT

  static AffineExpr zero(Eigen::Index rows, Eigen::Index cols) { return AffineExpr(Mat::Zero(rows, cols)); }

  /// Builds constant + sum of (var, coeff) terms; repeated variables are merged.
  static AffineExpr from_terms(Mat constant, std::vector<Term> terms);

  Eigen::Index rows() const { return constant_.rows(); }
  Eigen::Index cols() const { return constant_.cols(); }
  const Mat& constant() const { return constant_; }
  const std::vector<Term>& terms() const { return terms_; }
  bool is_constant() const { return terms_.empty(); }

  Mat evaluate(const Vec& y) const;

  AffineExpr block(Eigen::Index r0, Eigen::Index c0, Eigen::Index nr, Eigen::Index nc) const;
  AffineExpr transposed() const;

  AffineExpr& operator+=(const AffineExpr& other);
  AffineExpr& operator-=(const AffineExpr& other);
  AffineExpr& operator*=(double s);

  friend AffineExpr operator+(AffineExpr a, const AffineExpr& b) { return a += b; }
  friend AffineExpr operator-(AffineExpr a, const AffineExpr& b) { return a -= b; }
  friend AffineExpr operator-(AffineExpr a) { return a *= -1.0; }
  friend AffineExpr operator*(double s, AffineExpr a) { return a *= s; }
  friend AffineExpr operator*(AffineExpr a, double s) { return a *= s; }
  friend AffineExpr operator*(const Mat& k, const AffineExpr& a) { return a.left_multiplied(k); }
  friend AffineExpr operator*(const AffineExpr& a, const Mat& k) { return a.right_multiplied(k); }

  // Mixed Eigen/AffineExpr arithmetic resolves here rather than through Eigen.
  template <class D>
  friend AffineExpr operator*(const Eigen::MatrixBase<D>& k, const AffineExpr& a) {
    return Mat(k) * a;
  }
  template <class D>
  friend AffineExpr operator*(const AffineExpr& a, const Eigen::MatrixBase<D>& k) {
    return a * Mat(k);
  }
  template <class D>
  friend AffineExpr operator+(const Eigen::MatrixBase<D>& a, const AffineExpr& b) {
    return AffineExpr(a) += b;
  }
  template <class D>
  friend AffineExpr operator+(AffineExpr a, const Eigen::MatrixBase<D>& b) {
    return a += AffineExpr(b);
  }
  template <class D>
  friend AffineExpr operator-(const Eigen::MatrixBase<D>& a, const AffineExpr& b) {
    return AffineExpr(a) -= b;
  }
  template <class D>
  friend AffineExpr operator-(AffineExpr a, const Eigen::MatrixBase<D>& b) {
    return a -= AffineExpr(b);
  }

 private:
  AffineExpr left_multiplied(const Mat& k) const;
  AffineExpr right_multiplied(const Mat& k) const;

  Mat constant_;
  std::vector<Term> terms_;
};

inline AffineExpr transpose(const AffineExpr& a) { return a.transposed(); }

AffineExpr affine_block_matrix(const std::vector<std::vector<AffineExpr>>& blocks);

// Deduced so that braced lists of Mat keep resolving to the numeric overload.
template <class T>
  requires std::same_as<T, AffineExpr>
AffineExpr block_matrix(const std::vector<std::vector<T>>& blocks) {
  return affine_block_matrix(blocks);
}

/// Embeds `a` into a zero matrix of the given size at (r0, c0).
AffineExpr embed(const AffineExpr& a, Eigen::Index rows, Eigen::Index cols, Eigen::Index r0, Eigen::Index c0);

/// Generic helpers so templated formulas can be written once for Mat and
/// AffineExpr.
template <class T>
T zero_like(Eigen::Index rows, Eigen::Index cols) {
  return T(Mat::Zero(rows, cols));
}

template <class T>
T symmetric_part(const T& a) {
  return 0.5 * (a + transpose(a));
}

inline Mat evaluate(const Mat& m, const Vec&) { return m; }
inline Mat evaluate(const AffineExpr& a, const Vec& y) { return a.evaluate(y); }

}  // namespace dissipic

namespace dissipic {

/// s * m for a 1x1 affine expression s and a constant matrix m.
AffineExpr scale(const AffineExpr& s, const Mat& m);
inline Mat scale(double s, const Mat& m) { return s * m; }

}  // namespace dissipic
