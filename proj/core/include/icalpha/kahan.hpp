#pragma once

#include <Eigen/Core>

namespace icalpha {

/// Compensated (Kahan) accumulator for Eigen matrices and vectors.
/// Per-subject GEE and sandwich contributions are reduced through this so
/// the totals are insensitive to subject ordering at machine precision.
template <typename Mat>
class KahanSum {
 public:
  KahanSum() = default;
  explicit KahanSum(Eigen::Index rows, Eigen::Index cols = 1) { reset(rows, cols); }

  void reset(Eigen::Index rows, Eigen::Index cols = 1) {
    sum_.setZero(rows, cols);
    comp_.setZero(rows, cols);
  }

  template <typename Expr>
  void add(const Expr& term) {
    tmp_y_ = term - comp_;
    tmp_t_ = sum_ + tmp_y_;
    comp_ = (tmp_t_ - sum_) - tmp_y_;
    sum_ = tmp_t_;
  }

  const Mat& value() const { return sum_; }

 private:
  Mat sum_, comp_, tmp_y_, tmp_t_;
};

using KahanMatrix = KahanSum<Eigen::MatrixXd>;
using KahanVector = KahanSum<Eigen::VectorXd>;

/// Scalar flavor.
class KahanScalar {
 public:
  void add(double term) {
    const double y = term - comp_;
    const double t = sum_ + y;
    comp_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0.0, comp_ = 0.0;
};

}  // namespace icalpha
