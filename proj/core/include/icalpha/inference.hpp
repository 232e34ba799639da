#pragma once

// Joint sandwich covariance for the stacked coefficients (beta, omega, theta),
// with the correction for estimated inverse-probability weights, plus Wald
// tests, reliability confidence intervals, one-sided range tests, and the
// classical overall-alpha baseline.

#include <Eigen/Dense>

#include "icalpha/gee.hpp"
#include "icalpha/missingness.hpp"
#include "icalpha/study.hpp"

namespace icalpha {

// ---- sandwich covariance ----------------------------------------------------

struct SandwichResult {
  // Asymptotic covariance of sqrt(n) * (coefficient estimation error); divide
  // by n for the covariance of the estimates themselves.
  Eigen::MatrixXd psi;

  // Components, kept for diagnostics and reporting.
  Eigen::MatrixXd bread;      // (1/n) sum_p w_p G' V^-1 H
  Eigen::MatrixXd meat;       // (1/n) sum_p w_p^2 (G' V^-1 f)(G' V^-1 f)'
  Eigen::MatrixXd coupling;   // (1/n) sum_p w_p^2 (G' V^-1 f)(dpi/dgamma)'
  Eigen::MatrixXd info;       // missingness information matrix

  int dim_beta = 0, dim_omega = 0, dim_theta = 0;
  OmegaConvention convention = OmegaConvention::inverse;
  bool weight_corrected = false;  // false when pi == 1 (no correction term)
  bool meat_clipped = false;      // corrected meat had negative eigenvalues

  Eigen::MatrixXd theta_block() const {
    return psi.block(dim_beta + dim_omega, dim_beta + dim_omega, dim_theta,
                     dim_theta);
  }
};

// Evaluates the sandwich at the fitted coefficients.  `convention` selects
// how the missingness information enters the weight-estimation correction:
// `inverse` (default) subtracts coupling * info^-1 * coupling'; `literal`
// subtracts coupling * info * coupling' for comparison.
SandwichResult sandwich_covariance(const StudyData& study, const ModelSpec& spec,
                                   const GeeFit& fit, const MissingnessFit& miss,
                                   const IpwWeights& ipw,
                                   OmegaConvention convention = OmegaConvention::inverse);

// ---- per-subject sandwich blocks ---------------------------------------------

// Blocks for one subject at the model values `mv` (from evaluate_model at the
// same coefficients).  Rows: k mean rows, k variance rows, then the pair
// rows; columns of the matrices follow the stacked coefficients (beta, omega,
// theta).
//   g — block-diagonal Jacobian of the modeled moments (mu, sigma^2, eta);
//   h — minus the Jacobian of the stacked residuals f, i.e. g on the diagonal
//       blocks plus the cross blocks through which the mean feeds the squared
//       residuals and the mean/variance feed the pairwise statistics;
//   f — stacked residuals (y - mu, T - sigma^2, U - eta).
// No working-covariance or weight scaling is applied.
struct SubjectBlocks {
  Eigen::MatrixXd g;
  Eigen::MatrixXd h;
  Eigen::VectorXd f;
};

SubjectBlocks subject_blocks(const StudyData& study, const ModelValues& mv, int p);

// ---- tests and intervals ----------------------------------------------------

struct WaldTest {
  double estimate = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p = 1.0;
};

// Two-sided normal test of component j against `null_value`.  `psi_theta` is
// the asymptotic (per-sqrt(n)) covariance block; `n` the subject count.
WaldTest wald_test(const Eigen::VectorXd& theta, const Eigen::MatrixXd& psi_theta,
                   int n, int j, double null_value = 0.0);

struct AlphaEstimate {
  Eigen::VectorXd w_row;      // covariate row the estimate is evaluated at
  double predictor = 0.0;     // w' theta
  double predictor_se = 0.0;
  double alpha = 0.0;         // 1 - exp(predictor)
  double alpha_se = 0.0;      // delta-method standard error
  double level = 0.95;
  double lo = 0.0, hi = 0.0;  // CI on the alpha scale
};

// CI obtained by mapping the symmetric normal interval for w'theta through
// the strictly decreasing transform t -> 1 - e^t, so the alpha-scale
// endpoints are exactly the transformed predictor-scale endpoints.
AlphaEstimate alpha_estimate(const Eigen::VectorXd& w_row,
                             const Eigen::VectorXd& theta,
                             const Eigen::MatrixXd& psi_theta, int n,
                             double level = 0.95);

struct RangeTest {
  double threshold = 0.7;
  bool upper = false;   // false: H0 alpha < threshold; true: H0 alpha > threshold
  double z = 0.0;
  double p = 1.0;
  bool reject = false;
  double sig_level = 0.05;
};

// One-sided tests on the predictor scale (alpha >= c  <=>  w'theta <= log(1-c)).
// direction `upper = false`: H0: alpha < c vs H1: alpha >= c, rejected for
// small z = (pred - log(1-c))/se.  `upper = true`: H0: alpha > c vs H1:
// alpha <= c, rejected for large z.
RangeTest alpha_range_test(const AlphaEstimate& est, double threshold, bool upper,
                           double sig_level = 0.05);

// Classical overall internal-consistency coefficient of the score matrix:
// (k/(k-1)) (1 - sum_i var(y_i) / var(sum_i y_i)) with unbiased variances.
double naive_overall_alpha(const Eigen::MatrixXd& y);

}  // namespace icalpha
