#pragma once

// Logistic model for the subject verification indicator: logit(pi_p) = Q_p'g.
// The fit supplies inverse-probability weights delta_p / pi_hat_p for the
// estimating equations and the information matrix used by the variance
// correction for estimated weights.

#include <Eigen/Dense>

namespace icalpha {

struct MissingnessFit {
  Eigen::VectorXd gamma;   // coefficients; empty for the degenerate fit
  Eigen::VectorXd pi;      // fitted verification probabilities, in (0, 1]
  Eigen::MatrixXd info;    // (1/n) sum_p pi(1-pi) Q Q^T; 0x0 when degenerate
  bool degenerate = false; // all subjects observed: pi == 1, no correction
  bool converged = true;
  int iterations = 0;
};

// Newton-Raphson maximum likelihood with step-halving (max 50 iterations,
// stop when the applied step has max-norm < 1e-10).  All-delta-one data
// short-circuits to the degenerate pi == 1 fit.  Throws on rank-deficient
// designs and on perfect separation (no finite maximizer).
MissingnessFit fit_missingness(const Eigen::VectorXi& delta,
                               const Eigen::MatrixXd& q_design);

// d pi / d gamma = pi (1 - pi) Q_p for one subject.
Eigen::VectorXd pi_gradient(const Eigen::VectorXd& q_row,
                            const Eigen::VectorXd& gamma);

struct IpwWeights {
  Eigen::VectorXd w;      // delta_p / max(pi_p, floor); zero when delta_p = 0
  bool floored = false;   // the floor clipped some weighted subject
};

// Weights for the estimating equations; `floor` bounds pi away from zero.
IpwWeights ipw_weights(const Eigen::VectorXi& delta, const MissingnessFit& fit,
                       double floor = 1e-6);

}  // namespace icalpha
