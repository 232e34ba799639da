#pragma once

// Working covariance blocks for the estimating equations.  On the
// standardized residual scale an exchangeable block is phi * ((1-rho) I +
// rho J), whose closed-form inverse a I + b J the solver exploits; subject
// blocks are V_p = phi A_p^{1/2} ((1-rho) I + rho J) A_p^{1/2} with A_p the
// diagonal of model-based variance functions supplied by the caller.
// Independence is exactly phi * I (no variance-function scaling), so moment
// and closed-form fixed points hold there.  The nuisance pair (phi, rho)
// comes from weighted moments of the standardized residuals.

#include <Eigen/Dense>

#include "icalpha/study.hpp"

namespace icalpha {

struct WorkingCov {
  WorkingStructure structure = WorkingStructure::independence;
  double phi = 1.0;
  double rho = 0.0;   // always 0 under independence

  struct InvCoeffs {
    double a = 1.0;   // coefficient on I
    double b = 0.0;   // coefficient on J (all-ones matrix)
  };

  // Coefficients of V^{-1} for a block of dimension m.
  InvCoeffs inverse_coeffs(int m) const;

  // Dense V for a block of dimension m (diagnostics and tests).
  Eigen::MatrixXd matrix(int m) const;
};

// Moment update of (phi, rho) from weighted standardized residuals (callers
// divide by the sqrt variance function where one is in effect).
//   phi = weighted mean of squared standardized residual components;
//   rho = weighted mean of off-diagonal products, divided by phi.
// `residuals` stacks n blocks of length m; `weights` holds one inverse-
// probability weight per subject, zero entries excluded entirely (their
// residual slots may be unset).  rho is clamped to the positive-definite
// range (-1/(m-1) + 1e-6, 1 - 1e-6); phi is floored at 1e-12 so degenerate
// perfect fits keep an invertible block.
WorkingCov estimate_nuisance(const Eigen::VectorXd& residuals,
                             const Eigen::VectorXd& weights, int m,
                             WorkingStructure structure);

}  // namespace icalpha
