#pragma once

// Response functions for the three model layers and their derivatives with
// respect to the linear predictor.  All evaluators are vectorized over a
// stacked linear-predictor vector; callers scale design rows by the returned
// derivative to obtain model Jacobians.

#include <Eigen/Dense>

#include "icalpha/study.hpp"

namespace icalpha {

// ---- mean model -----------------------------------------------------------

struct MeanEval {
  Eigen::VectorXd mu;    // response values
  Eigen::VectorXd dmu;   // d mu / d t, t the linear predictor
};

MeanEval eval_mean(MeanLink link, const Eigen::VectorXd& t);

// Inverse response, used only to initialize the mean coefficients from
// transformed observations.  Arguments outside the response range are pulled
// to the nearest representable point.
double mean_link_inverse(MeanLink link, double mu);

// ---- variance model -------------------------------------------------------

struct VarEval {
  Eigen::VectorXd sigma2;    // variance values, all > 0
  Eigen::VectorXd dsigma2;   // d sigma^2 / d t
  bool clamped = false;      // identity-positive hit the positivity floor
};

// `floor` bounds identity-positive variances away from zero; values at or
// below it are lifted to the floor and reported via `clamped`.
VarEval eval_var(VarLink link, const Eigen::VectorXd& t, double floor = 1e-8);

double var_link_inverse(VarLink link, double sigma2, double floor = 1e-8);

// ---- alpha model ----------------------------------------------------------

// eta(t) = (1 - e^t) / (1 + e^t) maps the linear predictor into (-1, 1); the
// reliability itself is alpha = 1 - e^t.  eta'(t) = -2 e^t / (1 + e^t)^2.

struct EtaEval {
  Eigen::VectorXd eta;     // clamped to [-(1 - 1e-8), 1 - 1e-8]
  Eigen::VectorXd deta;    // analytic derivative (not clamped)
  bool clamped = false;    // some |eta| exceeded 1 - 1e-8 before clamping
};

// Throws FitError("eta saturated") when any |t| > sat_fail: the pair
// correlation scale has run away and no finite solution exists.
EtaEval eval_eta(const Eigen::VectorXd& t, double clamp_at = 1.0 - 1e-8,
                 double sat_fail = 100.0);

// Inverse of eta: t = log((1 - u) / (1 + u)), defined for u in (-1, 1).
double eta_inverse(double u);

// alpha = 1 - e^t and its inverse t = log(1 - alpha), alpha < 1.
double alpha_from_predictor(double t);
double predictor_from_alpha(double alpha);

}  // namespace icalpha
