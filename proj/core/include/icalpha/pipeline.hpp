#pragma once

// End-to-end fit: verification model -> inverse-probability weights ->
// sequential estimating-equation sets -> joint sandwich covariance.

#include "icalpha/gee.hpp"
#include "icalpha/inference.hpp"
#include "icalpha/missingness.hpp"
#include "icalpha/study.hpp"

namespace icalpha {

struct FitOptions {
  GeeOptions gee;
  OmegaConvention convention = OmegaConvention::inverse;
  double pi_floor = 1e-6;  // verification probabilities are floored here
};

struct FitResult {
  MissingnessFit missingness;
  IpwWeights weights;
  GeeFit gee;
  SandwichResult sandwich;
  int n = 0;

  const Eigen::VectorXd& beta() const { return gee.mean.params; }
  const Eigen::VectorXd& omega() const { return gee.variance.params; }
  const Eigen::VectorXd& theta() const { return gee.alpha.params; }
  bool converged() const { return gee.converged(); }
};

// Validates the study, fits the verification model (degenerate when every
// subject is verified), solves the three coefficient sets, and evaluates the
// sandwich covariance.  Throws InputError for contract violations and
// FitError for numerical failures; non-convergence is reported via flags.
FitResult fit_study(const StudyData& study, const ModelSpec& spec,
                    const FitOptions& options = {});

}  // namespace icalpha
