#pragma once

// Sequential solver for the three weighted estimating-equation sets:
//   set 1 (mean):      residual y - mu(X beta)
//   set 2 (variance):  residual T - sigma^2(Z omega), T = (y - mu)^2
//   set 3 (alpha):     residual U - eta(W theta),
//                      U_ij = 2 (y_i y_j - mu_i mu_j) / (sigma_i^2 + sigma_j^2)
// Each set is solved to convergence by damped Gauss-Newton with the working
// covariance nuisance re-estimated after every accepted step; later sets hold
// earlier estimates fixed.  All subject contributions are weighted by the
// inverse-probability weights, so only verified subjects enter.

#include <Eigen/Dense>
#include <limits>
#include <vector>

#include "icalpha/missingness.hpp"
#include "icalpha/pairs.hpp"
#include "icalpha/study.hpp"
#include "icalpha/working_cov.hpp"

namespace icalpha {

struct GeeOptions {
  int max_iterations = 100;
  double tolerance = 1e-8;   // relative parameter change per accepted step
  int max_halvings = 10;     // backtracking when the weighted residual grows
  double var_floor = 1e-8;   // positivity floor for identity-positive variances
};

struct SetFit {
  Eigen::VectorXd params;
  WorkingCov cov;            // nuisance at exit
  int iterations = 0;
  bool converged = false;
  // Max-norm of the per-subject-mean estimating equation at the estimate.
  double ee_norm = std::numeric_limits<double>::quiet_NaN();
};

struct GeeFit {
  SetFit mean;
  SetFit variance;
  SetFit alpha;
  bool variance_clamped = false;  // positivity floor hit on a weighted row
  bool eta_clamped = false;       // |eta| clamp hit on a weighted row
  bool converged() const {
    return mean.converged && variance.converged && alpha.converged;
  }
};

// ---- residual building blocks ----------------------------------------------

// Squared residuals (y - mu)^2 for one subject row.
Eigen::VectorXd compute_T(const Eigen::VectorXd& y_row,
                          const Eigen::VectorXd& mu_row);

// Pairwise cross-moment statistics, one per entry of `pairs` (1-based item
// indices).  Throws on non-positive variances.
Eigen::VectorXd compute_U(const Eigen::VectorXd& y_row,
                          const Eigen::VectorXd& mu_row,
                          const Eigen::VectorXd& sigma2_row,
                          const std::vector<ItemPair>& pairs);

// ---- model evaluation at given coefficients --------------------------------

// Stacked responses, derivatives, and residual targets at (beta, omega,
// theta).  Rows follow the study layout; rows of unverified subjects are
// evaluated on their zero-filled design rows and must be ignored by callers.
struct ModelValues {
  Eigen::VectorXd mu, dmu;          // length n*k
  Eigen::VectorXd sigma2, dsigma2;  // length n*k
  Eigen::VectorXd eta, deta;        // length n*npairs
  Eigen::VectorXd t_target;         // (y - mu)^2
  Eigen::VectorXd u_target;         // pairwise statistics
};

ModelValues evaluate_model(const StudyData& study, const ModelSpec& spec,
                           const Eigen::VectorXd& beta,
                           const Eigen::VectorXd& omega,
                           const Eigen::VectorXd& theta,
                           double var_floor = 1e-8);

// Square roots of the model-based variance functions of the three sets at the
// given coefficients: the mean set follows its response family (identity -> 1,
// log -> mu, logit -> mu(1-mu)); the variance set uses the Gaussian working
// fourth moment (sigma^4, constants folded into phi); the alpha set uses the
// Gaussian working moments of the pairwise statistics.  Exchangeable working
// blocks scale by these, V = phi A^{1/2} ((1-rho) I + rho J) A^{1/2};
// independence blocks stay phi I and ignore them.
struct VarianceFunctions {
  Eigen::VectorXd mean_sqrt;   // length n*k
  Eigen::VectorXd var_sqrt;    // length n*k
  Eigen::VectorXd alpha_sqrt;  // length n*npairs
};

VarianceFunctions variance_functions(const StudyData& study, const ModelSpec& spec,
                                     const Eigen::VectorXd& beta,
                                     const Eigen::VectorXd& omega,
                                     const Eigen::VectorXd& theta,
                                     double var_floor = 1e-8);

// ---- estimating equations (per-subject means) -------------------------------

Eigen::VectorXd mean_equation(const StudyData& study, const ModelSpec& spec,
                              const Eigen::VectorXd& beta,
                              const WorkingCov& cov,
                              const Eigen::VectorXd& weights);

Eigen::VectorXd variance_equation(const StudyData& study, const ModelSpec& spec,
                                  const Eigen::VectorXd& beta,
                                  const Eigen::VectorXd& omega,
                                  const WorkingCov& cov,
                                  const Eigen::VectorXd& weights);

Eigen::VectorXd alpha_equation(const StudyData& study, const ModelSpec& spec,
                               const Eigen::VectorXd& beta,
                               const Eigen::VectorXd& omega,
                               const Eigen::VectorXd& theta,
                               const WorkingCov& cov,
                               const Eigen::VectorXd& weights);

// ---- single Gauss-Newton updates --------------------------------------------
// One undamped update of the given coefficient set, holding everything else
// fixed.  Throws when the weighted normal matrix is singular, naming the
// dependent design columns.

Eigen::VectorXd gn_step_beta(const StudyData& study, const ModelSpec& spec,
                             const Eigen::VectorXd& beta, const WorkingCov& cov,
                             const Eigen::VectorXd& weights);

Eigen::VectorXd gn_step_omega(const StudyData& study, const ModelSpec& spec,
                              const Eigen::VectorXd& beta,
                              const Eigen::VectorXd& omega,
                              const WorkingCov& cov,
                              const Eigen::VectorXd& weights);

Eigen::VectorXd gn_step_theta(const StudyData& study, const ModelSpec& spec,
                              const Eigen::VectorXd& beta,
                              const Eigen::VectorXd& omega,
                              const Eigen::VectorXd& theta,
                              const WorkingCov& cov,
                              const Eigen::VectorXd& weights);

// ---- full sequential fit -----------------------------------------------------

// Solves the three sets in order.  Non-convergence is reported through the
// per-set flags, not thrown; saturation, singularity, and empty effective
// samples throw FitError.
GeeFit fit_gee(const StudyData& study, const ModelSpec& spec,
               const IpwWeights& ipw, const GeeOptions& options = {});

}  // namespace icalpha
