#include "icalpha/missingness.hpp"

#include <cmath>

#include "icalpha/errors.hpp"
#include "icalpha/stats.hpp"

namespace icalpha {

namespace {

// log(1 + e^t) without overflow
double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

double log_likelihood(const Eigen::VectorXi& delta, const Eigen::VectorXd& t) {
  double ll = 0.0;
  for (Eigen::Index p = 0; p < t.size(); ++p)
    ll += (delta[p] ? t[p] : 0.0) - softplus(t[p]);
  return ll;
}

Eigen::MatrixXd information(const Eigen::MatrixXd& q, const Eigen::VectorXd& pi) {
  const Eigen::ArrayXd wt = pi.array() * (1.0 - pi.array());
  return q.transpose() * wt.matrix().asDiagonal() * q;
}

[[noreturn]] void throw_separation() {
  throw FitError(
      "perfect separation in missingness model: the verification indicator is "
      "fully determined by the covariates; remove columns from the missingness "
      "specification");
}

}  // namespace

MissingnessFit fit_missingness(const Eigen::VectorXi& delta,
                               const Eigen::MatrixXd& q_design) {
  const Eigen::Index n = delta.size();
  if (q_design.rows() != n)
    throw InputError("missingness design row count does not match subject count");
  if (n == 0) throw InputError("no subjects");

  const int observed = delta.cast<int>().sum();
  MissingnessFit fit;
  if (observed == static_cast<int>(n)) {
    fit.degenerate = true;
    fit.pi = Eigen::VectorXd::Ones(n);
    return fit;
  }
  if (observed == 0) throw InputError("all subjects unobserved");

  const Eigen::Index d = q_design.cols();
  if (d == 0) throw InputError("missingness design has no columns");

  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd t = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd pi = Eigen::VectorXd::Constant(n, 0.5);
  double ll = log_likelihood(delta, t);
  bool converged = false;
  int iter = 0;

  for (; iter < 50; ++iter) {
    const Eigen::VectorXd score =
        q_design.transpose() * (delta.cast<double>() - pi);
    const Eigen::MatrixXd hess = information(q_design, pi);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    Eigen::VectorXd step = ldlt.solve(score);
    if (ldlt.info() != Eigen::Success || !step.allFinite() ||
        (hess * step - score).norm() > 1e-6 * (1.0 + score.norm()))
      throw InputError("missingness design is rank deficient");

    // Back off until the likelihood does not decrease.
    double scale = 1.0;
    Eigen::VectorXd gamma_new, t_new;
    double ll_new = 0.0;
    for (int h = 0; h <= 30; ++h, scale *= 0.5) {
      gamma_new = gamma + scale * step;
      t_new = q_design * gamma_new;
      ll_new = log_likelihood(delta, t_new);
      if (ll_new >= ll - 1e-12 * (1.0 + std::abs(ll))) break;
    }
    const double applied = (scale * step).lpNorm<Eigen::Infinity>();
    gamma = gamma_new;
    t = t_new;
    ll = ll_new;
    for (Eigen::Index p = 0; p < n; ++p) pi[p] = inv_logit(t[p]);
    if (applied < 1e-10) {
      converged = true;
      ++iter;
      break;
    }
  }

  if (!converged) {
    // A likelihood maximized only in the limit |gamma| -> inf pins every
    // fitted probability to its indicator.
    bool pinned = true;
    for (Eigen::Index p = 0; p < n && pinned; ++p)
      pinned = delta[p] ? pi[p] > 1.0 - 1e-6 : pi[p] < 1e-6;
    if (pinned) throw_separation();
  }

  fit.gamma = gamma;
  fit.pi = pi;
  fit.info = information(q_design, pi) / static_cast<double>(n);
  fit.converged = converged;
  fit.iterations = iter;
  return fit;
}

Eigen::VectorXd pi_gradient(const Eigen::VectorXd& q_row,
                            const Eigen::VectorXd& gamma) {
  const double pi = inv_logit(q_row.dot(gamma));
  return pi * (1.0 - pi) * q_row;
}

IpwWeights ipw_weights(const Eigen::VectorXi& delta, const MissingnessFit& fit,
                       double floor) {
  const Eigen::Index n = delta.size();
  IpwWeights out;
  out.w = Eigen::VectorXd::Zero(n);
  for (Eigen::Index p = 0; p < n; ++p) {
    if (!delta[p]) continue;
    double pi = fit.pi[p];
    if (pi < floor) {
      pi = floor;
      out.floored = true;
    }
    out.w[p] = 1.0 / pi;
  }
  return out;
}

}  // namespace icalpha
