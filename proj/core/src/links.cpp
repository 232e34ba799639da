#include "icalpha/links.hpp"

#include <cmath>

#include "icalpha/errors.hpp"
#include "icalpha/stats.hpp"

namespace icalpha {

// ---- mean model -----------------------------------------------------------

MeanEval eval_mean(MeanLink link, const Eigen::VectorXd& t) {
  MeanEval out;
  switch (link) {
    case MeanLink::identity:
      out.mu = t;
      out.dmu = Eigen::VectorXd::Ones(t.size());
      break;
    case MeanLink::log:
      out.mu = t.array().exp();
      out.dmu = out.mu;
      break;
    case MeanLink::logit: {
      out.mu.resize(t.size());
      for (Eigen::Index i = 0; i < t.size(); ++i) out.mu[i] = inv_logit(t[i]);
      // mu(1 - mu), numerically symmetric in t.
      out.dmu = out.mu.array() * (1.0 - out.mu.array());
      break;
    }
  }
  return out;
}

double mean_link_inverse(MeanLink link, double mu) {
  switch (link) {
    case MeanLink::identity:
      return mu;
    case MeanLink::log:
      return std::log(std::max(mu, 1e-8));
    case MeanLink::logit: {
      const double p = std::min(std::max(mu, 1e-8), 1.0 - 1e-8);
      return logit(p);
    }
  }
  return mu;
}

// ---- variance model -------------------------------------------------------

VarEval eval_var(VarLink link, const Eigen::VectorXd& t, double floor) {
  VarEval out;
  switch (link) {
    case VarLink::identity_positive: {
      out.sigma2 = t;
      // Keep the unit derivative on clamped components so the solver can
      // still move back into the positive region.
      out.dsigma2 = Eigen::VectorXd::Ones(t.size());
      for (Eigen::Index i = 0; i < t.size(); ++i)
        if (out.sigma2[i] < floor) {
          out.sigma2[i] = floor;
          out.clamped = true;
        }
      break;
    }
    case VarLink::log:
      out.sigma2 = t.array().exp();
      out.dsigma2 = out.sigma2;
      break;
  }
  return out;
}

double var_link_inverse(VarLink link, double sigma2, double floor) {
  const double s = std::max(sigma2, floor);
  return link == VarLink::identity_positive ? s : std::log(s);
}

// ---- alpha model ----------------------------------------------------------

EtaEval eval_eta(const Eigen::VectorXd& t, double clamp_at, double sat_fail) {
  EtaEval out;
  out.eta.resize(t.size());
  out.deta.resize(t.size());
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const double ti = t[i];
    if (std::abs(ti) > sat_fail) throw FitError("eta saturated");
    // (1 - e^t)/(1 + e^t) = -tanh(t/2), stable for all t.
    double eta = -std::tanh(0.5 * ti);
    if (eta > clamp_at) {
      eta = clamp_at;
      out.clamped = true;
    } else if (eta < -clamp_at) {
      eta = -clamp_at;
      out.clamped = true;
    }
    out.eta[i] = eta;
    // -2 e^t/(1+e^t)^2 = -2 s(t) s(-t) with s the logistic function.
    out.deta[i] = -2.0 * inv_logit(ti) * inv_logit(-ti);
  }
  return out;
}

double eta_inverse(double u) {
  if (!(u > -1.0 && u < 1.0)) throw FitError("eta saturated");
  return std::log((1.0 - u) / (1.0 + u));
}

double alpha_from_predictor(double t) { return 1.0 - std::exp(t); }

double predictor_from_alpha(double alpha) {
  if (!(alpha < 1.0)) throw InputError("alpha must be below 1");
  return std::log(1.0 - alpha);
}

}  // namespace icalpha
