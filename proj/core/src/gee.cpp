#include "icalpha/gee.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "icalpha/errors.hpp"
#include "icalpha/kahan.hpp"
#include "icalpha/links.hpp"

namespace icalpha {

namespace {

constexpr double kEtaPredictorFail = 100.0;  // |W theta| beyond this: no finite solution

enum class SetKind { mean, variance, alpha };

const char* set_label(SetKind kind) {
  switch (kind) {
    case SetKind::mean: return "mean";
    case SetKind::variance: return "variance";
    case SetKind::alpha: return "alpha";
  }
  return "?";
}

// One estimating-equation set viewed on a study: design, residual target,
// block dimension, working structure, and the response function.
struct SetProblem {
  SetKind kind = SetKind::mean;
  const Eigen::MatrixXd* design = nullptr;          // (n*m) x d
  const std::vector<std::string>* names = nullptr;  // d column names
  Eigen::VectorXd target;                           // n*m
  int m = 0;
  WorkingStructure structure = WorkingStructure::independence;
  MeanLink mean_link = MeanLink::identity;
  VarLink var_link = VarLink::identity_positive;
  double var_floor = 1e-8;
  // Per-pair mean/variance context for the alpha-set variance function;
  // empty for the other kinds.
  Eigen::VectorXd pair_mu_i, pair_mu_j, pair_s2_i, pair_s2_j;
};

struct Evaluation {
  Eigen::VectorXd value;
  Eigen::VectorXd dvalue;
};

Evaluation evaluate(const SetProblem& prob, const Eigen::VectorXd& t) {
  Evaluation ev;
  switch (prob.kind) {
    case SetKind::mean: {
      MeanEval e = eval_mean(prob.mean_link, t);
      ev.value = std::move(e.mu);
      ev.dvalue = std::move(e.dmu);
      break;
    }
    case SetKind::variance: {
      VarEval e = eval_var(prob.var_link, t, prob.var_floor);
      ev.value = std::move(e.sigma2);
      ev.dvalue = std::move(e.dsigma2);
      break;
    }
    case SetKind::alpha: {
      EtaEval e = eval_eta(t);
      ev.value = std::move(e.eta);
      ev.dvalue = std::move(e.deta);
      break;
    }
  }
  return ev;
}

// ---- model-based variance functions -----------------------------------------
// Exchangeable blocks are V = phi A^{1/2} ((1-rho) I + rho J) A^{1/2} with A
// the diagonal of per-component variance functions below; independence blocks
// stay phi I, so moment and closed-form fixed points hold exactly there.
// Constant factors fold into phi.

Eigen::VectorXd mean_varfun_sqrt(MeanLink link, const Eigen::VectorXd& mu,
                                 double floor) {
  switch (link) {
    case MeanLink::identity:
      return Eigen::VectorXd::Ones(mu.size());
    case MeanLink::log:
      return mu.cwiseMax(floor).cwiseSqrt();
    case MeanLink::logit:
      return (mu.array() * (1.0 - mu.array())).max(floor).sqrt().matrix();
  }
  return Eigen::VectorXd::Ones(mu.size());
}

// Gaussian working fourth moment: Var((Y - mu)^2) = 2 sigma^4.
Eigen::VectorXd var_varfun_sqrt(const Eigen::VectorXd& sigma2) {
  return sigma2;  // sqrt(sigma^4); eval_var keeps sigma^2 positive
}

// Gaussian working moments of the pairwise statistic with working covariance
// c = eta (sigma_i^2 + sigma_j^2) / 2:
//   Var(U_ij) = 4 [mu_i^2 s2_j + mu_j^2 s2_i + s2_i s2_j + c^2 + 2 mu_i mu_j c]
//               / (s2_i + s2_j)^2.
Eigen::VectorXd alpha_varfun_sqrt(const Eigen::VectorXd& eta,
                                  const Eigen::VectorXd& mu_i,
                                  const Eigen::VectorXd& mu_j,
                                  const Eigen::VectorXd& s2_i,
                                  const Eigen::VectorXd& s2_j, double floor) {
  Eigen::VectorXd sa(eta.size());
  for (Eigen::Index r = 0; r < eta.size(); ++r) {
    const double s = s2_i[r] + s2_j[r];
    const double c = 0.5 * eta[r] * s;
    const double num = mu_i[r] * mu_i[r] * s2_j[r] + mu_j[r] * mu_j[r] * s2_i[r] +
                       s2_i[r] * s2_j[r] + c * c + 2.0 * mu_i[r] * mu_j[r] * c;
    sa[r] = std::sqrt(std::max(4.0 * num / (s * s), floor));
  }
  return sa;
}

// Square roots of the variance function at the current fitted values; empty
// when the blocks in use do not scale by it (independence, or a constant
// function as under the identity mean link).
Eigen::VectorXd varfun_sqrt(const SetProblem& prob, WorkingStructure structure,
                            const Eigen::VectorXd& value) {
  if (structure != WorkingStructure::exchangeable) return {};
  switch (prob.kind) {
    case SetKind::mean:
      if (prob.mean_link == MeanLink::identity) return {};
      return mean_varfun_sqrt(prob.mean_link, value, prob.var_floor);
    case SetKind::variance:
      return var_varfun_sqrt(value);
    case SetKind::alpha:
      return alpha_varfun_sqrt(value, prob.pair_mu_i, prob.pair_mu_j,
                               prob.pair_s2_i, prob.pair_s2_j, prob.var_floor);
  }
  return {};
}

// Residuals divided componentwise by sqrt(a); pass-through when unscaled.
Eigen::VectorXd standardized(const Eigen::VectorXd& resid,
                             const Eigen::VectorXd& sa) {
  if (sa.size() == 0) return resid;
  return (resid.array() / sa.array()).matrix();
}

// Clamp diagnostics must only reflect verified subjects: design rows of
// unverified subjects are zero-filled and would otherwise trip the variance
// floor spuriously.
void record_clamp_flags(const SetProblem& prob, const Eigen::VectorXd& t,
                        const Eigen::VectorXd& weights, GeeFit& fit) {
  if (prob.kind == SetKind::mean) return;
  // |eta| > 1 - 1e-8  <=>  |t| > log((2 - 1e-8)/1e-8)
  static const double eta_clamp_t = std::log((2.0 - 1e-8) / 1e-8);
  const int n = static_cast<int>(weights.size());
  for (int p = 0; p < n; ++p) {
    if (weights[p] <= 0.0) continue;
    for (int i = 0; i < prob.m; ++i) {
      const double ti = t[static_cast<Eigen::Index>(p) * prob.m + i];
      if (prob.kind == SetKind::variance) {
        if (prob.var_link == VarLink::identity_positive && ti < prob.var_floor)
          fit.variance_clamped = true;
      } else if (std::abs(ti) > eta_clamp_t) {
        fit.eta_clamped = true;
      }
    }
  }
}

std::string offending_columns(const Eigen::MatrixXd& normal,
                              const std::vector<std::string>& names) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(normal);
  const Eigen::Index rank = qr.rank();
  const auto& perm = qr.colsPermutation().indices();
  std::ostringstream out;
  for (Eigen::Index i = rank; i < normal.cols(); ++i) {
    if (i > rank) out << ", ";
    const Eigen::Index col = perm[i];
    out << (col < static_cast<Eigen::Index>(names.size()) ? names[col]
                                                          : "column " + std::to_string(col));
  }
  return out.str();
}

[[noreturn]] void throw_singular(const SetProblem& prob, const Eigen::MatrixXd& normal) {
  std::string cols = offending_columns(normal, *prob.names);
  std::string msg = std::string("singular normal matrix in ") + set_label(prob.kind) +
                    " model fit";
  if (!cols.empty()) msg += "; dependent design columns: " + cols;
  throw FitError(msg);
}

// Solve N step = rhs with a scale-invariant rank guard.
Eigen::VectorXd solve_normal(const SetProblem& prob, const Eigen::MatrixXd& normal,
                             const Eigen::VectorXd& rhs) {
  const Eigen::Index d = normal.cols();
  Eigen::VectorXd diag = normal.diagonal();
  for (Eigen::Index j = 0; j < d; ++j)
    if (!(diag[j] > 0.0)) throw_singular(prob, normal);
  const Eigen::VectorXd s = diag.cwiseSqrt();
  const Eigen::MatrixXd scaled =
      s.cwiseInverse().asDiagonal() * normal * s.cwiseInverse().asDiagonal();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(scaled);
  const auto& dv = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success || dv.minCoeff() < dv.maxCoeff() * 1e-12)
    throw_singular(prob, scaled);
  Eigen::VectorXd step = s.cwiseInverse().asDiagonal() *
                         ldlt.solve(Eigen::VectorXd(s.cwiseInverse().asDiagonal() * rhs));
  if (!step.allFinite()) throw_singular(prob, normal);
  return step;
}

struct Assembled {
  Eigen::MatrixXd normal;  // (1/n) sum_p w_p D_p' V^{-1} D_p
  Eigen::VectorXd ee;      // (1/n) sum_p w_p D_p' V^{-1} r_p
};

// `sa` holds sqrt variance functions (empty = none): Jacobian rows and
// residuals are standardized by it, reducing V^{-1} to the flat a I + b J
// coefficients on the standardized scale.
Assembled assemble(const SetProblem& prob, const Eigen::VectorXd& weights,
                   const Evaluation& ev, const Eigen::VectorXd& resid,
                   const WorkingCov& cov, const Eigen::VectorXd& sa) {
  const Eigen::Index d = prob.design->cols();
  const int n = static_cast<int>(weights.size());
  const int m = prob.m;
  const auto c = cov.inverse_coeffs(m);

  KahanMatrix normal(d, d);
  KahanVector ee(d);
  Eigen::MatrixXd scaled_rows(m, d);
  Eigen::VectorXd dv(m), r_std(m);
  Eigen::VectorXd col_sum(d);
  Eigen::MatrixXd mat_term(d, d);
  Eigen::VectorXd vec_term(d);

  for (int p = 0; p < n; ++p) {
    const double w = weights[p];
    if (w <= 0.0) continue;
    const Eigen::Index r0 = static_cast<Eigen::Index>(p) * m;
    if (sa.size()) {
      dv = ev.dvalue.segment(r0, m).cwiseQuotient(sa.segment(r0, m));
      r_std = resid.segment(r0, m).cwiseQuotient(sa.segment(r0, m));
    } else {
      dv = ev.dvalue.segment(r0, m);
      r_std = resid.segment(r0, m);
    }
    scaled_rows.noalias() = dv.asDiagonal() * prob.design->middleRows(r0, m);
    mat_term.noalias() = c.a * (scaled_rows.transpose() * scaled_rows);
    vec_term.noalias() = c.a * (scaled_rows.transpose() * r_std);
    if (c.b != 0.0) {
      col_sum.noalias() = scaled_rows.colwise().sum().transpose();
      mat_term.noalias() += c.b * (col_sum * col_sum.transpose());
      vec_term.noalias() += (c.b * r_std.sum()) * col_sum;
    }
    normal.add(w * mat_term);
    ee.add(w * vec_term);
  }

  Assembled out;
  out.normal = normal.value() / n;
  out.ee = ee.value() / n;
  return out;
}

// sum_p w_p r_p' V^{-1} r_p, the damping criterion; callers pass residuals
// already standardized when the blocks carry a variance function.
double weighted_objective(const SetProblem& prob, const Eigen::VectorXd& weights,
                          const Eigen::VectorXd& resid, const WorkingCov& cov) {
  const int n = static_cast<int>(weights.size());
  const int m = prob.m;
  const auto c = cov.inverse_coeffs(m);
  KahanScalar obj;
  for (int p = 0; p < n; ++p) {
    const double w = weights[p];
    if (w <= 0.0) continue;
    const auto r = resid.segment(static_cast<Eigen::Index>(p) * m, m);
    double term = c.a * r.squaredNorm();
    if (c.b != 0.0) {
      const double rs = r.sum();
      term += c.b * rs * rs;
    }
    obj.add(w * term);
  }
  return obj.value();
}

int weighted_count(const Eigen::VectorXd& weights) {
  int nw = 0;
  for (Eigen::Index p = 0; p < weights.size(); ++p)
    if (weights[p] > 0.0) ++nw;
  return nw;
}

void check_identifiable(const SetProblem& prob, const Eigen::VectorXd& weights) {
  const int nw = weighted_count(weights);
  const Eigen::Index d = prob.design->cols();
  if (d == 0)
    throw FitError(std::string(set_label(prob.kind)) + " model has no design columns");
  if (nw < std::max<Eigen::Index>(2, d))
    throw FitError(std::string("too few complete subjects to fit the ") +
                   set_label(prob.kind) + " model: need at least " +
                   std::to_string(std::max<Eigen::Index>(2, d)) + ", have " +
                   std::to_string(nw));
}

double weighted_predictor_max(const SetProblem& prob, const Eigen::VectorXd& t,
                              const Eigen::VectorXd& weights) {
  double tmax = 0.0;
  const int n = static_cast<int>(weights.size());
  for (int p = 0; p < n; ++p) {
    if (weights[p] <= 0.0) continue;
    tmax = std::max(tmax,
                    t.segment(static_cast<Eigen::Index>(p) * prob.m, prob.m)
                        .cwiseAbs()
                        .maxCoeff());
  }
  return tmax;
}

SetFit solve_set(const SetProblem& prob, Eigen::VectorXd start,
                 const Eigen::VectorXd& weights, const GeeOptions& opt,
                 GeeFit& flags) {
  check_identifiable(prob, weights);

  SetFit out;
  out.params = std::move(start);
  Eigen::VectorXd t = (*prob.design) * out.params;
  record_clamp_flags(prob, t, weights, flags);
  Evaluation ev = evaluate(prob, t);
  Eigen::VectorXd resid = prob.target - ev.value;
  Eigen::VectorXd sa = varfun_sqrt(prob, prob.structure, ev.value);
  Eigen::VectorXd r_std = standardized(resid, sa);
  out.cov = estimate_nuisance(r_std, weights, prob.m, prob.structure);
  double obj = weighted_objective(prob, weights, r_std, out.cov);

  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    const Assembled a = assemble(prob, weights, ev, resid, out.cov, sa);
    const Eigen::VectorXd step = solve_normal(prob, a.normal, a.ee);

    double scale = 1.0;
    Eigen::VectorXd cand, tc, residc;
    Evaluation evc;
    for (int h = 0;; ++h) {
      cand = out.params + scale * step;
      tc.noalias() = (*prob.design) * cand;
      if (prob.kind == SetKind::alpha && scale == 1.0 &&
          weighted_predictor_max(prob, tc, weights) > kEtaPredictorFail)
        throw FitError("eta saturated");
      evc = evaluate(prob, tc);
      residc = prob.target - evc.value;
      // Fixed metric within the iteration: current nuisance and scale.
      const double objc =
          weighted_objective(prob, weights, standardized(residc, sa), out.cov);
      if (objc <= obj * (1.0 + 1e-12) || h >= opt.max_halvings) break;
      scale *= 0.5;
    }

    const double applied = scale * step.lpNorm<Eigen::Infinity>();
    out.params = std::move(cand);
    t = std::move(tc);
    ev = std::move(evc);
    resid = std::move(residc);
    record_clamp_flags(prob, t, weights, flags);
    sa = varfun_sqrt(prob, prob.structure, ev.value);
    r_std = standardized(resid, sa);
    out.cov = estimate_nuisance(r_std, weights, prob.m, prob.structure);
    obj = weighted_objective(prob, weights, r_std, out.cov);
    out.iterations = iter + 1;
    if (applied < opt.tolerance * std::max(1.0, out.params.lpNorm<Eigen::Infinity>())) {
      out.converged = true;
      break;
    }
  }

  const Assembled final_ee = assemble(prob, weights, ev, resid, out.cov, sa);
  out.ee_norm = final_ee.ee.lpNorm<Eigen::Infinity>();
  return out;
}

// Unweighted least squares on the verified rows, used only for starting
// values.  Rank deficiency here is a property of the design itself.
Eigen::VectorXd initial_ls(const SetProblem& prob, const Eigen::VectorXd& response,
                           const Eigen::VectorXd& weights) {
  const Eigen::Index d = prob.design->cols();
  const int m = prob.m;
  const int nw = weighted_count(weights);
  Eigen::MatrixXd xc(static_cast<Eigen::Index>(nw) * m, d);
  Eigen::VectorXd yc(static_cast<Eigen::Index>(nw) * m);
  Eigen::Index at = 0;
  for (Eigen::Index p = 0; p < weights.size(); ++p) {
    if (weights[p] <= 0.0) continue;
    xc.middleRows(at * m, m) = prob.design->middleRows(p * m, m);
    yc.segment(at * m, m) = response.segment(p * m, m);
    ++at;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xc);
  if (qr.rank() < d) {
    const auto& perm = qr.colsPermutation().indices();
    std::ostringstream cols;
    for (Eigen::Index i = qr.rank(); i < d; ++i) {
      if (i > qr.rank()) cols << ", ";
      const Eigen::Index col = perm[i];
      cols << (col < static_cast<Eigen::Index>(prob.names->size())
                   ? (*prob.names)[col]
                   : "column " + std::to_string(col));
    }
    throw FitError(std::string("rank-deficient design in ") + set_label(prob.kind) +
                   " model; dependent design columns: " + cols.str());
  }
  return qr.solve(yc);
}

Eigen::VectorXd flatten_rows(const Eigen::MatrixXd& y) {
  Eigen::VectorXd out(y.size());
  for (Eigen::Index r = 0; r < y.rows(); ++r)
    for (Eigen::Index c = 0; c < y.cols(); ++c) out[r * y.cols() + c] = y(r, c);
  return out;
}

SetProblem make_mean_problem(const StudyData& study, const ModelSpec& spec,
                             double var_floor) {
  SetProblem prob;
  prob.kind = SetKind::mean;
  prob.design = &study.x;
  prob.names = &study.x_names;
  prob.target = flatten_rows(study.y);
  prob.m = study.k;
  prob.structure = spec.work_mean;
  prob.mean_link = spec.mean_link;
  prob.var_floor = var_floor;
  return prob;
}

SetProblem make_variance_problem(const StudyData& study, const ModelSpec& spec,
                                 const Eigen::VectorXd& mu, double var_floor) {
  SetProblem prob;
  prob.kind = SetKind::variance;
  prob.design = &study.z;
  prob.names = &study.z_names;
  prob.target = (flatten_rows(study.y) - mu).array().square();
  prob.m = study.k;
  prob.structure = spec.work_var;
  prob.var_link = spec.var_link;
  prob.var_floor = var_floor;
  return prob;
}

Eigen::VectorXd build_u_target(const StudyData& study, const Eigen::VectorXd& mu,
                               const Eigen::VectorXd& sigma2) {
  const int n = study.n;
  const int k = study.k;
  const int np = static_cast<int>(study.pairs.size());
  Eigen::VectorXd u(static_cast<Eigen::Index>(n) * np);
  for (int p = 0; p < n; ++p) {
    const Eigen::Index y0 = static_cast<Eigen::Index>(p) * k;
    const Eigen::Index u0 = static_cast<Eigen::Index>(p) * np;
    for (int c = 0; c < np; ++c) {
      const int i = study.pairs[c].first - 1;
      const int j = study.pairs[c].second - 1;
      u[u0 + c] = 2.0 *
                  (study.y(p, i) * study.y(p, j) - mu[y0 + i] * mu[y0 + j]) /
                  (sigma2[y0 + i] + sigma2[y0 + j]);
    }
  }
  return u;
}

SetProblem make_alpha_problem(const StudyData& study, const ModelSpec& spec,
                              const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma2,
                              double var_floor) {
  SetProblem prob;
  prob.kind = SetKind::alpha;
  prob.design = &study.w;
  prob.names = &study.w_names;
  prob.target = build_u_target(study, mu, sigma2);
  prob.m = static_cast<int>(study.pairs.size());
  prob.structure = spec.work_alpha;
  prob.var_floor = var_floor;

  const int n = study.n;
  const int k = study.k;
  const Eigen::Index rows = static_cast<Eigen::Index>(n) * prob.m;
  prob.pair_mu_i.resize(rows);
  prob.pair_mu_j.resize(rows);
  prob.pair_s2_i.resize(rows);
  prob.pair_s2_j.resize(rows);
  for (int p = 0; p < n; ++p) {
    const Eigen::Index y0 = static_cast<Eigen::Index>(p) * k;
    const Eigen::Index u0 = static_cast<Eigen::Index>(p) * prob.m;
    for (int c = 0; c < prob.m; ++c) {
      const int i = study.pairs[c].first - 1;
      const int j = study.pairs[c].second - 1;
      prob.pair_mu_i[u0 + c] = mu[y0 + i];
      prob.pair_mu_j[u0 + c] = mu[y0 + j];
      prob.pair_s2_i[u0 + c] = sigma2[y0 + i];
      prob.pair_s2_j[u0 + c] = sigma2[y0 + j];
    }
  }
  return prob;
}

void check_params(const SetProblem& prob, const Eigen::VectorXd& params) {
  if (params.size() != prob.design->cols())
    throw FitError(std::string(set_label(prob.kind)) +
                   " coefficient length does not match its design");
}

}  // namespace

// ---- residual building blocks ----------------------------------------------

Eigen::VectorXd compute_T(const Eigen::VectorXd& y_row, const Eigen::VectorXd& mu_row) {
  if (y_row.size() != mu_row.size())
    throw FitError("response and mean rows must have equal length");
  return (y_row - mu_row).array().square();
}

Eigen::VectorXd compute_U(const Eigen::VectorXd& y_row, const Eigen::VectorXd& mu_row,
                          const Eigen::VectorXd& sigma2_row,
                          const std::vector<ItemPair>& pairs) {
  const Eigen::Index k = y_row.size();
  if (mu_row.size() != k || sigma2_row.size() != k)
    throw FitError("response, mean, and variance rows must have equal length");
  for (Eigen::Index i = 0; i < k; ++i)
    if (!(sigma2_row[i] > 0.0)) throw FitError("non-positive variance");
  Eigen::VectorXd u(static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t c = 0; c < pairs.size(); ++c) {
    const int i = pairs[c].first - 1;
    const int j = pairs[c].second - 1;
    if (i < 0 || j < 0 || i >= k || j >= k) throw FitError("pair index out of range");
    u[static_cast<Eigen::Index>(c)] = 2.0 * (y_row[i] * y_row[j] - mu_row[i] * mu_row[j]) /
                                      (sigma2_row[i] + sigma2_row[j]);
  }
  return u;
}

// ---- model evaluation --------------------------------------------------------

ModelValues evaluate_model(const StudyData& study, const ModelSpec& spec,
                           const Eigen::VectorXd& beta, const Eigen::VectorXd& omega,
                           const Eigen::VectorXd& theta, double var_floor) {
  if (beta.size() != study.x.cols() || omega.size() != study.z.cols() ||
      theta.size() != study.w.cols())
    throw FitError("coefficient lengths do not match the study designs");

  ModelValues mv;
  const MeanEval me = eval_mean(spec.mean_link, study.x * beta);
  mv.mu = me.mu;
  mv.dmu = me.dmu;
  mv.t_target = (flatten_rows(study.y) - mv.mu).array().square();

  const VarEval ve = eval_var(spec.var_link, study.z * omega, var_floor);
  mv.sigma2 = ve.sigma2;
  mv.dsigma2 = ve.dsigma2;
  mv.u_target = build_u_target(study, mv.mu, mv.sigma2);

  const EtaEval ee = eval_eta(study.w * theta);
  mv.eta = ee.eta;
  mv.deta = ee.deta;
  return mv;
}

VarianceFunctions variance_functions(const StudyData& study, const ModelSpec& spec,
                                     const Eigen::VectorXd& beta,
                                     const Eigen::VectorXd& omega,
                                     const Eigen::VectorXd& theta, double var_floor) {
  const ModelValues mv = evaluate_model(study, spec, beta, omega, theta, var_floor);
  VarianceFunctions vf;
  vf.mean_sqrt = mean_varfun_sqrt(spec.mean_link, mv.mu, var_floor);
  vf.var_sqrt = var_varfun_sqrt(mv.sigma2);

  const int n = study.n;
  const int k = study.k;
  const int np = static_cast<int>(study.pairs.size());
  Eigen::VectorXd mu_i(static_cast<Eigen::Index>(n) * np), mu_j(mu_i.size()),
      s2_i(mu_i.size()), s2_j(mu_i.size());
  for (int p = 0; p < n; ++p) {
    const Eigen::Index y0 = static_cast<Eigen::Index>(p) * k;
    const Eigen::Index u0 = static_cast<Eigen::Index>(p) * np;
    for (int c = 0; c < np; ++c) {
      const int i = study.pairs[c].first - 1;
      const int j = study.pairs[c].second - 1;
      mu_i[u0 + c] = mv.mu[y0 + i];
      mu_j[u0 + c] = mv.mu[y0 + j];
      s2_i[u0 + c] = mv.sigma2[y0 + i];
      s2_j[u0 + c] = mv.sigma2[y0 + j];
    }
  }
  vf.alpha_sqrt = alpha_varfun_sqrt(mv.eta, mu_i, mu_j, s2_i, s2_j, var_floor);
  return vf;
}

// ---- estimating equations ----------------------------------------------------

Eigen::VectorXd mean_equation(const StudyData& study, const ModelSpec& spec,
                              const Eigen::VectorXd& beta, const WorkingCov& cov,
                              const Eigen::VectorXd& weights) {
  SetProblem prob = make_mean_problem(study, spec, 1e-8);
  check_params(prob, beta);
  const Evaluation ev = evaluate(prob, *prob.design * beta);
  const Eigen::VectorXd sa = varfun_sqrt(prob, cov.structure, ev.value);
  return assemble(prob, weights, ev, prob.target - ev.value, cov, sa).ee;
}

Eigen::VectorXd variance_equation(const StudyData& study, const ModelSpec& spec,
                                  const Eigen::VectorXd& beta,
                                  const Eigen::VectorXd& omega, const WorkingCov& cov,
                                  const Eigen::VectorXd& weights) {
  SetProblem mean_prob = make_mean_problem(study, spec, 1e-8);
  check_params(mean_prob, beta);
  const Evaluation mean_ev = evaluate(mean_prob, *mean_prob.design * beta);
  SetProblem prob = make_variance_problem(study, spec, mean_ev.value, 1e-8);
  check_params(prob, omega);
  const Evaluation ev = evaluate(prob, *prob.design * omega);
  const Eigen::VectorXd sa = varfun_sqrt(prob, cov.structure, ev.value);
  return assemble(prob, weights, ev, prob.target - ev.value, cov, sa).ee;
}

Eigen::VectorXd alpha_equation(const StudyData& study, const ModelSpec& spec,
                               const Eigen::VectorXd& beta, const Eigen::VectorXd& omega,
                               const Eigen::VectorXd& theta, const WorkingCov& cov,
                               const Eigen::VectorXd& weights) {
  SetProblem mean_prob = make_mean_problem(study, spec, 1e-8);
  check_params(mean_prob, beta);
  const Evaluation mean_ev = evaluate(mean_prob, *mean_prob.design * beta);
  SetProblem var_prob = make_variance_problem(study, spec, mean_ev.value, 1e-8);
  check_params(var_prob, omega);
  const Evaluation var_ev = evaluate(var_prob, *var_prob.design * omega);
  SetProblem prob = make_alpha_problem(study, spec, mean_ev.value, var_ev.value, 1e-8);
  check_params(prob, theta);
  const Evaluation ev = evaluate(prob, *prob.design * theta);
  const Eigen::VectorXd sa = varfun_sqrt(prob, cov.structure, ev.value);
  return assemble(prob, weights, ev, prob.target - ev.value, cov, sa).ee;
}

// ---- single Gauss-Newton updates ----------------------------------------------

Eigen::VectorXd gn_step_beta(const StudyData& study, const ModelSpec& spec,
                             const Eigen::VectorXd& beta, const WorkingCov& cov,
                             const Eigen::VectorXd& weights) {
  SetProblem prob = make_mean_problem(study, spec, 1e-8);
  check_params(prob, beta);
  const Evaluation ev = evaluate(prob, *prob.design * beta);
  const Eigen::VectorXd sa = varfun_sqrt(prob, cov.structure, ev.value);
  const Assembled a = assemble(prob, weights, ev, prob.target - ev.value, cov, sa);
  return beta + solve_normal(prob, a.normal, a.ee);
}

Eigen::VectorXd gn_step_omega(const StudyData& study, const ModelSpec& spec,
                              const Eigen::VectorXd& beta, const Eigen::VectorXd& omega,
                              const WorkingCov& cov, const Eigen::VectorXd& weights) {
  SetProblem mean_prob = make_mean_problem(study, spec, 1e-8);
  check_params(mean_prob, beta);
  const Evaluation mean_ev = evaluate(mean_prob, *mean_prob.design * beta);
  SetProblem prob = make_variance_problem(study, spec, mean_ev.value, 1e-8);
  check_params(prob, omega);
  const Evaluation ev = evaluate(prob, *prob.design * omega);
  const Eigen::VectorXd sa = varfun_sqrt(prob, cov.structure, ev.value);
  const Assembled a = assemble(prob, weights, ev, prob.target - ev.value, cov, sa);
  return omega + solve_normal(prob, a.normal, a.ee);
}

Eigen::VectorXd gn_step_theta(const StudyData& study, const ModelSpec& spec,
                              const Eigen::VectorXd& beta, const Eigen::VectorXd& omega,
                              const Eigen::VectorXd& theta, const WorkingCov& cov,
                              const Eigen::VectorXd& weights) {
  SetProblem mean_prob = make_mean_problem(study, spec, 1e-8);
  check_params(mean_prob, beta);
  const Evaluation mean_ev = evaluate(mean_prob, *mean_prob.design * beta);
  SetProblem var_prob = make_variance_problem(study, spec, mean_ev.value, 1e-8);
  check_params(var_prob, omega);
  const Evaluation var_ev = evaluate(var_prob, *var_prob.design * omega);
  SetProblem prob = make_alpha_problem(study, spec, mean_ev.value, var_ev.value, 1e-8);
  check_params(prob, theta);
  const Evaluation ev = evaluate(prob, *prob.design * theta);
  const Eigen::VectorXd sa = varfun_sqrt(prob, cov.structure, ev.value);
  const Assembled a = assemble(prob, weights, ev, prob.target - ev.value, cov, sa);
  return theta + solve_normal(prob, a.normal, a.ee);
}

// ---- full sequential fit -------------------------------------------------------

GeeFit fit_gee(const StudyData& study, const ModelSpec& spec, const IpwWeights& ipw,
               const GeeOptions& options) {
  if (ipw.w.size() != study.n)
    throw FitError("weight vector length does not match subject count");
  const Eigen::VectorXd& w = ipw.w;

  GeeFit fit;

  // set 1: mean coefficients
  SetProblem mean_prob = make_mean_problem(study, spec, options.var_floor);
  check_identifiable(mean_prob, w);
  Eigen::VectorXd y_init(mean_prob.target.size());
  for (Eigen::Index r = 0; r < y_init.size(); ++r)
    y_init[r] = mean_link_inverse(spec.mean_link, mean_prob.target[r]);
  const Eigen::VectorXd beta0 = initial_ls(mean_prob, y_init, w);
  fit.mean = solve_set(mean_prob, beta0, w, options, fit);

  // set 2: variance coefficients, mean frozen
  const Evaluation mean_ev = evaluate(mean_prob, *mean_prob.design * fit.mean.params);
  SetProblem var_prob = make_variance_problem(study, spec, mean_ev.value, options.var_floor);
  check_identifiable(var_prob, w);
  Eigen::VectorXd t_init(var_prob.target.size());
  for (Eigen::Index r = 0; r < t_init.size(); ++r)
    t_init[r] = var_link_inverse(spec.var_link, var_prob.target[r], options.var_floor);
  const Eigen::VectorXd omega0 = initial_ls(var_prob, t_init, w);
  fit.variance = solve_set(var_prob, omega0, w, options, fit);

  // set 3: alpha coefficients, mean and variance frozen
  const Evaluation var_ev = evaluate(var_prob, *var_prob.design * fit.variance.params);
  SetProblem alpha_prob =
      make_alpha_problem(study, spec, mean_ev.value, var_ev.value, options.var_floor);
  check_identifiable(alpha_prob, w);
  fit.alpha = solve_set(alpha_prob, Eigen::VectorXd::Zero(study.w.cols()), w, options, fit);

  return fit;
}

}  // namespace icalpha
