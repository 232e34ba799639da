#include "icalpha/inference.hpp"

#include <boost/math/distributions/normal.hpp>
#include <cmath>

#include "icalpha/errors.hpp"
#include "icalpha/kahan.hpp"
#include "icalpha/stats.hpp"

namespace icalpha {

double normal_cdf(double x) {
  static const boost::math::normal_distribution<double> unit;
  return boost::math::cdf(unit, x);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InputError("normal quantile requires p in (0,1)");
  static const boost::math::normal_distribution<double> unit;
  return boost::math::quantile(unit, p);
}

namespace {

// Apply a block of V^{-1} to rows [r0, r0+m) of a matrix in place.  (a, b)
// are the flat coefficients a I + b J; a nonempty `sa` holds sqrt variance
// functions so V^{-1} = A^{-1/2} (a I + b J) A^{-1/2}, applied as a row
// standardization on both sides.
void apply_vinv_block(Eigen::MatrixXd& mat, Eigen::Index r0, int m,
                      const WorkingCov::InvCoeffs& c, const Eigen::VectorXd& sa,
                      Eigen::Index sa0) {
  auto rows = mat.middleRows(r0, m);
  if (sa.size()) rows.array().colwise() /= sa.segment(sa0, m).array();
  if (c.b != 0.0) {
    const Eigen::RowVectorXd colsum = rows.colwise().sum();
    rows *= c.a;
    rows.rowwise() += c.b * colsum;
  } else {
    rows *= c.a;
  }
  if (sa.size()) rows.array().colwise() /= sa.segment(sa0, m).array();
}

void apply_vinv_block(Eigen::VectorXd& vec, Eigen::Index r0, int m,
                      const WorkingCov::InvCoeffs& c, const Eigen::VectorXd& sa,
                      Eigen::Index sa0) {
  auto seg = vec.segment(r0, m);
  if (sa.size()) seg.array() /= sa.segment(sa0, m).array();
  if (c.b != 0.0) {
    const double sum = seg.sum();
    seg *= c.a;
    seg.array() += c.b * sum;
  } else {
    seg *= c.a;
  }
  if (sa.size()) seg.array() /= sa.segment(sa0, m).array();
}

}  // namespace

SubjectBlocks subject_blocks(const StudyData& study, const ModelValues& mv, int p) {
  const int k = study.k;
  const int np = static_cast<int>(study.pairs.size());
  const int db = static_cast<int>(study.x.cols());
  const int dw = static_cast<int>(study.z.cols());
  const int dt = static_cast<int>(study.w.cols());
  const int dtot = db + dw + dt;
  const int mtot = 2 * k + np;
  const Eigen::Index i0 = static_cast<Eigen::Index>(p) * k;
  const Eigen::Index c0 = static_cast<Eigen::Index>(p) * np;

  SubjectBlocks out;
  out.g = Eigen::MatrixXd::Zero(mtot, dtot);
  out.f.resize(mtot);

  for (int i = 0; i < k; ++i) {
    out.g.block(i, 0, 1, db) = mv.dmu[i0 + i] * study.x.row(i0 + i);
    out.g.block(k + i, db, 1, dw) = mv.dsigma2[i0 + i] * study.z.row(i0 + i);
  }
  for (int c = 0; c < np; ++c)
    out.g.block(2 * k + c, db + dw, 1, dt) = mv.deta[c0 + c] * study.w.row(c0 + c);

  out.h = out.g;
  for (int i = 0; i < k; ++i) {
    // minus d(T)/d(beta) = 2 (y - mu) dmu x'
    out.h.block(k + i, 0, 1, db) =
        2.0 * (study.y(p, i) - mv.mu[i0 + i]) * mv.dmu[i0 + i] * study.x.row(i0 + i);
  }
  for (int c = 0; c < np; ++c) {
    const int i = study.pairs[c].first - 1;
    const int j = study.pairs[c].second - 1;
    const double denom = mv.sigma2[i0 + i] + mv.sigma2[i0 + j];
    // minus d(U)/d(beta) = 2 (mu_j dmu_i x_i + mu_i dmu_j x_j) / denom
    out.h.block(2 * k + c, 0, 1, db) =
        (2.0 / denom) * (mv.mu[i0 + j] * mv.dmu[i0 + i] * study.x.row(i0 + i) +
                         mv.mu[i0 + i] * mv.dmu[i0 + j] * study.x.row(i0 + j));
    // minus d(U)/d(omega) = U (dsigma2_i z_i + dsigma2_j z_j) / denom
    out.h.block(2 * k + c, db, 1, dw) =
        (mv.u_target[c0 + c] / denom) *
        (mv.dsigma2[i0 + i] * study.z.row(i0 + i) +
         mv.dsigma2[i0 + j] * study.z.row(i0 + j));
  }

  for (int i = 0; i < k; ++i) {
    out.f[i] = study.y(p, i) - mv.mu[i0 + i];
    out.f[k + i] = mv.t_target[i0 + i] - mv.sigma2[i0 + i];
  }
  for (int c = 0; c < np; ++c) out.f[2 * k + c] = mv.u_target[c0 + c] - mv.eta[c0 + c];
  return out;
}

SandwichResult sandwich_covariance(const StudyData& study, const ModelSpec& spec,
                                   const GeeFit& fit, const MissingnessFit& miss,
                                   const IpwWeights& ipw, OmegaConvention convention) {
  const int n = study.n;
  const int k = study.k;
  const int np = static_cast<int>(study.pairs.size());
  const int db = static_cast<int>(study.x.cols());
  const int dw = static_cast<int>(study.z.cols());
  const int dt = static_cast<int>(study.w.cols());
  const int dtot = db + dw + dt;

  const ModelValues mv = evaluate_model(study, spec, fit.mean.params,
                                        fit.variance.params, fit.alpha.params);
  const auto c1 = fit.mean.cov.inverse_coeffs(k);
  const auto c2 = fit.variance.cov.inverse_coeffs(k);
  const auto c3 = fit.alpha.cov.inverse_coeffs(np);

  // Exchangeable blocks carry the model-based variance functions; the same
  // scaling used by the solver must enter the sandwich.
  const VarianceFunctions vf = variance_functions(
      study, spec, fit.mean.params, fit.variance.params, fit.alpha.params);
  const Eigen::VectorXd no_scale;
  const auto exch = [](const SetFit& s) {
    return s.cov.structure == WorkingStructure::exchangeable;
  };
  const Eigen::VectorXd& sa1 = exch(fit.mean) ? vf.mean_sqrt : no_scale;
  const Eigen::VectorXd& sa2 = exch(fit.variance) ? vf.var_sqrt : no_scale;
  const Eigen::VectorXd& sa3 = exch(fit.alpha) ? vf.alpha_sqrt : no_scale;

  const bool corrected = !miss.degenerate && miss.gamma.size() > 0;
  const int q = corrected ? static_cast<int>(study.q.cols()) : 0;

  KahanMatrix bread_acc(dtot, dtot);
  KahanMatrix meat_acc(dtot, dtot);
  KahanMatrix coupling_acc(corrected ? dtot : 1, corrected ? q : 1);

  Eigen::MatrixXd gt_vinv_h(dtot, dtot);
  Eigen::VectorXd score(dtot);

  for (int p = 0; p < n; ++p) {
    const double w = ipw.w[p];
    if (w <= 0.0) continue;
    const Eigen::Index i0 = static_cast<Eigen::Index>(p) * k;
    const Eigen::Index c0 = static_cast<Eigen::Index>(p) * np;

    SubjectBlocks blocks = subject_blocks(study, mv, p);

    apply_vinv_block(blocks.h, 0, k, c1, sa1, i0);
    apply_vinv_block(blocks.h, k, k, c2, sa2, i0);
    apply_vinv_block(blocks.h, 2 * k, np, c3, sa3, c0);
    apply_vinv_block(blocks.f, 0, k, c1, sa1, i0);
    apply_vinv_block(blocks.f, k, k, c2, sa2, i0);
    apply_vinv_block(blocks.f, 2 * k, np, c3, sa3, c0);

    gt_vinv_h.noalias() = blocks.g.transpose() * blocks.h;
    score.noalias() = blocks.g.transpose() * blocks.f;

    bread_acc.add(w * gt_vinv_h);
    meat_acc.add((w * w) * (score * score.transpose()));
    if (corrected) {
      const double pi = miss.pi[p];
      const Eigen::RowVectorXd dpi = pi * (1.0 - pi) * study.q.row(p);
      coupling_acc.add((w * w) * (score * dpi));
    }
  }

  SandwichResult out;
  out.dim_beta = db;
  out.dim_omega = dw;
  out.dim_theta = dt;
  out.convention = convention;
  out.weight_corrected = corrected;
  out.bread = bread_acc.value() / n;
  out.meat = meat_acc.value() / n;
  if (corrected) {
    out.coupling = coupling_acc.value() / n;
    out.info = miss.info;
  }

  Eigen::MatrixXd meat = out.meat;
  if (corrected) {
    if (convention == OmegaConvention::inverse) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(out.info);
      const Eigen::MatrixXd solved = ldlt.solve(out.coupling.transpose());
      if (ldlt.info() != Eigen::Success || !solved.allFinite())
        throw FitError("singular missingness information matrix");
      meat.noalias() -= out.coupling * solved;
    } else {
      meat.noalias() -= out.coupling * out.info * out.coupling.transpose();
    }
  }
  meat = 0.5 * (meat + meat.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(meat);
  if (es.info() != Eigen::Success)
    throw FitError("eigendecomposition of the sandwich meat failed");
  const double trace = meat.trace();
  if (es.eigenvalues().minCoeff() < -1e-8 * std::max(trace, 0.0)) {
    out.meat_clipped = true;
    meat = es.eigenvectors() *
           es.eigenvalues().cwiseMax(0.0).asDiagonal() *
           es.eigenvectors().transpose();
  }

  Eigen::FullPivLU<Eigen::MatrixXd> lu(out.bread);
  if (!lu.isInvertible())
    throw FitError("singular bread matrix in sandwich covariance");
  const Eigen::MatrixXd left = lu.solve(meat);                 // bread^-1 meat
  Eigen::MatrixXd psi = lu.solve(left.transpose()).transpose();  // ... bread^-T
  out.psi = 0.5 * (psi + psi.transpose());
  return out;
}

WaldTest wald_test(const Eigen::VectorXd& theta, const Eigen::MatrixXd& psi_theta,
                   int n, int j, double null_value) {
  if (j < 0 || j >= theta.size()) throw InputError("coefficient index out of range");
  if (psi_theta.rows() != theta.size() || psi_theta.cols() != theta.size())
    throw InputError("covariance block does not match coefficient length");
  if (n < 1) throw InputError("subject count must be positive");
  WaldTest out;
  out.estimate = theta[j];
  const double var = psi_theta(j, j) / n;
  if (!(var > 0.0)) throw FitError("zero standard error in Wald test");
  out.se = std::sqrt(var);
  out.z = (theta[j] - null_value) / out.se;
  out.p = 2.0 * (1.0 - normal_cdf(std::abs(out.z)));
  return out;
}

AlphaEstimate alpha_estimate(const Eigen::VectorXd& w_row,
                             const Eigen::VectorXd& theta,
                             const Eigen::MatrixXd& psi_theta, int n, double level) {
  if (!(level > 0.0 && level < 1.0)) throw InputError("ci level must be in (0,1)");
  if (w_row.size() != theta.size())
    throw InputError("covariate row length does not match coefficient length");
  if (psi_theta.rows() != theta.size() || psi_theta.cols() != theta.size())
    throw InputError("covariance block does not match coefficient length");
  if (n < 1) throw InputError("subject count must be positive");

  AlphaEstimate est;
  est.w_row = w_row;
  est.level = level;
  est.predictor = w_row.dot(theta);
  const double var = std::max(w_row.dot(psi_theta * w_row) / n, 0.0);
  est.predictor_se = std::sqrt(var);
  est.alpha = 1.0 - std::exp(est.predictor);
  est.alpha_se = std::exp(est.predictor) * est.predictor_se;
  if (est.predictor_se == 0.0) {
    est.lo = est.hi = est.alpha;
    return est;
  }
  const double zq = normal_quantile(0.5 + 0.5 * level);
  const double lower_t = est.predictor - zq * est.predictor_se;
  const double upper_t = est.predictor + zq * est.predictor_se;
  // t -> 1 - e^t is decreasing: the upper predictor bound gives the lower
  // alpha bound.
  est.lo = 1.0 - std::exp(upper_t);
  est.hi = 1.0 - std::exp(lower_t);
  return est;
}

RangeTest alpha_range_test(const AlphaEstimate& est, double threshold, bool upper,
                           double sig_level) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw InputError("range-test threshold must be in (0,1)");
  if (!(sig_level > 0.0 && sig_level < 1.0))
    throw InputError("significance level must be in (0,1)");
  if (!(est.predictor_se > 0.0)) throw FitError("zero standard error in range test");

  RangeTest out;
  out.threshold = threshold;
  out.upper = upper;
  out.sig_level = sig_level;
  const double t0 = std::log(1.0 - threshold);
  out.z = (est.predictor - t0) / est.predictor_se;
  // alpha >= threshold  <=>  predictor <= t0, so the lower test (H0: alpha <
  // threshold) rejects for small z and the upper test for large z.
  out.p = upper ? 1.0 - normal_cdf(out.z) : normal_cdf(out.z);
  out.reject = out.p <= sig_level;
  return out;
}

double naive_overall_alpha(const Eigen::MatrixXd& y) {
  const Eigen::Index n = y.rows();
  const Eigen::Index k = y.cols();
  if (n < 2) throw InputError("overall alpha requires at least 2 subjects");
  if (k < 2) throw InputError("overall alpha requires at least 2 items");

  double item_var_sum = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) item_var_sum += sample_variance(y.col(i));
  const double total_var = sample_variance(y.rowwise().sum());
  if (!(total_var > 0.0)) throw InputError("zero total-score variance");
  return (static_cast<double>(k) / (k - 1.0)) * (1.0 - item_var_sum / total_var);
}

}  // namespace icalpha
