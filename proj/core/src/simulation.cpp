#include "icalpha/simulation.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <set>
#include <sstream>
#include <thread>

#include "icalpha/csv.hpp"
#include "icalpha/errors.hpp"
#include "icalpha/inference.hpp"
#include "icalpha/kahan.hpp"
#include "icalpha/rng.hpp"
#include "icalpha/stats.hpp"

namespace icalpha {

using nlohmann::json;

// ---- generator design --------------------------------------------------------

SimDesign SimDesign::standard(int n) {
  SimDesign design;
  design.n = n;
  design.beta.resize(6);
  design.beta << -0.6, 0.4, 0.3, 0.25, 0.0, 1.0;
  design.theta.resize(6);
  design.theta << -0.6, -0.4, 0.05, 0.05, -0.2, 0.0;
  design.gamma.resize(3);
  design.gamma << 2.0, 0.5, -0.6;
  return design;
}

SimDesign SimDesign::power(int n, double alpha_tilde, double w1_tilde) {
  SimDesign design = standard(n);
  if (!(alpha_tilde > 0.0 && alpha_tilde < 1.0))
    throw InputError("power design: target reliability must lie in (0, 1)");
  if (!(w1_tilde > 0.0) || !std::isfinite(w1_tilde))
    throw InputError("power design: w1_tilde must be positive and finite");
  const double theta0 = std::log(0.3);
  const double theta1 = (std::log(1.0 - alpha_tilde) - theta0) / w1_tilde;
  if (!std::isfinite(theta1))
    throw InputError("power design: grid point implies a non-finite slope");
  design.power_variant = true;
  design.alpha_tilde = alpha_tilde;
  design.w1_tilde = w1_tilde;
  design.theta.resize(2);
  design.theta << theta0, theta1;
  return design;
}

void SimDesign::validate() const {
  if (n < 1) throw InputError("simulation design: n must be >= 1");
  if (k != 3) throw InputError("simulation design: generator supports k = 3 only");
  if (beta.size() != 6)
    throw InputError("simulation design: beta must have 6 components");
  if (gamma.size() != 3)
    throw InputError("simulation design: gamma must have 3 components");
  const Eigen::Index want_theta = power_variant ? 2 : 6;
  if (theta.size() != want_theta)
    throw InputError("simulation design: theta must have " +
                     std::to_string(want_theta) + " components");
  if (!beta.allFinite() || !theta.allFinite() || !gamma.allFinite())
    throw InputError("simulation design: coefficients must be finite");
  if (power_variant && !(w1_tilde > 0.0))
    throw InputError("simulation design: w1_tilde must be positive");
}

ModelSpec sim_model_spec(const SimDesign& design) {
  ModelSpec spec;
  spec.mean_link = MeanLink::identity;
  spec.intercept_mode = InterceptMode::per_item;
  spec.mean_columns = {"x1", "x2", "x3"};
  spec.var_link = VarLink::identity_positive;
  spec.variance_mode = VarianceMode::per_item_constant;
  if (design.power_variant)
    spec.alpha_columns = {"w1"};
  else
    spec.alpha_columns = {"w1", "w2", "w3", "w4", "w5"};
  spec.has_missingness_model = true;
  spec.miss_columns = {"q1", "q2"};
  spec.work_mean = WorkingStructure::exchangeable;
  spec.work_var = WorkingStructure::independence;
  spec.work_alpha = WorkingStructure::exchangeable;
  return spec;
}

// ---- study generation ----------------------------------------------------------

namespace {

constexpr double kMinEigen = 1e-6;  // response covariance floor after repair

// lambda_min(C) > eps for the 3x3 unit-diagonal matrix with off-diagonals
// (a, b, c), checked via the leading minors of C - eps*I.
bool min_eig_exceeds(double a, double b, double c, double eps) {
  const double d = 1.0 - eps;
  if (d <= 0.0) return false;
  if (d * d - a * a <= 0.0) return false;
  const double det = d * d * d + 2.0 * a * b * c - d * (a * a + b * b + c * c);
  return det > 0.0;
}

double reliability_link(double t) { return -std::tanh(0.5 * t); }

}  // namespace

SimulatedStudy simulate_study(const SimDesign& design, std::uint64_t seed) {
  design.validate();
  Rng rng(seed);

  const int n = design.n;
  const int k = design.k;
  const int np = pair_count(k);
  const int dim_theta = static_cast<int>(design.theta.size());

  SimulatedStudy out;
  StudyData& st = out.study;
  st.n = n;
  st.k = k;
  st.pairs = build_pair_index(k);
  st.y.resize(n, k);
  st.x = Eigen::MatrixXd::Zero(n * k, 6);
  st.z = Eigen::MatrixXd::Zero(n * k, k);
  st.w = Eigen::MatrixXd::Zero(n * np, dim_theta);
  st.q.resize(n, 3);
  st.delta.resize(n);

  st.subject_ids.resize(n);
  for (int p = 0; p < n; ++p) st.subject_ids[p] = std::to_string(p + 1);
  for (int i = 1; i <= k; ++i) st.x_names.push_back("(item " + std::to_string(i) + ")");
  st.x_names.insert(st.x_names.end(), {"x1", "x2", "x3"});
  for (int i = 1; i <= k; ++i) st.z_names.push_back("(item " + std::to_string(i) + ")");
  st.w_names.push_back("(intercept)");
  if (design.power_variant)
    st.w_names.push_back("w1");
  else
    st.w_names.insert(st.w_names.end(), {"w1", "w2", "w3", "w4", "w5"});
  st.q_names = {"(intercept)", "q1", "q2"};

  // Per-subject draw order is part of the determinism contract: mean
  // covariates (x1; then x2, x3 per item), reliability covariates,
  // verification covariates, response innovations, verification flag.
  Eigen::Matrix3d corr;
  Eigen::Vector3d mu, shock;
  Eigen::VectorXd wrow(dim_theta);
  double t_pair[3], x2[3], x3[3];
  int repairs = 0;

  for (int p = 0; p < n; ++p) {
    const double x1 = rng.uniform(-1.0, 1.0);
    for (int i = 0; i < k; ++i) {
      x2[i] = rng.uniform(-1.0, 1.0);
      x3[i] = rng.normal();
    }

    if (design.power_variant) {
      const double w1 = rng.uniform(0.0, 1.0);
      wrow << 1.0, w1;
      const double t = design.theta(0) + design.theta(1) * w1;
      for (int c = 0; c < np; ++c) t_pair[c] = t;
      for (int c = 0; c < np; ++c) st.w.row(p * np + c) = wrow;
    } else {
      const double w1 = rng.bernoulli(0.5) ? 1.0 : 0.0;
      const double w2 = rng.uniform(0.0, 1.0);
      const double w3 = rng.normal();
      for (int c = 0; c < np; ++c) {
        const double w4 = rng.uniform(0.0, 1.0);
        const double w5 = rng.normal();
        wrow << 1.0, w1, w2, w3, w4, w5;
        t_pair[c] = wrow.dot(design.theta);
        st.w.row(p * np + c) = wrow;
      }
    }

    const double q1 = rng.normal();
    const double q2 = rng.normal();
    st.q(p, 0) = 1.0;
    st.q(p, 1) = q1;
    st.q(p, 2) = q2;

    for (int i = 0; i < k; ++i)
      mu(i) = design.beta(i) + design.beta(3) * x1 + design.beta(4) * x2[i] +
              design.beta(5) * x3[i];

    double r12 = reliability_link(t_pair[0]);
    double r13 = reliability_link(t_pair[1]);
    double r23 = reliability_link(t_pair[2]);
    if (!min_eig_exceeds(r12, r13, r23, kMinEigen)) {
      corr << 1.0, r12, r13, r12, 1.0, r23, r13, r23, 1.0;
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(corr,
                                                         Eigen::EigenvaluesOnly);
      const double lmin = eig.eigenvalues().minCoeff();
      const double shrink = std::min(1.0, (1.0 - kMinEigen) / (1.0 - lmin));
      if (shrink < 1.0) {
        r12 *= shrink;
        r13 *= shrink;
        r23 *= shrink;
        ++repairs;
      }
    }
    corr << 1.0, r12, r13, r12, 1.0, r23, r13, r23, 1.0;

    for (int i = 0; i < k; ++i) shock(i) = rng.normal();
    Eigen::LLT<Eigen::Matrix3d> llt(corr);
    if (llt.info() != Eigen::Success)
      throw FitError("response covariance factorization failed after repair");
    st.y.row(p) = (mu + llt.matrixL() * shock).transpose();

    const double pi = inv_logit(design.gamma(0) + design.gamma(1) * q1 +
                                design.gamma(2) * q2);
    st.delta(p) = rng.bernoulli(pi) ? 1 : 0;

    if (st.delta(p) == 1) {
      for (int i = 0; i < k; ++i) {
        const int row = p * k + i;
        st.x(row, i) = 1.0;
        st.x(row, 3) = x1;
        st.x(row, 4) = x2[i];
        st.x(row, 5) = x3[i];
        st.z(row, i) = 1.0;
      }
    } else {
      // Unverified subjects keep zero design rows, matching the CSV loader.
      for (int c = 0; c < np; ++c) st.w.row(p * np + c).setZero();
    }
  }

  out.pd_repairs = repairs;
  return out;
}

// ---- replicated Monte Carlo -----------------------------------------------------

namespace {

constexpr std::size_t kFailureExamples = 3;

void parallel_replicates(int count, int jobs,
                         const std::function<void(int)>& body) {
  if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
  jobs = std::max(1, std::min(jobs, count));
  if (jobs == 1) {
    for (int r = 0; r < count; ++r) body(r);
    return;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r; (r = next.fetch_add(1)) < count;) body(r);
  };
  std::vector<std::thread> threads;
  threads.reserve(jobs);
  for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
  for (auto& thread : threads) thread.join();
}

// Coefficient row where the reliability CI coverage is tracked: a typical
// subject of the standard design, or (1, w1_tilde) under the power design.
Eigen::VectorXd mc_alpha_row(const SimDesign& design) {
  if (design.power_variant) {
    Eigen::VectorXd row(2);
    row << 1.0, design.w1_tilde;
    return row;
  }
  Eigen::VectorXd row(6);
  row << 1.0, 1.0, 0.5, 0.0, 0.5, 0.0;
  return row;
}

struct RepOutcome {
  bool ok = false;
  int pd_repairs = 0;
  Eigen::VectorXd est, se;
  std::vector<unsigned char> reject, cover;
  unsigned char alpha_cover = 0;
  std::string message;
};

}  // namespace

McSummary run_mc(const SimDesign& design, int replicates,
                 std::uint64_t base_seed, const McOptions& options) {
  design.validate();
  if (replicates < 1) throw InputError("run_mc: replicates must be >= 1");

  const ModelSpec spec = sim_model_spec(design);
  const int d = static_cast<int>(design.theta.size());
  const Eigen::VectorXd w_row = mc_alpha_row(design);
  const double alpha_truth = 1.0 - std::exp(w_row.dot(design.theta));
  const double zq = normal_quantile(1.0 - (1.0 - options.level) / 2.0);

  std::vector<RepOutcome> slots(replicates);
  parallel_replicates(replicates, options.jobs, [&](int r) {
    RepOutcome& out = slots[r];
    try {
      const std::uint64_t seed = Rng::stream(base_seed, r).next_u64();
      const SimulatedStudy sim = simulate_study(design, seed);
      out.pd_repairs = sim.pd_repairs;
      const FitResult fit = fit_study(sim.study, spec, options.fit);
      if (!fit.converged()) {
        out.message = "solver did not converge";
        return;
      }
      const Eigen::MatrixXd psi = fit.sandwich.theta_block();
      const Eigen::VectorXd& theta = fit.theta();
      out.est.resize(d);
      out.se.resize(d);
      out.reject.resize(d);
      out.cover.resize(d);
      for (int j = 0; j < d; ++j) {
        const WaldTest test = wald_test(theta, psi, fit.n, j);
        out.est(j) = test.estimate;
        out.se(j) = test.se;
        out.reject[j] = test.p <= options.sig_level ? 1 : 0;
        out.cover[j] =
            std::abs(test.estimate - design.theta(j)) <= zq * test.se ? 1 : 0;
      }
      const AlphaEstimate est =
          alpha_estimate(w_row, theta, psi, fit.n, options.level);
      out.alpha_cover = (est.lo <= alpha_truth && alpha_truth <= est.hi) ? 1 : 0;
      out.ok = true;
    } catch (const std::exception& e) {
      out.message = e.what();
    }
  });

  McSummary summary;
  summary.design = design;
  summary.replicates = replicates;
  summary.level = options.level;
  summary.sig_level = options.sig_level;
  summary.truth = design.theta;
  summary.alpha_w_row = w_row;
  summary.alpha_truth = alpha_truth;
  for (int j = 0; j < d; ++j) summary.names.push_back("theta" + std::to_string(j));

  int successes = 0;
  for (const RepOutcome& out : slots) {
    summary.pd_repairs += out.pd_repairs;
    if (out.ok) {
      ++successes;
    } else {
      ++summary.failures;
      if (summary.failure_examples.size() < kFailureExamples)
        summary.failure_examples.push_back(out.message);
    }
  }
  summary.successes = successes;
  if (successes == 0)
    throw FitError("all " + std::to_string(replicates) +
                   " replicates failed; first failure: " +
                   summary.failure_examples.front());

  // Two passes keep the SD and RMSE dispersion sums well conditioned.
  KahanVector sum_est(d), sum_se(d), sum_sq_err(d);
  KahanScalar alpha_covers;
  Eigen::VectorXd rejects = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd covers = Eigen::VectorXd::Zero(d);
  for (const RepOutcome& out : slots) {
    if (!out.ok) continue;
    sum_est.add(out.est);
    sum_se.add(out.se);
    sum_sq_err.add((out.est - design.theta).cwiseAbs2());
    for (int j = 0; j < d; ++j) {
      rejects(j) += out.reject[j];
      covers(j) += out.cover[j];
    }
    alpha_covers.add(out.alpha_cover);
  }
  const double s = static_cast<double>(successes);
  summary.mean = sum_est.value() / s;
  summary.mean_se = sum_se.value() / s;
  const Eigen::VectorXd mse = sum_sq_err.value() / s;
  summary.rmse = mse.cwiseSqrt();
  summary.rejection = rejects / s;
  summary.coverage = covers / s;
  summary.alpha_coverage = alpha_covers.value() / s;

  summary.sd = Eigen::VectorXd::Zero(d);
  summary.rmse_mc_se = Eigen::VectorXd::Zero(d);
  if (successes > 1) {
    KahanVector sum_centered(d), sum_mse_centered(d);
    for (const RepOutcome& out : slots) {
      if (!out.ok) continue;
      sum_centered.add((out.est - summary.mean).cwiseAbs2());
      sum_mse_centered.add(
          ((out.est - design.theta).cwiseAbs2() - mse).cwiseAbs2());
    }
    summary.sd = (sum_centered.value() / (s - 1.0)).cwiseSqrt();
    const Eigen::VectorXd mse_se =
        (sum_mse_centered.value() / ((s - 1.0) * s)).cwiseSqrt();
    for (int j = 0; j < d; ++j)
      if (summary.rmse(j) > 0.0)
        summary.rmse_mc_se(j) = mse_se(j) / (2.0 * summary.rmse(j));
  }
  return summary;
}

// ---- range-test power curves ------------------------------------------------------

namespace {

struct CellRep {
  bool ok = false;
  std::vector<unsigned char> reject;
  std::string message;
};

}  // namespace

std::vector<RangePowerCell> power_curve(const std::vector<double>& alpha_grid,
                                        const std::vector<int>& n_grid,
                                        const std::vector<double>& w1_grid,
                                        const std::vector<RangeTestSpec>& tests,
                                        int replicates, std::uint64_t base_seed,
                                        const McOptions& options) {
  if (replicates < 1) throw InputError("power_curve: replicates must be >= 1");
  if (alpha_grid.empty() || n_grid.empty() || w1_grid.empty() || tests.empty())
    throw InputError("power_curve: all grids must be non-empty");
  for (double a : alpha_grid)
    if (!(a > 0.7 && a < 0.9))
      throw InputError(
          "power_curve: reliability grid values must lie strictly between "
          "0.7 and 0.9, got " + format_double(a));
  for (int n : n_grid)
    if (n < 2) throw InputError("power_curve: sample sizes must be >= 2");
  for (const RangeTestSpec& t : tests)
    if (!(t.threshold > 0.0 && t.threshold < 1.0))
      throw InputError("power_curve: thresholds must lie in (0, 1)");

  const int nt = static_cast<int>(tests.size());
  std::vector<RangePowerCell> rows;
  for (double alpha : alpha_grid)
    for (int n : n_grid)
      for (double w1 : w1_grid) {
        // Derive the seed from the cell parameters, not the grid position, so
        // a cell reproduces bit-for-bit regardless of what else is in the grid.
        std::uint64_t cell_seed =
            Rng::stream(base_seed, std::bit_cast<std::uint64_t>(alpha)).next_u64();
        cell_seed =
            Rng::stream(cell_seed, static_cast<std::uint64_t>(n)).next_u64();
        cell_seed = Rng::stream(cell_seed, std::bit_cast<std::uint64_t>(w1)).next_u64();

        const SimDesign design = SimDesign::power(n, alpha, w1);
        const ModelSpec spec = sim_model_spec(design);
        const Eigen::VectorXd w_row = mc_alpha_row(design);

        std::vector<CellRep> slots(replicates);
        parallel_replicates(replicates, options.jobs, [&](int r) {
          CellRep& out = slots[r];
          try {
            const std::uint64_t seed = Rng::stream(cell_seed, r).next_u64();
            const SimulatedStudy sim = simulate_study(design, seed);
            const FitResult fit = fit_study(sim.study, spec, options.fit);
            if (!fit.converged()) {
              out.message = "solver did not converge";
              return;
            }
            const AlphaEstimate est =
                alpha_estimate(w_row, fit.theta(), fit.sandwich.theta_block(),
                               fit.n, options.level);
            out.reject.resize(nt);
            for (int ti = 0; ti < nt; ++ti) {
              const RangeTest test = alpha_range_test(
                  est, tests[ti].threshold, tests[ti].upper, options.sig_level);
              out.reject[ti] = test.reject ? 1 : 0;
            }
            out.ok = true;
          } catch (const std::exception& e) {
            out.message = e.what();
          }
        });

        int successes = 0, failures = 0;
        std::vector<int> rejects(nt, 0);
        std::string first_failure;
        for (const CellRep& rep : slots) {
          if (!rep.ok) {
            ++failures;
            if (first_failure.empty()) first_failure = rep.message;
            continue;
          }
          ++successes;
          for (int ti = 0; ti < nt; ++ti) rejects[ti] += rep.reject[ti];
        }
        if (successes == 0)
          throw FitError("power_curve: all replicates failed at alpha=" +
                         format_double(alpha) + ", n=" + std::to_string(n) +
                         ", w1=" + format_double(w1) +
                         "; first failure: " + first_failure);

        for (int ti = 0; ti < nt; ++ti) {
          RangePowerCell cell;
          cell.alpha_true = alpha;
          cell.n = n;
          cell.w1_tilde = w1;
          cell.threshold = tests[ti].threshold;
          cell.upper = tests[ti].upper;
          cell.power = static_cast<double>(rejects[ti]) / successes;
          cell.replicates = replicates;
          cell.failures = failures;
          rows.push_back(cell);
        }
      }

  std::sort(rows.begin(), rows.end(),
            [](const RangePowerCell& a, const RangePowerCell& b) {
              if (a.threshold != b.threshold) return a.threshold < b.threshold;
              if (a.upper != b.upper) return a.upper < b.upper;
              if (a.w1_tilde != b.w1_tilde) return a.w1_tilde < b.w1_tilde;
              if (a.alpha_true != b.alpha_true) return a.alpha_true < b.alpha_true;
              return a.n < b.n;
            });
  return rows;
}

// ---- design files ------------------------------------------------------------------

namespace {

[[noreturn]] void fail(const std::string& name, const std::string& msg) {
  throw InputError(name + ": " + msg);
}

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& name, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) fail(name, "unknown key '" + it.key() + "' in " + where);
}

Eigen::VectorXd number_list(const json& v, const std::string& name,
                            const std::string& where) {
  if (!v.is_array()) fail(name, where + " must be an array of numbers");
  Eigen::VectorXd out(v.size());
  Eigen::Index i = 0;
  for (const auto& e : v) {
    if (!e.is_number()) fail(name, where + " must contain only numbers");
    out(i++) = e.get<double>();
  }
  return out;
}

}  // namespace

DesignFile parse_design_text(const std::string& json_text, const std::string& name) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(name, std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) fail(name, "top level must be an object");
  check_keys(doc,
             {"name", "kind", "n", "replicates", "seed", "level", "sig_level",
              "beta", "theta", "gamma", "alpha", "w1_tilde", "tests"},
             name, "top level");

  DesignFile design;
  if (!doc.contains("name") || !doc["name"].is_string())
    fail(name, "missing string key 'name'");
  design.name = doc["name"].get<std::string>();
  if (design.name.empty() ||
      design.name.find_first_not_of(
          "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-") !=
          std::string::npos)
    fail(name, "'name' must be non-empty and use only [A-Za-z0-9_-]");

  if (!doc.contains("kind") || !doc["kind"].is_string())
    fail(name, "missing string key 'kind'");
  const std::string kind = doc["kind"].get<std::string>();
  if (kind == "mc") design.kind = DesignFile::Kind::mc;
  else if (kind == "power") design.kind = DesignFile::Kind::power;
  else fail(name, "unknown kind '" + kind + "' (expected 'mc' or 'power')");

  if (!doc.contains("n")) fail(name, "missing key 'n'");
  {
    const json& nv = doc["n"];
    const auto take = [&](const json& e) {
      if (!e.is_number_integer() || e.get<long long>() < 1)
        fail(name, "'n' entries must be positive integers");
      design.n_grid.push_back(static_cast<int>(e.get<long long>()));
    };
    if (nv.is_array()) {
      for (const auto& e : nv) take(e);
    } else {
      take(nv);
    }
    if (design.n_grid.empty()) fail(name, "'n' must not be empty");
  }

  if (doc.contains("replicates")) {
    if (!doc["replicates"].is_number_integer() || doc["replicates"].get<long long>() < 1)
      fail(name, "'replicates' must be a positive integer");
    design.replicates = static_cast<int>(doc["replicates"].get<long long>());
  }
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_integer())
      fail(name, "'seed' must be an integer");
    design.seed = doc["seed"].get<std::uint64_t>();
  }
  if (doc.contains("level")) {
    if (!doc["level"].is_number()) fail(name, "'level' must be a number");
    design.level = doc["level"].get<double>();
    if (!(design.level > 0.0 && design.level < 1.0))
      fail(name, "'level' must lie in (0, 1)");
  }
  if (doc.contains("sig_level")) {
    if (!doc["sig_level"].is_number()) fail(name, "'sig_level' must be a number");
    design.sig_level = doc["sig_level"].get<double>();
    if (!(design.sig_level > 0.0 && design.sig_level < 1.0))
      fail(name, "'sig_level' must lie in (0, 1)");
  }

  const bool is_mc = design.kind == DesignFile::Kind::mc;
  for (const char* key : {"beta", "theta", "gamma"})
    if (doc.contains(key) && !is_mc)
      fail(name, std::string("'") + key + "' applies only to kind 'mc'");
  for (const char* key : {"alpha", "w1_tilde", "tests"})
    if (doc.contains(key) && is_mc)
      fail(name, std::string("'") + key + "' applies only to kind 'power'");

  if (is_mc) {
    SimDesign defaults = SimDesign::standard(design.n_grid.front());
    design.beta = doc.contains("beta") ? number_list(doc["beta"], name, "'beta'")
                                       : defaults.beta;
    design.theta = doc.contains("theta") ? number_list(doc["theta"], name, "'theta'")
                                         : defaults.theta;
    design.gamma = doc.contains("gamma") ? number_list(doc["gamma"], name, "'gamma'")
                                         : defaults.gamma;
    defaults.beta = design.beta;
    defaults.theta = design.theta;
    defaults.gamma = design.gamma;
    defaults.validate();
  } else {
    if (!doc.contains("alpha")) fail(name, "missing key 'alpha'");
    const Eigen::VectorXd grid = number_list(doc["alpha"], name, "'alpha'");
    design.alpha_grid.assign(grid.data(), grid.data() + grid.size());
    if (!doc.contains("w1_tilde")) fail(name, "missing key 'w1_tilde'");
    const Eigen::VectorXd w1 = number_list(doc["w1_tilde"], name, "'w1_tilde'");
    design.w1_grid.assign(w1.data(), w1.data() + w1.size());
    if (!doc.contains("tests")) fail(name, "missing key 'tests'");
    if (!doc["tests"].is_array() || doc["tests"].empty())
      fail(name, "'tests' must be a non-empty array");
    for (const auto& t : doc["tests"]) {
      if (!t.is_object()) fail(name, "'tests' entries must be objects");
      check_keys(t, {"threshold", "direction"}, name, "'tests'");
      if (!t.contains("threshold") || !t["threshold"].is_number())
        fail(name, "'tests' entries need a numeric 'threshold'");
      if (!t.contains("direction") || !t["direction"].is_string())
        fail(name, "'tests' entries need a 'direction' of \"ge\" or \"le\"");
      RangeTestSpec spec;
      spec.threshold = t["threshold"].get<double>();
      const std::string dir = t["direction"].get<std::string>();
      if (dir == "ge") spec.upper = false;
      else if (dir == "le") spec.upper = true;
      else fail(name, "unknown test direction '" + dir + "'");
      design.tests.push_back(spec);
    }
  }

  return design;
}

DesignFile load_design(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_design_text(buf.str(), path);
}

// ---- summary serialization -----------------------------------------------------------

namespace {

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

}  // namespace

std::string mc_summary_to_json(const McSummary& summary) {
  json doc;
  doc["design"] = {{"n", summary.design.n},
                   {"k", summary.design.k},
                   {"beta", vector_to_json(summary.design.beta)},
                   {"theta", vector_to_json(summary.design.theta)},
                   {"gamma", vector_to_json(summary.design.gamma)},
                   {"power_variant", summary.design.power_variant}};
  if (summary.design.power_variant) {
    doc["design"]["alpha_tilde"] = summary.design.alpha_tilde;
    doc["design"]["w1_tilde"] = summary.design.w1_tilde;
  }
  doc["replicates"] = summary.replicates;
  doc["successes"] = summary.successes;
  doc["failures"] = summary.failures;
  doc["pd_repairs"] = summary.pd_repairs;
  doc["level"] = summary.level;
  doc["sig_level"] = summary.sig_level;
  json params = json::array();
  for (std::size_t j = 0; j < summary.names.size(); ++j) {
    const Eigen::Index i = static_cast<Eigen::Index>(j);
    params.push_back({{"name", summary.names[j]},
                      {"true", summary.truth(i)},
                      {"mean", summary.mean(i)},
                      {"sd", summary.sd(i)},
                      {"mean_se", summary.mean_se(i)},
                      {"rmse", summary.rmse(i)},
                      {"rmse_mc_se", summary.rmse_mc_se(i)},
                      {"rejection_rate", summary.rejection(i)},
                      {"ci_coverage", summary.coverage(i)}});
  }
  doc["parameters"] = params;
  doc["alpha"] = {{"w_row", vector_to_json(summary.alpha_w_row)},
                  {"true", summary.alpha_truth},
                  {"ci_coverage", summary.alpha_coverage}};
  if (!summary.failure_examples.empty())
    doc["failure_examples"] = summary.failure_examples;
  return doc.dump(2) + "\n";
}

void write_mc_summary_csv(const McSummary& summary, const std::string& path) {
  Csv csv;
  csv.header = {"parameter", "true",    "mean",           "sd",
                "mean_se",   "rmse",    "rmse_mc_se",     "rejection_rate",
                "ci_coverage"};
  for (std::size_t j = 0; j < summary.names.size(); ++j) {
    const Eigen::Index i = static_cast<Eigen::Index>(j);
    csv.rows.push_back({summary.names[j], format_double(summary.truth(i)),
                        format_double(summary.mean(i)), format_double(summary.sd(i)),
                        format_double(summary.mean_se(i)),
                        format_double(summary.rmse(i)),
                        format_double(summary.rmse_mc_se(i)),
                        format_double(summary.rejection(i)),
                        format_double(summary.coverage(i))});
  }
  write_csv(csv, path);
}

void write_mc_table_csv(const std::vector<McSummary>& summaries,
                        const std::string& path) {
  if (summaries.empty())
    throw InputError("summary table: need at least one summary");
  const std::size_t d = summaries.front().names.size();
  const Eigen::VectorXd& truth = summaries.front().truth;
  for (const McSummary& s : summaries)
    if (s.names.size() != d || s.truth.size() != truth.size() ||
        !(s.truth.array() == truth.array()).all())
      throw InputError("summary table: summaries disagree on the coefficients");

  Csv csv;
  csv.header = {"parameter", "true"};
  for (const McSummary& s : summaries) {
    csv.header.push_back("mean_n" + std::to_string(s.design.n));
    csv.header.push_back("rmse_n" + std::to_string(s.design.n));
  }
  for (std::size_t j = 0; j < d; ++j) {
    const Eigen::Index i = static_cast<Eigen::Index>(j);
    std::vector<std::string> row = {summaries.front().names[j],
                                    format_double(summaries.front().truth(i))};
    for (const McSummary& s : summaries) {
      row.push_back(format_double(s.mean(i)));
      row.push_back(format_double(s.rmse(i)));
    }
    csv.rows.push_back(row);
  }
  write_csv(csv, path);
}

std::string power_cells_to_json(const std::vector<RangePowerCell>& cells) {
  json arr = json::array();
  for (const RangePowerCell& c : cells)
    arr.push_back({{"alpha_true", c.alpha_true},
                   {"n", c.n},
                   {"w1_tilde", c.w1_tilde},
                   {"threshold", c.threshold},
                   {"direction", c.upper ? "le" : "ge"},
                   {"power", c.power},
                   {"replicates", c.replicates},
                   {"failures", c.failures}});
  json doc;
  doc["cells"] = arr;
  return doc.dump(2) + "\n";
}

void write_power_csv(const std::vector<RangePowerCell>& cells,
                     const std::string& path) {
  Csv csv;
  csv.header = {"alpha_true", "n",      "w1_tilde",   "threshold",
                "direction",  "power",  "replicates", "failures"};
  for (const RangePowerCell& c : cells)
    csv.rows.push_back({format_double(c.alpha_true), std::to_string(c.n),
                        format_double(c.w1_tilde), format_double(c.threshold),
                        c.upper ? "le" : "ge", format_double(c.power),
                        std::to_string(c.replicates), std::to_string(c.failures)});
  write_csv(csv, path);
}

}  // namespace icalpha
