#pragma once

// Synthetic-study generator and replicated Monte Carlo harness: parameter
// recovery (mean/RMSE tables), test size and power for the reliability
// coefficients, and power curves for the one-sided reliability range tests.

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "icalpha/pipeline.hpp"
#include "icalpha/study.hpp"

namespace icalpha {

// ---- generator design --------------------------------------------------------

/// Three-item Gaussian response generator with covariate-indexed pairwise
/// reliability and logistic covariate verification.
///
/// `standard()` uses the reference design: per-item mean intercepts
/// (-0.6, 0.4, 0.3) plus slopes (0.25, 0, 1.0) on x1 ~ U(-1,1) (subject),
/// x2 ~ U(-1,1) and x3 ~ N(0,1) (item); unit variances; pairwise covariance
/// (1-e^t)/(1+e^t) with t = w'theta, theta = (-0.6,-0.4,0.05,0.05,-0.2,0)
/// on w1 ~ Bern(0.5), w2 ~ U(0,1), w3 ~ N(0,1) (subject), w4 ~ U(0,1),
/// w5 ~ N(0,1) (pair); verification logit(pi) = 2 + 0.5 q1 - 0.6 q2 with
/// q1, q2 ~ N(0,1).
///
/// `power(n, alpha_tilde, w1_tilde)` swaps the reliability model for
/// t = theta0 + theta1 * w1 with w1 ~ U(0,1), theta0 = log(0.3), and theta1
/// solved so the reliability 1 - e^t equals `alpha_tilde` at w1 = w1_tilde.
struct SimDesign {
  int n = 2500;
  int k = 3;

  Eigen::VectorXd beta;   // (item 1..3 intercepts, x1, x2, x3 slopes)
  Eigen::VectorXd theta;  // 6 components (standard) or 2 (power variant)
  Eigen::VectorXd gamma;  // verification model: (intercept, q1, q2)

  bool power_variant = false;
  double alpha_tilde = 0.0;  // reliability targeted at w1 = w1_tilde
  double w1_tilde = 0.0;

  static SimDesign standard(int n);
  static SimDesign power(int n, double alpha_tilde, double w1_tilde);

  /// Throws InputError on dimension or range violations.
  void validate() const;
};

/// Fit configuration matching the generator: identity links, per-item mean
/// intercepts, per-item constant variances, the full reliability covariate
/// set, and the (q1, q2) verification model.
ModelSpec sim_model_spec(const SimDesign& design);

struct SimulatedStudy {
  StudyData study;
  int pd_repairs = 0;  // subjects whose response covariance needed shrinking
};

/// Draws one study.  Deterministic in (design, seed); unverified subjects
/// get zero-filled design rows exactly as the CSV loader produces them.
/// Non-positive-definite response covariances (possible under extreme
/// covariate draws) have their off-diagonals shrunk by the smallest factor
/// restoring a minimum eigenvalue of 1e-6; such repairs are counted.
SimulatedStudy simulate_study(const SimDesign& design, std::uint64_t seed);

// ---- replicated Monte Carlo --------------------------------------------------

struct McOptions {
  double level = 0.95;      // CI level for coverage aggregates
  double sig_level = 0.05;  // size of the zero tests and range tests
  int jobs = 1;             // worker threads; <= 0 uses hardware concurrency
  FitOptions fit;
};

/// Per-replicate aggregates over the reliability coefficients.  Failed
/// replicates (thrown errors or flagged non-convergence) are excluded from
/// every aggregate and counted; successes + failures == replicates.
struct McSummary {
  SimDesign design;
  int replicates = 0;
  int successes = 0;
  int failures = 0;
  int pd_repairs = 0;  // summed over all generated replicates
  double level = 0.95;
  double sig_level = 0.05;

  std::vector<std::string> names;  // reliability coefficient names
  Eigen::VectorXd truth;
  Eigen::VectorXd mean;         // mean of the estimates
  Eigen::VectorXd sd;           // sample SD of the estimates (0 when < 2)
  Eigen::VectorXd mean_se;      // mean reported standard error
  Eigen::VectorXd rmse;
  Eigen::VectorXd rmse_mc_se;   // Monte Carlo SE of the RMSE (0 when < 2)
  Eigen::VectorXd rejection;    // rate of rejecting theta_j = 0 at sig_level
  Eigen::VectorXd coverage;     // rate of the level-CI covering the truth

  Eigen::VectorXd alpha_w_row;  // fixed covariate row for the reliability CI
  double alpha_truth = 0.0;
  double alpha_coverage = 0.0;

  std::vector<std::string> failure_examples;  // first few failure messages
};

/// Replicate r is drawn from seed Rng::stream(base_seed, r).next_u64(), so
/// results are identical for any job count and replicates can be reproduced
/// in isolation.  Throws FitError when every replicate fails.
McSummary run_mc(const SimDesign& design, int replicates,
                 std::uint64_t base_seed, const McOptions& options = {});

// ---- reliability range-test power curves --------------------------------------

struct RangeTestSpec {
  double threshold = 0.7;
  bool upper = false;  // false: H0 alpha < threshold; true: H0 alpha > threshold
};

struct RangePowerCell {
  double alpha_true = 0.0;  // reliability at w1 = w1_tilde
  int n = 0;
  double w1_tilde = 0.0;
  double threshold = 0.0;
  bool upper = false;
  double power = 0.0;  // rejection rate among successful replicates
  int replicates = 0;
  int failures = 0;
};

/// Runs the power-variant design over the (alpha, n, w1) grid; every fitted
/// replicate is evaluated under each requested range test at the covariate
/// row (1, w1_tilde).  Reliability grid values must lie in (0.7, 0.9), the
/// band the range tests target.  Cells are seeded independently of grid
/// order; rows come back sorted by (threshold, direction, w1, alpha, n).
std::vector<RangePowerCell> power_curve(const std::vector<double>& alpha_grid,
                                        const std::vector<int>& n_grid,
                                        const std::vector<double>& w1_grid,
                                        const std::vector<RangeTestSpec>& tests,
                                        int replicates, std::uint64_t base_seed,
                                        const McOptions& options = {});

// ---- simulation design files ---------------------------------------------------

/// JSON description of a simulation run: either a parameter-recovery study
/// ("kind": "mc") over a grid of sample sizes, or a range-test power study
/// ("kind": "power") over (alpha, n, w1) grids.  Unknown keys are rejected.
struct DesignFile {
  enum class Kind { mc, power };

  std::string name;  // output file stem, [A-Za-z0-9_-]+
  Kind kind = Kind::mc;
  std::vector<int> n_grid;
  int replicates = 500;
  std::uint64_t seed = 1;
  double level = 0.95;
  double sig_level = 0.05;

  // kind == mc: optional overrides of the standard generator coefficients.
  Eigen::VectorXd beta, theta, gamma;

  // kind == power.
  std::vector<double> alpha_grid;
  std::vector<double> w1_grid;
  std::vector<RangeTestSpec> tests;
};

DesignFile parse_design_text(const std::string& json_text, const std::string& name);
DesignFile load_design(const std::string& path);

// ---- summary serialization -----------------------------------------------------

/// JSON with sorted keys and round-trippable numbers; deterministic given
/// the summary.
std::string mc_summary_to_json(const McSummary& summary);

/// Per-coefficient table: parameter,true,mean,sd,mean_se,rmse,rmse_mc_se,
/// rejection_rate,ci_coverage.  Scalar fields live in the JSON form.
void write_mc_summary_csv(const McSummary& summary, const std::string& path);

/// Wide mean/RMSE table across sample sizes (one row per coefficient,
/// mean_n<N>/rmse_n<N> column pairs).  Summaries must share a design apart
/// from the sample size.
void write_mc_table_csv(const std::vector<McSummary>& summaries,
                        const std::string& path);

std::string power_cells_to_json(const std::vector<RangePowerCell>& cells);

/// Columns: alpha_true,n,w1_tilde,threshold,direction,power,replicates,
/// failures; direction is "ge" (H0: alpha < threshold) or "le".
void write_power_csv(const std::vector<RangePowerCell>& cells,
                     const std::string& path);

}  // namespace icalpha
