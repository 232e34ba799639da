#pragma once

// Fit report: coefficient tables for the verification model and the three
// estimating-equation sets, reliability estimates with one-sided range
// tests, convergence diagnostics, and every numerical default in effect.
// Serializes to JSON (lossless round-trip) and a fixed-width text table.

#include <Eigen/Core>
#include <string>
#include <vector>

#include "icalpha/inference.hpp"
#include "icalpha/pipeline.hpp"
#include "icalpha/study.hpp"

namespace icalpha {

struct ReportOptions {
  double level = 0.95;
  double sig_level = 0.05;
  double lower_threshold = 0.7;  // tests H0: alpha < lower_threshold
  double upper_threshold = 0.9;  // tests H0: alpha > upper_threshold

  // Reliability covariate rows (including the leading intercept column).
  // Empty: a single row at the weight-averaged design of verified subjects.
  Eigen::MatrixXd alpha_rows;
  std::vector<std::string> alpha_row_labels;  // optional, parallel to rows
};

struct CoefficientRow {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p = 1.0;
  double lo = 0.0, hi = 0.0;
};

struct AlphaRow {
  std::string label;
  AlphaEstimate estimate;
  RangeTest lower;  // H0: alpha < lower threshold
  RangeTest upper;  // H0: alpha > upper threshold
};

struct SetDiagnostics {
  int iterations = 0;
  bool converged = false;
  double ee_norm = 0.0;       // max-norm of the estimating equation at exit
  std::string structure;      // working covariance structure
  double phi = 1.0, rho = 0.0;  // nuisance values at exit
};

struct FitReport {
  ModelSpec spec;
  int n = 0, k = 0, n_complete = 0;

  // Settings in effect (reports are self-describing).
  double level = 0.95, sig_level = 0.05;
  double lower_threshold = 0.7, upper_threshold = 0.9;
  int gee_max_iterations = 0, gee_max_halvings = 0;
  double gee_tolerance = 0.0, var_floor = 0.0, pi_floor = 0.0;
  std::string omega_convention;

  std::vector<CoefficientRow> missingness_rows;  // empty for degenerate fits
  std::vector<CoefficientRow> mean_rows, variance_rows, alpha_coef_rows;
  std::vector<AlphaRow> alpha_rows;

  bool converged = false;
  SetDiagnostics mean_diag, variance_diag, alpha_diag;
  int missingness_iterations = 0;
  bool missingness_converged = true;
  bool missingness_degenerate = false;
  bool weight_corrected = false;
  bool meat_clipped = false;
  bool variance_clamped = false;
  bool eta_clamped = false;
  bool pi_floored = false;

  double naive_alpha = 0.0;  // classical overall coefficient of the responses
};

FitReport build_report(const StudyData& study, const ModelSpec& spec,
                       const FitResult& fit, const FitOptions& fit_options,
                       const ReportOptions& options = {});

/// Sorted keys, round-trippable numbers, no timestamps: byte-identical for
/// identical fits.
std::string report_to_json(const FitReport& report);

/// Inverse of report_to_json; unknown or missing keys raise InputError.
FitReport report_from_json(const std::string& json_text, const std::string& name);

/// Human-readable fixed-width rendering of the same content.
std::string report_table(const FitReport& report);

}  // namespace icalpha
