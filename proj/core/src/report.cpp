#include "icalpha/report.hpp"

#include <cstdio>
#include <json.hpp>
#include <set>
#include <sstream>

#include "icalpha/errors.hpp"
#include "icalpha/kahan.hpp"
#include "icalpha/model_spec.hpp"
#include "icalpha/stats.hpp"

namespace icalpha {

using nlohmann::json;

// ---- assembly -----------------------------------------------------------------

namespace {

std::vector<CoefficientRow> coefficient_rows(const Eigen::VectorXd& params,
                                             const Eigen::MatrixXd& psi_block,
                                             const std::vector<std::string>& names,
                                             int n, double zq) {
  std::vector<CoefficientRow> rows;
  for (int j = 0; j < params.size(); ++j) {
    const WaldTest test = wald_test(params, psi_block, n, j);
    CoefficientRow row;
    row.name = names[static_cast<std::size_t>(j)];
    row.estimate = test.estimate;
    row.se = test.se;
    row.z = test.z;
    row.p = test.p;
    row.lo = test.estimate - zq * test.se;
    row.hi = test.estimate + zq * test.se;
    rows.push_back(row);
  }
  return rows;
}

SetDiagnostics set_diagnostics(const SetFit& fit) {
  SetDiagnostics diag;
  diag.iterations = fit.iterations;
  diag.converged = fit.converged;
  diag.ee_norm = fit.ee_norm;
  diag.structure = to_string(fit.cov.structure);
  diag.phi = fit.cov.phi;
  diag.rho = fit.cov.rho;
  return diag;
}

// Weight-averaged reliability design row over verified subjects: the default
// evaluation point when the caller requests no specific rows.
Eigen::VectorXd mean_w_row(const StudyData& study, const Eigen::VectorXd& weights) {
  const int np = study.npairs();
  KahanVector acc(study.w.cols());
  KahanScalar total;
  for (int p = 0; p < study.n; ++p) {
    if (weights(p) <= 0.0) continue;
    for (int c = 0; c < np; ++c)
      acc.add(weights(p) * study.w.row(p * np + c).transpose());
    total.add(weights(p) * np);
  }
  if (total.value() <= 0.0)
    throw FitError("no verified subjects to average the reliability row over");
  return acc.value() / total.value();
}

}  // namespace

FitReport build_report(const StudyData& study, const ModelSpec& spec,
                       const FitResult& fit, const FitOptions& fit_options,
                       const ReportOptions& options) {
  FitReport rep;
  rep.spec = spec;
  rep.n = study.n;
  rep.k = study.k;
  rep.n_complete = study.n_complete();
  rep.level = options.level;
  rep.sig_level = options.sig_level;
  rep.lower_threshold = options.lower_threshold;
  rep.upper_threshold = options.upper_threshold;
  rep.gee_max_iterations = fit_options.gee.max_iterations;
  rep.gee_max_halvings = fit_options.gee.max_halvings;
  rep.gee_tolerance = fit_options.gee.tolerance;
  rep.var_floor = fit_options.gee.var_floor;
  rep.pi_floor = fit_options.pi_floor;
  rep.omega_convention = to_string(fit_options.convention);

  const double zq = normal_quantile(1.0 - (1.0 - options.level) / 2.0);

  const MissingnessFit& miss = fit.missingness;
  if (miss.gamma.size() > 0) {
    // Asymptotic covariance of the verification coefficients: info^-1 / n.
    const Eigen::MatrixXd cov = miss.info.ldlt().solve(
        Eigen::MatrixXd::Identity(miss.info.rows(), miss.info.cols()));
    for (int j = 0; j < miss.gamma.size(); ++j) {
      CoefficientRow row;
      row.name = study.q_names[static_cast<std::size_t>(j)];
      row.estimate = miss.gamma(j);
      row.se = std::sqrt(std::max(cov(j, j), 0.0) / study.n);
      if (row.se <= 0.0)
        throw FitError("zero standard error for verification coefficient '" +
                       row.name + "'");
      row.z = row.estimate / row.se;
      row.p = 2.0 * (1.0 - normal_cdf(std::abs(row.z)));
      row.lo = row.estimate - zq * row.se;
      row.hi = row.estimate + zq * row.se;
      rep.missingness_rows.push_back(row);
    }
  }

  const Eigen::MatrixXd& psi = fit.sandwich.psi;
  const int db = fit.sandwich.dim_beta;
  const int dw = fit.sandwich.dim_omega;
  const int dt = fit.sandwich.dim_theta;
  rep.mean_rows = coefficient_rows(fit.beta(), psi.block(0, 0, db, db),
                                   study.x_names, study.n, zq);
  rep.variance_rows = coefficient_rows(fit.omega(), psi.block(db, db, dw, dw),
                                       study.z_names, study.n, zq);
  const Eigen::MatrixXd psi_theta = fit.sandwich.theta_block();
  rep.alpha_coef_rows =
      coefficient_rows(fit.theta(), psi_theta, study.w_names, study.n, zq);

  Eigen::MatrixXd rows = options.alpha_rows;
  std::vector<std::string> labels = options.alpha_row_labels;
  if (rows.rows() == 0) {
    rows = mean_w_row(study, fit.weights.w).transpose();
    if (labels.empty()) labels = {"(weighted mean covariates)"};
  }
  if (rows.cols() != dt)
    throw InputError("reliability rows have " + std::to_string(rows.cols()) +
                     " columns; the reliability design has " + std::to_string(dt));
  if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != rows.rows())
    throw InputError("reliability row labels do not match the number of rows");
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    AlphaRow arow;
    arow.label = labels.empty() ? "row " + std::to_string(r + 1)
                                : labels[static_cast<std::size_t>(r)];
    arow.estimate = alpha_estimate(rows.row(r).transpose(), fit.theta(),
                                   psi_theta, study.n, options.level);
    arow.lower = alpha_range_test(arow.estimate, options.lower_threshold, false,
                                  options.sig_level);
    arow.upper = alpha_range_test(arow.estimate, options.upper_threshold, true,
                                  options.sig_level);
    rep.alpha_rows.push_back(arow);
  }

  rep.converged = fit.converged();
  rep.mean_diag = set_diagnostics(fit.gee.mean);
  rep.variance_diag = set_diagnostics(fit.gee.variance);
  rep.alpha_diag = set_diagnostics(fit.gee.alpha);
  rep.missingness_iterations = miss.iterations;
  rep.missingness_converged = miss.converged;
  rep.missingness_degenerate = miss.degenerate;
  rep.weight_corrected = fit.sandwich.weight_corrected;
  rep.meat_clipped = fit.sandwich.meat_clipped;
  rep.variance_clamped = fit.gee.variance_clamped;
  rep.eta_clamped = fit.gee.eta_clamped;
  rep.pi_floored = fit.weights.floored;
  rep.naive_alpha = naive_overall_alpha(study.y);
  return rep;
}

// ---- JSON ------------------------------------------------------------------------

namespace {

json rows_to_json(const std::vector<CoefficientRow>& rows) {
  json arr = json::array();
  for (const CoefficientRow& r : rows)
    arr.push_back({{"name", r.name},
                   {"estimate", r.estimate},
                   {"se", r.se},
                   {"z", r.z},
                   {"p", r.p},
                   {"lo", r.lo},
                   {"hi", r.hi}});
  return arr;
}

json range_test_to_json(const RangeTest& test) {
  return {{"threshold", test.threshold},
          {"direction", test.upper ? "le" : "ge"},
          {"z", test.z},
          {"p", test.p},
          {"reject", test.reject}};
}

json set_diag_to_json(const SetDiagnostics& d) {
  return {{"iterations", d.iterations}, {"converged", d.converged},
          {"ee_norm", d.ee_norm},       {"structure", d.structure},
          {"phi", d.phi},               {"rho", d.rho}};
}

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

}  // namespace

std::string report_to_json(const FitReport& report) {
  json doc;
  doc["model"] = json::parse(model_spec_to_json(report.spec));
  doc["sample"] = {{"n", report.n}, {"k", report.k}, {"n_complete", report.n_complete}};
  doc["settings"] = {{"level", report.level},
                     {"sig_level", report.sig_level},
                     {"lower_threshold", report.lower_threshold},
                     {"upper_threshold", report.upper_threshold},
                     {"gee_max_iterations", report.gee_max_iterations},
                     {"gee_max_halvings", report.gee_max_halvings},
                     {"gee_tolerance", report.gee_tolerance},
                     {"var_floor", report.var_floor},
                     {"pi_floor", report.pi_floor},
                     {"omega_convention", report.omega_convention}};
  doc["coefficients"] = {{"missingness", rows_to_json(report.missingness_rows)},
                         {"mean", rows_to_json(report.mean_rows)},
                         {"variance", rows_to_json(report.variance_rows)},
                         {"alpha", rows_to_json(report.alpha_coef_rows)}};
  json alpha = json::array();
  for (const AlphaRow& row : report.alpha_rows)
    alpha.push_back({{"label", row.label},
                     {"w_row", vector_to_json(row.estimate.w_row)},
                     {"predictor", row.estimate.predictor},
                     {"predictor_se", row.estimate.predictor_se},
                     {"alpha", row.estimate.alpha},
                     {"alpha_se", row.estimate.alpha_se},
                     {"lo", row.estimate.lo},
                     {"hi", row.estimate.hi},
                     {"tests", json::array({range_test_to_json(row.lower),
                                            range_test_to_json(row.upper)})}});
  doc["alpha"] = alpha;
  doc["diagnostics"] = {{"converged", report.converged},
                        {"mean", set_diag_to_json(report.mean_diag)},
                        {"variance", set_diag_to_json(report.variance_diag)},
                        {"alpha", set_diag_to_json(report.alpha_diag)},
                        {"missingness",
                         {{"iterations", report.missingness_iterations},
                          {"converged", report.missingness_converged},
                          {"degenerate", report.missingness_degenerate}}},
                        {"weight_corrected", report.weight_corrected},
                        {"meat_clipped", report.meat_clipped},
                        {"variance_clamped", report.variance_clamped},
                        {"eta_clamped", report.eta_clamped},
                        {"pi_floored", report.pi_floored},
                        {"naive_alpha", report.naive_alpha}};
  return doc.dump(2) + "\n";
}

namespace {

[[noreturn]] void fail(const std::string& name, const std::string& msg) {
  throw InputError(name + ": " + msg);
}

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& name, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) fail(name, "unknown key '" + it.key() + "' in " + where);
}

const json& need(const json& obj, const std::string& key, const std::string& name,
                 const std::string& where) {
  if (!obj.contains(key)) fail(name, "missing key '" + key + "' in " + where);
  return obj[key];
}

std::vector<CoefficientRow> rows_from_json(const json& arr, const std::string& name,
                                           const std::string& where) {
  if (!arr.is_array()) fail(name, where + " must be an array");
  std::vector<CoefficientRow> rows;
  for (const json& e : arr) {
    check_keys(e, {"name", "estimate", "se", "z", "p", "lo", "hi"}, name, where);
    CoefficientRow row;
    row.name = need(e, "name", name, where).get<std::string>();
    row.estimate = need(e, "estimate", name, where).get<double>();
    row.se = need(e, "se", name, where).get<double>();
    row.z = need(e, "z", name, where).get<double>();
    row.p = need(e, "p", name, where).get<double>();
    row.lo = need(e, "lo", name, where).get<double>();
    row.hi = need(e, "hi", name, where).get<double>();
    rows.push_back(row);
  }
  return rows;
}

RangeTest range_test_from_json(const json& e, double sig_level,
                               const std::string& name) {
  check_keys(e, {"threshold", "direction", "z", "p", "reject"}, name, "'tests'");
  RangeTest test;
  test.threshold = need(e, "threshold", name, "'tests'").get<double>();
  const std::string dir = need(e, "direction", name, "'tests'").get<std::string>();
  if (dir == "ge") test.upper = false;
  else if (dir == "le") test.upper = true;
  else fail(name, "unknown range-test direction '" + dir + "'");
  test.z = need(e, "z", name, "'tests'").get<double>();
  test.p = need(e, "p", name, "'tests'").get<double>();
  test.reject = need(e, "reject", name, "'tests'").get<bool>();
  test.sig_level = sig_level;
  return test;
}

SetDiagnostics set_diag_from_json(const json& e, const std::string& name,
                                  const std::string& where) {
  check_keys(e, {"iterations", "converged", "ee_norm", "structure", "phi", "rho"},
             name, where);
  SetDiagnostics diag;
  diag.iterations = need(e, "iterations", name, where).get<int>();
  diag.converged = need(e, "converged", name, where).get<bool>();
  diag.ee_norm = need(e, "ee_norm", name, where).get<double>();
  diag.structure = need(e, "structure", name, where).get<std::string>();
  diag.phi = need(e, "phi", name, where).get<double>();
  diag.rho = need(e, "rho", name, where).get<double>();
  return diag;
}

Eigen::VectorXd vector_from_json(const json& arr, const std::string& name,
                                 const std::string& where) {
  if (!arr.is_array()) fail(name, where + " must be an array of numbers");
  Eigen::VectorXd v(arr.size());
  Eigen::Index i = 0;
  for (const json& e : arr) {
    if (!e.is_number()) fail(name, where + " must contain only numbers");
    v(i++) = e.get<double>();
  }
  return v;
}

}  // namespace

FitReport report_from_json(const std::string& json_text, const std::string& name) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(name, std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) fail(name, "top level must be an object");
  check_keys(doc, {"model", "sample", "settings", "coefficients", "alpha", "diagnostics"},
             name, "top level");

  FitReport rep;
  rep.spec = parse_model_spec_text(need(doc, "model", name, "top level").dump(), name);

  const json& sample = need(doc, "sample", name, "top level");
  check_keys(sample, {"n", "k", "n_complete"}, name, "'sample'");
  rep.n = need(sample, "n", name, "'sample'").get<int>();
  rep.k = need(sample, "k", name, "'sample'").get<int>();
  rep.n_complete = need(sample, "n_complete", name, "'sample'").get<int>();

  const json& settings = need(doc, "settings", name, "top level");
  check_keys(settings,
             {"level", "sig_level", "lower_threshold", "upper_threshold",
              "gee_max_iterations", "gee_max_halvings", "gee_tolerance",
              "var_floor", "pi_floor", "omega_convention"},
             name, "'settings'");
  rep.level = need(settings, "level", name, "'settings'").get<double>();
  rep.sig_level = need(settings, "sig_level", name, "'settings'").get<double>();
  rep.lower_threshold = need(settings, "lower_threshold", name, "'settings'").get<double>();
  rep.upper_threshold = need(settings, "upper_threshold", name, "'settings'").get<double>();
  rep.gee_max_iterations = need(settings, "gee_max_iterations", name, "'settings'").get<int>();
  rep.gee_max_halvings = need(settings, "gee_max_halvings", name, "'settings'").get<int>();
  rep.gee_tolerance = need(settings, "gee_tolerance", name, "'settings'").get<double>();
  rep.var_floor = need(settings, "var_floor", name, "'settings'").get<double>();
  rep.pi_floor = need(settings, "pi_floor", name, "'settings'").get<double>();
  rep.omega_convention =
      need(settings, "omega_convention", name, "'settings'").get<std::string>();

  const json& coef = need(doc, "coefficients", name, "top level");
  check_keys(coef, {"missingness", "mean", "variance", "alpha"}, name, "'coefficients'");
  rep.missingness_rows =
      rows_from_json(need(coef, "missingness", name, "'coefficients'"), name,
                     "'coefficients.missingness'");
  rep.mean_rows = rows_from_json(need(coef, "mean", name, "'coefficients'"), name,
                                 "'coefficients.mean'");
  rep.variance_rows = rows_from_json(need(coef, "variance", name, "'coefficients'"),
                                     name, "'coefficients.variance'");
  rep.alpha_coef_rows = rows_from_json(need(coef, "alpha", name, "'coefficients'"),
                                       name, "'coefficients.alpha'");

  const json& alpha = need(doc, "alpha", name, "top level");
  if (!alpha.is_array()) fail(name, "'alpha' must be an array");
  for (const json& e : alpha) {
    check_keys(e,
               {"label", "w_row", "predictor", "predictor_se", "alpha",
                "alpha_se", "lo", "hi", "tests"},
               name, "'alpha'");
    AlphaRow row;
    row.label = need(e, "label", name, "'alpha'").get<std::string>();
    row.estimate.w_row = vector_from_json(need(e, "w_row", name, "'alpha'"), name,
                                          "'alpha.w_row'");
    row.estimate.predictor = need(e, "predictor", name, "'alpha'").get<double>();
    row.estimate.predictor_se = need(e, "predictor_se", name, "'alpha'").get<double>();
    row.estimate.alpha = need(e, "alpha", name, "'alpha'").get<double>();
    row.estimate.alpha_se = need(e, "alpha_se", name, "'alpha'").get<double>();
    row.estimate.lo = need(e, "lo", name, "'alpha'").get<double>();
    row.estimate.hi = need(e, "hi", name, "'alpha'").get<double>();
    row.estimate.level = rep.level;
    const json& tests = need(e, "tests", name, "'alpha'");
    if (!tests.is_array() || tests.size() != 2)
      fail(name, "'alpha.tests' must hold the lower and upper range tests");
    row.lower = range_test_from_json(tests[0], rep.sig_level, name);
    row.upper = range_test_from_json(tests[1], rep.sig_level, name);
    if (row.lower.upper || !row.upper.upper)
      fail(name, "'alpha.tests' must list the 'ge' test before the 'le' test");
    rep.alpha_rows.push_back(row);
  }

  const json& diag = need(doc, "diagnostics", name, "top level");
  check_keys(diag,
             {"converged", "mean", "variance", "alpha", "missingness",
              "weight_corrected", "meat_clipped", "variance_clamped",
              "eta_clamped", "pi_floored", "naive_alpha"},
             name, "'diagnostics'");
  rep.converged = need(diag, "converged", name, "'diagnostics'").get<bool>();
  rep.mean_diag = set_diag_from_json(need(diag, "mean", name, "'diagnostics'"), name,
                                     "'diagnostics.mean'");
  rep.variance_diag = set_diag_from_json(need(diag, "variance", name, "'diagnostics'"),
                                         name, "'diagnostics.variance'");
  rep.alpha_diag = set_diag_from_json(need(diag, "alpha", name, "'diagnostics'"), name,
                                      "'diagnostics.alpha'");
  const json& miss = need(diag, "missingness", name, "'diagnostics'");
  check_keys(miss, {"iterations", "converged", "degenerate"}, name,
             "'diagnostics.missingness'");
  rep.missingness_iterations =
      need(miss, "iterations", name, "'diagnostics.missingness'").get<int>();
  rep.missingness_converged =
      need(miss, "converged", name, "'diagnostics.missingness'").get<bool>();
  rep.missingness_degenerate =
      need(miss, "degenerate", name, "'diagnostics.missingness'").get<bool>();
  rep.weight_corrected = need(diag, "weight_corrected", name, "'diagnostics'").get<bool>();
  rep.meat_clipped = need(diag, "meat_clipped", name, "'diagnostics'").get<bool>();
  rep.variance_clamped = need(diag, "variance_clamped", name, "'diagnostics'").get<bool>();
  rep.eta_clamped = need(diag, "eta_clamped", name, "'diagnostics'").get<bool>();
  rep.pi_floored = need(diag, "pi_floored", name, "'diagnostics'").get<bool>();
  rep.naive_alpha = need(diag, "naive_alpha", name, "'diagnostics'").get<double>();

  return rep;
}

// ---- text rendering ----------------------------------------------------------------

namespace {

std::string fmt(const char* format, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, value);
  return buf;
}

std::string fmt_p(double p) {
  if (p < 1e-15) return "  <1e-15";
  return fmt("%8.3g", p);
}

void render_rows(std::ostringstream& out, const std::vector<CoefficientRow>& rows,
                 double level) {
  if (rows.empty()) return;
  std::size_t width = 4;
  for (const CoefficientRow& r : rows) width = std::max(width, r.name.size());
  out << "  " << std::string(width - 4, ' ') << "name"
      << "   estimate    std.err          z         p   "
      << fmt("%.0f", level * 100.0) << "% CI\n";
  for (const CoefficientRow& r : rows) {
    out << "  " << std::string(width - r.name.size(), ' ') << r.name
        << fmt(" %10.4g", r.estimate) << fmt(" %10.4g", r.se)
        << fmt(" %10.3f", r.z) << "  " << fmt_p(r.p) << "   ("
        << fmt("%.4g", r.lo) << ", " << fmt("%.4g", r.hi) << ")\n";
  }
}

}  // namespace

std::string report_table(const FitReport& report) {
  std::ostringstream out;
  out << "study: n=" << report.n << " subjects, k=" << report.k << " items, "
      << report.n_complete << " verified\n";
  out << "status: " << (report.converged ? "converged" : "DID NOT CONVERGE")
      << " (mean " << report.mean_diag.iterations << " it, variance "
      << report.variance_diag.iterations << " it, reliability "
      << report.alpha_diag.iterations << " it)\n";

  if (!report.missingness_rows.empty()) {
    out << "\nverification model (logistic";
    if (!report.missingness_converged) out << ", DID NOT CONVERGE";
    out << "):\n";
    render_rows(out, report.missingness_rows, report.level);
  } else {
    out << "\nverification model: none (all subjects verified)\n";
  }

  const auto nuisance = [&](const SetDiagnostics& d) {
    std::string s = d.structure + " working covariance, phi=" + fmt("%.4g", d.phi);
    if (d.structure == "exchangeable") s += ", rho=" + fmt("%.4g", d.rho);
    return s;
  };

  out << "\nmean model (" << to_string(report.spec.mean_link) << " link, "
      << nuisance(report.mean_diag) << "):\n";
  render_rows(out, report.mean_rows, report.level);

  out << "\nvariance model (" << to_string(report.spec.var_link) << " link, "
      << nuisance(report.variance_diag) << "):\n";
  render_rows(out, report.variance_rows, report.level);

  out << "\nreliability model (" << nuisance(report.alpha_diag) << "):\n";
  render_rows(out, report.alpha_coef_rows, report.level);

  if (!report.alpha_rows.empty()) {
    out << "\nreliability estimates:\n";
    for (const AlphaRow& row : report.alpha_rows) {
      out << "  " << row.label << ": alpha=" << fmt("%.4g", row.estimate.alpha)
          << " se=" << fmt("%.4g", row.estimate.alpha_se) << " "
          << fmt("%.0f", report.level * 100.0) << "% CI=("
          << fmt("%.4g", row.estimate.lo) << ", " << fmt("%.4g", row.estimate.hi)
          << ")\n";
      out << "    H0 alpha<" << fmt("%.3g", row.lower.threshold)
          << ": p=" << fmt("%.3g", row.lower.p)
          << (row.lower.reject ? " (rejected)" : "") << "; H0 alpha>"
          << fmt("%.3g", row.upper.threshold) << ": p="
          << fmt("%.3g", row.upper.p) << (row.upper.reject ? " (rejected)" : "")
          << "\n";
    }
  }

  out << "\ndiagnostics: naive overall alpha=" << fmt("%.4g", report.naive_alpha)
      << "; omega convention " << report.omega_convention << "; weight correction "
      << (report.weight_corrected ? "on" : "off");
  if (report.meat_clipped) out << "; meat eigenvalues clipped";
  if (report.variance_clamped) out << "; variance floor hit";
  if (report.eta_clamped) out << "; reliability link clamped";
  if (report.pi_floored) out << "; verification probabilities floored";
  out << "\n";
  return out.str();
}

}  // namespace icalpha
