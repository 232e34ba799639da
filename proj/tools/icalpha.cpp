// Command-line front end: fit reliability models on CSV studies, run
// replicated simulation designs, validate inputs.  Exit codes: 0 success,
// 1 input error, 2 numerical failure or flagged non-convergence.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "icalpha/csv.hpp"
#include "icalpha/errors.hpp"
#include "icalpha/model_spec.hpp"
#include "icalpha/pipeline.hpp"
#include "icalpha/report.hpp"
#include "icalpha/rng.hpp"
#include "icalpha/simulation.hpp"
#include "icalpha/study_io.hpp"
#include "icalpha/version.hpp"

namespace fs = std::filesystem;
using namespace icalpha;

namespace {

struct FitArgs {
  std::string data, subjects, pairs, spec, alpha_at, out;
  double level = 0.95;
  double sig_level = 0.05;
  double lower_threshold = 0.7;
  double upper_threshold = 0.9;
  std::string convention = "inverse";
};

struct SimArgs {
  std::string design, out;
  int replicates = 0;  // 0: use the design file's count
  long long seed = -1;  // < 0: use the design file's seed
  int jobs = 1;
};

struct ValidateArgs {
  std::string data, subjects, pairs, spec;
};

std::string out_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("ICALPHA_OUT_DIR")) return env;
  return ".";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open file for writing: " + path.string());
  out << text;
}

// Reliability covariate rows from a CSV whose columns are the reliability
// design covariates (intercept implied, any order); an optional `label`
// column names the rows.
void load_alpha_rows(const std::string& path, const std::vector<std::string>& w_names,
                     ReportOptions* options) {
  const Csv csv = read_csv(path);
  const int label_col = csv.column("label");
  std::vector<int> cols;
  for (std::size_t j = 1; j < w_names.size(); ++j) {
    const int c = csv.column(w_names[j]);
    if (c < 0)
      throw InputError(path + ": missing reliability covariate column '" +
                       w_names[j] + "'");
    cols.push_back(c);
  }
  for (int c = 0; c < static_cast<int>(csv.header.size()); ++c) {
    if (c == label_col) continue;
    if (std::find(cols.begin(), cols.end(), c) == cols.end())
      throw InputError(path + ": column '" + csv.header[c] +
                       "' is not a reliability design covariate");
  }

  options->alpha_rows.resize(static_cast<Eigen::Index>(csv.rows.size()),
                             static_cast<Eigen::Index>(w_names.size()));
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    options->alpha_rows(static_cast<Eigen::Index>(r), 0) = 1.0;
    for (std::size_t j = 0; j < cols.size(); ++j)
      options->alpha_rows(static_cast<Eigen::Index>(r),
                          static_cast<Eigen::Index>(j + 1)) =
          parse_double_cell(row[cols[j]],
                            path + " line " + std::to_string(csv.line_numbers[r]) +
                                ", column '" + w_names[j + 1] + "'");
    options->alpha_row_labels.push_back(
        label_col >= 0 ? row[label_col] : "row " + std::to_string(r + 1));
  }
}

int run_fit(const FitArgs& args) {
  const ModelSpec spec = load_model_spec(args.spec);
  const StudyData study = load_study(args.data, args.subjects, args.pairs, spec);

  FitOptions fit_options;
  fit_options.convention = args.convention == "literal" ? OmegaConvention::literal
                                                        : OmegaConvention::inverse;
  const FitResult fit = fit_study(study, spec, fit_options);

  ReportOptions report_options;
  report_options.level = args.level;
  report_options.sig_level = args.sig_level;
  report_options.lower_threshold = args.lower_threshold;
  report_options.upper_threshold = args.upper_threshold;
  if (!args.alpha_at.empty())
    load_alpha_rows(args.alpha_at, study.w_names, &report_options);

  const FitReport report = build_report(study, spec, fit, fit_options, report_options);
  const std::string table = report_table(report);

  const fs::path dir = out_dir(args.out);
  fs::create_directories(dir);
  write_text(dir / "fit_report.json", report_to_json(report));
  write_text(dir / "fit_report.txt", table);
  std::cout << table;
  std::cout << "wrote " << (dir / "fit_report.json").string() << "\n";

  return report.converged ? 0 : 2;
}

int run_simulate(const SimArgs& args) {
  DesignFile design = load_design(args.design);
  if (args.replicates > 0) design.replicates = args.replicates;
  if (args.seed >= 0) design.seed = static_cast<std::uint64_t>(args.seed);

  McOptions options;
  options.level = design.level;
  options.sig_level = design.sig_level;
  options.jobs = args.jobs;

  const fs::path dir = out_dir(args.out);
  fs::create_directories(dir);

  if (design.kind == DesignFile::Kind::mc) {
    std::vector<McSummary> summaries;
    for (std::size_t i = 0; i < design.n_grid.size(); ++i) {
      SimDesign sim = SimDesign::standard(design.n_grid[i]);
      sim.beta = design.beta;
      sim.theta = design.theta;
      sim.gamma = design.gamma;
      const std::uint64_t seed =
          Rng::stream(design.seed, static_cast<std::uint64_t>(i)).next_u64();
      McSummary summary = run_mc(sim, design.replicates, seed, options);
      const std::string stem = design.name + "_n" + std::to_string(sim.n);
      write_text(dir / (stem + ".json"), mc_summary_to_json(summary));
      write_mc_summary_csv(summary, (dir / (stem + ".csv")).string());
      std::cout << stem << ": " << summary.successes << "/" << summary.replicates
                << " replicates";
      if (summary.failures > 0) std::cout << " (" << summary.failures << " failed)";
      std::cout << "\n";
      summaries.push_back(std::move(summary));
    }
    const fs::path table = dir / (design.name + "_table.csv");
    write_mc_table_csv(summaries, table.string());
    std::cout << "wrote " << table.string() << "\n";
  } else {
    const std::vector<RangePowerCell> cells =
        power_curve(design.alpha_grid, design.n_grid, design.w1_grid, design.tests,
                    design.replicates, design.seed, options);
    const fs::path csv = dir / (design.name + "_power.csv");
    write_power_csv(cells, csv.string());
    write_text(dir / (design.name + "_power.json"), power_cells_to_json(cells));
    std::cout << cells.size() << " power cells; wrote " << csv.string() << "\n";
  }
  return 0;
}

int run_validate(const ValidateArgs& args) {
  const ModelSpec spec = load_model_spec(args.spec);
  const StudyData study = load_study(args.data, args.subjects, args.pairs, spec);
  std::cout << "OK: " << study.n << " subjects, " << study.k << " items, "
            << study.n_complete() << " verified\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subject- and item-pair-specific reliability via weighted "
               "estimating equations"};
  app.require_subcommand(1);

  FitArgs fit_args;
  CLI::App* fit = app.add_subcommand("fit", "Fit a reliability model to CSV data");
  fit->add_option("--data", fit_args.data, "Long-format item response CSV")->required();
  fit->add_option("--subjects", fit_args.subjects, "Subject covariate CSV")->required();
  fit->add_option("--pairs", fit_args.pairs, "Item-pair covariate CSV");
  fit->add_option("--spec", fit_args.spec, "Model spec JSON")->required();
  fit->add_option("--alpha-at", fit_args.alpha_at,
                  "CSV of covariate rows to evaluate the reliability at");
  fit->add_option("--level", fit_args.level, "Confidence level")
      ->check(CLI::Range(1e-6, 1.0 - 1e-6));
  fit->add_option("--sig-level", fit_args.sig_level, "Test significance level")
      ->check(CLI::Range(1e-6, 1.0 - 1e-6));
  fit->add_option("--lower-threshold", fit_args.lower_threshold,
                  "Reliability range test: H0 alpha < threshold")
      ->check(CLI::Range(1e-6, 1.0 - 1e-6));
  fit->add_option("--upper-threshold", fit_args.upper_threshold,
                  "Reliability range test: H0 alpha > threshold")
      ->check(CLI::Range(1e-6, 1.0 - 1e-6));
  fit->add_option("--omega-convention", fit_args.convention,
                  "Weight-correction convention: inverse (default) or literal")
      ->check(CLI::IsMember({"inverse", "literal"}));
  fit->add_option("--out", fit_args.out, "Output directory (or ICALPHA_OUT_DIR)");

  SimArgs sim_args;
  CLI::App* simulate = app.add_subcommand("simulate", "Run a simulation design");
  simulate->add_option("--design", sim_args.design, "Design JSON")->required();
  simulate->add_option("--replicates", sim_args.replicates,
                       "Override the design's replicate count")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--seed", sim_args.seed, "Override the design's base seed")
      ->check(CLI::NonNegativeNumber);
  simulate->add_option("--jobs", sim_args.jobs,
                       "Worker threads (0: hardware concurrency)");
  simulate->add_option("--out", sim_args.out, "Output directory (or ICALPHA_OUT_DIR)");

  ValidateArgs val_args;
  CLI::App* validate =
      app.add_subcommand("validate", "Validate data and spec without fitting");
  validate->add_option("--data", val_args.data, "Long-format item response CSV")
      ->required();
  validate->add_option("--subjects", val_args.subjects, "Subject covariate CSV")
      ->required();
  validate->add_option("--pairs", val_args.pairs, "Item-pair covariate CSV");
  validate->add_option("--spec", val_args.spec, "Model spec JSON")->required();

  CLI::App* version = app.add_subcommand("version", "Print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (fit->parsed()) return run_fit(fit_args);
    if (simulate->parsed()) return run_simulate(sim_args);
    if (validate->parsed()) return run_validate(val_args);
    if (version->parsed()) {
      std::cout << "icalpha " << version_string << "\n";
      return 0;
    }
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const FitError& e) {
    std::cerr << "fit error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
