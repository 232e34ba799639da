#include "icalpha/study_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <unordered_map>

#include "icalpha/errors.hpp"

namespace icalpha {

namespace {

std::string loc(const Csv& csv, int row_idx) {
  return csv.path + ":" + std::to_string(csv.line_numbers[row_idx]);
}

int require_column(const Csv& csv, const std::string& name) {
  const int c = csv.column(name);
  if (c < 0) throw InputError(csv.path + ": missing required column '" + name + "'");
  return c;
}

bool parse_numeric_id(const std::string& s, double* out) {
  if (s.empty()) return false;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return false;
  *out = v;
  return true;
}

long parse_item_id(const std::string& cell, const std::string& context) {
  if (cell.empty()) throw InputError(context + ": empty item_id");
  char* end = nullptr;
  const long v = std::strtol(cell.c_str(), &end, 10);
  if (end != cell.c_str() + cell.size())
    throw InputError(context + ": item_id '" + cell + "' is not an integer");
  return v;
}

// Where a model-spec column name was found.
struct Resolved {
  enum class Source { item, subject, pair } source = Source::subject;
  int col = -1;
  std::string name;
};

Resolved resolve(const std::string& name, const Csv* items, const Csv& subjects,
                 const Csv* pairs, bool allow_pairs, const std::string& role) {
  Resolved r;
  r.name = name;
  if (allow_pairs && pairs != nullptr) {
    const int c = pairs->column(name);
    if (c >= 0) {
      r.source = Resolved::Source::pair;
      r.col = c;
      return r;
    }
  }
  if (items != nullptr) {
    const int c = items->column(name);
    if (c >= 0) {
      r.source = Resolved::Source::item;
      r.col = c;
      return r;
    }
  }
  const int c = subjects.column(name);
  if (c >= 0) {
    r.source = Resolved::Source::subject;
    r.col = c;
    return r;
  }
  throw InputError("missing required column '" + name + "' for the " + role + " model");
}

}  // namespace

void StudyData::validate() const {
  const auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw InputError("invalid study data: " + msg);
  };
  check(n >= 1, "no subjects");
  check(k >= 2, "need at least 2 items, have " + std::to_string(k));
  const int np = pair_count(k);
  check(static_cast<int>(pairs.size()) == np, "pair index size mismatch");
  check(pairs == build_pair_index(k), "pair index out of order");
  check(y.rows() == n && y.cols() == k, "response matrix shape mismatch");
  check(x.rows() == static_cast<Eigen::Index>(n) * k, "mean design row count mismatch");
  check(z.rows() == static_cast<Eigen::Index>(n) * k, "variance design row count mismatch");
  check(w.rows() == static_cast<Eigen::Index>(n) * np, "alpha design row count mismatch");
  check(q.rows() == n, "missingness design row count mismatch");
  check(delta.size() == n, "delta length mismatch");
  check(static_cast<int>(subject_ids.size()) == n, "subject id count mismatch");
  check(static_cast<Eigen::Index>(x_names.size()) == x.cols(), "mean design name count mismatch");
  check(static_cast<Eigen::Index>(z_names.size()) == z.cols(),
        "variance design name count mismatch");
  check(static_cast<Eigen::Index>(w_names.size()) == w.cols(), "alpha design name count mismatch");
  check(static_cast<Eigen::Index>(q_names.size()) == q.cols(),
        "missingness design name count mismatch");
  check(y.allFinite(), "missing response");
  check(q.allFinite(), "missingness design must be fully observed");
  for (int p = 0; p < n; ++p) {
    check(delta[p] == 0 || delta[p] == 1, "delta entries must be 0 or 1");
    if (delta[p] != 1) continue;
    check(x.middleRows(static_cast<Eigen::Index>(p) * k, k).allFinite() &&
              z.middleRows(static_cast<Eigen::Index>(p) * k, k).allFinite() &&
              w.middleRows(static_cast<Eigen::Index>(p) * np, np).allFinite(),
          "verified subject '" + subject_ids[p] + "' has non-finite design cells");
  }
}

StudyData build_study(const Csv& items, const Csv& subjects, const Csv* pairs,
                      const ModelSpec& spec) {
  // ---- subjects table: canonical ordering ----------------------------------
  const int sid_col = require_column(subjects, "subject_id");
  const int delta_col = subjects.column("delta");
  if (subjects.rows.empty()) throw InputError(subjects.path + ": no subject rows");

  std::unordered_map<std::string, int> subject_file_row;
  subject_file_row.reserve(subjects.rows.size());
  for (int r = 0; r < static_cast<int>(subjects.rows.size()); ++r) {
    const std::string& id = subjects.rows[r][sid_col];
    if (id.empty()) throw InputError(loc(subjects, r) + ": empty subject_id");
    if (!subject_file_row.emplace(id, r).second)
      throw InputError(loc(subjects, r) + ": duplicate subject '" + id + "'");
  }

  std::vector<std::string> ids;
  ids.reserve(subject_file_row.size());
  for (const auto& row : subjects.rows) ids.push_back(row[sid_col]);
  bool all_numeric = true;
  std::vector<double> numeric_ids(ids.size());
  for (std::size_t i = 0; i < ids.size() && all_numeric; ++i)
    all_numeric = parse_numeric_id(ids[i], &numeric_ids[i]);
  if (all_numeric) {
    std::vector<std::size_t> order(ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (numeric_ids[a] != numeric_ids[b]) return numeric_ids[a] < numeric_ids[b];
      return ids[a] < ids[b];
    });
    std::vector<std::string> sorted;
    sorted.reserve(ids.size());
    for (std::size_t i : order) sorted.push_back(ids[i]);
    ids = std::move(sorted);
  } else {
    std::sort(ids.begin(), ids.end());
  }
  const int n = static_cast<int>(ids.size());
  std::unordered_map<std::string, int> subject_index;
  subject_index.reserve(ids.size());
  for (int p = 0; p < n; ++p) subject_index.emplace(ids[p], p);

  // ---- items table: responses, item count, row lookup -----------------------
  const int i_sid = require_column(items, "subject_id");
  const int i_item = require_column(items, "item_id");
  const int i_y = require_column(items, "y");
  if (items.rows.empty()) throw InputError(items.path + ": no item rows");

  int k = 0;
  for (int r = 0; r < static_cast<int>(items.rows.size()); ++r) {
    const long item = parse_item_id(items.rows[r][i_item], loc(items, r));
    if (item < 1)
      throw InputError(loc(items, r) + ": item_id must be >= 1, got " +
                       std::to_string(item));
    if (item > 10000) throw InputError(loc(items, r) + ": item_id implausibly large");
    k = std::max(k, static_cast<int>(item));
  }
  if (k < 2)
    throw InputError(items.path + ": need at least 2 items, found " + std::to_string(k));

  Eigen::MatrixXd y(n, k);
  std::vector<int> item_row(static_cast<std::size_t>(n) * k, -1);
  for (int r = 0; r < static_cast<int>(items.rows.size()); ++r) {
    const std::string& id = items.rows[r][i_sid];
    const auto it = subject_index.find(id);
    if (it == subject_index.end())
      throw InputError(loc(items, r) + ": subject '" + id + "' not in subjects file");
    const int p = it->second;
    const int item = static_cast<int>(parse_item_id(items.rows[r][i_item], loc(items, r)));
    int& slot = item_row[static_cast<std::size_t>(p) * k + item - 1];
    if (slot >= 0)
      throw InputError(loc(items, r) + ": duplicate row for subject '" + id +
                       "', item " + std::to_string(item));
    slot = r;
    const std::string& cell = items.rows[r][i_y];
    if (is_missing_cell(cell)) throw InputError(loc(items, r) + ": missing response");
    y(p, item - 1) = parse_double_cell(cell, loc(items, r) + ", column 'y'");
  }
  for (int p = 0; p < n; ++p)
    for (int i = 0; i < k; ++i)
      if (item_row[static_cast<std::size_t>(p) * k + i] < 0)
        throw InputError(items.path + ": subject '" + ids[p] + "' is missing item " +
                         std::to_string(i + 1));

  // ---- pairs table (optional) ------------------------------------------------
  const auto pair_list = build_pair_index(k);
  const int np = static_cast<int>(pair_list.size());
  std::vector<int> pair_row;
  if (pairs != nullptr) {
    const int p_sid = require_column(*pairs, "subject_id");
    const int p_i = require_column(*pairs, "item_i");
    const int p_j = require_column(*pairs, "item_j");
    pair_row.assign(static_cast<std::size_t>(n) * np, -1);
    for (int r = 0; r < static_cast<int>(pairs->rows.size()); ++r) {
      const std::string& id = pairs->rows[r][p_sid];
      const auto it = subject_index.find(id);
      if (it == subject_index.end())
        throw InputError(loc(*pairs, r) + ": subject '" + id + "' not in subjects file");
      const int ii = static_cast<int>(parse_item_id(pairs->rows[r][p_i], loc(*pairs, r)));
      const int jj = static_cast<int>(parse_item_id(pairs->rows[r][p_j], loc(*pairs, r)));
      if (ii < 1 || jj < 1 || ii > k || jj > k)
        throw InputError(loc(*pairs, r) + ": pair item outside 1.." + std::to_string(k));
      if (ii >= jj)
        throw InputError(loc(*pairs, r) + ": pair rows require item_i < item_j");
      // lexicographic index of (ii, jj) among the k(k-1)/2 pairs
      const int c = (ii - 1) * k - (ii - 1) * ii / 2 + (jj - ii - 1);
      int& slot = pair_row[static_cast<std::size_t>(it->second) * np + c];
      if (slot >= 0)
        throw InputError(loc(*pairs, r) + ": duplicate pair row for subject '" + id +
                         "', items (" + std::to_string(ii) + "," + std::to_string(jj) + ")");
      slot = r;
    }
  }

  // ---- resolve model-spec columns --------------------------------------------
  std::vector<Resolved> mean_src, var_src, alpha_src, q_src;
  for (const auto& name : spec.mean_columns)
    mean_src.push_back(resolve(name, &items, subjects, nullptr, false, "mean"));
  for (const auto& name : spec.var_columns)
    var_src.push_back(resolve(name, &items, subjects, nullptr, false, "variance"));
  for (const auto& name : spec.alpha_columns) {
    Resolved r = resolve(name, nullptr, subjects, pairs, true, "alpha");
    if (spec.pooled_alpha && r.source == Resolved::Source::pair)
      throw InputError("pooled alpha requires subject-level columns, but '" + name +
                       "' is pair-level");
    alpha_src.push_back(r);
  }
  for (const auto& name : spec.miss_columns) {
    Resolved r;
    r.name = name;
    r.col = subjects.column(name);
    if (r.col < 0)
      throw InputError("missing required column '" + name +
                       "' in the subjects file for the missingness model");
    q_src.push_back(r);
  }

  // Fetch one resolved covariate cell; nullopt encodes a missing cell.
  const auto fetch = [&](const Resolved& src, int p, int i,
                         int c) -> std::optional<double> {
    const Csv* table = nullptr;
    int row = -1;
    switch (src.source) {
      case Resolved::Source::item:
        table = &items;
        row = item_row[static_cast<std::size_t>(p) * k + i];
        break;
      case Resolved::Source::subject:
        table = &subjects;
        row = subject_file_row.at(ids[p]);
        break;
      case Resolved::Source::pair:
        table = pairs;
        row = pair_row[static_cast<std::size_t>(p) * np + c];
        if (row < 0) return std::nullopt;  // absent pair row == missing cells
        break;
    }
    const std::string& cell = table->rows[row][src.col];
    if (is_missing_cell(cell)) return std::nullopt;
    return parse_double_cell(cell, loc(*table, row) + ", column '" + src.name + "'");
  };

  // ---- delta: explicit column or derived from cell completeness ---------------
  Eigen::VectorXi delta(n);
  std::vector<std::string> missing_example(n);
  for (int p = 0; p < n; ++p) {
    bool complete = true;
    std::string example;
    const auto note = [&](const Resolved& src, int item_no, int pr) {
      if (!example.empty()) return;
      example = "column '" + src.name + "'";
      if (src.source == Resolved::Source::item)
        example += ", item " + std::to_string(item_no + 1);
      if (src.source == Resolved::Source::pair)
        example += ", pair (" + std::to_string(pair_list[pr].first) + "," +
                   std::to_string(pair_list[pr].second) + ")";
    };
    for (const auto& src : mean_src)
      for (int i = 0; i < k; ++i)
        if (!fetch(src, p, i, 0)) { complete = false; note(src, i, 0); }
    for (const auto& src : var_src)
      for (int i = 0; i < k; ++i)
        if (!fetch(src, p, i, 0)) { complete = false; note(src, i, 0); }
    for (const auto& src : alpha_src)
      for (int c = 0; c < np; ++c)
        if (!fetch(src, p, 0, c)) { complete = false; note(src, 0, c); }

    missing_example[p] = example;
    if (delta_col >= 0) {
      const int row = subject_file_row.at(ids[p]);
      const std::string& cell = subjects.rows[row][delta_col];
      if (is_missing_cell(cell))
        throw InputError(loc(subjects, row) + ": delta must be 0 or 1");
      const double v = parse_double_cell(cell, loc(subjects, row) + ", column 'delta'");
      if (v != 0.0 && v != 1.0)
        throw InputError(loc(subjects, row) + ": delta must be 0 or 1");
      delta[p] = static_cast<int>(v);
      if (delta[p] == 1 && !complete)
        throw InputError("subject '" + ids[p] +
                         "' is marked verified (delta=1) but has a missing cell: " +
                         example);
    } else {
      delta[p] = complete ? 1 : 0;
    }
  }

  if (!spec.has_missingness_model)
    for (int p = 0; p < n; ++p)
      if (delta[p] == 0)
        throw InputError(
            "subject '" + ids[p] + "' is incomplete (" + missing_example[p] +
            ") but the model spec declares no missingness model; add one or "
            "complete the data");

  // ---- assemble design matrices ------------------------------------------------
  StudyData study;
  study.n = n;
  study.k = k;
  study.y = std::move(y);
  study.pairs = pair_list;
  study.subject_ids = ids;
  study.delta = std::move(delta);

  const bool per_item = spec.intercept_mode == InterceptMode::per_item;
  const int mean_icols = per_item ? k : 1;
  if (per_item)
    for (int i = 1; i <= k; ++i) study.x_names.push_back("(item " + std::to_string(i) + ")");
  else
    study.x_names.push_back("(intercept)");
  for (const auto& src : mean_src) study.x_names.push_back(src.name);

  const bool var_item = spec.variance_mode == VarianceMode::per_item_constant;
  const int var_icols = var_item ? k : 1;
  if (var_item)
    for (int i = 1; i <= k; ++i) study.z_names.push_back("(item " + std::to_string(i) + ")");
  else
    study.z_names.push_back("(intercept)");
  for (const auto& src : var_src) study.z_names.push_back(src.name);

  study.w_names.push_back("(intercept)");
  for (const auto& src : alpha_src) study.w_names.push_back(src.name);
  study.q_names.push_back("(intercept)");
  for (const auto& src : q_src) study.q_names.push_back(src.name);

  study.x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n) * k,
                                  mean_icols + static_cast<int>(mean_src.size()));
  study.z = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n) * k,
                                  var_icols + static_cast<int>(var_src.size()));
  study.w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n) * np,
                                  1 + static_cast<int>(alpha_src.size()));
  study.q = Eigen::MatrixXd::Zero(n, 1 + static_cast<int>(q_src.size()));

  for (int p = 0; p < n; ++p) {
    const bool verified = study.delta[p] == 1;
    for (int i = 0; i < k; ++i) {
      const Eigen::Index row = static_cast<Eigen::Index>(p) * k + i;
      if (verified) {
        study.x(row, per_item ? i : 0) = 1.0;
        study.z(row, var_item ? i : 0) = 1.0;
        for (std::size_t c = 0; c < mean_src.size(); ++c)
          study.x(row, mean_icols + static_cast<int>(c)) = *fetch(mean_src[c], p, i, 0);
        for (std::size_t c = 0; c < var_src.size(); ++c)
          study.z(row, var_icols + static_cast<int>(c)) = *fetch(var_src[c], p, i, 0);
      }
    }
    for (int c = 0; c < np; ++c) {
      const Eigen::Index row = static_cast<Eigen::Index>(p) * np + c;
      if (verified) {
        study.w(row, 0) = 1.0;
        for (std::size_t a = 0; a < alpha_src.size(); ++a)
          study.w(row, 1 + static_cast<int>(a)) = *fetch(alpha_src[a], p, 0, c);
      }
    }
    study.q(p, 0) = 1.0;
    for (std::size_t a = 0; a < q_src.size(); ++a) {
      const auto v = fetch(q_src[a], p, 0, 0);
      if (!v)
        throw InputError("missingness covariate '" + q_src[a].name +
                         "' is missing for subject '" + ids[p] +
                         "'; these columns must always be observed");
      study.q(p, 1 + static_cast<int>(a)) = *v;
    }
  }

  study.validate();
  return study;
}

StudyData load_study(const std::string& items_path, const std::string& subjects_path,
                     const std::string& pairs_path, const ModelSpec& spec) {
  const Csv items = read_csv(items_path);
  const Csv subjects = read_csv(subjects_path);
  if (pairs_path.empty()) return build_study(items, subjects, nullptr, spec);
  const Csv pairs = read_csv(pairs_path);
  return build_study(items, subjects, &pairs, spec);
}

}  // namespace icalpha
