#pragma once

// Builds validated StudyData from the three normalized tables:
//   items    — subject_id, item_id, y, plus item-level covariates
//   subjects — subject_id, optional "delta", subject-level covariates
//   pairs    — subject_id, item_i, item_j, pair-level covariates (optional)
// Covariate names in the model spec are resolved item-table-first for the
// mean/variance designs, pair-table-first for the alpha design, and
// subject-table-only for the missingness design.  Subjects are put into a
// canonical order (numeric when every id parses as a number, lexicographic
// otherwise), so row order in the input files never affects results.

#include <string>

#include "icalpha/csv.hpp"
#include "icalpha/study.hpp"

namespace icalpha {

// In-memory construction; `pairs` may be null when no pair table is given.
StudyData build_study(const Csv& items, const Csv& subjects, const Csv* pairs,
                      const ModelSpec& spec);

// File-based construction; `pairs_path` may be empty.
StudyData load_study(const std::string& items_path, const std::string& subjects_path,
                     const std::string& pairs_path, const ModelSpec& spec);

}  // namespace icalpha
