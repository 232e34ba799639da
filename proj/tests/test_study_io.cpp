// Study assembly from the normalized tables: canonical subject ordering,
// column resolution per design, verification flags, and input validation.

#include <doctest.h>

#include <limits>
#include <string>
#include <utility>

#include "icalpha/csv.hpp"
#include "icalpha/errors.hpp"
#include "icalpha/study_io.hpp"
#include "test_util.hpp"

using icalpha::build_study;
using icalpha::Csv;
using icalpha::InputError;
using icalpha::load_study;
using icalpha::ModelSpec;
using icalpha::read_csv_text;
using icalpha::StudyData;

namespace {

// ---- base tables: ids 10, 2, 1 so canonical order must resort them --------

const char* kSubjects =
    "subject_id,z1,q1\n"
    "10,0.5,1.5\n"
    "2,-0.25,0.25\n"
    "1,2.0,-1.0\n";

const char* kItems =
    "subject_id,item_id,y,v\n"
    "10,1,1.0,0.1\n"
    "10,2,2.0,0.2\n"
    "10,3,3.0,0.3\n"
    "2,1,4.0,0.4\n"
    "2,2,5.0,0.5\n"
    "2,3,6.0,0.6\n"
    "1,1,7.0,0.7\n"
    "1,2,8.0,0.8\n"
    "1,3,9.0,0.9\n";

const char* kPairs =
    "subject_id,item_i,item_j,w1\n"
    "10,1,2,10.12\n"
    "10,1,3,10.13\n"
    "10,2,3,10.23\n"
    "2,1,2,2.12\n"
    "2,1,3,2.13\n"
    "2,2,3,2.23\n"
    "1,1,2,1.12\n"
    "1,1,3,1.13\n"
    "1,2,3,1.23\n";

ModelSpec base_spec() {
  ModelSpec s;
  s.mean_columns = {"v"};
  s.var_columns = {"z1"};
  s.alpha_columns = {"w1"};
  s.has_missingness_model = true;
  s.miss_columns = {"q1"};
  return s;
}

StudyData base_study() {
  const Csv items = read_csv_text(kItems, "items.csv");
  const Csv subjects = read_csv_text(kSubjects, "subjects.csv");
  const Csv pairs = read_csv_text(kPairs, "pairs.csv");
  return build_study(items, subjects, &pairs, base_spec());
}

}  // namespace

TEST_CASE("numeric subject ids are sorted numerically and designs follow") {
  const StudyData st = base_study();
  st.validate();

  CHECK(st.n == 3);
  CHECK(st.k == 3);
  CHECK(st.npairs() == 3);
  REQUIRE(st.subject_ids == std::vector<std::string>{"1", "2", "10"});
  CHECK(st.all_complete());

  // responses follow the canonical order, not file order
  CHECK(st.y(0, 0) == 7.0);
  CHECK(st.y(0, 2) == 9.0);
  CHECK(st.y(1, 1) == 5.0);
  CHECK(st.y(2, 0) == 1.0);

  // mean design: intercept + item-level v, row p*k + (i-1)
  REQUIRE(st.x.cols() == 2);
  CHECK(st.x(0, 0) == 1.0);
  CHECK(st.x(0, 1) == 0.7);
  CHECK(st.x(2, 1) == 0.9);
  CHECK(st.x(3, 1) == 0.4);   // subject "2", item 1
  CHECK(st.x(8, 1) == 0.3);   // subject "10", item 3

  // variance design: intercept + subject-level z1 replicated per item
  REQUIRE(st.z.cols() == 2);
  for (int i = 0; i < 3; ++i) {
    CHECK(st.z(i, 0) == 1.0);
    CHECK(st.z(i, 1) == 2.0);
    CHECK(st.z(6 + i, 1) == 0.5);
  }

  // alpha design: intercept + pair-level w1 in (1,2),(1,3),(2,3) order
  REQUIRE(st.w.cols() == 2);
  CHECK(st.w(0, 1) == 1.12);
  CHECK(st.w(1, 1) == 1.13);
  CHECK(st.w(2, 1) == 1.23);
  CHECK(st.w(3, 1) == 2.12);
  CHECK(st.w(8, 1) == 10.23);

  // missingness design: intercept + q1
  REQUIRE(st.q.cols() == 2);
  CHECK(st.q(0, 1) == -1.0);
  CHECK(st.q(2, 1) == 1.5);

  CHECK(st.x_names == std::vector<std::string>{"(intercept)", "v"});
  CHECK(st.z_names == std::vector<std::string>{"(intercept)", "z1"});
  CHECK(st.w_names == std::vector<std::string>{"(intercept)", "w1"});
  CHECK(st.q_names == std::vector<std::string>{"(intercept)", "q1"});
}

TEST_CASE("any non-numeric id switches to lexicographic ordering") {
  const Csv subjects = read_csv_text(
      "subject_id,z1,q1\n"
      "s10,0.5,1.5\n"
      "s2,-0.25,0.25\n"
      "s1,2.0,-1.0\n",
      "subjects.csv");
  std::string items = kItems;
  std::string pairs = kPairs;
  // reuse the numeric tables with prefixed ids
  auto prefix = [](std::string text) {
    std::string out;
    bool at_line_start = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
      if (at_line_start && text[i] != '\n') out += 's';
      at_line_start = text[i] == '\n';
      out += text[i];
    }
    return out;
  };
  // drop the header before prefixing, then re-attach
  const auto split = [](const std::string& text) {
    const auto nl = text.find('\n');
    return std::pair<std::string, std::string>(text.substr(0, nl + 1), text.substr(nl + 1));
  };
  const auto [ih, ib] = split(items);
  const auto [ph, pb] = split(pairs);
  const Csv items_csv = read_csv_text(ih + "s" + prefix(ib), "items.csv");
  const Csv pairs_csv = read_csv_text(ph + "s" + prefix(pb), "pairs.csv");

  const StudyData st = build_study(items_csv, subjects, &pairs_csv, base_spec());
  CHECK(st.subject_ids == std::vector<std::string>{"s1", "s10", "s2"});
  // "s10" now sits at p = 1
  CHECK(st.y(1, 0) == 1.0);
  CHECK(st.z(3, 1) == 0.5);
}

TEST_CASE("mean columns prefer the item table, alpha columns prefer the pair table") {
  // the same column name exists at two levels with different values
  const Csv items = read_csv_text(
      "subject_id,item_id,y,v\n"
      "1,1,1.0,100\n"
      "1,2,2.0,200\n"
      "2,1,3.0,300\n"
      "2,2,4.0,400\n",
      "items.csv");
  const Csv subjects = read_csv_text(
      "subject_id,v,w1,q1\n"
      "1,-7,55,0.1\n"
      "2,-8,66,0.2\n",
      "subjects.csv");
  const Csv pairs = read_csv_text(
      "subject_id,item_i,item_j,w1\n"
      "1,1,2,9.5\n"
      "2,1,2,8.5\n",
      "pairs.csv");
  ModelSpec spec;
  spec.mean_columns = {"v"};
  spec.alpha_columns = {"w1"};
  spec.has_missingness_model = true;
  spec.miss_columns = {"q1"};

  const StudyData st = build_study(items, subjects, &pairs, spec);
  CHECK(st.x(0, 1) == 100.0);  // item-table value, not -7
  CHECK(st.x(3, 1) == 400.0);
  CHECK(st.w(0, 1) == 9.5);    // pair-table value, not 55
  CHECK(st.w(1, 1) == 8.5);

  SUBCASE("subject-level alpha column replicates across pairs") {
    spec.alpha_columns = {"v"};  // only in subjects once pairs lack it
    ModelSpec s2 = spec;
    s2.alpha_columns = {"w1"};
    const Csv pairs_plain = read_csv_text(
        "subject_id,item_i,item_j\n"
        "1,1,2\n"
        "2,1,2\n",
        "pairs.csv");
    const StudyData st2 = build_study(items, subjects, &pairs_plain, s2);
    CHECK(st2.w(0, 1) == 55.0);
    CHECK(st2.w(1, 1) == 66.0);
  }

  SUBCASE("item-table columns are not visible to the alpha design") {
    ModelSpec s3 = spec;
    s3.alpha_columns = {"only_items"};
    const Csv items2 = read_csv_text(
        "subject_id,item_id,y,v,only_items\n"
        "1,1,1.0,100,1\n"
        "1,2,2.0,200,1\n"
        "2,1,3.0,300,1\n"
        "2,2,4.0,400,1\n",
        "items.csv");
    CHECK_THROWS_WITH_AS(
        build_study(items2, subjects, &pairs, s3),
        doctest::Contains("missing required column 'only_items' for the alpha model"),
        InputError);
  }
}

TEST_CASE("delta is derived from completeness and unverified rows are zero-filled") {
  const Csv items = read_csv_text(kItems, "items.csv");
  const Csv subjects = read_csv_text(
      "subject_id,z1,q1\n"
      "10,0.5,1.5\n"
      "2,NA,0.25\n"  // incomplete variance covariate
      "1,2.0,-1.0\n",
      "subjects.csv");
  const Csv pairs = read_csv_text(kPairs, "pairs.csv");
  const StudyData st = build_study(items, subjects, &pairs, base_spec());

  REQUIRE(st.delta.size() == 3);
  CHECK(st.delta[0] == 1);
  CHECK(st.delta[1] == 0);  // subject "2"
  CHECK(st.delta[2] == 1);
  CHECK(st.n_complete() == 2);
  CHECK_FALSE(st.all_complete());

  // the whole unverified block is zero, intercepts included
  CHECK(st.x.middleRows(3, 3).cwiseAbs().maxCoeff() == 0.0);
  CHECK(st.z.middleRows(3, 3).cwiseAbs().maxCoeff() == 0.0);
  CHECK(st.w.middleRows(3, 3).cwiseAbs().maxCoeff() == 0.0);
  // responses and missingness covariates stay observed
  CHECK(st.y(1, 0) == 4.0);
  CHECK(st.q(1, 0) == 1.0);
  CHECK(st.q(1, 1) == 0.25);
}

TEST_CASE("explicit delta column is honored and cross-checked") {
  SUBCASE("delta=0 hides a complete subject's design rows") {
    const Csv items = read_csv_text(kItems, "items.csv");
    const Csv subjects = read_csv_text(
        "subject_id,delta,z1,q1\n"
        "10,1,0.5,1.5\n"
        "2,0,-0.25,0.25\n"
        "1,1,2.0,-1.0\n",
        "subjects.csv");
    const Csv pairs = read_csv_text(kPairs, "pairs.csv");
    const StudyData st = build_study(items, subjects, &pairs, base_spec());
    CHECK(st.delta[1] == 0);
    CHECK(st.z.middleRows(3, 3).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("delta=1 with a missing cell is contradictory") {
    const Csv items = read_csv_text(kItems, "items.csv");
    const Csv subjects = read_csv_text(
        "subject_id,delta,z1,q1\n"
        "10,1,0.5,1.5\n"
        "2,1,NA,0.25\n"
        "1,1,2.0,-1.0\n",
        "subjects.csv");
    const Csv pairs = read_csv_text(kPairs, "pairs.csv");
    CHECK_THROWS_WITH_AS(
        build_study(items, subjects, &pairs, base_spec()),
        doctest::Contains("is marked verified (delta=1) but has a missing cell: column 'z1'"),
        InputError);
  }
  SUBCASE("delta outside {0,1} is rejected") {
    const Csv items = read_csv_text(kItems, "items.csv");
    const Csv pairs = read_csv_text(kPairs, "pairs.csv");
    for (const char* bad : {"2", "0.5", "-1", "NA", ""}) {
      const Csv subjects = read_csv_text(
          std::string("subject_id,delta,z1,q1\n") +
              "10," + bad + ",0.5,1.5\n"
              "2,1,-0.25,0.25\n"
              "1,1,2.0,-1.0\n",
          "subjects.csv");
      CHECK_THROWS_WITH_AS(build_study(items, subjects, &pairs, base_spec()),
                           doctest::Contains("delta must be 0 or 1"), InputError);
    }
  }
}

TEST_CASE("incomplete subjects without a missingness model are rejected") {
  const Csv items = read_csv_text(kItems, "items.csv");
  const Csv subjects = read_csv_text(
      "subject_id,z1,q1\n"
      "10,0.5,1.5\n"
      "2,NA,0.25\n"
      "1,2.0,-1.0\n",
      "subjects.csv");
  const Csv pairs = read_csv_text(kPairs, "pairs.csv");
  ModelSpec spec = base_spec();
  spec.has_missingness_model = false;
  spec.miss_columns.clear();
  CHECK_THROWS_WITH_AS(build_study(items, subjects, &pairs, spec),
                       doctest::Contains("declares no missingness model"), InputError);
}

TEST_CASE("item table integrity errors") {
  const Csv subjects = read_csv_text(kSubjects, "subjects.csv");
  const Csv pairs = read_csv_text(kPairs, "pairs.csv");
  const auto build = [&](const char* items_text) {
    const Csv items = read_csv_text(items_text, "items.csv");
    return build_study(items, subjects, &pairs, base_spec());
  };

  SUBCASE("missing required column") {
    CHECK_THROWS_WITH_AS(build("subject_id,item_id,v\n1,1,0.1\n"),
                         doctest::Contains("missing required column 'y'"), InputError);
  }
  SUBCASE("no rows") {
    CHECK_THROWS_WITH_AS(build("subject_id,item_id,y,v\n"),
                         doctest::Contains("no item rows"), InputError);
  }
  SUBCASE("unknown subject") {
    std::string text = kItems;
    text += "77,1,5.0,0.5\n";
    CHECK_THROWS_WITH_AS(build(text.c_str()),
                         doctest::Contains("subject '77' not in subjects file"), InputError);
  }
  SUBCASE("missing response") {
    std::string text = kItems;
    const auto at = text.find("9.0");
    text.replace(at, 3, "NA");
    CHECK_THROWS_WITH_AS(build(text.c_str()), doctest::Contains("missing response"),
                         InputError);
  }
  SUBCASE("duplicate item row") {
    std::string text = kItems;
    text += "1,2,8.5,0.8\n";
    CHECK_THROWS_WITH_AS(build(text.c_str()),
                         doctest::Contains("duplicate row for subject '1', item 2"),
                         InputError);
  }
  SUBCASE("missing item row") {
    // drop subject 2, item 3
    std::string text = kItems;
    const auto at = text.find("2,3,6.0,0.6\n");
    text.erase(at, 12);
    CHECK_THROWS_WITH_AS(build(text.c_str()),
                         doctest::Contains("subject '2' is missing item 3"), InputError);
  }
  SUBCASE("fewer than two items") {
    CHECK_THROWS_WITH_AS(
        build("subject_id,item_id,y,v\n1,1,1.0,0.1\n2,1,2.0,0.2\n10,1,3.0,0.3\n"),
        doctest::Contains("need at least 2 items, found 1"), InputError);
  }
  SUBCASE("bad item ids") {
    CHECK_THROWS_WITH_AS(build("subject_id,item_id,y,v\n1,0,1.0,0.1\n"),
                         doctest::Contains("item_id must be >= 1"), InputError);
    CHECK_THROWS_WITH_AS(build("subject_id,item_id,y,v\n1,two,1.0,0.1\n"),
                         doctest::Contains("'two' is not an integer"), InputError);
  }
}

TEST_CASE("subject table integrity errors") {
  const Csv items = read_csv_text(kItems, "items.csv");
  const Csv pairs = read_csv_text(kPairs, "pairs.csv");
  SUBCASE("duplicate subject") {
    const Csv subjects = read_csv_text(
        "subject_id,z1,q1\n10,0.5,1.5\n2,-0.25,0.25\n2,0.0,0.0\n1,2.0,-1.0\n",
        "subjects.csv");
    CHECK_THROWS_WITH_AS(build_study(items, subjects, &pairs, base_spec()),
                         doctest::Contains("duplicate subject '2'"), InputError);
  }
  SUBCASE("no rows") {
    const Csv subjects = read_csv_text("subject_id,z1,q1\n", "subjects.csv");
    CHECK_THROWS_WITH_AS(build_study(items, subjects, &pairs, base_spec()),
                         doctest::Contains("no subject rows"), InputError);
  }
  SUBCASE("missing subject_id column") {
    const Csv subjects = read_csv_text("id,z1,q1\n1,2.0,-1.0\n", "subjects.csv");
    CHECK_THROWS_WITH_AS(build_study(items, subjects, &pairs, base_spec()),
                         doctest::Contains("missing required column 'subject_id'"),
                         InputError);
  }
}

TEST_CASE("pair table integrity errors") {
  const Csv items = read_csv_text(kItems, "items.csv");
  const Csv subjects = read_csv_text(kSubjects, "subjects.csv");
  const auto build = [&](std::string extra) {
    std::string text = kPairs;
    text += extra;
    const Csv pairs = read_csv_text(text, "pairs.csv");
    return build_study(items, subjects, &pairs, base_spec());
  };

  CHECK_THROWS_WITH_AS(build("1,2,2,0.0\n"),
                       doctest::Contains("pair rows require item_i < item_j"), InputError);
  CHECK_THROWS_WITH_AS(build("1,3,2,0.0\n"),
                       doctest::Contains("pair rows require item_i < item_j"), InputError);
  CHECK_THROWS_WITH_AS(build("1,1,4,0.0\n"), doctest::Contains("pair item outside 1..3"),
                       InputError);
  CHECK_THROWS_WITH_AS(build("1,0,2,0.0\n"), doctest::Contains("pair item outside 1..3"),
                       InputError);
  CHECK_THROWS_WITH_AS(build("99,1,2,0.0\n"),
                       doctest::Contains("subject '99' not in subjects file"), InputError);
  CHECK_THROWS_WITH_AS(build("1,1,2,0.5\n"),
                       doctest::Contains("duplicate pair row for subject '1', items (1,2)"),
                       InputError);

  SUBCASE("missing structural column") {
    const Csv pairs = read_csv_text("subject_id,item_i,w1\n1,1,0.5\n", "pairs.csv");
    CHECK_THROWS_WITH_AS(build_study(items, subjects, &pairs, base_spec()),
                         doctest::Contains("missing required column 'item_j'"), InputError);
  }
}

TEST_CASE("unresolvable model columns name the role") {
  const Csv items = read_csv_text(kItems, "items.csv");
  const Csv subjects = read_csv_text(kSubjects, "subjects.csv");
  const Csv pairs = read_csv_text(kPairs, "pairs.csv");

  ModelSpec spec = base_spec();
  spec.mean_columns = {"nope"};
  CHECK_THROWS_WITH_AS(build_study(items, subjects, &pairs, spec),
                       doctest::Contains("missing required column 'nope' for the mean model"),
                       InputError);

  spec = base_spec();
  spec.var_columns = {"novar"};
  CHECK_THROWS_WITH_AS(
      build_study(items, subjects, &pairs, spec),
      doctest::Contains("missing required column 'novar' for the variance model"),
      InputError);

  spec = base_spec();
  spec.alpha_columns = {"noal"};
  CHECK_THROWS_WITH_AS(
      build_study(items, subjects, &pairs, spec),
      doctest::Contains("missing required column 'noal' for the alpha model"), InputError);

  spec = base_spec();
  spec.miss_columns = {"v"};  // item-level only: invisible to the missingness design
  CHECK_THROWS_WITH_AS(
      build_study(items, subjects, &pairs, spec),
      doctest::Contains("missing required column 'v' in the subjects file"), InputError);
}

TEST_CASE("pooled alpha accepts subject-level columns and rejects pair-level ones") {
  const Csv items = read_csv_text(kItems, "items.csv");
  const Csv subjects = read_csv_text(kSubjects, "subjects.csv");
  const Csv pairs = read_csv_text(kPairs, "pairs.csv");

  ModelSpec spec = base_spec();
  spec.pooled_alpha = true;
  spec.alpha_columns = {"z1"};
  const StudyData st = build_study(items, subjects, &pairs, spec);
  CHECK(st.w(0, 1) == 2.0);
  CHECK(st.w(1, 1) == 2.0);
  CHECK(st.w(2, 1) == 2.0);

  spec.alpha_columns = {"w1"};
  CHECK_THROWS_WITH_AS(
      build_study(items, subjects, &pairs, spec),
      doctest::Contains("pooled alpha requires subject-level columns, but 'w1' is pair-level"),
      InputError);
}

TEST_CASE("per-item intercepts and per-item constant variances expand to indicators") {
  const Csv items = read_csv_text(kItems, "items.csv");
  const Csv subjects = read_csv_text(kSubjects, "subjects.csv");
  const Csv pairs = read_csv_text(kPairs, "pairs.csv");

  ModelSpec spec = base_spec();
  spec.intercept_mode = icalpha::InterceptMode::per_item;
  spec.variance_mode = icalpha::VarianceMode::per_item_constant;
  spec.var_columns.clear();

  const StudyData st = build_study(items, subjects, &pairs, spec);
  REQUIRE(st.x.cols() == 4);  // 3 indicators + v
  REQUIRE(st.z.cols() == 3);  // 3 indicators only
  CHECK(st.x_names ==
        std::vector<std::string>{"(item 1)", "(item 2)", "(item 3)", "v"});
  CHECK(st.z_names == std::vector<std::string>{"(item 1)", "(item 2)", "(item 3)"});
  for (int p = 0; p < 3; ++p)
    for (int i = 0; i < 3; ++i) {
      for (int c = 0; c < 3; ++c) {
        CHECK(st.x(3 * p + i, c) == (c == i ? 1.0 : 0.0));
        CHECK(st.z(3 * p + i, c) == (c == i ? 1.0 : 0.0));
      }
    }
}

TEST_CASE("missingness covariates must be observed for every subject") {
  const Csv items = read_csv_text(kItems, "items.csv");
  const Csv subjects = read_csv_text(
      "subject_id,z1,q1\n"
      "10,0.5,1.5\n"
      "2,-0.25,NA\n"
      "1,2.0,-1.0\n",
      "subjects.csv");
  const Csv pairs = read_csv_text(kPairs, "pairs.csv");
  CHECK_THROWS_WITH_AS(build_study(items, subjects, &pairs, base_spec()),
                       doctest::Contains("these columns must always be observed"),
                       InputError);
}

TEST_CASE("an absent pair row counts as missing alpha cells") {
  const Csv items = read_csv_text(kItems, "items.csv");
  std::string pair_text = kPairs;
  const auto at = pair_text.find("2,1,3,2.13\n");
  pair_text.erase(at, 11);
  const Csv pairs = read_csv_text(pair_text, "pairs.csv");

  SUBCASE("derived delta drops the subject") {
    const Csv subjects = read_csv_text(kSubjects, "subjects.csv");
    const StudyData st = build_study(items, subjects, &pairs, base_spec());
    CHECK(st.delta[1] == 0);
    CHECK(st.delta[0] == 1);
    CHECK(st.delta[2] == 1);
  }
  SUBCASE("explicit delta=1 names the pair") {
    const Csv subjects = read_csv_text(
        "subject_id,delta,z1,q1\n"
        "10,1,0.5,1.5\n"
        "2,1,-0.25,0.25\n"
        "1,1,2.0,-1.0\n",
        "subjects.csv");
    CHECK_THROWS_WITH_AS(build_study(items, subjects, &pairs, base_spec()),
                         doctest::Contains("column 'w1', pair (1,3)"), InputError);
  }
}

TEST_CASE("file row order never changes the built study") {
  const StudyData a = base_study();

  const Csv items = read_csv_text(
      "subject_id,item_id,y,v\n"
      "1,3,9.0,0.9\n"
      "2,1,4.0,0.4\n"
      "10,2,2.0,0.2\n"
      "1,1,7.0,0.7\n"
      "10,3,3.0,0.3\n"
      "2,3,6.0,0.6\n"
      "1,2,8.0,0.8\n"
      "10,1,1.0,0.1\n"
      "2,2,5.0,0.5\n",
      "items.csv");
  const Csv subjects = read_csv_text(
      "subject_id,z1,q1\n"
      "1,2.0,-1.0\n"
      "10,0.5,1.5\n"
      "2,-0.25,0.25\n",
      "subjects.csv");
  const Csv pairs = read_csv_text(
      "subject_id,item_i,item_j,w1\n"
      "1,2,3,1.23\n"
      "2,1,3,2.13\n"
      "10,1,2,10.12\n"
      "2,2,3,2.23\n"
      "1,1,2,1.12\n"
      "10,2,3,10.23\n"
      "2,1,2,2.12\n"
      "1,1,3,1.13\n"
      "10,1,3,10.13\n",
      "pairs.csv");
  const StudyData b = build_study(items, subjects, &pairs, base_spec());

  CHECK(a.subject_ids == b.subject_ids);
  CHECK(testutil::max_abs_diff(a.y, b.y) == 0.0);
  CHECK(testutil::max_abs_diff(a.x, b.x) == 0.0);
  CHECK(testutil::max_abs_diff(a.z, b.z) == 0.0);
  CHECK(testutil::max_abs_diff(a.w, b.w) == 0.0);
  CHECK(testutil::max_abs_diff(a.q, b.q) == 0.0);
  CHECK((a.delta - b.delta).cwiseAbs().maxCoeff() == 0);
}

TEST_CASE("load_study round trips through files") {
  testutil::TempDir dir;
  const Csv items = read_csv_text(kItems, "items.csv");
  const Csv subjects = read_csv_text(kSubjects, "subjects.csv");
  const Csv pairs = read_csv_text(kPairs, "pairs.csv");
  const std::string ipath = dir.file("items.csv");
  const std::string spath = dir.file("subjects.csv");
  const std::string ppath = dir.file("pairs.csv");
  icalpha::write_csv(items, ipath);
  icalpha::write_csv(subjects, spath);
  icalpha::write_csv(pairs, ppath);

  const StudyData from_files = load_study(ipath, spath, ppath, base_spec());
  const StudyData in_memory = base_study();
  CHECK(from_files.subject_ids == in_memory.subject_ids);
  CHECK(testutil::max_abs_diff(from_files.y, in_memory.y) == 0.0);
  CHECK(testutil::max_abs_diff(from_files.x, in_memory.x) == 0.0);
  CHECK(testutil::max_abs_diff(from_files.w, in_memory.w) == 0.0);

  SUBCASE("pair table is optional when no design needs it") {
    ModelSpec spec = base_spec();
    spec.alpha_columns = {"z1"};
    const StudyData st = load_study(ipath, spath, "", spec);
    CHECK(st.w.cols() == 2);
    CHECK(st.w(0, 1) == 2.0);
  }
}

TEST_CASE("study validation catches corrupted containers") {
  StudyData st = base_study();
  SUBCASE("pair index size") {
    st.pairs.pop_back();
    CHECK_THROWS_WITH_AS(st.validate(), doctest::Contains("pair index size mismatch"),
                         InputError);
  }
  SUBCASE("pair index order") {
    std::swap(st.pairs[0], st.pairs[1]);
    CHECK_THROWS_WITH_AS(st.validate(), doctest::Contains("pair index out of order"),
                         InputError);
  }
  SUBCASE("delta range") {
    st.delta[0] = 2;
    CHECK_THROWS_WITH_AS(st.validate(), doctest::Contains("delta entries must be 0 or 1"),
                         InputError);
  }
  SUBCASE("non-finite verified design cell") {
    st.x(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(st.validate(), doctest::Contains("non-finite design cells"),
                         InputError);
  }
  SUBCASE("missing response") {
    st.y(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(st.validate(), doctest::Contains("missing response"), InputError);
  }
}
