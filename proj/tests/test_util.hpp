#pragma once

// Shared test fixtures: temporary directories, direct-constructed studies
// with known structure, and matching model specs.

#include <unistd.h>

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "icalpha/gee.hpp"
#include "icalpha/rng.hpp"
#include "icalpha/stats.hpp"
#include "icalpha/study.hpp"

namespace testutil {

// RAII temporary directory under the system temp root.
class TempDir {
 public:
  TempDir() {
    static std::uint64_t counter = 0;
    const auto base = std::filesystem::temp_directory_path();
    do {
      path_ = base / ("icalpha_test_" + std::to_string(::getpid()) + "_" +
                      std::to_string(counter++));
    } while (std::filesystem::exists(path_));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

// Complete-data study with identity-link-friendly scales: mean design
// (intercept, x1), intercept-only variance and reliability designs,
// intercept-only (unused) missingness design.  y is Gaussian around the
// linear mean with independent unit errors.  Deterministic in `seed`.
inline icalpha::StudyData flat_study(int n, std::uint64_t seed) {
  using namespace icalpha;
  Rng rng(seed);
  StudyData st;
  st.n = n;
  st.k = 3;
  st.pairs = build_pair_index(st.k);
  const int np = st.npairs();

  st.y.resize(n, st.k);
  st.x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n) * st.k, 2);
  st.z = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(n) * st.k, 1);
  st.w = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(n) * np, 1);
  st.q = Eigen::MatrixXd::Ones(n, 1);
  st.delta = Eigen::VectorXi::Ones(n);

  for (int p = 0; p < n; ++p) {
    const double x1 = rng.uniform(-1.0, 1.0);
    for (int i = 0; i < st.k; ++i) {
      const Eigen::Index row = static_cast<Eigen::Index>(p) * st.k + i;
      st.x(row, 0) = 1.0;
      st.x(row, 1) = x1;
      const double mu = 0.3 + 0.5 * x1;
      st.y(p, i) = mu + rng.normal();
    }
  }

  st.subject_ids.reserve(n);
  for (int p = 0; p < n; ++p) st.subject_ids.push_back("s" + std::to_string(p + 1));
  st.x_names = {"(intercept)", "x1"};
  st.z_names = {"(intercept)"};
  st.w_names = {"(intercept)"};
  st.q_names = {"(intercept)"};
  return st;
}

// Spec matching flat_study: identity links, shared intercept, covariate
// variance mode, independence working blocks everywhere, no missingness
// model.
inline icalpha::ModelSpec flat_spec() {
  icalpha::ModelSpec spec;
  spec.mean_link = icalpha::MeanLink::identity;
  spec.intercept_mode = icalpha::InterceptMode::shared;
  spec.mean_columns = {"x1"};
  spec.var_link = icalpha::VarLink::identity_positive;
  spec.variance_mode = icalpha::VarianceMode::covariate;
  spec.work_mean = icalpha::WorkingStructure::independence;
  spec.work_var = icalpha::WorkingStructure::independence;
  spec.work_alpha = icalpha::WorkingStructure::independence;
  return spec;
}

// Study with nontrivial covariates in every design: mean design (intercept,
// x1 subject-level, x2 item-level), variance design (intercept, z1
// item-level), reliability design (intercept, w1 subject-level, w2
// pair-level), missingness design (intercept, q1).  Responses are
// exchangeably correlated Gaussians.  When `with_missing` is set, delta is
// drawn from a logistic model in q1 and unverified subjects get zero-filled
// x/z/w rows, exactly as the CSV loader produces them.
inline icalpha::StudyData rich_study(int n, std::uint64_t seed, bool with_missing) {
  using namespace icalpha;
  Rng rng(seed);
  StudyData st;
  st.n = n;
  st.k = 3;
  st.pairs = build_pair_index(st.k);
  const int np = st.npairs();

  st.y.resize(n, st.k);
  st.x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n) * st.k, 3);
  st.z = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n) * st.k, 2);
  st.w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n) * np, 3);
  st.q = Eigen::MatrixXd::Zero(n, 2);
  st.delta = Eigen::VectorXi::Ones(n);

  for (int p = 0; p < n; ++p) {
    const double x1 = rng.uniform(-1.0, 1.0);
    const double w1 = rng.uniform(0.0, 1.0);
    const double q1 = rng.normal();
    st.q(p, 0) = 1.0;
    st.q(p, 1) = q1;

    const double shared = rng.normal();
    for (int i = 0; i < st.k; ++i) {
      const Eigen::Index row = static_cast<Eigen::Index>(p) * st.k + i;
      st.x(row, 0) = 1.0;
      st.x(row, 1) = x1;
      st.x(row, 2) = rng.uniform(-1.0, 1.0);
      st.z(row, 0) = 1.0;
      st.z(row, 1) = rng.uniform(0.0, 1.0);
      const double mu = 0.2 + 0.4 * x1 + 0.3 * st.x(row, 2);
      st.y(p, i) = mu + 0.6 * shared + 0.8 * rng.normal();
    }
    for (int c = 0; c < np; ++c) {
      const Eigen::Index row = static_cast<Eigen::Index>(p) * np + c;
      st.w(row, 0) = 1.0;
      st.w(row, 1) = w1;
      st.w(row, 2) = rng.uniform(0.0, 1.0);
    }
    if (with_missing && !rng.bernoulli(inv_logit(1.5 + 0.7 * q1))) {
      st.delta[p] = 0;
      st.x.middleRows(static_cast<Eigen::Index>(p) * st.k, st.k).setZero();
      st.z.middleRows(static_cast<Eigen::Index>(p) * st.k, st.k).setZero();
      st.w.middleRows(static_cast<Eigen::Index>(p) * np, np).setZero();
    }
  }

  st.subject_ids.reserve(n);
  for (int p = 0; p < n; ++p) st.subject_ids.push_back("s" + std::to_string(p + 1));
  st.x_names = {"(intercept)", "x1", "x2"};
  st.z_names = {"(intercept)", "z1"};
  st.w_names = {"(intercept)", "w1", "w2"};
  st.q_names = {"(intercept)", "q1"};
  return st;
}

// Spec matching rich_study with configurable links and working structures.
inline icalpha::ModelSpec rich_spec(
    icalpha::MeanLink mean_link = icalpha::MeanLink::identity,
    icalpha::VarLink var_link = icalpha::VarLink::identity_positive,
    icalpha::WorkingStructure work_mean = icalpha::WorkingStructure::exchangeable,
    icalpha::WorkingStructure work_var = icalpha::WorkingStructure::independence,
    icalpha::WorkingStructure work_alpha = icalpha::WorkingStructure::independence,
    bool with_missing = false) {
  icalpha::ModelSpec spec;
  spec.mean_link = mean_link;
  spec.mean_columns = {"x1", "x2"};
  spec.var_link = var_link;
  spec.var_columns = {"z1"};
  spec.alpha_columns = {"w1", "w2"};
  spec.work_mean = work_mean;
  spec.work_var = work_var;
  spec.work_alpha = work_alpha;
  spec.has_missingness_model = with_missing;
  if (with_missing) spec.miss_columns = {"q1"};
  return spec;
}

// Reorders the subjects of a study by the given permutation (new index ->
// old index), moving whole per-subject blocks.
inline icalpha::StudyData permute_subjects(const icalpha::StudyData& st,
                                           const std::vector<int>& order) {
  icalpha::StudyData out = st;
  const int k = st.k;
  const int np = st.npairs();
  for (int p = 0; p < st.n; ++p) {
    const int src = order[static_cast<std::size_t>(p)];
    out.y.row(p) = st.y.row(src);
    out.q.row(p) = st.q.row(src);
    out.delta[p] = st.delta[src];
    out.subject_ids[static_cast<std::size_t>(p)] =
        st.subject_ids[static_cast<std::size_t>(src)];
    out.x.middleRows(static_cast<Eigen::Index>(p) * k, k) =
        st.x.middleRows(static_cast<Eigen::Index>(src) * k, k);
    out.z.middleRows(static_cast<Eigen::Index>(p) * k, k) =
        st.z.middleRows(static_cast<Eigen::Index>(src) * k, k);
    out.w.middleRows(static_cast<Eigen::Index>(p) * np, np) =
        st.w.middleRows(static_cast<Eigen::Index>(src) * np, np);
  }
  return out;
}

// Max absolute difference, for exactness assertions on vectors/matrices.
template <typename A, typename B>
double max_abs_diff(const A& a, const B& b) {
  return (a - b).template lpNorm<Eigen::Infinity>();
}

}  // namespace testutil
