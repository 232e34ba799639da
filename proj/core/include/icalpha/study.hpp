#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "icalpha/pairs.hpp"

namespace icalpha {

enum class MeanLink { identity, log, logit };
enum class VarLink { identity_positive, log };
enum class WorkingStructure { independence, exchangeable };
enum class InterceptMode { shared, per_item };
enum class VarianceMode { covariate, per_item_constant };
enum class OmegaConvention { inverse, literal };

std::string to_string(MeanLink link);
std::string to_string(VarLink link);
std::string to_string(WorkingStructure s);
std::string to_string(InterceptMode m);
std::string to_string(VarianceMode m);
std::string to_string(OmegaConvention c);

/// Link and design choices for the three estimating-equation sets plus the
/// verification (missingness) model.
struct ModelSpec {
  MeanLink mean_link = MeanLink::identity;
  InterceptMode intercept_mode = InterceptMode::shared;
  std::vector<std::string> mean_columns;

  VarLink var_link = VarLink::identity_positive;
  VarianceMode variance_mode = VarianceMode::covariate;
  std::vector<std::string> var_columns;

  std::vector<std::string> alpha_columns;
  bool pooled_alpha = false;

  /// Empty columns + has_missingness_model=false means no verification
  /// model: data must then be complete.
  bool has_missingness_model = false;
  std::vector<std::string> miss_columns;

  WorkingStructure work_mean = WorkingStructure::exchangeable;
  WorkingStructure work_var = WorkingStructure::independence;
  WorkingStructure work_alpha = WorkingStructure::independence;
};

/// Study container. Designs are fully expanded (intercept columns included);
/// row layout: mean/variance designs use row p*k + (i-1), the alpha design
/// uses row p*npairs + pair_index with pairs in build_pair_index order.
/// Immutable by convention after construction; safe to share across threads.
struct StudyData {
  int n = 0;
  int k = 0;
  Eigen::MatrixXd y;  // n x k, complete
  Eigen::MatrixXd x;  // (n*k) x dim_beta
  Eigen::MatrixXd z;  // (n*k) x dim_omega
  Eigen::MatrixXd w;  // (n*npairs) x dim_theta
  Eigen::MatrixXd q;  // n x dim_gamma, always observed
  Eigen::VectorXi delta;  // n, 1 = fully verified covariates

  std::vector<ItemPair> pairs;  // 1-based (i, j), i < j
  std::vector<std::string> subject_ids;
  std::vector<std::string> x_names, z_names, w_names, q_names;

  int npairs() const { return static_cast<int>(pairs.size()); }
  int n_complete() const { return static_cast<int>(delta.cast<long>().sum()); }
  bool all_complete() const { return n_complete() == n; }

  /// Throws InputError when an invariant is violated (dimension mismatch,
  /// non-finite verified design rows, missing responses).
  void validate() const;
};

}  // namespace icalpha
