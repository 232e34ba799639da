#include "icalpha/pipeline.hpp"

#include "icalpha/errors.hpp"

namespace icalpha {

FitResult fit_study(const StudyData& study, const ModelSpec& spec,
                    const FitOptions& options) {
  study.validate();
  if (!spec.has_missingness_model && !study.all_complete())
    throw InputError(
        "study contains unverified subjects but the model spec declares no "
        "missingness model");

  FitResult result;
  result.n = study.n;
  result.missingness = fit_missingness(study.delta, study.q);
  result.weights = ipw_weights(study.delta, result.missingness, options.pi_floor);
  result.gee = fit_gee(study, spec, result.weights, options.gee);
  result.sandwich = sandwich_covariance(study, spec, result.gee,
                                        result.missingness, result.weights,
                                        options.convention);
  return result;
}

}  // namespace icalpha
