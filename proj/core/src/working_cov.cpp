#include "icalpha/working_cov.hpp"

#include <algorithm>
#include <cmath>

#include "icalpha/errors.hpp"
#include "icalpha/kahan.hpp"

namespace icalpha {

WorkingCov::InvCoeffs WorkingCov::inverse_coeffs(int m) const {
  InvCoeffs c;
  if (structure == WorkingStructure::independence || m == 1) {
    c.a = 1.0 / phi;
    c.b = 0.0;
    return c;
  }
  // ((1-rho) I + rho J)^{-1} = I/(1-rho) - rho J / ((1-rho)(1+(m-1)rho))
  c.a = 1.0 / (phi * (1.0 - rho));
  c.b = -rho / (phi * (1.0 - rho) * (1.0 + (m - 1) * rho));
  return c;
}

Eigen::MatrixXd WorkingCov::matrix(int m) const {
  Eigen::MatrixXd v = Eigen::MatrixXd::Constant(m, m, phi * rho);
  v.diagonal().setConstant(phi);
  return v;
}

WorkingCov estimate_nuisance(const Eigen::VectorXd& residuals,
                             const Eigen::VectorXd& weights, int m,
                             WorkingStructure structure) {
  const int n = static_cast<int>(weights.size());
  if (m < 1) throw FitError("working covariance block dimension must be >= 1");
  if (residuals.size() != static_cast<Eigen::Index>(n) * m)
    throw FitError("residual length does not match subject count");

  KahanScalar sum_w, sum_sq, sum_cross;
  int used = 0;
  for (int p = 0; p < n; ++p) {
    const double w = weights[p];
    if (w <= 0.0) continue;
    ++used;
    sum_w.add(w);
    double block_sum = 0.0, block_sq = 0.0;
    for (int i = 0; i < m; ++i) {
      const double r = residuals[static_cast<Eigen::Index>(p) * m + i];
      block_sum += r;
      block_sq += r * r;
    }
    sum_sq.add(w * block_sq);
    // sum over i<j of r_i r_j
    sum_cross.add(w * 0.5 * (block_sum * block_sum - block_sq));
  }
  if (used == 0 || sum_w.value() <= 0.0)
    throw FitError("zero effective sample in nuisance estimation");

  WorkingCov cov;
  cov.structure = structure;
  cov.phi = std::max(sum_sq.value() / (sum_w.value() * m), 1e-12);
  if (structure == WorkingStructure::exchangeable && m > 1) {
    const double pairs_per = 0.5 * m * (m - 1);
    double rho = sum_cross.value() / (sum_w.value() * pairs_per) / cov.phi;
    const double lo = -1.0 / (m - 1) + 1e-6;
    const double hi = 1.0 - 1e-6;
    cov.rho = std::min(std::max(rho, lo), hi);
  }
  return cov;
}

}  // namespace icalpha
