#pragma once

#include <span>

namespace evs {

/// Location-scale Student's t model of matching residuals.
struct StudentTModel {
  double location = 0.0;
  double scale = 1.0;
  double dof = 5.0;

  double pdf(double x) const;
  double cdf(double x) const;
  double log_likelihood(std::span<const double> samples) const;
};

/// Maximum-likelihood fit by expectation-maximization; the degrees of
/// freedom are updated each iteration by one-dimensional root finding.
/// Requires at least 100 samples. All-equal samples yield that location with
/// a floored scale and a capped dof.
StudentTModel fit_student_t(std::span<const double> residuals);

/// Kolmogorov-Smirnov statistic of samples against the model CDF.
double ks_statistic(std::span<const double> samples,
                    const StudentTModel& model);

}  // namespace evs
