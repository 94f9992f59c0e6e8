#include "evs/student_t.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/digamma.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace evs {

namespace {

constexpr double kScaleFloor = 1e-12;
constexpr double kDofMin = 0.05;
constexpr double kDofMax = 1000.0;

}  // namespace

double StudentTModel::pdf(double x) const {
  const double z = (x - location) / scale;
  const double log_norm = std::lgamma(0.5 * (dof + 1.0)) -
                          std::lgamma(0.5 * dof) -
                          0.5 * std::log(M_PI * dof) - std::log(scale);
  return std::exp(log_norm -
                  0.5 * (dof + 1.0) * std::log1p(z * z / dof));
}

double StudentTModel::cdf(double x) const {
  boost::math::students_t_distribution<double> dist(dof);
  return boost::math::cdf(dist, (x - location) / scale);
}

double StudentTModel::log_likelihood(std::span<const double> samples) const {
  const double log_norm = std::lgamma(0.5 * (dof + 1.0)) -
                          std::lgamma(0.5 * dof) -
                          0.5 * std::log(M_PI * dof) - std::log(scale);
  double ll = 0.0;
  for (double x : samples) {
    const double z = (x - location) / scale;
    ll += log_norm - 0.5 * (dof + 1.0) * std::log1p(z * z / dof);
  }
  return ll;
}

StudentTModel fit_student_t(std::span<const double> residuals) {
  const size_t n = residuals.size();
  if (n < 100) {
    throw std::invalid_argument("fit_student_t: need at least 100 samples");
  }

  std::vector<double> sorted(residuals.begin(), residuals.end());
  std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
  const double median = sorted[n / 2];

  double mean = std::accumulate(residuals.begin(), residuals.end(), 0.0) /
                static_cast<double>(n);
  double var = 0.0;
  for (double x : residuals) var += (x - mean) * (x - mean);
  var /= static_cast<double>(n);

  StudentTModel m;
  if (var < kScaleFloor * kScaleFloor) {
    m.location = mean;
    m.scale = kScaleFloor;
    m.dof = kDofMax;
    return m;
  }

  m.location = median;
  m.scale = std::sqrt(var * 0.8);  // rough init, EM corrects it
  m.dof = 5.0;

  std::vector<double> w(n);
  double ll_prev = m.log_likelihood(residuals);
  for (int iter = 0; iter < 500; ++iter) {
    // E-step.
    for (size_t i = 0; i < n; ++i) {
      const double z = (residuals[i] - m.location) / m.scale;
      w[i] = (m.dof + 1.0) / (m.dof + z * z);
    }
    // M-step for location and scale.
    double sw = 0.0, swx = 0.0;
    for (size_t i = 0; i < n; ++i) {
      sw += w[i];
      swx += w[i] * residuals[i];
    }
    m.location = swx / sw;
    double s2 = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double d = residuals[i] - m.location;
      s2 += w[i] * d * d;
    }
    s2 /= static_cast<double>(n);
    m.scale = std::max(std::sqrt(s2), kScaleFloor);

    // M-step for dof: root of the standard EM dof equation, bisected.
    double mean_logw_minus_w = 0.0;
    for (size_t i = 0; i < n; ++i) {
      mean_logw_minus_w += std::log(w[i]) - w[i];
    }
    mean_logw_minus_w /= static_cast<double>(n);
    const double nu_old = m.dof;
    auto phi = [&](double nu) {
      return -boost::math::digamma(0.5 * nu) + std::log(0.5 * nu) + 1.0 +
             mean_logw_minus_w +
             boost::math::digamma(0.5 * (nu_old + 1.0)) -
             std::log(0.5 * (nu_old + 1.0));
    };
    double lo = kDofMin, hi = kDofMax;
    if (phi(lo) < 0.0) {
      m.dof = lo;
    } else if (phi(hi) > 0.0) {
      m.dof = hi;
    } else {
      for (int b = 0; b < 80; ++b) {
        const double mid = 0.5 * (lo + hi);
        (phi(mid) > 0.0 ? lo : hi) = mid;
      }
      m.dof = 0.5 * (lo + hi);
    }

    const double ll = m.log_likelihood(residuals);
    if (std::abs(ll - ll_prev) < 1e-8) break;
    ll_prev = ll;
  }
  return m;
}

double ks_statistic(std::span<const double> samples,
                    const StudentTModel& model) {
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double ks = 0.0;
  for (size_t i = 0; i < sorted.size(); ++i) {
    const double F = model.cdf(sorted[i]);
    ks = std::max(ks, std::abs(F - static_cast<double>(i) / n));
    ks = std::max(ks, std::abs(static_cast<double>(i + 1) / n - F));
  }
  return ks;
}

}  // namespace evs
