#pragma once

// Objective distances between cepstral feature maps and the trailing-window
// stability statistic of a loss trace.

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "ssvc/features.hpp"

namespace ssvc {

inline constexpr double kMcdScale = 10.0 / std::numbers::ln10;
inline constexpr double kMsdEpsilon = 1e-8;

struct MetricReport {
  double mcd_db = 0.0;
  double msd_db = 0.0;
  std::size_t n_frames_compared = 0;
};

// Frame mean of (10 / ln 10) * sqrt(2 * sum_d (a_d - b_d)^2), all dimensions.
inline double mcd(const FeatureMap& a, const FeatureMap& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mcd: feature maps differ in shape");
  double total = 0.0;
  for (std::size_t t = 0; t < a.n_frames(); ++t) {
    double ss = 0.0;
    for (std::size_t d = 0; d < a.n_mcep(); ++d) {
      double diff = a.at(d, t) - b.at(d, t);
      ss += diff * diff;
    }
    total += kMcdScale * std::sqrt(2.0 * ss);
  }
  return total / static_cast<double>(a.n_frames());
}

namespace detail {
// One-sided magnitude spectrum (bins 1..T/2) of a mean-removed trajectory.
inline std::vector<double> modulation_magnitudes(const FeatureMap& m, std::size_t dim,
                                                 Eigen::FFT<double>& fft) {
  const std::size_t n = m.n_frames();
  std::vector<double> traj(n);
  double mu = 0.0;
  for (std::size_t t = 0; t < n; ++t) mu += m.at(dim, t);
  mu /= static_cast<double>(n);
  for (std::size_t t = 0; t < n; ++t) traj[t] = m.at(dim, t) - mu;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, traj);
  std::vector<double> mags;
  for (std::size_t k = 1; k <= n / 2; ++k) mags.push_back(std::abs(spec[k]));
  return mags;
}
}  // namespace detail

// Mean over cepstral dimensions and non-DC bins 1..T/2 of
// |20 log10((|A_k| + eps) / (|B_k| + eps))|, spectra taken over frames of
// the mean-removed trajectories.
inline double msd(const FeatureMap& a, const FeatureMap& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("msd: feature maps differ in shape");
  if (a.n_frames() < 4) throw std::invalid_argument("msd needs at least 4 frames");
  Eigen::FFT<double> fft;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t d = 0; d < a.n_mcep(); ++d) {
    auto ma = detail::modulation_magnitudes(a, d, fft);
    auto mb = detail::modulation_magnitudes(b, d, fft);
    for (std::size_t k = 0; k < ma.size(); ++k) {
      total += std::abs(20.0 * std::log10((ma[k] + kMsdEpsilon) / (mb[k] + kMsdEpsilon)));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

inline MetricReport evaluate_pair(const FeatureMap& converted, const FeatureMap& mcd_reference,
                                  const FeatureMap& msd_reference) {
  return {mcd(converted, mcd_reference), msd(converted, msd_reference), converted.n_frames()};
}

// Population standard deviation of the last `window` entries.
inline double loss_stability(std::span<const double> trace, std::size_t window) {
  if (window == 0) throw std::invalid_argument("stability window must be positive");
  if (window > trace.size()) {
    throw std::invalid_argument("stability window " + std::to_string(window) +
                                " exceeds trace length " + std::to_string(trace.size()));
  }
  auto tail = trace.subspan(trace.size() - window);
  double mu = 0.0;
  for (double v : tail) mu += v;
  mu /= static_cast<double>(window);
  double var = 0.0;
  for (double v : tail) var += (v - mu) * (v - mu);
  return std::sqrt(var / static_cast<double>(window));
}

}  // namespace ssvc
