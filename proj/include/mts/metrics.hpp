#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>

namespace mts {

inline double mean_of(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean_of: empty sample");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline double sample_sd(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

inline double standard_error(std::span<const double> xs) {
  return sample_sd(xs) / std::sqrt(static_cast<double>(xs.size()));
}

// Percentage improvement in average loss relative to the sample estimator,
// computed on squared errors from paired repetitions. 100 means the shrinkage
// estimator has no error, 0 no improvement, negative worse than the sample.
inline double prial(std::span<const double> sq_err_sample, std::span<const double> sq_err_shrunk) {
  if (sq_err_sample.empty() || sq_err_shrunk.empty())
    throw std::invalid_argument("prial: empty error list");
  if (sq_err_sample.size() != sq_err_shrunk.size())
    throw std::invalid_argument("prial: repetition counts differ");
  const double ms = mean_of(sq_err_sample);
  if (ms == 0.0) throw std::invalid_argument("prial: zero mean sample error");
  return 100.0 * (ms - mean_of(sq_err_shrunk)) / ms;
}

inline double accuracy_gain(double acc_shrunk, double acc_sample) {
  if (acc_shrunk < 0.0 || acc_shrunk > 1.0 || acc_sample < 0.0 || acc_sample > 1.0)
    throw std::invalid_argument("accuracy_gain: accuracies must lie in [0,1]");
  return acc_shrunk - acc_sample;
}

}  // namespace mts
