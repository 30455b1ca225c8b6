#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "clothrl/util/rng.hpp"

namespace clothrl::eval {

// (cov_last - cov_first) / (cov_max - cov_first), all workspace fractions.
// 1 means fully flattened, 0 unchanged, negative worsened. A start that is
// already at the ceiling (denominator < 1e-6) scores 1 when it stays there
// and 0 otherwise. Inputs outside [0,1] or cov_max < cov_first throw.
double normalized_improvement(double cov_first, double cov_last, double cov_max);

double mean(const std::vector<double>& scores);
double sample_stddev(const std::vector<double>& scores);

// Inter-quartile mean: drop floor(n/4) scores from each end of the sorted
// vector, average the rest. n < 4 degenerates to the plain mean.
double iqm(std::vector<double> scores);

using Statistic = std::function<double(const std::vector<double>&)>;

// Percentile bootstrap over n_resamples resamples with replacement.
std::pair<double, double> bootstrap_ci(const std::vector<double>& scores, const Statistic& stat,
                                       int n_resamples, double confidence, Rng& rng);

}  // namespace clothrl::eval
