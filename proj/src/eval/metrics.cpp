#include "clothrl/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace clothrl::eval {

double normalized_improvement(double cov_first, double cov_last, double cov_max) {
    for (double v : {cov_first, cov_last, cov_max}) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("coverage outside [0,1]");
    }
    if (cov_max < cov_first) throw std::invalid_argument("cov_max below cov_first");
    const double denom = cov_max - cov_first;
    if (denom < 1e-6) return cov_last >= cov_max - 1e-6 ? 1.0 : 0.0;
    return (cov_last - cov_first) / denom;
}

double mean(const std::vector<double>& scores) {
    if (scores.empty()) throw std::invalid_argument("mean of empty vector");
    double s = 0.0;
    for (double v : scores) s += v;
    return s / double(scores.size());
}

double sample_stddev(const std::vector<double>& scores) {
    if (scores.size() < 2) return 0.0;
    const double m = mean(scores);
    double s = 0.0;
    for (double v : scores) s += (v - m) * (v - m);
    return std::sqrt(s / double(scores.size() - 1));
}

double iqm(std::vector<double> scores) {
    if (scores.empty()) throw std::invalid_argument("iqm of empty vector");
    std::sort(scores.begin(), scores.end());
    const std::size_t trim = scores.size() / 4;
    double s = 0.0;
    for (std::size_t i = trim; i < scores.size() - trim; ++i) s += scores[i];
    return s / double(scores.size() - 2 * trim);
}

namespace {

double quantile(const std::vector<double>& sorted, double q) {
    const double pos = q * double(sorted.size() - 1);
    const std::size_t lo = std::size_t(pos);
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = pos - double(lo);
    return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

}  // namespace

std::pair<double, double> bootstrap_ci(const std::vector<double>& scores, const Statistic& stat,
                                       int n_resamples, double confidence, Rng& rng) {
    if (scores.empty()) throw std::invalid_argument("bootstrap of empty vector");
    if (n_resamples < 100) throw std::invalid_argument("need at least 100 resamples");
    if (!(confidence > 0.0 && confidence < 1.0)) throw std::invalid_argument("bad confidence");
    std::vector<double> stats(n_resamples);
    std::vector<double> resample(scores.size());
    for (int r = 0; r < n_resamples; ++r) {
        for (std::size_t i = 0; i < scores.size(); ++i)
            resample[i] = scores[rng.uniform_index(scores.size())];
        stats[r] = stat(resample);
    }
    std::sort(stats.begin(), stats.end());
    const double alpha = 1.0 - confidence;
    return {quantile(stats, alpha / 2.0), quantile(stats, 1.0 - alpha / 2.0)};
}

}  // namespace clothrl::eval
