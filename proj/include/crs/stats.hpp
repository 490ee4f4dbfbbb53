#pragma once

// Small statistics toolbox: KS test against a known CDF, Student's t
// two-sided p-values via the regularized incomplete beta function, and
// series summaries used by the ensemble reports.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace crs::stats {

inline double mean(const std::vector<double>& xs) {
    if (xs.empty()) throw std::invalid_argument("mean of empty series");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline double sample_variance(const std::vector<double>& xs) {
    if (xs.size() < 2) throw std::invalid_argument("variance needs >= 2 samples");
    double m = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / static_cast<double>(xs.size() - 1);
}

inline double coefficient_of_variation(const std::vector<double>& xs) {
    double m = mean(xs);
    if (m == 0.0) return 0.0;
    return std::sqrt(sample_variance(xs)) / std::abs(m);
}

inline double median(std::vector<double> xs) {
    if (xs.empty()) throw std::invalid_argument("median of empty series");
    std::sort(xs.begin(), xs.end());
    std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// KS statistic of `samples` against the uniform distribution after mapping
// each sample through the hypothesized CDF.
inline double ks_statistic_uniform(std::vector<double> u) {
    std::sort(u.begin(), u.end());
    double n = static_cast<double>(u.size());
    double d = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        double di = static_cast<double>(i);
        d = std::max(d, std::max((di + 1.0) / n - u[i], u[i] - di / n));
    }
    return d;
}

// Asymptotic KS survival function Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
inline double ks_pvalue(double d, std::size_t n) {
    double sn = std::sqrt(static_cast<double>(n));
    double lambda = (sn + 0.12 + 0.11 / sn) * d;
    double sum = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
        double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += sign * term;
        sign = -sign;
        if (term < 1e-12) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

// KS test of inter-event waiting times against Exponential(rate).
inline double ks_pvalue_exponential(const std::vector<double>& waits, double rate) {
    std::vector<double> u;
    u.reserve(waits.size());
    for (double w : waits) u.push_back(1.0 - std::exp(-rate * w));
    return ks_pvalue(ks_statistic_uniform(std::move(u)), waits.size());
}

namespace detail {

inline double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 200;
    constexpr double kEps = 3e-12;
    constexpr double kFpMin = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double ibeta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                   a * std::log(x) + b * std::log(1.0 - x);
    double bt = std::exp(ln_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * detail::betacf(a, b, x) / a;
    return 1.0 - bt * detail::betacf(b, a, 1.0 - x) / b;
}

// Two-sided p-value for a t statistic with df degrees of freedom.
inline double t_test_pvalue(double t, double df) {
    return ibeta(0.5 * df, 0.5, df / (df + t * t));
}

struct PairedTestResult {
    double t = 0.0;
    double p = 1.0;
    double mean_diff = 0.0;
};

// Paired two-sided t-test on matched samples.
inline PairedTestResult paired_t_test(const std::vector<double>& a,
                                      const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw std::invalid_argument("paired t-test needs matched samples, n >= 2");
    std::vector<double> diff(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
    double md = mean(diff);
    double sd = std::sqrt(sample_variance(diff));
    auto n = static_cast<double>(diff.size());
    if (sd == 0.0) return {0.0, 1.0, md};
    double t = md / (sd / std::sqrt(n));
    return {t, t_test_pvalue(t, n - 1.0), md};
}

}  // namespace crs::stats
