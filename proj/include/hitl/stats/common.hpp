#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/QR>

#include "hitl/error.hpp"

namespace hitl::stats {

/// How a p-value is obtained. `automatic` uses exact enumeration below the
/// per-test size cutoff and the normal approximation above it.
enum class PMethod { automatic, exact, asymptotic };

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double two_sided_normal_p(double z) { return std::min(1.0, std::erfc(std::abs(z) / std::numbers::sqrt2)); }

inline int sign(double v) { return (v > 0.0) - (v < 0.0); }

/// Midranks (1-based; ties share their average rank).
inline std::vector<double> midranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) r[order[k]] = rank;
        i = j;
    }
    return r;
}

/// Sizes of the groups of equal values (groups of 1 included).
inline std::vector<std::size_t> tie_groups(std::span<const double> v) {
    std::vector<double> s(v.begin(), v.end());
    std::sort(s.begin(), s.end());
    std::vector<std::size_t> groups;
    for (std::size_t i = 0; i < s.size();) {
        std::size_t j = i;
        while (j < s.size() && s[j] == s[i]) ++j;
        groups.push_back(j - i);
        i = j;
    }
    return groups;
}

inline double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean(std::span<const double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Population variance.
inline double variance(std::span<const double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size());
}

/// Ordinary least-squares polynomial fit; coefficients in increasing degree.
inline std::vector<double> polyfit(std::span<const double> x, std::span<const double> y, int degree) {
    if (x.size() != y.size()) throw Error("polyfit: size mismatch");
    if (x.size() < static_cast<std::size_t>(degree + 1)) throw DegenerateInput("polyfit: too few points");
    Eigen::MatrixXd a(static_cast<Eigen::Index>(x.size()), degree + 1);
    Eigen::VectorXd b(static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) {
        double p = 1.0;
        for (int d = 0; d <= degree; ++d, p *= x[i]) a(static_cast<Eigen::Index>(i), d) = p;
        b(static_cast<Eigen::Index>(i)) = y[i];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < degree + 1) throw DegenerateInput("polyfit: design matrix is rank deficient");
    const Eigen::VectorXd c = qr.solve(b);
    return {c.data(), c.data() + c.size()};
}

} // namespace hitl::stats
