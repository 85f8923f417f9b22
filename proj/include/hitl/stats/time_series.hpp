#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string_view>

#include "hitl/stats/common.hpp"

namespace hitl::stats {

enum class PBand { below_01, below_05, below_10, at_or_above_10 };

inline std::string_view band_name(PBand b) {
    switch (b) {
    case PBand::below_01: return "<.01";
    case PBand::below_05: return "<.05";
    case PBand::below_10: return "<.10";
    case PBand::at_or_above_10: return ">=.10";
    }
    return "?";
}

struct AdfResult {
    double statistic = 0.0; // t-ratio of the lagged-level coefficient
    double phi = 0.0;
    std::size_t observations = 0;
    std::array<double, 3> critical{}; // 1%, 5%, 10%
    PBand band = PBand::at_or_above_10;
    bool stationary_at_05 = false;
};

/// MacKinnon (2010) response-surface critical values for the unit-root
/// t-test with a constant and no trend, one variable.
inline std::array<double, 3> adf_critical_values(std::size_t observations) {
    static constexpr double kSurface[3][4] = {
        {-3.43035, -6.5393, -16.786, -79.433},
        {-2.86154, -2.8903, -4.234, -40.040},
        {-2.56677, -1.5384, -2.809, 0.0},
    };
    const double t = static_cast<double>(observations);
    std::array<double, 3> cv{};
    for (int i = 0; i < 3; ++i)
        cv[i] = kSurface[i][0] + kSurface[i][1] / t + kSurface[i][2] / (t * t) + kSurface[i][3] / (t * t * t);
    return cv;
}

/// Dickey-Fuller regression dy_t = a + phi * y_{t-1} + e with no lagged
/// differences. Throws DegenerateInput when the lagged level is constant.
inline AdfResult adf_test(std::span<const double> series) {
    if (series.size() < 4) throw Error("adf_test: need at least 4 observations");
    const std::size_t m = series.size() - 1;
    double mx = 0.0, md = 0.0;
    for (std::size_t t = 1; t <= m; ++t) {
        mx += series[t - 1];
        md += series[t] - series[t - 1];
    }
    mx /= static_cast<double>(m);
    md /= static_cast<double>(m);
    double sxx = 0.0, sxd = 0.0, scale = 0.0;
    for (std::size_t t = 1; t <= m; ++t) {
        const double x = series[t - 1] - mx;
        sxx += x * x;
        sxd += x * (series[t] - series[t - 1] - md);
        scale = std::max(scale, std::abs(series[t - 1]));
    }
    if (sxx <= 1e-24 * std::max(1.0, scale * scale) * static_cast<double>(m))
        throw DegenerateInput("adf_test: lagged series is constant, regression is singular");

    AdfResult r;
    r.observations = m;
    r.phi = sxd / sxx;
    const double alpha = md - r.phi * mx;
    double ssr = 0.0, sdd = 0.0;
    for (std::size_t t = 1; t <= m; ++t) {
        const double d = series[t] - series[t - 1];
        const double e = d - alpha - r.phi * series[t - 1];
        ssr += e * e;
        sdd += d * d;
    }
    const double s2 = ssr / static_cast<double>(m - 2);
    if (s2 <= 1e-28 * std::max(1.0, sdd)) {
        // exact fit: the sign of phi decides
        r.statistic = r.phi == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), r.phi);
    } else {
        r.statistic = r.phi / std::sqrt(s2 / sxx);
    }
    r.critical = adf_critical_values(m);
    if (r.statistic < r.critical[0]) r.band = PBand::below_01;
    else if (r.statistic < r.critical[1]) r.band = PBand::below_05;
    else if (r.statistic < r.critical[2]) r.band = PBand::below_10;
    else r.band = PBand::at_or_above_10;
    r.stationary_at_05 = r.statistic < r.critical[1];
    return r;
}

enum class Trend { increasing, decreasing, none };

inline std::string_view trend_name(Trend t) {
    switch (t) {
    case Trend::increasing: return "increasing";
    case Trend::decreasing: return "decreasing";
    case Trend::none: return "none";
    }
    return "?";
}

struct MannKendallResult {
    long long s = 0;
    double variance = 0.0;
    double z = 0.0;
    double p = 1.0;
    Trend trend = Trend::none;
};

/// Mann-Kendall monotone trend test: S = sum_{i<j} sign(y_j - y_i), tie-
/// corrected variance, continuity-corrected z, two-sided p.
inline MannKendallResult mann_kendall(std::span<const double> y, double alpha = 0.05) {
    if (y.size() < 4) throw Error("mann_kendall: need at least 4 observations");
    MannKendallResult r;
    for (std::size_t i = 0; i < y.size(); ++i)
        for (std::size_t j = i + 1; j < y.size(); ++j) r.s += sign(y[j] - y[i]);
    const double n = static_cast<double>(y.size());
    double ties = 0.0;
    for (auto g : tie_groups(y)) {
        const double t = static_cast<double>(g);
        ties += t * (t - 1) * (2 * t + 5);
    }
    r.variance = (n * (n - 1) * (2 * n + 5) - ties) / 18.0;
    if (r.variance <= 0.0 || r.s == 0) return r;
    const double sd = std::sqrt(r.variance);
    r.z = r.s > 0 ? (static_cast<double>(r.s) - 1.0) / sd : (static_cast<double>(r.s) + 1.0) / sd;
    r.p = two_sided_normal_p(r.z);
    if (r.p < alpha) r.trend = r.s > 0 ? Trend::increasing : Trend::decreasing;
    return r;
}

} // namespace hitl::stats
