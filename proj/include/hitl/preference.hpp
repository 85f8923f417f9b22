#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "hitl/error.hpp"
#include "hitl/params.hpp"

namespace hitl {

/// Artist rating: 0 = skip (faulty geometry), 1 = terrible ... 5 = excellent.
class Rating {
public:
    Rating() = default;
    explicit Rating(int value) : value_(value) {
        if (value < 0 || value > 5) throw Error("rating must be in 0..5");
    }
    int value() const { return value_; }
    bool skipped() const { return value_ == 0; }
    auto operator<=>(const Rating&) const = default;

private:
    int value_ = 0;
};

/// `preferred` beat `less_preferred`. Ids index the model's training inputs.
struct PreferencePair {
    std::size_t preferred;
    std::size_t less_preferred;
    bool operator==(const PreferencePair&) const = default;
};

struct RatedItem {
    std::size_t id;
    Rating rating;
};

/// One pair i > j for every two entries with rating(i) > rating(j) >= 1.
/// Skips (0) and ties contribute nothing. Pairs come out ordered by the
/// position of the preferred entry, then the less preferred one.
inline std::vector<PreferencePair> ratings_to_pairs(std::span<const RatedItem> items) {
    std::vector<PreferencePair> pairs;
    for (const auto& a : items) {
        if (a.rating.skipped()) continue;
        for (const auto& b : items) {
            if (b.rating.skipped()) continue;
            if (a.rating > b.rating) {
                if (a.id == b.id) throw Error("conflicting ratings for one id");
                pairs.push_back({a.id, b.id});
            }
        }
    }
    return pairs;
}

struct KernelConfig {
    double lengthscale = 2.0;
    double smoothness = 2.5; // only nu = 5/2 is implemented
    double signal_variance = 1.0;
    double noise = 0.1;

    void check() const {
        if (!(lengthscale > 0.0)) throw Error("kernel lengthscale must be positive");
        if (!(signal_variance > 0.0)) throw Error("kernel signal variance must be positive");
        if (!(noise > 0.0)) throw Error("likelihood noise must be positive");
        if (smoothness != 2.5) throw Error("only the Matern 5/2 kernel is supported");
    }

    bool operator==(const KernelConfig&) const = default;
};

inline double matern52(double r, const KernelConfig& k) {
    const double s = std::sqrt(5.0) * r / k.lengthscale;
    return k.signal_variance * (1.0 + s + s * s / 3.0) * std::exp(-s);
}

inline double matern52(const ReductionParams& a, const ReductionParams& b, const KernelConfig& k) {
    return matern52(euclidean_distance(a, b), k);
}

inline Eigen::MatrixXd gram(std::span<const ReductionParams> xs, const KernelConfig& k) {
    const auto n = static_cast<Eigen::Index>(xs.size());
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        g(i, i) = k.signal_variance;
        for (Eigen::Index j = 0; j < i; ++j) g(i, j) = g(j, i) = matern52(xs[i], xs[j], k);
    }
    return g;
}

} // namespace hitl
