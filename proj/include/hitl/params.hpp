#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string_view>

#include "hitl/error.hpp"

namespace hitl {

/// Named slots of the reduction control vector. Every slot lives in [0,1].
enum class Slot : std::size_t {
    target_ratio = 0,
    boundary_weight,
    feature_angle,
    placement_policy_blend,
    normal_flip_penalty,
    aspect_ratio_penalty,
    edge_length_regularizer,
    quadric_area_weighting,
    seam_preservation_weight,
};

inline constexpr std::size_t kParamCount = 9;

inline constexpr std::array<std::string_view, kParamCount> kSlotNames{
    "target_ratio",         "boundary_weight",         "feature_angle",
    "placement_policy_blend", "normal_flip_penalty",   "aspect_ratio_penalty",
    "edge_length_regularizer", "quadric_area_weighting", "seam_preservation_weight",
};

/// A point of the unit hypercube [0,1]^9 that drives one decimation run.
class ReductionParams {
public:
    using Values = std::array<double, kParamCount>;

    ReductionParams() { values_.fill(0.5); }

    explicit ReductionParams(const Values& values) : values_(values) {
        for (double v : values_)
            if (!(v >= 0.0 && v <= 1.0)) throw Error("reduction parameter outside [0,1]");
    }

    static ReductionParams defaults() { return ReductionParams{}; }

    static ReductionParams from_span(std::span<const double> values) {
        if (values.size() != kParamCount) throw Error("reduction params need exactly 9 values");
        Values v{};
        std::copy(values.begin(), values.end(), v.begin());
        return ReductionParams{v};
    }

    double operator[](Slot s) const { return values_[static_cast<std::size_t>(s)]; }
    double operator[](std::size_t i) const { return values_[i]; }

    ReductionParams with(Slot s, double v) const {
        Values copy = values_;
        copy[static_cast<std::size_t>(s)] = v;
        return ReductionParams{copy};
    }

    const Values& values() const { return values_; }

    bool operator==(const ReductionParams&) const = default;

private:
    Values values_{};
};

/// Fraction of faces the decimator removes for a given target_ratio slot.
/// Identity map: slot value 0.75 removes 75% of the faces.
inline double target_fraction(double target_ratio_slot) { return std::clamp(target_ratio_slot, 0.0, 1.0); }

inline double linf_distance(const ReductionParams& a, const ReductionParams& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < kParamCount; ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

inline double euclidean_distance(const ReductionParams& a, const ReductionParams& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < kParamCount; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

} // namespace hitl
