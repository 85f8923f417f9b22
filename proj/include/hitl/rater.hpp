#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hitl/preference.hpp"
#include "hitl/ssim.hpp"

namespace hitl {

struct UtilityWeights {
    double quality = 0.5;
    double reduction = 0.5;
};

/// Judgment distortions applied on top of the objective utility. All zero
/// except `detection_probability` gives an ideal rater.
struct BiasConfig {
    double anchoring = 0.0;            // alpha in [0,1]: reference-point mixing with best seen
    double loss_aversion = 0.0;        // lambda >= 0: penalty per unit below best seen
    double diminishing_returns = 0.0;  // gamma in [0,1]: u <- u^(1-gamma) on u > 0
    double transient_noise_sd = 0.0;   // occasional per-judgment noise
    double level_offset = 0.0;         // rater-wide shift
    double pattern_noise_sd = 0.0;     // rater x context interaction
    double detection_probability = 0.8; // chance a faulty variant is noticed and skipped
};

/// What the rater sees of one variant.
struct VariantView {
    QualityScore quality;
    double reduction_ratio = 0.0;
    bool faulty = false;
};

struct RaterMemory {
    std::optional<double> best_seen;
    std::vector<Rating> last_ratings;
};

/// Maps a clamped score in [0,1] onto ratings 1..5 with five equal bins.
inline Rating score_to_rating(double score) {
    const double s = std::clamp(score, 0.0, 1.0);
    return Rating{1 + std::min(4, static_cast<int>(std::floor(5.0 * s)))};
}

/// Simulated artist: objective utility plus anchoring, loss aversion,
/// diminishing returns and three noise components. Stateful per session.
class RaterModel {
public:
    RaterModel(UtilityWeights weights = {}, BiasConfig bias = {}, std::uint64_t seed = 0, std::string context = {})
        : weights_(weights), bias_(bias), seed_(seed), context_(std::move(context)), rng_(seed) {
        check();
        pattern_ = pattern_offset(seed_, context_);
    }

    const UtilityWeights& weights() const { return weights_; }
    const BiasConfig& bias() const { return bias_; }
    const RaterMemory& memory() const { return memory_; }
    std::uint64_t seed() const { return seed_; }
    const std::string& context() const { return context_; }

    /// Weighted quality/reduction trade-off before any distortion.
    double objective_utility(const QualityScore& quality, double reduction_ratio) const {
        return weights_.quality * quality.mean + weights_.reduction * reduction_ratio;
    }

    double base_utility(const QualityScore& quality, double reduction_ratio) const {
        return diminish(objective_utility(quality, reduction_ratio));
    }

    double diminish(double u) const {
        if (u <= 0.0 || bias_.diminishing_returns == 0.0) return u;
        return std::pow(u, 1.0 - bias_.diminishing_returns);
    }

    std::vector<Rating> rate_batch(std::span<const VariantView> variants) {
        std::vector<double> utilities;
        std::vector<bool> faulty;
        for (const auto& v : variants) {
            utilities.push_back(objective_utility(v.quality, v.reduction_ratio));
            faulty.push_back(v.faulty);
        }
        return rate_utilities(utilities, faulty);
    }

    /// Rates variants with known objective utilities; diminishing returns
    /// is applied here.
    std::vector<Rating> rate_utilities(std::span<const double> utilities, const std::vector<bool>& faulty = {}) {
        std::uniform_real_distribution<double> uniform(0.0, 1.0);
        std::normal_distribution<double> normal(0.0, 1.0);
        const double best = memory_.best_seen.value_or(0.0);
        std::vector<Rating> ratings;
        std::optional<double> batch_best;
        for (std::size_t i = 0; i < utilities.size(); ++i) {
            if (!faulty.empty() && faulty[i] && uniform(rng_) < bias_.detection_probability) {
                ratings.emplace_back(0);
                continue;
            }
            const double u = diminish(utilities[i]);
            double s = (1.0 - bias_.anchoring) * u + bias_.anchoring * (u - best) -
                       bias_.loss_aversion * std::max(0.0, best - u) + bias_.level_offset +
                       pattern_ * bias_.pattern_noise_sd;
            if (bias_.transient_noise_sd > 0.0) s += bias_.transient_noise_sd * normal(rng_);
            ratings.push_back(score_to_rating(s));
            batch_best = std::max(batch_best.value_or(u), u);
        }
        if (batch_best) memory_.best_seen = std::max(memory_.best_seen.value_or(*batch_best), *batch_best);
        memory_.last_ratings = ratings;
        return ratings;
    }

    /// Stable standard-normal offset for a (rater seed, context) pair.
    static double pattern_offset(std::uint64_t seed, std::string_view context) {
        std::uint64_t h = 1469598103934665603ULL ^ seed;
        for (unsigned char c : context) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        std::mt19937_64 gen(h);
        return std::normal_distribution<double>(0.0, 1.0)(gen);
    }

private:
    void check() const {
        if (weights_.quality < 0.0 || weights_.reduction < 0.0) throw Error("utility weights must be non-negative");
        auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
        if (!unit(bias_.anchoring)) throw Error("anchoring must be in [0,1]");
        if (!unit(bias_.diminishing_returns)) throw Error("diminishing returns must be in [0,1]");
        if (!unit(bias_.detection_probability)) throw Error("detection probability must be in [0,1]");
        if (bias_.loss_aversion < 0.0) throw Error("loss aversion must be non-negative");
        if (bias_.transient_noise_sd < 0.0 || bias_.pattern_noise_sd < 0.0) throw Error("noise sd must be non-negative");
        if (!std::isfinite(bias_.level_offset)) throw Error("level offset must be finite");
    }

    UtilityWeights weights_;
    BiasConfig bias_;
    std::uint64_t seed_;
    std::string context_;
    std::mt19937_64 rng_;
    double pattern_ = 0.0;
    RaterMemory memory_;
};

} // namespace hitl
