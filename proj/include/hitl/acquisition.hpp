#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hitl/gp.hpp"

namespace hitl {

/// Role of a proposal inside its batch.
enum class BatchSlot { space_filling, exploit, thompson_ei, explore };

inline std::string_view slot_name(BatchSlot s) {
    switch (s) {
    case BatchSlot::space_filling: return "space_filling";
    case BatchSlot::exploit: return "exploit";
    case BatchSlot::thompson_ei: return "thompson_ei";
    case BatchSlot::explore: return "explore";
    }
    return "?";
}

inline BatchSlot slot_from_name(std::string_view s) {
    if (s == "space_filling") return BatchSlot::space_filling;
    if (s == "exploit") return BatchSlot::exploit;
    if (s == "thompson_ei") return BatchSlot::thompson_ei;
    if (s == "explore") return BatchSlot::explore;
    throw Error("unknown batch slot '" + std::string(s) + "'");
}

struct Proposal {
    ReductionParams params;
    BatchSlot slot;
};

/// Halton sequence with random digit permutations (0 kept fixed) and a
/// random Cranley-Patterson shift per dimension.
class ScrambledHalton {
public:
    explicit ScrambledHalton(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (std::size_t d = 0; d < kParamCount; ++d) {
            auto& perm = perms_[d];
            perm.resize(kPrimes[d]);
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin() + 1, perm.end(), rng);
            shift_[d] = u(rng);
        }
    }

    /// Point number `index` (0-based; the sequence's index 0 is skipped).
    ReductionParams point(std::size_t index) const {
        ReductionParams::Values v{};
        for (std::size_t d = 0; d < kParamCount; ++d) {
            const unsigned base = kPrimes[d];
            double inv = 1.0 / base, x = 0.0;
            for (std::size_t i = index + 1; i > 0; i /= base, inv /= base) x += perms_[d][i % base] * inv;
            x += shift_[d];
            v[d] = x - std::floor(x);
        }
        return ReductionParams{v};
    }

private:
    static constexpr std::array<unsigned, kParamCount> kPrimes{2, 3, 5, 7, 11, 13, 17, 19, 23};
    std::array<std::vector<unsigned>, kParamCount> perms_;
    std::array<double, kParamCount> shift_{};
};

struct AcquisitionOptions {
    std::size_t random_starts = 256;
    std::size_t refined_starts = 3;
    double initial_step = 0.1;
    double min_step = 1e-4;
    double duplicate_distance = 1e-3;
    int max_redraws = 16;
    std::size_t local_candidates = 64; // Thompson candidates jittered around the exploit point
    double local_sd = 0.08;
};

namespace detail {

inline ReductionParams uniform_point(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ReductionParams::Values v{};
    for (auto& x : v) x = u(rng);
    return ReductionParams{v};
}

// Compass search over coordinates, clamped to the unit cube.
template <class Objective>
ReductionParams refine(const ReductionParams& start, Objective& objective, const AcquisitionOptions& opt) {
    auto x = start.values();
    double best = objective(ReductionParams{x});
    for (double step = opt.initial_step; step >= opt.min_step;) {
        bool improved = false;
        for (std::size_t d = 0; d < kParamCount; ++d)
            for (double dir : {1.0, -1.0}) {
                auto y = x;
                y[d] = std::clamp(y[d] + dir * step, 0.0, 1.0);
                if (y[d] == x[d]) continue;
                const double v = objective(ReductionParams{y});
                if (v > best) {
                    best = v;
                    x = y;
                    improved = true;
                }
            }
        if (!improved) step *= 0.5;
    }
    return ReductionParams{x};
}

template <class Objective>
ReductionParams maximize(Objective objective, std::mt19937_64& rng, std::span<const ReductionParams> seeds,
                         const AcquisitionOptions& opt) {
    struct Candidate {
        double value;
        std::size_t order;
        ReductionParams x;
    };
    std::vector<Candidate> candidates;
    candidates.reserve(opt.random_starts + seeds.size());
    for (std::size_t i = 0; i < opt.random_starts; ++i) {
        auto x = uniform_point(rng);
        candidates.push_back({objective(x), candidates.size(), x});
    }
    for (const auto& x : seeds) candidates.push_back({objective(x), candidates.size(), x});
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        return a.value != b.value ? a.value > b.value : a.order < b.order;
    });

    ReductionParams best = candidates.front().x;
    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < std::min(opt.refined_starts, candidates.size()); ++i) {
        auto x = refine(candidates[i].x, objective, opt);
        const double v = objective(x);
        if (v > best_value) {
            best_value = v;
            best = x;
        }
    }
    return best;
}

/// Candidate maximizing the sampled improvement g(x) - g* of one joint
/// posterior draw g over the training inputs, uniform points and a cloud
/// around `anchor`; g* is the draw's best value at the training inputs.
inline ReductionParams thompson_improvement(const PreferenceModel& model, const ReductionParams& anchor,
                                            std::mt19937_64& rng, const AcquisitionOptions& opt) {
    std::vector<ReductionParams> cand(model.inputs.begin(), model.inputs.end());
    for (std::size_t i = 0; i < opt.random_starts; ++i) cand.push_back(uniform_point(rng));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < opt.local_candidates; ++i) {
        auto v = anchor.values();
        for (auto& x : v) x = std::clamp(x + opt.local_sd * normal(rng), 0.0, 1.0);
        cand.push_back(ReductionParams{v});
    }

    const auto n = static_cast<Eigen::Index>(model.inputs.size());
    const auto m = static_cast<Eigen::Index>(cand.size());
    Eigen::MatrixXd kc(n, m);
    for (Eigen::Index c = 0; c < m; ++c) kc.col(c) = cross_covariance(model, cand[static_cast<std::size_t>(c)]);
    Eigen::MatrixXd cov = gram(cand, model.kernel) - kc.transpose() * model.predict_gain * kc;
    cov = 0.5 * (cov + cov.transpose()).eval();
    Eigen::MatrixXd lower;
    robust_cholesky(cov, 1e-8, 1e-2, lower);
    Eigen::VectorXd z(m);
    for (Eigen::Index i = 0; i < m; ++i) z(i) = normal(rng);
    const Eigen::VectorXd draw = kc.transpose() * model.alpha + lower * z;

    const double incumbent = draw.head(n).maxCoeff();
    Eigen::Index best = 0;
    (draw.array() - incumbent).maxCoeff(&best);
    return cand[static_cast<std::size_t>(best)];
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace detail

/// Next batch of parameter sets. An empty model yields space-filling points
/// (numbers `offset`.. of a scrambled Halton sequence). Otherwise the batch is:
/// posterior-mean maximizer, maximizers of the improvement of independent
/// Thompson draws, and finally the posterior-variance maximizer.
inline std::vector<Proposal> propose_batch(const PreferenceModel& model, std::size_t batch, std::uint64_t seed,
                                           std::size_t offset = 0, const AcquisitionOptions& opt = {}) {
    std::vector<Proposal> out;
    auto is_duplicate = [&](const ReductionParams& p) {
        return std::any_of(out.begin(), out.end(),
                           [&](const Proposal& q) { return linf_distance(p, q.params) <= opt.duplicate_distance; });
    };

    if (model.empty()) {
        const ScrambledHalton seq(seed);
        for (std::size_t i = offset; out.size() < batch; ++i) {
            auto p = seq.point(i);
            if (!is_duplicate(p)) out.push_back({p, BatchSlot::space_filling});
        }
        return out;
    }

    std::vector<BatchSlot> roles;
    for (std::size_t i = 0; i < batch; ++i) {
        if (i == 0) roles.push_back(BatchSlot::exploit);
        else if (i + 1 == batch) roles.push_back(BatchSlot::explore);
        else roles.push_back(BatchSlot::thompson_ei);
    }

    for (std::size_t slot = 0; slot < batch; ++slot) {
        ReductionParams chosen;
        bool placed = false;
        for (int attempt = 0; attempt <= opt.max_redraws && !placed; ++attempt) {
            std::mt19937_64 rng(detail::mix_seed(seed, slot * 1000 + static_cast<std::uint64_t>(attempt)));
            switch (roles[slot]) {
            case BatchSlot::exploit:
                chosen = detail::maximize([&](const ReductionParams& x) { return predict(model, x).mean; }, rng,
                                          model.inputs, opt);
                break;
            case BatchSlot::explore:
                chosen = detail::maximize([&](const ReductionParams& x) { return predict(model, x).variance; }, rng,
                                          {}, opt);
                break;
            default:
                chosen = detail::thompson_improvement(model, out.front().params, rng, opt);
                break;
            }
            placed = !is_duplicate(chosen);
        }
        if (!placed) {
            std::mt19937_64 rng(detail::mix_seed(seed, 0xfa11bac0ULL + slot));
            do chosen = detail::uniform_point(rng);
            while (is_duplicate(chosen));
        }
        out.push_back({chosen, roles[slot]});
    }
    return out;
}

} // namespace hitl
