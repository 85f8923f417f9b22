#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hitl/fixtures.hpp"
#include "hitl/loop.hpp"
#include "hitl/rater.hpp"

namespace hitl {

/// Smooth unimodal test utility on [0,1]^9: a Gaussian bump over three
/// active dimensions, constant along the others.
struct SyntheticUtility {
    std::array<std::size_t, 3> active{0, 3, 6};
    std::array<double, 3> center{0.4, 0.6, 0.55};
    double width = 0.4;

    double operator()(const ReductionParams& p) const {
        double d2 = 0.0;
        for (std::size_t i = 0; i < active.size(); ++i) {
            const double d = p[active[i]] - center[i];
            d2 += d * d;
        }
        return std::exp(-d2 / (2.0 * width * width));
    }
};

/// Objective satisfaction: some variant's undistorted utility falls in the
/// top rating bin.
inline bool objectively_excellent(const IterationRecord& it) {
    return std::any_of(it.variants.begin(), it.variants.end(), [](const VariantRecord& v) {
        return v.utility && score_to_rating(*v.utility).value() == 5;
    });
}

namespace detail {

inline std::string logical_timestamp(std::size_t k) {
    return utc_timestamp(std::chrono::system_clock::time_point{} + std::chrono::seconds(k));
}

/// Shared driver; `evaluate` maps a proposal to a record with `utility` set.
template <class Evaluate>
EvaluationSequence drive_session(Evaluate&& evaluate, RaterModel& rater, const LoopConfig& cfg, std::string context) {
    EvaluationSequence seq;
    seq.session_id = context + "-" + std::to_string(cfg.seed);
    seq.context = std::move(context);
    seq.seed = cfg.seed;
    for (std::size_t k = 1; k <= cfg.max_iterations; ++k) {
        IterationRecord it;
        it.index = k;
        it.timestamp = logical_timestamp(k);
        std::vector<double> utilities;
        std::vector<bool> faulty;
        for (const auto& p : next_batch(seq.iterations, cfg)) {
            it.variants.push_back(evaluate(p));
            utilities.push_back(*it.variants.back().utility);
            faulty.push_back(it.variants.back().faulty);
        }
        const auto ratings = rater.rate_utilities(utilities, faulty);
        for (std::size_t i = 0; i < ratings.size(); ++i) it.variants[i].rating = ratings[i];
        seq.iterations.push_back(std::move(it));
        if (k >= 2 && objectively_excellent(seq.iterations[k - 1]) && objectively_excellent(seq.iterations[k - 2])) {
            seq.termination = SessionState::terminated_satisfied;
            return seq;
        }
    }
    seq.termination = SessionState::terminated_max_iter;
    return seq;
}

} // namespace detail

/// Full loop on a mesh: propose, decimate, score, rate.
inline EvaluationSequence run_simulated_session(const TriangleMesh& mesh, RaterModel& rater, const LoopConfig& cfg,
                                                std::string context = "mesh") {
    validate(mesh);
    auto evaluate = [&](const Proposal& p) {
        auto v = evaluate_variant(mesh, p);
        v.utility = rater.objective_utility(*v.quality, v.reduction_ratio);
        return v;
    };
    return detail::drive_session(evaluate, rater, cfg, std::move(context));
}

/// Loop against a closed-form utility; no mesh is touched.
inline EvaluationSequence run_synthetic_session(const SyntheticUtility& utility, RaterModel& rater,
                                                const LoopConfig& cfg, std::string context = "synthetic") {
    auto evaluate = [&](const Proposal& p) {
        VariantRecord v;
        v.params = p.params;
        v.slot = p.slot;
        v.reduction_ratio = target_fraction(p.params[Slot::target_ratio]);
        v.utility = utility(p.params);
        return v;
    };
    return detail::drive_session(evaluate, rater, cfg, std::move(context));
}

// --- batch experiments -------------------------------------------------

/// One rater configuration document.
struct ExperimentConfig {
    std::string name;
    std::string mode = "synthetic"; // or a fixture name
    UtilityWeights weights;
    BiasConfig bias;
    std::size_t sessions = 50;
    std::uint64_t first_seed = 0;
    std::size_t max_iterations = 11;
    SyntheticUtility utility;
};

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    c.name = j.value("name", std::string("experiment"));
    c.mode = j.value("mode", std::string("synthetic"));
    if (j.contains("weights")) {
        const auto& w = j.at("weights");
        c.weights.quality = w.value("quality", c.weights.quality);
        c.weights.reduction = w.value("reduction", c.weights.reduction);
    }
    if (j.contains("bias")) {
        const auto& b = j.at("bias");
        c.bias.anchoring = b.value("anchoring", 0.0);
        c.bias.loss_aversion = b.value("loss_aversion", 0.0);
        c.bias.diminishing_returns = b.value("diminishing_returns", 0.0);
        c.bias.transient_noise_sd = b.value("transient_noise_sd", 0.0);
        c.bias.level_offset = b.value("level_offset", 0.0);
        c.bias.pattern_noise_sd = b.value("pattern_noise_sd", 0.0);
        c.bias.detection_probability = b.value("detection_probability", 0.8);
    }
    c.sessions = j.value("sessions", c.sessions);
    c.first_seed = j.value("first_seed", c.first_seed);
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    if (j.contains("utility")) {
        const auto& u = j.at("utility");
        c.utility.active = u.value("active", c.utility.active);
        c.utility.center = u.value("center", c.utility.center);
        c.utility.width = u.value("width", c.utility.width);
    }
}

inline std::vector<EvaluationSequence> run_experiment(const ExperimentConfig& c) {
    std::vector<EvaluationSequence> out;
    const bool synthetic = c.mode == "synthetic";
    TriangleMesh mesh;
    if (!synthetic) mesh = fixtures::small(c.mode);
    for (std::size_t s = 0; s < c.sessions; ++s) {
        LoopConfig cfg;
        cfg.seed = c.first_seed + s;
        cfg.max_iterations = c.max_iterations;
        RaterModel rater(c.weights, c.bias, cfg.seed, c.mode);
        auto seq = synthetic ? run_synthetic_session(c.utility, rater, cfg, c.name)
                             : run_simulated_session(mesh, rater, cfg, c.name);
        out.push_back(std::move(seq));
    }
    return out;
}

/// Runs every `*.json` config in `dir` (sorted by file name).
inline std::vector<EvaluationSequence> run_experiment_dir(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<EvaluationSequence> all;
    for (const auto& f : files) {
        std::ifstream in(f);
        ExperimentConfig c;
        try {
            c = nlohmann::json::parse(in).get<ExperimentConfig>();
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(f.string() + ": " + e.what());
        }
        if (c.name == "experiment") c.name = f.stem().string();
        auto seqs = run_experiment(c);
        all.insert(all.end(), seqs.begin(), seqs.end());
    }
    return all;
}

} // namespace hitl
