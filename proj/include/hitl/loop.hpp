#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "hitl/acquisition.hpp"
#include "hitl/decimate.hpp"
#include "hitl/gp.hpp"
#include "hitl/sequence.hpp"
#include "hitl/ssim.hpp"

namespace hitl {

struct LoopConfig {
    KernelConfig kernel;
    std::size_t max_iterations = 11;
    std::size_t batch = 4;
    std::uint64_t seed = 0;
};

/// Every variant of every rated iteration becomes a training input; pairs
/// from each iteration's ratings are pooled across the session.
struct TrainingSet {
    std::vector<ReductionParams> inputs;
    std::vector<PreferencePair> pairs;
};

inline TrainingSet training_set(const std::vector<IterationRecord>& history) {
    TrainingSet ts;
    for (const auto& it : history) {
        if (!it.rated()) continue;
        std::vector<RatedItem> items;
        for (const auto& v : it.variants) {
            items.push_back({ts.inputs.size(), *v.rating});
            ts.inputs.push_back(v.params);
        }
        auto pairs = ratings_to_pairs(items);
        ts.pairs.insert(ts.pairs.end(), pairs.begin(), pairs.end());
    }
    return ts;
}

/// Preference model of a session's history; empty while no pair exists.
inline PreferenceModel session_model(const std::vector<IterationRecord>& history, const KernelConfig& kernel) {
    auto ts = training_set(history);
    if (ts.pairs.empty()) {
        PreferenceModel empty;
        empty.kernel = kernel;
        return empty;
    }
    return fit(ts.pairs, ts.inputs, kernel);
}

/// Parameter sets for the iteration following `history`. Until the session
/// has produced a strict preference the batch continues the space-filling
/// design.
inline std::vector<Proposal> next_batch(const std::vector<IterationRecord>& history, const LoopConfig& cfg) {
    const auto model = session_model(history, cfg.kernel);
    const std::uint64_t iteration_seed = detail::mix_seed(cfg.seed, history.size() + 1);
    if (model.empty()) return propose_batch(model, cfg.batch, cfg.seed, history.size() * cfg.batch);
    return propose_batch(model, cfg.batch, iteration_seed);
}

/// Decimates and scores one variant against the original.
inline VariantRecord evaluate_variant(const TriangleMesh& original, const Proposal& proposal,
                                      TriangleMesh* mesh_out = nullptr) {
    VariantRecord v;
    v.params = proposal.params;
    v.slot = proposal.slot;
    auto result = decimate(original, proposal.params);
    v.reduction_ratio = result.reduction_ratio;
    v.faulty = result.faulty;
    v.face_count = result.mesh.face_count();
    v.quality = perceived_quality(original, result.mesh);
    if (mesh_out) *mesh_out = std::move(result.mesh);
    return v;
}

} // namespace hitl
