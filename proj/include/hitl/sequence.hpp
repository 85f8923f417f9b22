#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hitl/acquisition.hpp"
#include "hitl/preference.hpp"
#include "hitl/ssim.hpp"

namespace hitl {

inline constexpr int kSchemaVersion = 1;

enum class SessionState { computing, awaiting_ratings, terminated_satisfied, terminated_reset, terminated_max_iter };

inline std::string_view state_name(SessionState s) {
    switch (s) {
    case SessionState::computing: return "computing";
    case SessionState::awaiting_ratings: return "awaiting_ratings";
    case SessionState::terminated_satisfied: return "terminated_satisfied";
    case SessionState::terminated_reset: return "terminated_reset";
    case SessionState::terminated_max_iter: return "terminated_max_iter";
    }
    return "?";
}

inline SessionState state_from_name(std::string_view s) {
    for (auto st : {SessionState::computing, SessionState::awaiting_ratings, SessionState::terminated_satisfied,
                    SessionState::terminated_reset, SessionState::terminated_max_iter})
        if (state_name(st) == s) return st;
    throw SchemaError("unknown session state '" + std::string(s) + "'");
}

inline bool is_terminal(SessionState s) {
    return s == SessionState::terminated_satisfied || s == SessionState::terminated_reset ||
           s == SessionState::terminated_max_iter;
}

struct VariantRecord {
    ReductionParams params;
    BatchSlot slot = BatchSlot::space_filling;
    double reduction_ratio = 0.0;
    bool faulty = false;
    std::size_t face_count = 0;
    std::optional<QualityScore> quality;
    std::optional<Rating> rating;
    std::optional<double> utility; // objective utility, simulated sessions only

    bool operator==(const VariantRecord&) const = default;
};

struct IterationRecord {
    std::size_t index = 1; // 1-based
    std::string timestamp;
    std::vector<VariantRecord> variants;

    bool rated() const {
        return !variants.empty() && std::all_of(variants.begin(), variants.end(), [](const auto& v) { return v.rating.has_value(); });
    }
    bool operator==(const IterationRecord&) const = default;
};

/// One session from upload to termination.
struct EvaluationSequence {
    std::string session_id;
    SessionState termination = SessionState::computing;
    std::string context; // model / fixture identifier
    std::uint64_t seed = 0;
    std::vector<IterationRecord> iterations;

    bool operator==(const EvaluationSequence&) const = default;
};

inline std::string utc_timestamp(std::chrono::system_clock::time_point t = std::chrono::system_clock::now()) {
    const std::time_t tt = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// --- JSON --------------------------------------------------------------

inline void to_json(nlohmann::json& j, const QualityScore& q) {
    j = nlohmann::json{{"per_view", q.per_view}, {"mean", q.mean}};
}
inline void from_json(const nlohmann::json& j, QualityScore& q) {
    q.per_view = j.at("per_view").get<std::array<double, 5>>();
    q.mean = j.at("mean").get<double>();
}

inline void to_json(nlohmann::json& j, const VariantRecord& v) {
    j = nlohmann::json{{"params", v.params.values()},
                       {"slot", slot_name(v.slot)},
                       {"reduction_ratio", v.reduction_ratio},
                       {"faulty", v.faulty},
                       {"face_count", v.face_count},
                       {"quality", v.quality ? nlohmann::json(*v.quality) : nlohmann::json(nullptr)},
                       {"rating", v.rating ? nlohmann::json(v.rating->value()) : nlohmann::json(nullptr)}};
    if (v.utility) j["utility"] = *v.utility;
}
inline void from_json(const nlohmann::json& j, VariantRecord& v) {
    v.params = ReductionParams{j.at("params").get<ReductionParams::Values>()};
    v.slot = slot_from_name(j.at("slot").get<std::string>());
    v.reduction_ratio = j.at("reduction_ratio").get<double>();
    v.faulty = j.at("faulty").get<bool>();
    v.face_count = j.at("face_count").get<std::size_t>();
    v.quality = j.at("quality").is_null() ? std::nullopt : std::optional(j.at("quality").get<QualityScore>());
    v.rating = j.at("rating").is_null() ? std::nullopt : std::optional(Rating{j.at("rating").get<int>()});
    v.utility = j.contains("utility") ? std::optional(j.at("utility").get<double>()) : std::nullopt;
}

inline void to_json(nlohmann::json& j, const IterationRecord& r) {
    j = nlohmann::json{{"index", r.index}, {"timestamp", r.timestamp}, {"variants", r.variants}};
}
inline void from_json(const nlohmann::json& j, IterationRecord& r) {
    r.index = j.at("index").get<std::size_t>();
    r.timestamp = j.at("timestamp").get<std::string>();
    r.variants = j.at("variants").get<std::vector<VariantRecord>>();
}

inline void to_json(nlohmann::json& j, const EvaluationSequence& s) {
    j = nlohmann::json{{"schema_version", kSchemaVersion},
                       {"session_id", s.session_id},
                       {"termination", state_name(s.termination)},
                       {"context", s.context},
                       {"seed", s.seed},
                       {"iterations", s.iterations}};
}
inline void from_json(const nlohmann::json& j, EvaluationSequence& s) {
    if (!j.contains("schema_version") || j.at("schema_version") != kSchemaVersion)
        throw SchemaError("unsupported or missing schema_version");
    s.session_id = j.at("session_id").get<std::string>();
    s.termination = state_from_name(j.at("termination").get<std::string>());
    s.context = j.at("context").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.iterations = j.at("iterations").get<std::vector<IterationRecord>>();
}

/// Checks the structural invariants of a stored sequence.
inline void check_sequence(const EvaluationSequence& s, std::size_t max_iterations = SIZE_MAX) {
    if (s.iterations.size() > max_iterations) throw SchemaError("sequence longer than max_iterations");
    for (std::size_t i = 0; i < s.iterations.size(); ++i)
        if (s.iterations[i].index != i + 1) throw SchemaError("iteration indices are not contiguous from 1");
}

inline EvaluationSequence parse_sequence(std::string_view line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed JSON: ") + e.what());
    }
    try {
        auto s = j.get<EvaluationSequence>();
        check_sequence(s);
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("sequence does not match schema: ") + e.what());
    } catch (const SchemaError&) {
        throw;
    } catch (const Error& e) {
        throw SchemaError(std::string("invalid field value: ") + e.what());
    }
}

inline std::string to_jsonl_line(const EvaluationSequence& s) { return nlohmann::json(s).dump() + "\n"; }

/// Reads a JSON-lines export; blank lines are ignored.
inline std::vector<EvaluationSequence> read_sequences(std::istream& in) {
    std::vector<EvaluationSequence> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(parse_sequence(line));
        } catch (const SchemaError& e) {
            throw SchemaError("line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

inline void write_sequences(std::ostream& out, const std::vector<EvaluationSequence>& seqs) {
    for (const auto& s : seqs) out << to_jsonl_line(s);
}

} // namespace hitl
