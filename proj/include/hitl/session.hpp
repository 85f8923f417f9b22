#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "hitl/loop.hpp"
#include "hitl/mesh.hpp"
#include "hitl/sequence.hpp"
#include "hitl/worker_pool.hpp"

namespace hitl {

inline void to_json(nlohmann::json& j, const KernelConfig& k) {
    j = nlohmann::json{{"lengthscale", k.lengthscale}, {"signal_variance", k.signal_variance}, {"noise", k.noise}};
}
inline void from_json(const nlohmann::json& j, KernelConfig& k) {
    k.lengthscale = j.value("lengthscale", k.lengthscale);
    k.signal_variance = j.value("signal_variance", k.signal_variance);
    k.noise = j.value("noise", k.noise);
}

struct ServiceConfig {
    std::filesystem::path data_dir; // empty: nothing is persisted
    std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    std::size_t max_iterations = 11;
    std::size_t max_upload_bytes = 32u << 20;
};

/// Per-session options supplied at upload.
struct SessionConfig {
    std::optional<std::uint64_t> seed;
    std::string context = "upload";
    std::optional<std::size_t> max_iterations;
    KernelConfig kernel;
};

inline SessionConfig session_config_from_json(const nlohmann::json& j) {
    SessionConfig c;
    try {
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        c.context = j.value("context", c.context);
        if (j.contains("max_iterations")) c.max_iterations = j.at("max_iterations").get<std::size_t>();
        if (j.contains("kernel")) c.kernel = j.at("kernel").get<KernelConfig>();
        c.kernel.check();
    } catch (const nlohmann::json::exception& e) {
        throw ServiceError(ServiceError::Kind::bad_request, std::string("invalid session config: ") + e.what());
    } catch (const Error& e) {
        throw ServiceError(ServiceError::Kind::bad_request, std::string("invalid session config: ") + e.what());
    }
    if (c.max_iterations && *c.max_iterations == 0)
        throw ServiceError(ServiceError::Kind::bad_request, "max_iterations must be positive");
    return c;
}

struct SessionInfo {
    std::string id;
    SessionState state = SessionState::computing;
    std::size_t iterations = 0; // records computed so far
    std::size_t max_iterations = 0;
    std::size_t pairs = 0;
    std::uint64_t seed = 0;
    std::string context;
    std::string error;
};

inline void to_json(nlohmann::json& j, const SessionInfo& s) {
    j = nlohmann::json{{"schema_version", kSchemaVersion},
                       {"session_id", s.id},
                       {"state", state_name(s.state)},
                       {"iterations", s.iterations},
                       {"max_iterations", s.max_iterations},
                       {"pairs", s.pairs},
                       {"seed", s.seed},
                       {"context", s.context}};
    if (!s.error.empty()) j["error"] = s.error;
}

/// One computed iteration with its meshes as OBJ text.
struct IterationPayload {
    std::string session_id;
    IterationRecord record;
    std::string original_obj;
    std::vector<std::string> variant_obj;
};

/// Append-only JSON-lines file; every line is flushed to disk before
/// `append` returns.
class EventLog {
public:
    explicit EventLog(const std::filesystem::path& file) {
        file_ = std::fopen(file.c_str(), "a");
        if (!file_) throw Error("cannot open event log " + file.string());
    }
    EventLog(const EventLog&) = delete;
    EventLog& operator=(const EventLog&) = delete;
    ~EventLog() { std::fclose(file_); }

    void append(const nlohmann::json& event) {
        const std::string line = event.dump() + "\n";
        std::lock_guard lock(mutex_);
        if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() || std::fflush(file_) != 0)
            throw Error("event log write failed");
        ::fsync(::fileno(file_));
    }

    /// Events in file order. A torn final line (crash mid-write) is dropped.
    static std::vector<nlohmann::json> read(const std::filesystem::path& file) {
        std::vector<nlohmann::json> events;
        std::ifstream in(file);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                events.push_back(nlohmann::json::parse(line));
            } catch (const nlohmann::json::exception&) {
                if (in.peek() == std::char_traits<char>::eof()) break;
                throw SchemaError("corrupt event log line");
            }
        }
        return events;
    }

private:
    std::FILE* file_;
    std::mutex mutex_;
};

namespace detail {

struct Session {
    std::mutex mutex;
    std::condition_variable cv;
    EvaluationSequence seq; // seq.termination doubles as the live state
    std::shared_ptr<const TriangleMesh> original;
    std::vector<std::vector<TriangleMesh>> meshes; // per computed iteration
    KernelConfig kernel;
    std::size_t max_iterations = 11;
    std::uint64_t generation = 0; // bumped to orphan in-flight jobs
    std::string error;

    SessionState state() const { return seq.termination; }
};

struct PendingBatch {
    std::vector<Proposal> proposals;
    std::vector<VariantRecord> variants;
    std::vector<TriangleMesh> meshes;
    std::atomic<std::size_t> remaining{0};
    std::mutex error_mutex;
    std::string error;
};

inline void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << text;
        if (!out) throw Error("cannot write " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline std::vector<Rating> to_ratings(const std::vector<int>& values, std::size_t expected) {
    if (values.size() != expected)
        throw ServiceError(ServiceError::Kind::bad_request,
                           "expected " + std::to_string(expected) + " ratings, got " + std::to_string(values.size()));
    std::vector<Rating> out;
    for (int v : values) {
        if (v < 0 || v > 5) throw ServiceError(ServiceError::Kind::bad_request, "ratings must be integers in 0..5");
        out.emplace_back(v);
    }
    return out;
}

} // namespace detail

/// Sessions, their computation and their persistence. Calls on one session
/// are serialized by that session's mutex; decimation runs on the pool.
class SessionStore {
public:
    explicit SessionStore(ServiceConfig cfg = {}) : cfg_(std::move(cfg)) {
        if (!cfg_.data_dir.empty()) {
            std::filesystem::create_directories(cfg_.data_dir / "meshes");
            replay();
            log_ = std::make_unique<EventLog>(cfg_.data_dir / "events.jsonl");
        }
        pool_ = std::make_unique<WorkerPool>(cfg_.workers);
        for (const auto& id : order_) {
            auto s = sessions_.at(id);
            std::lock_guard lock(s->mutex);
            if (s->state() == SessionState::computing) schedule(s, s->generation);
        }
    }

    ~SessionStore() { pool_->stop(); }

    SessionStore(const SessionStore&) = delete;
    SessionStore& operator=(const SessionStore&) = delete;

    const ServiceConfig& config() const { return cfg_; }

    SessionInfo create_session(std::string_view obj, const SessionConfig& sc = {}) {
        if (obj.size() > cfg_.max_upload_bytes)
            throw ServiceError(ServiceError::Kind::too_large, "upload exceeds " + std::to_string(cfg_.max_upload_bytes) +
                                                                  " bytes");
        auto mesh = std::make_shared<TriangleMesh>(load_obj_string(obj));
        validate(*mesh);
        if (mesh->face_count() < 4) throw MeshError("mesh needs at least 4 faces");

        auto s = std::make_shared<detail::Session>();
        s->original = mesh;
        s->kernel = sc.kernel;
        s->max_iterations = sc.max_iterations.value_or(cfg_.max_iterations);
        s->seq.context = sc.context;
        std::lock_guard store_lock(mutex_);
        s->seq.session_id = fresh_id();
        s->seq.seed = sc.seed.value_or(id_rng_());
        s->seq.termination = SessionState::computing;

        if (log_) {
            const auto dir = mesh_dir(s->seq.session_id);
            std::filesystem::create_directories(dir);
            detail::write_file_atomic(dir / "original.obj", to_obj_string(*mesh));
            log_->append({{"event", "created"},
                          {"session", s->seq.session_id},
                          {"seed", s->seq.seed},
                          {"context", s->seq.context},
                          {"kernel", s->kernel},
                          {"max_iterations", s->max_iterations}});
        }
        sessions_[s->seq.session_id] = s;
        order_.push_back(s->seq.session_id);
        std::lock_guard lock(s->mutex);
        schedule(s, s->generation);
        return info(*s);
    }

    SessionInfo get_session(const std::string& id) const {
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        return info(*s);
    }

    /// Rates the newest iteration. `iteration`, when given, makes the call
    /// idempotent: resubmitting identical ratings for an already rated
    /// iteration succeeds without side effects.
    SessionInfo submit_ratings(const std::string& id, std::optional<std::size_t> iteration,
                               const std::vector<int>& values) {
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        auto& its = s->seq.iterations;
        if (iteration && *iteration >= 1 && *iteration <= its.size() && its[*iteration - 1].rated()) {
            const auto ratings = detail::to_ratings(values, its[*iteration - 1].variants.size());
            for (std::size_t i = 0; i < ratings.size(); ++i)
                if (*its[*iteration - 1].variants[i].rating != ratings[i])
                    throw ServiceError(ServiceError::Kind::conflict, "iteration " + std::to_string(*iteration) +
                                                                         " was already rated differently");
            return info(*s);
        }
        if (is_terminal(s->state())) throw ServiceError(ServiceError::Kind::conflict, "session is terminated");
        if (s->state() != SessionState::awaiting_ratings)
            throw ServiceError(ServiceError::Kind::conflict, "no iteration is awaiting ratings");
        if (iteration && *iteration != its.size())
            throw ServiceError(ServiceError::Kind::conflict,
                               "iteration " + std::to_string(*iteration) + " is not the one awaiting ratings");
        const auto ratings = detail::to_ratings(values, its.back().variants.size());
        apply_ratings(*s, ratings);
        if (its.size() >= s->max_iterations) {
            finish(*s, SessionState::terminated_max_iter);
        } else {
            s->seq.termination = SessionState::computing;
            ++s->generation;
            schedule(s, s->generation);
        }
        return info(*s);
    }

    /// Ends a session. Optional final ratings are recorded for the newest
    /// iteration without computing another one; work in flight is dropped.
    SessionInfo terminate(const std::string& id, SessionState reason, const std::optional<std::vector<int>>& values = {}) {
        if (reason != SessionState::terminated_satisfied && reason != SessionState::terminated_reset)
            throw ServiceError(ServiceError::Kind::bad_request, "reason must be satisfied or reset");
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        if (is_terminal(s->state())) throw ServiceError(ServiceError::Kind::conflict, "session is already terminated");
        if (values) {
            if (s->state() != SessionState::awaiting_ratings)
                throw ServiceError(ServiceError::Kind::conflict, "no iteration is awaiting ratings");
            apply_ratings(*s, detail::to_ratings(*values, s->seq.iterations.back().variants.size()));
        }
        ++s->generation;
        finish(*s, reason);
        return info(*s);
    }

    IterationPayload get_iteration(const std::string& id, std::size_t index) const {
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        const auto& its = s->seq.iterations;
        if (index >= 1 && index <= its.size()) {
            IterationPayload p{s->seq.session_id, its[index - 1], to_obj_string(*s->original), {}};
            for (const auto& m : s->meshes[index - 1]) p.variant_obj.push_back(to_obj_string(m));
            return p;
        }
        if (index == its.size() + 1 && s->state() == SessionState::computing)
            throw ServiceError(ServiceError::Kind::not_ready, "iteration " + std::to_string(index) + " is being computed");
        throw ServiceError(ServiceError::Kind::not_found, "no iteration " + std::to_string(index));
    }

    /// Blocks while the session is computing; false on timeout.
    bool wait_ready(const std::string& id, std::chrono::milliseconds timeout = std::chrono::seconds(60)) const {
        auto s = find(id);
        std::unique_lock lock(s->mutex);
        return s->cv.wait_for(lock, timeout, [&] { return s->state() != SessionState::computing; });
    }

    /// Sessions in creation order.
    std::vector<EvaluationSequence> export_sequences(bool terminated_only = false) const {
        std::vector<std::shared_ptr<detail::Session>> list;
        {
            std::lock_guard lock(mutex_);
            for (const auto& id : order_) list.push_back(sessions_.at(id));
        }
        std::vector<EvaluationSequence> out;
        for (const auto& s : list) {
            std::lock_guard lock(s->mutex);
            if (!terminated_only || is_terminal(s->state())) out.push_back(s->seq);
        }
        return out;
    }

private:
    std::shared_ptr<detail::Session> find(const std::string& id) const {
        std::lock_guard lock(mutex_);
        auto it = sessions_.find(id);
        if (it == sessions_.end()) throw ServiceError(ServiceError::Kind::not_found, "unknown session '" + id + "'");
        return it->second;
    }

    static SessionInfo info(const detail::Session& s) {
        SessionInfo i;
        i.id = s.seq.session_id;
        i.state = s.state();
        i.iterations = s.seq.iterations.size();
        i.max_iterations = s.max_iterations;
        i.pairs = training_set(s.seq.iterations).pairs.size();
        i.seed = s.seq.seed;
        i.context = s.seq.context;
        i.error = s.error;
        return i;
    }

    std::string fresh_id() {
        for (;;) {
            char buf[17];
            std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(id_rng_()));
            if (!sessions_.count(buf)) return buf;
        }
    }

    std::filesystem::path mesh_dir(const std::string& id) const { return cfg_.data_dir / "meshes" / id; }

    static std::string mesh_file(std::size_t iteration, std::size_t variant) {
        return std::to_string(iteration) + "-" + std::to_string(variant) + ".obj";
    }

    // --- state changes (caller holds the session mutex) -----------------

    void apply_ratings(detail::Session& s, const std::vector<Rating>& ratings) {
        auto& last = s.seq.iterations.back();
        for (std::size_t i = 0; i < ratings.size(); ++i) last.variants[i].rating = ratings[i];
        if (log_) {
            std::vector<int> raw;
            for (auto r : ratings) raw.push_back(r.value());
            log_->append({{"event", "ratings"}, {"session", s.seq.session_id}, {"index", last.index}, {"ratings", raw}});
        }
    }

    void finish(detail::Session& s, SessionState state) {
        s.seq.termination = state;
        if (log_) log_->append({{"event", "terminated"}, {"session", s.seq.session_id}, {"sequence", s.seq}});
        s.cv.notify_all();
    }

    void schedule(const std::shared_ptr<detail::Session>& s, std::uint64_t generation) {
        pool_->submit([this, s, generation] { run_batch(s, generation); });
    }

    void run_batch(const std::shared_ptr<detail::Session>& s, std::uint64_t generation) {
        std::vector<IterationRecord> history;
        LoopConfig cfg;
        {
            std::lock_guard lock(s->mutex);
            if (s->generation != generation) return;
            history = s->seq.iterations;
            cfg.kernel = s->kernel;
            cfg.max_iterations = s->max_iterations;
            cfg.seed = s->seq.seed;
        }
        auto pending = std::make_shared<detail::PendingBatch>();
        try {
            pending->proposals = next_batch(history, cfg);
        } catch (const std::exception& e) {
            fail(s, generation, e.what());
            return;
        }
        const std::size_t n = pending->proposals.size();
        pending->variants.resize(n);
        pending->meshes.resize(n);
        pending->remaining = n;
        for (std::size_t i = 0; i < n; ++i) {
            pool_->submit([this, s, generation, pending, i] {
                try {
                    pending->variants[i] = evaluate_variant(*s->original, pending->proposals[i], &pending->meshes[i]);
                } catch (const std::exception& e) {
                    std::lock_guard lock(pending->error_mutex);
                    pending->error = e.what();
                }
                if (pending->remaining.fetch_sub(1) == 1) complete(s, generation, *pending);
            });
        }
    }

    void complete(const std::shared_ptr<detail::Session>& s, std::uint64_t generation, detail::PendingBatch& batch) {
        if (!batch.error.empty()) {
            fail(s, generation, batch.error);
            return;
        }
        std::lock_guard lock(s->mutex);
        if (s->generation != generation) return;
        IterationRecord record;
        record.index = s->seq.iterations.size() + 1;
        record.timestamp = utc_timestamp();
        record.variants = std::move(batch.variants);
        if (log_) {
            for (std::size_t v = 0; v < batch.meshes.size(); ++v)
                detail::write_file_atomic(mesh_dir(s->seq.session_id) / mesh_file(record.index, v),
                                          to_obj_string(batch.meshes[v]));
            log_->append({{"event", "iteration"}, {"session", s->seq.session_id}, {"record", record}});
        }
        s->seq.iterations.push_back(std::move(record));
        s->meshes.push_back(std::move(batch.meshes));
        s->seq.termination = SessionState::awaiting_ratings;
        s->cv.notify_all();
    }

    void fail(const std::shared_ptr<detail::Session>& s, std::uint64_t generation, const std::string& what) {
        std::lock_guard lock(s->mutex);
        if (s->generation != generation) return;
        s->error = what;
        ++s->generation;
        finish(*s, SessionState::terminated_reset);
    }

    // --- recovery --------------------------------------------------------

    void replay() {
        const auto file = cfg_.data_dir / "events.jsonl";
        if (!std::filesystem::exists(file)) return;
        for (const auto& e : EventLog::read(file)) {
            const auto kind = e.at("event").get<std::string>();
            const auto id = e.at("session").get<std::string>();
            if (kind == "created") {
                auto s = std::make_shared<detail::Session>();
                s->seq.session_id = id;
                s->seq.seed = e.at("seed").get<std::uint64_t>();
                s->seq.context = e.at("context").get<std::string>();
                s->seq.termination = SessionState::computing;
                s->kernel = e.at("kernel").get<KernelConfig>();
                s->max_iterations = e.at("max_iterations").get<std::size_t>();
                std::ifstream in(mesh_dir(id) / "original.obj");
                s->original = std::make_shared<TriangleMesh>(load_obj(in));
                sessions_[id] = s;
                order_.push_back(id);
                continue;
            }
            auto& s = *sessions_.at(id);
            if (kind == "iteration") {
                auto record = e.at("record").get<IterationRecord>();
                std::vector<TriangleMesh> meshes;
                for (std::size_t v = 0; v < record.variants.size(); ++v) {
                    std::ifstream in(mesh_dir(id) / mesh_file(record.index, v));
                    meshes.push_back(load_obj(in));
                }
                s.seq.iterations.push_back(std::move(record));
                s.meshes.push_back(std::move(meshes));
                s.seq.termination = SessionState::awaiting_ratings;
            } else if (kind == "ratings") {
                auto& last = s.seq.iterations.back();
                const auto raw = e.at("ratings").get<std::vector<int>>();
                for (std::size_t i = 0; i < raw.size(); ++i) last.variants[i].rating = Rating{raw[i]};
                s.seq.termination = SessionState::computing;
            } else if (kind == "terminated") {
                const auto seq = e.at("sequence").get<EvaluationSequence>();
                s.seq.termination = seq.termination;
            }
        }
    }

    ServiceConfig cfg_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<detail::Session>> sessions_;
    std::vector<std::string> order_;
    std::mt19937_64 id_rng_{std::random_device{}()};
    std::unique_ptr<EventLog> log_;
    std::unique_ptr<WorkerPool> pool_; // last: joined before the rest is torn down
};

} // namespace hitl
