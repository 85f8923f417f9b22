#include <chrono>
#include <filesystem>
#include <set>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>

#include "hitl/fixtures.hpp"
#include "hitl/server.hpp"

using namespace hitl;
using namespace std::chrono_literals;

namespace {

const std::string& small_obj() {
    static const std::string obj = to_obj_string(fixtures::small("icosphere"));
    return obj;
}

ServiceConfig quick(std::size_t max_iterations = 11) {
    ServiceConfig c;
    c.workers = 2;
    c.max_iterations = max_iterations;
    return c;
}

SessionConfig seeded(std::uint64_t seed) {
    SessionConfig c;
    c.seed = seed;
    return c;
}

ServiceError::Kind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ServiceError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected a ServiceError";
    return ServiceError::Kind::bad_request;
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("hitl_service_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    return dir;
}

} // namespace

TEST(SessionStore, Lifecycle) {
    SessionStore store(quick());
    const auto info = store.create_session(small_obj(), seeded(1));
    EXPECT_EQ(info.id.size(), 16u);
    EXPECT_EQ(info.max_iterations, 11u);
    ASSERT_TRUE(store.wait_ready(info.id));
    auto s = store.get_session(info.id);
    EXPECT_EQ(s.state, SessionState::awaiting_ratings);
    EXPECT_EQ(s.iterations, 1u);
    const auto it = store.get_iteration(info.id, 1);
    EXPECT_EQ(it.record.variants.size(), 4u);
    EXPECT_EQ(it.variant_obj.size(), 4u);
    EXPECT_EQ(it.record.variants[0].slot, BatchSlot::space_filling);

    s = store.submit_ratings(info.id, 1, {3, 4, 5, 1});
    EXPECT_EQ(s.pairs, 6u);
    ASSERT_TRUE(store.wait_ready(info.id));
    const auto second = store.get_iteration(info.id, 2);
    EXPECT_EQ(second.record.variants[0].slot, BatchSlot::exploit);
    EXPECT_EQ(store.terminate(info.id, SessionState::terminated_satisfied).state, SessionState::terminated_satisfied);
}

TEST(SessionStore, MalformedUploadCreatesNothing) {
    SessionStore store(quick());
    try {
        store.create_session("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\nf 1 2 9\n");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 5u);
    }
    EXPECT_THROW(store.create_session("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"), MeshError);
    EXPECT_TRUE(store.export_sequences().empty());
}

TEST(SessionStore, UploadSizeCap) {
    auto cfg = quick();
    cfg.max_upload_bytes = 1000;
    SessionStore store(cfg);
    EXPECT_EQ(kind_of([&] { store.create_session(small_obj()); }), ServiceError::Kind::too_large);
}

TEST(SessionStore, ConcurrentUploadsGetDistinctIds) {
    SessionStore store(quick());
    std::vector<std::string> ids(8);
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < ids.size(); ++i)
        threads.emplace_back([&, i] { ids[i] = store.create_session(small_obj()).id; });
    for (auto& t : threads) t.join();
    EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), ids.size());
    EXPECT_EQ(store.export_sequences().size(), ids.size());
    for (const auto& id : ids) EXPECT_TRUE(store.wait_ready(id));
}

TEST(SessionStore, MaxIterationsTerminates) {
    SessionStore store(quick());
    const auto id = store.create_session(small_obj(), seeded(2)).id;
    SessionInfo s;
    for (std::size_t k = 1; k <= 11; ++k) {
        ASSERT_TRUE(store.wait_ready(id));
        ASSERT_EQ(store.get_session(id).state, SessionState::awaiting_ratings) << k;
        s = store.submit_ratings(id, k, {static_cast<int>(k % 5) + 1, 3, 2, 0});
    }
    EXPECT_EQ(s.state, SessionState::terminated_max_iter);
    EXPECT_EQ(s.iterations, 11u);
    std::this_thread::sleep_for(200ms);
    EXPECT_EQ(store.get_session(id).iterations, 11u);
}

TEST(SessionStore, PerSessionIterationCap) {
    SessionStore store(quick());
    auto cfg = seeded(3);
    cfg.max_iterations = 2;
    const auto id = store.create_session(small_obj(), cfg).id;
    ASSERT_TRUE(store.wait_ready(id));
    store.submit_ratings(id, 1, {1, 2, 3, 4});
    ASSERT_TRUE(store.wait_ready(id));
    EXPECT_EQ(store.submit_ratings(id, 2, {1, 2, 3, 4}).state, SessionState::terminated_max_iter);
}

TEST(SessionStore, TerminalStateIsAbsorbing) {
    SessionStore store(quick());
    const auto id = store.create_session(small_obj(), seeded(4)).id;
    ASSERT_TRUE(store.wait_ready(id));
    store.terminate(id, SessionState::terminated_satisfied);
    EXPECT_EQ(kind_of([&] { store.terminate(id, SessionState::terminated_reset); }), ServiceError::Kind::conflict);
    EXPECT_EQ(kind_of([&] { store.submit_ratings(id, 1, {1, 2, 3, 4}); }), ServiceError::Kind::conflict);
    EXPECT_EQ(kind_of([&] { store.submit_ratings(id, {}, {1, 2, 3, 4}); }), ServiceError::Kind::conflict);
    EXPECT_EQ(store.get_session(id).state, SessionState::terminated_satisfied);
    EXPECT_EQ(kind_of([&] { store.terminate(id, SessionState::terminated_max_iter); }), ServiceError::Kind::bad_request);
}

TEST(SessionStore, ResetAtFirstIterationKeepsNullRatings) {
    SessionStore store(quick());
    const auto id = store.create_session(small_obj(), seeded(5)).id;
    ASSERT_TRUE(store.wait_ready(id));
    store.terminate(id, SessionState::terminated_reset);
    const auto seqs = store.export_sequences(true);
    ASSERT_EQ(seqs.size(), 1u);
    EXPECT_EQ(seqs[0].termination, SessionState::terminated_reset);
    ASSERT_EQ(seqs[0].iterations.size(), 1u);
    for (const auto& v : seqs[0].iterations[0].variants) EXPECT_FALSE(v.rating);
    EXPECT_NE(to_jsonl_line(seqs[0]).find("\"rating\":null"), std::string::npos);
}

TEST(SessionStore, TerminateWithFinalRatings) {
    SessionStore store(quick());
    const auto id = store.create_session(small_obj(), seeded(6)).id;
    ASSERT_TRUE(store.wait_ready(id));
    const auto s = store.terminate(id, SessionState::terminated_satisfied, std::vector<int>{5, 5, 4, 2});
    EXPECT_EQ(s.iterations, 1u);
    EXPECT_EQ(s.pairs, 5u);
    std::this_thread::sleep_for(200ms);
    EXPECT_EQ(store.get_session(id).iterations, 1u);
}

TEST(SessionStore, TerminateWhileComputingDropsWork) {
    SessionStore store(quick());
    const auto id = store.create_session(small_obj(), seeded(7)).id;
    ASSERT_TRUE(store.wait_ready(id));
    store.submit_ratings(id, 1, {1, 2, 3, 4});
    store.terminate(id, SessionState::terminated_reset);
    std::this_thread::sleep_for(500ms);
    const auto s = store.get_session(id);
    EXPECT_EQ(s.state, SessionState::terminated_reset);
    EXPECT_EQ(s.iterations, 1u);
}

TEST(SessionStore, IterationAvailability) {
    SessionStore store(quick());
    // a dense mesh keeps the first batch busy long enough to observe it
    const auto id = store.create_session(to_obj_string(fixtures::subdivided_cube(40)), seeded(8)).id;
    EXPECT_EQ(kind_of([&] { store.get_iteration(id, 1); }), ServiceError::Kind::not_ready);
    EXPECT_EQ(kind_of([&] { store.submit_ratings(id, 1, {1, 2, 3, 4}); }), ServiceError::Kind::conflict);
    ASSERT_TRUE(store.wait_ready(id));
    EXPECT_EQ(kind_of([&] { store.get_iteration(id, 2); }), ServiceError::Kind::not_found);
    EXPECT_EQ(kind_of([&] { store.get_iteration(id, 0); }), ServiceError::Kind::not_found);
    EXPECT_EQ(kind_of([&] { store.get_iteration("nope", 1); }), ServiceError::Kind::not_found);
    store.submit_ratings(id, 1, {1, 2, 3, 4});
    EXPECT_EQ(kind_of([&] { store.get_iteration(id, 2); }), ServiceError::Kind::not_ready);
    store.terminate(id, SessionState::terminated_reset);
}

TEST(SessionStore, RatingValidation) {
    SessionStore store(quick());
    const auto id = store.create_session(small_obj(), seeded(9)).id;
    ASSERT_TRUE(store.wait_ready(id));
    EXPECT_EQ(kind_of([&] { store.submit_ratings(id, 1, {1, 2, 3}); }), ServiceError::Kind::bad_request);
    EXPECT_EQ(kind_of([&] { store.submit_ratings(id, 1, {1, 2, 3, 6}); }), ServiceError::Kind::bad_request);
    EXPECT_EQ(kind_of([&] { store.submit_ratings(id, 1, {-1, 2, 3, 4}); }), ServiceError::Kind::bad_request);
    EXPECT_EQ(kind_of([&] { store.submit_ratings(id, 2, {1, 2, 3, 4}); }), ServiceError::Kind::conflict);
    EXPECT_EQ(store.get_session(id).state, SessionState::awaiting_ratings);
    EXPECT_EQ(store.get_session(id).pairs, 0u);
}

TEST(SessionStore, IdempotentResubmit) {
    SessionStore store(quick());
    const auto id = store.create_session(small_obj(), seeded(10)).id;
    ASSERT_TRUE(store.wait_ready(id));
    store.submit_ratings(id, 1, {2, 2, 4, 0});
    const auto again = store.submit_ratings(id, 1, {2, 2, 4, 0});
    EXPECT_EQ(again.pairs, 2u);
    EXPECT_EQ(kind_of([&] { store.submit_ratings(id, 1, {2, 2, 4, 1}); }), ServiceError::Kind::conflict);
    ASSERT_TRUE(store.wait_ready(id));
    EXPECT_EQ(store.get_session(id).iterations, 2u);
    EXPECT_EQ(store.export_sequences()[0].iterations[0].variants[3].rating, Rating(0));
    store.terminate(id, SessionState::terminated_reset);
}

TEST(SessionStore, RatiosMatchServedMeshes) {
    SessionStore store(quick());
    const auto id = store.create_session(small_obj(), seeded(11)).id;
    for (std::size_t k = 1; k <= 3; ++k) {
        ASSERT_TRUE(store.wait_ready(id));
        const auto p = store.get_iteration(id, k);
        const auto original = load_obj_string(p.original_obj);
        EXPECT_EQ(original.face_count(), 320u);
        for (std::size_t i = 0; i < p.variant_obj.size(); ++i) {
            const auto mesh = load_obj_string(p.variant_obj[i]);
            const auto& v = p.record.variants[i];
            EXPECT_EQ(mesh.face_count(), v.face_count);
            EXPECT_DOUBLE_EQ(v.reduction_ratio, 1.0 - static_cast<double>(mesh.face_count()) / 320.0);
            EXPECT_NO_THROW(validate(mesh));
        }
        store.submit_ratings(id, k, {1, 3, 5, 2});
    }
    store.terminate(id, SessionState::terminated_reset);
}

TEST(SessionStore, SameSeedSameProposals) {
    SessionStore a(quick()), b(quick());
    const auto ia = a.create_session(small_obj(), seeded(12)).id;
    const auto ib = b.create_session(small_obj(), seeded(12)).id;
    for (std::size_t k = 1; k <= 3; ++k) {
        ASSERT_TRUE(a.wait_ready(ia));
        ASSERT_TRUE(b.wait_ready(ib));
        const auto pa = a.get_iteration(ia, k), pb = b.get_iteration(ib, k);
        for (std::size_t i = 0; i < 4; ++i) {
            EXPECT_EQ(pa.record.variants[i].params, pb.record.variants[i].params);
            EXPECT_EQ(pa.variant_obj[i], pb.variant_obj[i]);
        }
        a.submit_ratings(ia, k, {4, 1, 2, 3});
        b.submit_ratings(ib, k, {4, 1, 2, 3});
    }
}

TEST(SessionStore, ExportRoundTrip) {
    SessionStore store(quick());
    const auto id = store.create_session(small_obj(), seeded(13)).id;
    ASSERT_TRUE(store.wait_ready(id));
    store.submit_ratings(id, 1, {3, 4, 5, 1});
    ASSERT_TRUE(store.wait_ready(id));
    store.terminate(id, SessionState::terminated_satisfied, std::vector<int>{5, 4, 2, 2});
    const auto seqs = store.export_sequences();
    std::stringstream ss;
    write_sequences(ss, seqs);
    const auto back = read_sequences(ss);
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0], seqs[0]);
    EXPECT_NO_THROW(check_sequence(back[0]));
}

TEST(SessionStore, RecoversFromDataDir) {
    const auto dir = scratch_dir("recover");
    auto cfg = quick();
    cfg.data_dir = dir;
    std::string done, waiting, busy;
    std::vector<EvaluationSequence> before;
    std::string waiting_obj;
    {
        SessionStore store(cfg);
        done = store.create_session(small_obj(), seeded(14)).id;
        waiting = store.create_session(small_obj(), seeded(15)).id;
        busy = store.create_session(small_obj(), seeded(16)).id;
        for (const auto& id : {done, waiting, busy}) ASSERT_TRUE(store.wait_ready(id));
        store.submit_ratings(done, 1, {3, 4, 5, 1});
        ASSERT_TRUE(store.wait_ready(done));
        store.terminate(done, SessionState::terminated_satisfied);
        waiting_obj = store.get_iteration(waiting, 1).variant_obj[2];
        store.submit_ratings(busy, 1, {1, 2, 3, 4});
        before = store.export_sequences();
    }
    SessionStore store(cfg);
    const auto after = store.export_sequences();
    ASSERT_EQ(after.size(), 3u);
    EXPECT_EQ(after[0], before[0]);
    EXPECT_EQ(after[1], before[1]);
    EXPECT_EQ(store.get_session(done).state, SessionState::terminated_satisfied);
    EXPECT_EQ(store.get_session(waiting).state, SessionState::awaiting_ratings);
    EXPECT_EQ(store.get_iteration(waiting, 1).variant_obj[2], waiting_obj);

    // the interrupted batch is recomputed
    ASSERT_TRUE(store.wait_ready(busy));
    EXPECT_EQ(store.get_session(busy).iterations, 2u);
    EXPECT_EQ(store.get_session(busy).state, SessionState::awaiting_ratings);
    EXPECT_EQ(store.submit_ratings(waiting, 1, {2, 2, 2, 5}).pairs, 3u);
    store.terminate(busy, SessionState::terminated_reset);
    std::filesystem::remove_all(dir);
}

class HttpService : public ::testing::Test {
protected:
    void start(ServiceConfig cfg = quick()) {
        store_ = std::make_unique<SessionStore>(cfg);
        server_ = std::make_unique<Server>(*store_);
        port_ = server_->bind_any();
        ASSERT_GT(port_, 0);
        thread_ = std::thread([this] { server_->listen_after_bind(); });
        server_->wait_until_ready();
        client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
        client_->set_read_timeout(60, 0);
    }

    void TearDown() override {
        if (server_) server_->stop();
        if (thread_.joinable()) thread_.join();
    }

    static nlohmann::json body(const httplib::Result& r) { return nlohmann::json::parse(r->body); }

    // Polls until the iteration is served, checking the not-ready contract.
    nlohmann::json fetch_iteration(const std::string& id, std::size_t k) {
        for (int attempt = 0; attempt < 600; ++attempt) {
            auto r = client_->Get("/sessions/" + id + "/iterations/" + std::to_string(k));
            if (!r) break;
            if (r->status == 200) return body(r);
            EXPECT_EQ(r->status, 503);
            EXPECT_EQ(r->get_header_value("Retry-After"), "1");
            EXPECT_EQ(body(r)["error"]["code"], "not_ready");
            std::this_thread::sleep_for(50ms);
        }
        ADD_FAILURE() << "iteration " << k << " never became available";
        return {};
    }

    std::unique_ptr<SessionStore> store_;
    std::unique_ptr<Server> server_;
    std::unique_ptr<httplib::Client> client_;
    std::thread thread_;
    int port_ = 0;
};

TEST_F(HttpService, ScriptedSession) {
    start();
    auto created = client_->Post("/sessions?seed=21&context=scripted", small_obj(), "text/plain");
    ASSERT_TRUE(created);
    ASSERT_EQ(created->status, 201);
    const auto id = body(created)["session_id"].get<std::string>();
    EXPECT_EQ(body(created)["schema_version"], 1);

    for (std::size_t k = 1; k <= 3; ++k) {
        const auto it = fetch_iteration(id, k);
        ASSERT_EQ(it["meshes"].size(), 4u);
        EXPECT_EQ(it["iteration"]["index"], k);
        const nlohmann::json rating{{"iteration", k}, {"ratings", {1 + k, 2, 5, 0}}};
        auto r = client_->Post("/sessions/" + id + "/ratings", rating.dump(), "application/json");
        ASSERT_EQ(r->status, 200) << r->body;
        // identical resubmission is accepted
        r = client_->Post("/sessions/" + id + "/ratings", rating.dump(), "application/json");
        EXPECT_EQ(r->status, 200) << r->body;
    }
    fetch_iteration(id, 4);
    auto term = client_->Post("/sessions/" + id + "/terminate", R"({"reason":"satisfied","ratings":[5,5,5,5]})",
                              "application/json");
    ASSERT_EQ(term->status, 200) << term->body;
    EXPECT_EQ(body(term)["state"], "terminated_satisfied");

    auto again = client_->Post("/sessions/" + id + "/terminate", R"({"reason":"reset"})", "application/json");
    EXPECT_EQ(again->status, 409);

    auto exported = client_->Get("/export?state=terminated");
    ASSERT_EQ(exported->status, 200);
    std::stringstream ss(exported->body);
    const auto seqs = read_sequences(ss);
    ASSERT_EQ(seqs.size(), 1u);
    EXPECT_EQ(seqs[0].session_id, id);
    EXPECT_EQ(seqs[0].context, "scripted");
    EXPECT_EQ(seqs[0].seed, 21u);
    EXPECT_EQ(seqs[0].termination, SessionState::terminated_satisfied);
    ASSERT_EQ(seqs[0].iterations.size(), 4u);
    EXPECT_EQ(seqs[0].iterations[3].variants[0].rating, Rating(5));
    EXPECT_EQ(seqs[0].iterations[0].variants[0].rating, Rating(2));
}

TEST_F(HttpService, MultipartUploadWithConfig) {
    start();
    httplib::MultipartFormDataItems items{
        {"mesh", small_obj(), "sphere.obj", "text/plain"},
        {"config", R"({"seed": 5, "max_iterations": 1, "context": "form"})", "config.json", "application/json"}};
    auto r = client_->Post("/sessions", items);
    ASSERT_EQ(r->status, 201) << r->body;
    const auto id = body(r)["session_id"].get<std::string>();
    EXPECT_EQ(body(r)["max_iterations"], 1);
    fetch_iteration(id, 1);
    r = client_->Post("/sessions/" + id + "/ratings", R"({"ratings":[1,2,3,4]})", "application/json");
    EXPECT_EQ(body(r)["state"], "terminated_max_iter");
    auto info = client_->Get("/sessions/" + id);
    EXPECT_EQ(body(info)["context"], "form");
}

TEST_F(HttpService, ErrorResponses) {
    auto cfg = quick();
    cfg.max_upload_bytes = 4096;
    start(cfg);
    auto r = client_->Post("/sessions", "v 0 0 0\nv 1 0 0\nf 1 2 3\n", "text/plain");
    EXPECT_EQ(r->status, 400);
    EXPECT_EQ(body(r)["error"]["code"], "parse_error");
    EXPECT_EQ(body(r)["error"]["line"], 3);
    r = client_->Post("/sessions", small_obj(), "text/plain");
    EXPECT_EQ(r->status, 413);
    EXPECT_EQ(body(r)["error"]["code"], "too_large");
    EXPECT_TRUE(store_->export_sequences().empty());

    r = client_->Get("/sessions/ffff");
    EXPECT_EQ(r->status, 404);
    r = client_->Get("/sessions/ffff/iterations/x");
    EXPECT_EQ(r->status, 404);

    const auto id = store_->create_session(to_obj_string(fixtures::icosphere(1)), seeded(3)).id;
    fetch_iteration(id, 1);
    r = client_->Post("/sessions/" + id + "/ratings", R"({"ratings":[1,2]})", "application/json");
    EXPECT_EQ(r->status, 400);
    r = client_->Post("/sessions/" + id + "/ratings", "[1,2,3,4]", "application/json");
    EXPECT_EQ(r->status, 400);
    r = client_->Post("/sessions/" + id + "/ratings", R"({"schema_version":2,"ratings":[1,2,3,4]})", "application/json");
    EXPECT_EQ(r->status, 400);
    r = client_->Post("/sessions/" + id + "/ratings", R"({"ratings":[1,2,3,"a"]})", "application/json");
    EXPECT_EQ(r->status, 400);
    r = client_->Post("/sessions/" + id + "/terminate", R"({"reason":"bored"})", "application/json");
    EXPECT_EQ(r->status, 400);
    r = client_->Get("/sessions/" + id + "/iterations/2");
    EXPECT_EQ(r->status, 404);
    EXPECT_EQ(store_->get_session(id).state, SessionState::awaiting_ratings);
}
