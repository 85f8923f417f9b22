#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "hitl/analysis.hpp"
#include "hitl/fixtures.hpp"
#include "hitl/rater.hpp"
#include "hitl/simulation.hpp"
#include "oracles.hpp"

using namespace hitl;

namespace {

QualityScore quality_of(double mean) { return make_quality({mean, mean, mean, mean, mean}); }

BiasConfig unbiased() { return BiasConfig{}; }

std::vector<int> values(const std::vector<Rating>& r) {
    std::vector<int> v;
    for (auto x : r) v.push_back(x.value());
    return v;
}

bool reaches_five(const EvaluationSequence& s) {
    for (const auto& it : s.iterations)
        for (const auto& v : it.variants)
            if (v.rating && v.rating->value() == 5) return true;
    return false;
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("hitl_rater_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace

TEST(BaseUtility, LinearForm) {
    EXPECT_DOUBLE_EQ(RaterModel({1.0, 0.0}).base_utility(quality_of(1.0), 0.3), 1.0);
    EXPECT_NEAR(RaterModel({0.5, 0.5}).base_utility(quality_of(0.9), 0.8), 0.85, 1e-15);
}

TEST(BaseUtility, DiminishingReturns) {
    BiasConfig b;
    b.diminishing_returns = 0.5;
    const RaterModel r({1.0, 0.0}, b);
    EXPECT_NEAR(r.base_utility(quality_of(0.81), 0.0), 0.9, 1e-15);
    EXPECT_EQ(r.diminish(-0.2), -0.2);
}

TEST(ScoreToRating, FiveEqualBins) {
    EXPECT_EQ(score_to_rating(-3.0).value(), 1);
    EXPECT_EQ(score_to_rating(0.0).value(), 1);
    EXPECT_EQ(score_to_rating(0.19).value(), 1);
    EXPECT_EQ(score_to_rating(0.21).value(), 2);
    EXPECT_EQ(score_to_rating(0.59).value(), 3);
    EXPECT_EQ(score_to_rating(0.79).value(), 4);
    EXPECT_EQ(score_to_rating(0.81).value(), 5);
    EXPECT_EQ(score_to_rating(1.0).value(), 5);
    EXPECT_EQ(score_to_rating(7.0).value(), 5);
}

TEST(RateBatch, UnbiasedExample) {
    RaterModel r({1.0, 0.0}, unbiased());
    const std::vector<double> u{0.1, 0.3, 0.5, 0.9};
    EXPECT_EQ(values(r.rate_utilities(u)), (std::vector<int>{1, 2, 3, 5}));
}

TEST(RateBatch, ThroughVariantViews) {
    RaterModel r({1.0, 0.0}, unbiased());
    std::vector<VariantView> views;
    for (double q : {0.1, 0.3, 0.5, 0.9}) views.push_back({quality_of(q), 0.5, false});
    EXPECT_EQ(values(r.rate_batch(views)), (std::vector<int>{1, 2, 3, 5}));
}

TEST(RateBatch, FaultyIsSkippedWhenDetected) {
    BiasConfig b;
    b.detection_probability = 1.0;
    RaterModel r({1.0, 0.0}, b);
    const std::vector<double> u{0.9, 0.9};
    EXPECT_EQ(values(r.rate_utilities(u, {true, false})), (std::vector<int>{0, 5}));

    b.detection_probability = 0.0;
    RaterModel blind({1.0, 0.0}, b);
    EXPECT_EQ(values(blind.rate_utilities(u, {true, true})), (std::vector<int>{5, 5}));
}

TEST(RateBatch, DetectionRateMatchesProbability) {
    RaterModel r({1.0, 0.0}, unbiased(), 5);
    int skipped = 0;
    const std::vector<double> u{0.5};
    for (int i = 0; i < 2000; ++i) skipped += r.rate_utilities(u, {true}).front().skipped();
    // binomial(2000, 0.8): sd ~ 17.9
    EXPECT_NEAR(skipped, 1600, 5 * 17.9);
}

TEST(RateBatch, LossAversionDropsAtLeastOneBin) {
    BiasConfig b;
    b.loss_aversion = 2.0;
    RaterModel averse({1.0, 0.0}, b);
    RaterModel plain({1.0, 0.0}, unbiased());
    const std::vector<double> first{0.9}, second{0.7};
    averse.rate_utilities(first);
    plain.rate_utilities(first);
    ASSERT_EQ(*averse.memory().best_seen, 0.9);
    const int a = averse.rate_utilities(second).front().value();
    const int p = plain.rate_utilities(second).front().value();
    EXPECT_LE(a, p - 1);
    EXPECT_EQ(p, 4);
    EXPECT_EQ(a, 2); // 0.7 - 2 * 0.2 = 0.3
}

TEST(RateBatch, AnchoringSubtractsReference) {
    BiasConfig b;
    b.anchoring = 0.5;
    RaterModel r({1.0, 0.0}, b);
    const std::vector<double> first{0.8}, second{0.9};
    r.rate_utilities(first);
    // 0.5 * 0.9 + 0.5 * (0.9 - 0.8) = 0.5 -> bin 3
    EXPECT_EQ(r.rate_utilities(second).front().value(), 3);
}

TEST(RateBatch, LevelOffsetAndPatternNoise) {
    BiasConfig b;
    b.level_offset = 0.2;
    RaterModel r({1.0, 0.0}, b);
    const std::vector<double> u{0.5};
    EXPECT_EQ(r.rate_utilities(u).front().value(), 4);

    EXPECT_EQ(RaterModel::pattern_offset(3, "torus"), RaterModel::pattern_offset(3, "torus"));
    EXPECT_NE(RaterModel::pattern_offset(3, "torus"), RaterModel::pattern_offset(3, "cube"));
    EXPECT_NE(RaterModel::pattern_offset(3, "torus"), RaterModel::pattern_offset(4, "torus"));
}

TEST(RateBatch, UnbiasedIsMonotoneInUtility) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.2, 1.2);
    RaterModel r({1.0, 0.0}, unbiased());
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> util(4);
        for (auto& x : util) x = u(rng);
        const auto ratings = r.rate_utilities(util);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j)
                if (util[i] >= util[j]) EXPECT_GE(ratings[i].value(), ratings[j].value());
    }
}

TEST(RateBatch, RangeAndBestSeenNondecreasing) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    BiasConfig b;
    b.anchoring = 0.4;
    b.loss_aversion = 1.5;
    b.diminishing_returns = 0.3;
    b.transient_noise_sd = 0.3;
    b.level_offset = -0.1;
    b.pattern_noise_sd = 0.2;
    RaterModel r({0.6, 0.4}, b, 9, "wave");
    double previous = -1.0;
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<double> util(4);
        std::vector<bool> faulty(4);
        for (std::size_t i = 0; i < 4; ++i) {
            util[i] = u(rng);
            faulty[i] = u(rng) < 0.1;
        }
        for (auto x : r.rate_utilities(util, faulty)) {
            EXPECT_GE(x.value(), 0);
            EXPECT_LE(x.value(), 5);
        }
        if (r.memory().best_seen) {
            EXPECT_GE(*r.memory().best_seen, previous);
            previous = *r.memory().best_seen;
        }
    }
}

TEST(RateBatch, TransientNoiseFollowsNormalModel) {
    const double u = 0.5, sd = 0.2;
    BiasConfig b;
    b.transient_noise_sd = sd;
    RaterModel r({1.0, 0.0}, b, 77);
    std::array<int, 6> observed{};
    const int draws = 1000;
    const std::vector<double> util{u};
    for (int i = 0; i < draws; ++i) ++observed[static_cast<std::size_t>(r.rate_utilities(util).front().value())];
    // bin k covers scores [(k-1)/5, k/5), the outer bins absorb the tails
    std::array<double, 6> expected{};
    for (int k = 1; k <= 5; ++k) {
        const double lo = k == 1 ? -INFINITY : (k - 1) / 5.0;
        const double hi = k == 5 ? INFINITY : k / 5.0;
        expected[static_cast<std::size_t>(k)] = draws * (oracle::normal_cdf((hi - u) / sd) - oracle::normal_cdf((lo - u) / sd));
    }
    double chi2 = 0.0;
    for (int k = 1; k <= 5; ++k) {
        const double e = expected[static_cast<std::size_t>(k)];
        chi2 += std::pow(observed[static_cast<std::size_t>(k)] - e, 2) / e;
    }
    EXPECT_EQ(observed[0], 0);
    EXPECT_LT(chi2, 13.277); // chi-square 0.99 quantile, 4 degrees of freedom
    // and the noise does make repeated judgments differ
    EXPECT_LT(*std::max_element(observed.begin(), observed.end()), draws);
}

TEST(RateBatch, SameSeedSameRatings) {
    BiasConfig b;
    b.transient_noise_sd = 0.5;
    RaterModel a({1.0, 0.0}, b, 12, "x"), c({1.0, 0.0}, b, 12, "x");
    const std::vector<double> u{0.2, 0.4, 0.6, 0.8};
    for (int i = 0; i < 20; ++i) EXPECT_EQ(a.rate_utilities(u), c.rate_utilities(u));
}

TEST(RaterModelConfig, RejectsOutOfRange) {
    BiasConfig b;
    b.anchoring = 1.5;
    EXPECT_THROW(RaterModel({}, b), Error);
    b = {};
    b.loss_aversion = -1;
    EXPECT_THROW(RaterModel({}, b), Error);
    EXPECT_THROW(RaterModel({-1.0, 0.5}), Error);
}

TEST(SimulatedSession, SyntheticRerunIsIdentical) {
    LoopConfig cfg;
    cfg.seed = 4;
    BiasConfig b;
    b.transient_noise_sd = 0.3;
    RaterModel r1({}, b, 4, "synthetic"), r2({}, b, 4, "synthetic");
    const auto a = run_synthetic_session(SyntheticUtility{}, r1, cfg);
    const auto c = run_synthetic_session(SyntheticUtility{}, r2, cfg);
    EXPECT_EQ(a, c);
    EXPECT_EQ(to_jsonl_line(a), to_jsonl_line(c));
}

TEST(SimulatedSession, MeshLoopRecordsAreConsistent) {
    const auto mesh = fixtures::small("icosphere");
    LoopConfig cfg;
    cfg.seed = 2;
    cfg.max_iterations = 3;
    RaterModel r1({0.5, 0.5}, unbiased(), 2, "icosphere"), r2({0.5, 0.5}, unbiased(), 2, "icosphere");
    const auto a = run_simulated_session(mesh, r1, cfg, "icosphere");
    const auto b = run_simulated_session(mesh, r2, cfg, "icosphere");
    EXPECT_EQ(a, b);
    ASSERT_GE(a.iterations.size(), 2u);
    EXPECT_LE(a.iterations.size(), 3u);
    EXPECT_TRUE(a.termination == SessionState::terminated_satisfied ||
                a.termination == SessionState::terminated_max_iter);
    for (std::size_t k = 0; k < a.iterations.size(); ++k) {
        const auto& it = a.iterations[k];
        EXPECT_EQ(it.index, k + 1);
        ASSERT_EQ(it.variants.size(), 4u);
        for (const auto& v : it.variants) {
            ASSERT_TRUE(v.quality && v.rating && v.utility);
            EXPECT_NEAR(*v.utility, 0.5 * v.quality->mean + 0.5 * v.reduction_ratio, 1e-12);
            EXPECT_NEAR(v.reduction_ratio,
                        static_cast<double>(mesh.face_count() - v.face_count) / mesh.face_count(), 1e-12);
        }
    }
}

TEST(SimulatedSession, SatisfactionNeedsTwoExcellentIterations) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        LoopConfig cfg;
        cfg.seed = seed;
        RaterModel r({}, unbiased(), seed, "synthetic");
        const auto s = run_synthetic_session(SyntheticUtility{}, r, cfg);
        const auto n = s.iterations.size();
        if (s.termination == SessionState::terminated_satisfied) {
            ASSERT_GE(n, 2u);
            EXPECT_TRUE(objectively_excellent(s.iterations[n - 1]));
            EXPECT_TRUE(objectively_excellent(s.iterations[n - 2]));
        } else {
            EXPECT_EQ(n, 11u);
        }
        for (std::size_t k = 1; k + 1 < n; ++k)
            EXPECT_FALSE(objectively_excellent(s.iterations[k]) && objectively_excellent(s.iterations[k - 1]));
    }
}

TEST(SimulatedSession, UnbiasedRaterConverges) {
    std::size_t hits = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        LoopConfig cfg;
        cfg.seed = seed;
        RaterModel r({}, unbiased(), seed, "synthetic");
        hits += reaches_five(run_synthetic_session(SyntheticUtility{}, r, cfg));
    }
    EXPECT_GE(hits, 40u) << hits << " of 50";
}

TEST(SimulatedSession, BiasedRaterShowsNoIncreasingTrend) {
    BiasConfig b;
    b.anchoring = 0.7;
    b.loss_aversion = 2.0;
    b.transient_noise_sd = 1.0;
    std::size_t without_trend = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        LoopConfig cfg;
        cfg.seed = seed;
        RaterModel r({}, b, seed, "synthetic");
        const auto st = sequence_stats(run_synthetic_session(SyntheticUtility{}, r, cfg));
        without_trend += !(st.mean_tests.tested && st.mean_tests.trend.trend == stats::Trend::increasing);
    }
    EXPECT_GE(without_trend, 35u) << without_trend << " of 50";
}

TEST(Experiments, DirectoryRunner) {
    const auto dir = scratch_dir("configs");
    {
        std::ofstream(dir / "a_unbiased.json") << R"({"sessions": 3, "first_seed": 10, "max_iterations": 4})";
        std::ofstream(dir / "b_biased.json")
            << R"({"name": "biased", "sessions": 2, "max_iterations": 4,
                  "bias": {"anchoring": 0.7, "loss_aversion": 2, "transient_noise_sd": 1}})";
        std::ofstream(dir / "notes.txt") << "ignored";
    }
    const auto seqs = run_experiment_dir(dir);
    ASSERT_EQ(seqs.size(), 5u);
    EXPECT_EQ(seqs[0].session_id, "a_unbiased-10");
    EXPECT_EQ(seqs[2].session_id, "a_unbiased-12");
    EXPECT_EQ(seqs[3].session_id, "biased-0");
    for (const auto& s : seqs) {
        EXPECT_LE(s.iterations.size(), 4u);
        EXPECT_EQ(parse_sequence(to_jsonl_line(s)), s);
    }
    EXPECT_EQ(run_experiment_dir(dir), seqs);

    std::ofstream(dir / "c_broken.json") << "{not json";
    EXPECT_THROW(run_experiment_dir(dir), SchemaError);
    std::filesystem::remove_all(dir);
}

TEST(Experiments, MeshMode) {
    ExperimentConfig c;
    c.name = "cube";
    c.mode = "cube";
    c.sessions = 1;
    c.max_iterations = 2;
    const auto seqs = run_experiment(c);
    ASSERT_EQ(seqs.size(), 1u);
    for (const auto& it : seqs[0].iterations)
        for (const auto& v : it.variants) EXPECT_TRUE(v.quality.has_value());
}
