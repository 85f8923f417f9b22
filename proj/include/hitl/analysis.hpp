#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hitl/sequence.hpp"
#include "hitl/stats/rank_tests.hpp"
#include "hitl/stats/time_series.hpp"

namespace hitl {

/// Outcome of the two time-series tests on one per-iteration series.
struct SeriesTests {
    bool tested = false;     // series had at least kMinSeriesLength points
    bool degenerate = false; // ADF regression singular (constant series)
    std::optional<stats::AdfResult> adf;
    bool stationary = false;
    stats::MannKendallResult trend;
};

inline constexpr std::size_t kMinSeriesLength = 4;

struct SequenceStats {
    std::string session_id;
    std::string context;
    SessionState termination = SessionState::computing;
    std::size_t length = 0;
    // one entry per rated iteration
    std::vector<double> mean_rating;     // skips (0) excluded
    std::vector<double> rating_variance; // population variance, skips excluded
    std::vector<double> optimal_ratio;   // exploit-slot reduction ratio
    SeriesTests mean_tests, variance_tests, ratio_tests;
};

struct SeriesCounts {
    std::size_t tested = 0;
    std::size_t stationary = 0;
    std::size_t degenerate = 0;
    std::size_t increasing = 0;
    std::size_t decreasing = 0;
    std::size_t no_trend = 0;
};

struct LevelComparison {
    int lower = 0, upper = 0;
    std::size_t n_lower = 0, n_upper = 0;
    stats::MannWhitneyResult result;
};

struct CorpusReport {
    double alpha = 0.05;
    std::vector<SequenceStats> sequences;
    std::size_t satisfied = 0, reset = 0, max_iter = 0, unfinished = 0;
    double satisfaction_rate = 0.0;
    SeriesCounts mean_rating, rating_variance, optimal_ratio;
    std::size_t rated_variants = 0;
    std::optional<stats::KendallResult> ratio_rating_tau;
    std::vector<LevelComparison> level_tests;
    std::size_t fit_points = 0;
    std::optional<std::array<double, 3>> quality_fit; // c0 + c1 r + c2 r^2
    std::vector<std::array<std::size_t, 6>> histogram; // [iteration-1][rating]
};

namespace detail {

// Stationary when the ADF statistic beats the critical value at the
// tabulated level closest to (not above) alpha.
inline bool adf_rejects(const stats::AdfResult& r, double alpha) {
    if (alpha >= 0.10) return r.statistic < r.critical[2];
    if (alpha >= 0.05) return r.statistic < r.critical[1];
    if (alpha >= 0.01) return r.statistic < r.critical[0];
    return false;
}

inline SeriesTests run_series_tests(const std::vector<double>& series, double alpha) {
    SeriesTests t;
    if (series.size() < kMinSeriesLength) return t;
    t.tested = true;
    t.trend = stats::mann_kendall(series, alpha);
    try {
        t.adf = stats::adf_test(series);
        t.stationary = adf_rejects(*t.adf, alpha);
    } catch (const DegenerateInput&) {
        t.degenerate = true;
    }
    return t;
}

inline void tally(SeriesCounts& c, const SeriesTests& t) {
    if (!t.tested) return;
    ++c.tested;
    c.stationary += t.stationary;
    c.degenerate += t.degenerate;
    switch (t.trend.trend) {
    case stats::Trend::increasing: ++c.increasing; break;
    case stats::Trend::decreasing: ++c.decreasing; break;
    case stats::Trend::none: ++c.no_trend; break;
    }
}

inline std::string fmt(double v, int digits = 6) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
}

} // namespace detail

inline SequenceStats sequence_stats(const EvaluationSequence& seq, double alpha = 0.05) {
    SequenceStats s;
    s.session_id = seq.session_id;
    s.context = seq.context;
    s.termination = seq.termination;
    s.length = seq.iterations.size();
    for (const auto& it : seq.iterations) {
        if (!it.rated()) continue;
        std::vector<double> r;
        for (const auto& v : it.variants)
            if (!v.rating->skipped()) r.push_back(v.rating->value());
        if (r.empty()) continue;
        s.mean_rating.push_back(stats::mean(r));
        s.rating_variance.push_back(stats::variance(r));
        const VariantRecord* exploit = &it.variants.front();
        for (const auto& v : it.variants)
            if (v.slot == BatchSlot::exploit) exploit = &v;
        s.optimal_ratio.push_back(exploit->reduction_ratio);
    }
    s.mean_tests = detail::run_series_tests(s.mean_rating, alpha);
    s.variance_tests = detail::run_series_tests(s.rating_variance, alpha);
    s.ratio_tests = detail::run_series_tests(s.optimal_ratio, alpha);
    return s;
}

/// Corpus statistics; a pure function of the sequences and alpha.
inline CorpusReport corpus_report(const std::vector<EvaluationSequence>& corpus, double alpha = 0.05) {
    CorpusReport rep;
    rep.alpha = alpha;
    std::vector<double> ratios, ratings, fit_x, fit_y;
    std::array<std::vector<double>, 6> by_level;
    for (const auto& seq : corpus) {
        rep.sequences.push_back(sequence_stats(seq, alpha));
        const auto& st = rep.sequences.back();
        switch (seq.termination) {
        case SessionState::terminated_satisfied: ++rep.satisfied; break;
        case SessionState::terminated_reset: ++rep.reset; break;
        case SessionState::terminated_max_iter: ++rep.max_iter; break;
        default: ++rep.unfinished; break;
        }
        detail::tally(rep.mean_rating, st.mean_tests);
        detail::tally(rep.rating_variance, st.variance_tests);
        detail::tally(rep.optimal_ratio, st.ratio_tests);

        for (const auto& it : seq.iterations) {
            if (rep.histogram.size() < it.index) rep.histogram.resize(it.index, std::array<std::size_t, 6>{});
            for (const auto& v : it.variants) {
                if (v.quality) {
                    fit_x.push_back(v.reduction_ratio);
                    fit_y.push_back(v.quality->mean);
                }
                if (!v.rating) continue;
                ++rep.histogram[it.index - 1][static_cast<std::size_t>(v.rating->value())];
                if (v.rating->skipped()) continue;
                ratios.push_back(v.reduction_ratio);
                ratings.push_back(v.rating->value());
                by_level[static_cast<std::size_t>(v.rating->value())].push_back(v.reduction_ratio);
            }
        }
    }
    if (!corpus.empty()) rep.satisfaction_rate = static_cast<double>(rep.satisfied) / static_cast<double>(corpus.size());

    rep.rated_variants = ratios.size();
    if (ratios.size() >= 2) {
        try {
            rep.ratio_rating_tau = stats::kendall_tau(ratios, ratings);
        } catch (const DegenerateInput&) {
        }
    }
    for (int a = 1; a <= 5; ++a)
        for (int b = a + 1; b <= 5; ++b) {
            const auto& la = by_level[static_cast<std::size_t>(a)];
            const auto& lb = by_level[static_cast<std::size_t>(b)];
            if (la.empty() || lb.empty()) continue;
            rep.level_tests.push_back({a, b, la.size(), lb.size(), stats::mann_whitney_u(la, lb)});
        }
    rep.fit_points = fit_x.size();
    if (fit_x.size() >= 3) {
        try {
            const auto c = stats::polyfit(fit_x, fit_y, 2);
            rep.quality_fit = std::array<double, 3>{c[0], c[1], c[2]};
        } catch (const DegenerateInput&) {
        }
    }
    return rep;
}

inline std::string report_text(const CorpusReport& r) {
    using detail::fmt;
    std::string out;
    auto line = [&](const std::string& s) { out += s + "\n"; };
    auto rate = [&](std::size_t k, std::size_t n) { return n ? fmt(static_cast<double>(k) / static_cast<double>(n), 4) : std::string("n/a"); };
    line("Evaluation sequence report");
    line("alpha: " + fmt(r.alpha, 4));
    line("p-values: Kendall tau exact for n <= " + std::to_string(stats::kKendallExactMax) +
         ", Mann-Whitney U exact for max(n) <= " + std::to_string(stats::kMannWhitneyExactMax) +
         ", normal approximation above");
    line("ADF: constant, no trend, lag 0, MacKinnon critical values; series need >= " +
         std::to_string(kMinSeriesLength) + " rated iterations");
    line("");
    line("sequences: " + std::to_string(r.sequences.size()));
    line("  terminated_satisfied: " + std::to_string(r.satisfied));
    line("  terminated_reset: " + std::to_string(r.reset));
    line("  terminated_max_iter: " + std::to_string(r.max_iter));
    line("  unfinished: " + std::to_string(r.unfinished));
    line("satisfaction rate: " + fmt(r.satisfaction_rate, 4));
    line("");
    auto series = [&](const std::string& name, const SeriesCounts& c) {
        line(name + ": tested " + std::to_string(c.tested) + ", stationary " + std::to_string(c.stationary) + " (" +
             rate(c.stationary, c.tested) + "), constant " + std::to_string(c.degenerate) + ", increasing " +
             std::to_string(c.increasing) + ", decreasing " + std::to_string(c.decreasing) + ", no trend " +
             std::to_string(c.no_trend));
    };
    series("mean rating", r.mean_rating);
    series("rating variance", r.rating_variance);
    series("estimated optimal ratio", r.optimal_ratio);
    line("");
    line("rated variants (skips excluded): " + std::to_string(r.rated_variants));
    if (r.ratio_rating_tau)
        line("Kendall tau (reduction ratio vs rating): tau " + fmt(r.ratio_rating_tau->tau) + ", p " +
             fmt(r.ratio_rating_tau->p) + (r.ratio_rating_tau->exact ? " (exact)" : " (normal)"));
    else
        line("Kendall tau (reduction ratio vs rating): n/a");
    line("Mann-Whitney U on reduction ratio between rating levels:");
    if (r.level_tests.empty()) line("  none");
    for (const auto& t : r.level_tests)
        line("  " + std::to_string(t.lower) + " vs " + std::to_string(t.upper) + ": n " + std::to_string(t.n_lower) +
             "/" + std::to_string(t.n_upper) + ", U " + fmt(t.result.u, 1) + ", p " + fmt(t.result.p) +
             (t.result.exact ? " (exact)" : " (normal)"));
    line("");
    if (r.quality_fit)
        line("quality vs ratio OLS (" + std::to_string(r.fit_points) + " points): c0 " + fmt((*r.quality_fit)[0]) +
             ", c1 " + fmt((*r.quality_fit)[1]) + ", c2 " + fmt((*r.quality_fit)[2]) + " (q = c0 + c1 r + c2 r^2)");
    else
        line("quality vs ratio OLS (" + std::to_string(r.fit_points) + " points): n/a");
    return out;
}

/// One row per sequence.
inline std::string report_csv(const CorpusReport& r) {
    using detail::fmt;
    std::string out = "session_id,context,termination,length,rated_iterations";
    for (const char* s : {"mean_rating", "rating_variance", "optimal_ratio"})
        out += std::string(",") + s + "_adf_statistic," + s + "_adf_band," + s + "_stationary," + s + "_mk_s," + s +
               "_mk_p," + s + "_mk_trend";
    out += "\n";
    auto cells = [&](const SeriesTests& t) {
        if (!t.tested) return std::string(",,,,,");
        std::string c;
        c += (t.adf ? fmt(t.adf->statistic) : std::string("constant")) + ",";
        c += (t.adf ? std::string(stats::band_name(t.adf->band)) : std::string()) + ",";
        c += std::string(t.stationary ? "1" : "0") + ",";
        c += std::to_string(t.trend.s) + "," + fmt(t.trend.p) + "," + std::string(stats::trend_name(t.trend.trend));
        return c;
    };
    for (const auto& s : r.sequences) {
        out += detail::csv_field(s.session_id) + "," + detail::csv_field(s.context) + "," + std::string(state_name(s.termination)) + "," +
               std::to_string(s.length) + "," + std::to_string(s.mean_rating.size());
        out += "," + cells(s.mean_tests) + "," + cells(s.variance_tests) + "," + cells(s.ratio_tests) + "\n";
    }
    return out;
}

/// Rating counts per iteration index.
inline std::string histogram_csv(const CorpusReport& r) {
    std::string out = "iteration,rating_0,rating_1,rating_2,rating_3,rating_4,rating_5\n";
    for (std::size_t k = 0; k < r.histogram.size(); ++k) {
        out += std::to_string(k + 1);
        for (auto c : r.histogram[k]) out += "," + std::to_string(c);
        out += "\n";
    }
    return out;
}

inline void write_report(const CorpusReport& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto put = [&](const char* name, const std::string& text) {
        std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
        out << text;
        if (!out) throw Error(std::string("cannot write ") + (dir / name).string());
    };
    put("report.txt", report_text(r));
    put("report.csv", report_csv(r));
    put("rating_hist.csv", histogram_csv(r));
}

} // namespace hitl
