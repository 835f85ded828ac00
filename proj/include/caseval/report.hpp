#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "caseval/case_model.hpp"
#include "caseval/rubric.hpp"
#include "caseval/scoring.hpp"
#include "caseval/stats.hpp"
#include "caseval/util.hpp"
#include "caseval/verdict.hpp"

namespace caseval {

// =============================================================================
// Reading evaluation runs back
// =============================================================================

struct GranularRecord {
    std::string conversation_id;
    int turn_index = 0;
    std::string query;
    bool ok = false;
    std::array<double, kMetricCount> scores{};  // valid iff ok
    double final_score = 0.0;                   // valid iff ok
};

/// Load a granular evaluation file produced by run_evaluate.
inline std::vector<GranularRecord> read_granular(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open evaluation file: " + path);

    std::vector<GranularRecord> out;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (util::trim(line).empty()) continue;
        nlohmann::json row;
        try {
            row = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
            throw IoError(path + " line " + std::to_string(line_number) +
                          ": not a granular evaluation row");
        }
        GranularRecord r;
        try {
            r.conversation_id = row.at("conversation_id").get<std::string>();
            r.turn_index = row.at("turn_index").get<int>();
            r.query = row.at("query").get<std::string>();
            r.ok = row.at("status").get<std::string>() == "ok";
            if (r.ok) {
                const auto& keys = metric_keys();
                for (std::size_t i = 0; i < kMetricCount; ++i) {
                    r.scores[i] = row.at(keys[i] + "_score").get<double>();
                }
                r.final_score = row.at("final_score").get<double>();
            }
        } catch (const nlohmann::json::exception& e) {
            throw IoError(path + " line " + std::to_string(line_number) + ": " + e.what());
        }
        out.push_back(std::move(r));
    }
    if (in.bad()) throw IoError("I/O failure while reading " + path);
    return out;
}

// =============================================================================
// Comparison report
// =============================================================================

enum class CompareUnit { conversation, turn };

struct SideSummary {
    std::string path;
    std::size_t records = 0;
    std::size_t ok = 0;
    std::size_t failed_closed = 0;
    std::array<double, kMetricCount> metric_means{};  // over ok records
    double final_mean = 0.0;                          // over ok records
    stats::QueryLengthStats query_stats;
    bool correlations_valid = false;
    stats::CorrelationMatrix correlations;
};

struct CompareReport {
    SideSummary a;
    SideSummary b;
    CompareUnit unit = CompareUnit::conversation;
    stats::StatReport paired;
};

namespace detail {

inline SideSummary summarize_side(const std::string& path,
                                  const std::vector<GranularRecord>& records) {
    SideSummary s;
    s.path = path;
    s.records = records.size();

    std::vector<std::array<double, kMetricCount>> score_rows;
    std::vector<CaseTurn> query_probe;
    for (const auto& r : records) {
        CaseTurn t;
        t.query = r.query;
        query_probe.push_back(std::move(t));
        if (!r.ok) {
            ++s.failed_closed;
            continue;
        }
        ++s.ok;
        score_rows.push_back(r.scores);
        for (std::size_t i = 0; i < kMetricCount; ++i) s.metric_means[i] += r.scores[i];
        s.final_mean += r.final_score;
    }
    if (s.ok > 0) {
        for (auto& m : s.metric_means) m /= static_cast<double>(s.ok);
        s.final_mean /= static_cast<double>(s.ok);
    }
    s.query_stats = stats::query_length_stats(query_probe);
    if (score_rows.size() >= 2) {
        s.correlations = stats::metric_correlation_matrix(score_rows);
        s.correlations_valid = true;
    }
    return s;
}

/// Unit scores for the paired test: per-conversation means by default, raw
/// turn composites when unit = turn. Only ok records contribute.
inline std::vector<std::pair<std::string, double>> unit_scores(
    const std::vector<GranularRecord>& records, CompareUnit unit) {
    if (unit == CompareUnit::turn) {
        std::vector<std::pair<std::string, double>> out;
        for (const auto& r : records) {
            if (r.ok) {
                out.emplace_back(r.conversation_id + "#" + std::to_string(r.turn_index),
                                 r.final_score);
            }
        }
        return out;
    }
    std::vector<TurnFinal> finals;
    finals.reserve(records.size());
    for (const auto& r : records) {
        TurnFinal t;
        t.conversation_id = r.conversation_id;
        t.turn_index = r.turn_index;
        if (r.ok) t.final_score = r.final_score;
        finals.push_back(std::move(t));
    }
    const ConversationScoreResult conv = conversation_scores(finals);
    std::vector<std::pair<std::string, double>> out;
    out.reserve(conv.scores.size());
    for (const auto& c : conv.scores) out.emplace_back(c.conversation_id, c.mean_final);
    return out;
}

}  // namespace detail

/// Paired comparison of two evaluation runs over their shared units.
inline CompareReport run_compare(const std::string& path_a, const std::string& path_b,
                                 CompareUnit unit = CompareUnit::conversation,
                                 std::size_t resamples = 10000, std::uint64_t seed = 0,
                                 double level = 0.95) {
    const auto records_a = read_granular(path_a);
    const auto records_b = read_granular(path_b);

    CompareReport report;
    report.unit = unit;
    report.a = detail::summarize_side(path_a, records_a);
    report.b = detail::summarize_side(path_b, records_b);

    const auto scores_a = detail::unit_scores(records_a, unit);
    const auto scores_b = detail::unit_scores(records_b, unit);
    stats::PairedSample sample = stats::build_paired(scores_a, scores_b);
    if (sample.ids.empty()) {
        throw ConfigError("the two runs share no scored unit ids; nothing to compare");
    }
    report.paired = stats::compare_paired(sample, resamples, seed, level);
    return report;
}

// =============================================================================
// Report serialization
// =============================================================================

namespace detail {

inline std::string fmt6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

inline nlohmann::ordered_json side_to_json(const SideSummary& s) {
    nlohmann::ordered_json j;
    j["path"] = s.path;
    j["records"] = s.records;
    j["ok"] = s.ok;
    j["failed_closed"] = s.failed_closed;
    nlohmann::ordered_json means;
    for (std::size_t i = 0; i < kMetricCount; ++i) {
        means[metric_keys()[i]] = s.ok > 0 ? nlohmann::ordered_json(s.metric_means[i])
                                           : nlohmann::ordered_json(nullptr);
    }
    j["metric_means"] = std::move(means);
    j["final_mean"] = s.ok > 0 ? nlohmann::ordered_json(s.final_mean)
                               : nlohmann::ordered_json(nullptr);
    j["query_words"] = {{"count", s.query_stats.count},
                        {"mean", s.query_stats.mean_words},
                        {"median", s.query_stats.median_words}};
    if (s.correlations_valid) {
        nlohmann::ordered_json constant = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < kMetricCount; ++i) {
            if (s.correlations.constant_column[i]) constant.push_back(metric_keys()[i]);
        }
        j["constant_metric_columns"] = std::move(constant);
    }
    return j;
}

}  // namespace detail

inline nlohmann::ordered_json compare_to_json(const CompareReport& r) {
    nlohmann::ordered_json j;
    j["unit"] = r.unit == CompareUnit::conversation ? "conversation" : "turn";
    j["side_a"] = detail::side_to_json(r.a);
    j["side_b"] = detail::side_to_json(r.b);
    j["paired"] = {
        {"n", r.paired.n},
        {"mean_a", r.paired.mean_x},
        {"mean_b", r.paired.mean_y},
        {"delta", r.paired.delta},
        {"wilcoxon",
         {{"w", r.paired.wilcoxon.w_statistic},
          {"w_plus", r.paired.wilcoxon.w_plus},
          {"w_minus", r.paired.wilcoxon.w_minus},
          {"p_two_sided", r.paired.wilcoxon.p_value},
          {"n_effective", r.paired.wilcoxon.n_effective},
          {"zeros_dropped", r.paired.wilcoxon.zeros_dropped},
          {"ties_present", r.paired.wilcoxon.ties_present},
          {"degenerate", r.paired.wilcoxon.degenerate},
          {"method", r.paired.wilcoxon.method}}},
        {"bootstrap_ci",
         {{"lo", r.paired.ci.lo},
          {"hi", r.paired.ci.hi},
          {"level", r.paired.ci.level},
          {"resamples", r.paired.ci.resamples},
          {"seed", r.paired.ci.seed}}},
        {"notes", r.paired.notes},
    };
    return j;
}

/// Metric-by-metric means of both sides, one row per metric plus the final
/// composite, as CSV.
inline std::string metric_means_csv(const CompareReport& r) {
    std::string csv = "metric,side_a_mean,side_b_mean,delta\n";
    for (std::size_t i = 0; i < kMetricCount; ++i) {
        csv += metric_keys()[i];
        if (r.a.ok > 0 && r.b.ok > 0) {
            csv += "," + detail::fmt6(r.a.metric_means[i]) + "," +
                   detail::fmt6(r.b.metric_means[i]) + "," +
                   detail::fmt6(r.a.metric_means[i] - r.b.metric_means[i]);
        } else {
            csv += ",,,";
        }
        csv += "\n";
    }
    csv += "final";
    if (r.a.ok > 0 && r.b.ok > 0) {
        csv += "," + detail::fmt6(r.a.final_mean) + "," + detail::fmt6(r.b.final_mean) + "," +
               detail::fmt6(r.a.final_mean - r.b.final_mean);
    } else {
        csv += ",,,";
    }
    csv += "\n";
    return csv;
}

/// 8x8 correlation matrix as CSV; undefined entries are left empty.
inline std::string correlation_csv(const stats::CorrelationMatrix& m) {
    std::string csv = "metric";
    for (const auto& k : metric_keys()) csv += "," + k;
    csv += "\n";
    for (std::size_t i = 0; i < kMetricCount; ++i) {
        csv += metric_keys()[i];
        for (std::size_t j = 0; j < kMetricCount; ++j) {
            csv += ",";
            if (!std::isnan(m.values[i][j])) csv += detail::fmt6(m.values[i][j]);
        }
        csv += "\n";
    }
    return csv;
}

struct CompareArtifacts {
    std::string report_path;
    std::string metric_means_path;
    std::string correlation_a_path;
    std::string correlation_b_path;
};

/// Write the comparison outputs: report.json, metric_means.csv, and one
/// correlation CSV per side when defined.
inline CompareArtifacts write_compare_report(const CompareReport& r, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    CompareArtifacts paths;
    paths.report_path = (fs::path(dir) / "report.json").string();
    paths.metric_means_path = (fs::path(dir) / "metric_means.csv").string();

    std::ofstream report(paths.report_path, std::ios::trunc);
    if (!report) throw IoError("cannot write " + paths.report_path);
    report << compare_to_json(r).dump(2) << "\n";

    std::ofstream means(paths.metric_means_path, std::ios::trunc);
    if (!means) throw IoError("cannot write " + paths.metric_means_path);
    means << metric_means_csv(r);

    if (r.a.correlations_valid) {
        paths.correlation_a_path = (fs::path(dir) / "correlation_a.csv").string();
        std::ofstream ca(paths.correlation_a_path, std::ios::trunc);
        if (!ca) throw IoError("cannot write " + paths.correlation_a_path);
        ca << correlation_csv(r.a.correlations);
    }
    if (r.b.correlations_valid) {
        paths.correlation_b_path = (fs::path(dir) / "correlation_b.csv").string();
        std::ofstream cb(paths.correlation_b_path, std::ios::trunc);
        if (!cb) throw IoError("cannot write " + paths.correlation_b_path);
        cb << correlation_csv(r.b.correlations);
    }
    return paths;
}

/// Human-readable comparison summary for the terminal.
inline std::string format_compare_text(const CompareReport& r) {
    std::ostringstream out;
    out << "unit: " << (r.unit == CompareUnit::conversation ? "conversation" : "turn") << "\n";
    out << "side A: " << r.a.path << " (" << r.a.ok << " ok / " << r.a.records << " rows)\n";
    out << "side B: " << r.b.path << " (" << r.b.ok << " ok / " << r.b.records << " rows)\n";
    out << "paired units: " << r.paired.n << "\n";
    out << "mean A: " << detail::fmt6(r.paired.mean_x) << "  mean B: "
        << detail::fmt6(r.paired.mean_y) << "  delta: " << detail::fmt6(r.paired.delta) << "\n";
    if (r.paired.wilcoxon.degenerate) {
        out << "wilcoxon: degenerate (all differences zero), p = 1.0\n";
    } else {
        out << "wilcoxon: W = " << r.paired.wilcoxon.w_statistic
            << ", p = " << r.paired.wilcoxon.p_value << " (" << r.paired.wilcoxon.method
            << ", n_eff = " << r.paired.wilcoxon.n_effective << ", zeros dropped = "
            << r.paired.wilcoxon.zeros_dropped << ")\n";
    }
    out << "bootstrap " << static_cast<int>(r.paired.ci.level * 100) << "% CI: ["
        << detail::fmt6(r.paired.ci.lo) << ", " << detail::fmt6(r.paired.ci.hi) << "] ("
        << r.paired.ci.resamples << " resamples, seed " << r.paired.ci.seed << ")\n";
    out << "query words: A mean " << detail::fmt6(r.a.query_stats.mean_words) << " median "
        << detail::fmt6(r.a.query_stats.median_words) << "; B mean "
        << detail::fmt6(r.b.query_stats.mean_words) << " median "
        << detail::fmt6(r.b.query_stats.median_words) << "\n";
    out << "\nper-metric means (A / B / delta):\n";
    for (std::size_t i = 0; i < kMetricCount; ++i) {
        out << "  " << metric_keys()[i] << ": ";
        if (r.a.ok > 0 && r.b.ok > 0) {
            out << detail::fmt6(r.a.metric_means[i]) << " / " << detail::fmt6(r.b.metric_means[i])
                << " / " << detail::fmt6(r.a.metric_means[i] - r.b.metric_means[i]);
        } else {
            out << "(insufficient scored rows)";
        }
        out << "\n";
    }
    out << "  final: ";
    if (r.a.ok > 0 && r.b.ok > 0) {
        out << detail::fmt6(r.a.final_mean) << " / " << detail::fmt6(r.b.final_mean) << " / "
            << detail::fmt6(r.a.final_mean - r.b.final_mean) << "\n";
    } else {
        out << "(insufficient scored rows)\n";
    }
    return out.str();
}

// =============================================================================
// Agreement report
// =============================================================================

struct AgreementReport {
    double threshold = 0.5;
    std::vector<stats::MetricAgreement> metrics;
};

/// Judge-vs-human agreement over a finished run and a label file.
inline AgreementReport run_agreement(const std::string& eval_path, const std::string& labels_path,
                                     double threshold = 0.5) {
    const auto rows = read_granular(eval_path);
    std::vector<EvalRecord> records;
    records.reserve(rows.size());
    for (const auto& row : rows) {
        EvalRecord rec;
        rec.turn.conversation_id = row.conversation_id;
        rec.turn.turn_index = row.turn_index;
        if (row.ok) {
            rec.status = EvalStatus::ok;
            JudgeVerdict v;
            v.scores = row.scores;
            rec.verdict = std::move(v);
        } else {
            rec.status = EvalStatus::failed_closed;
        }
        records.push_back(std::move(rec));
    }

    std::ifstream in(labels_path);
    if (!in) throw IoError("cannot open labels file: " + labels_path);
    const std::vector<HumanLabel> labels = parse_human_labels(in);

    AgreementReport report;
    report.threshold = threshold;
    report.metrics = stats::human_agreement(records, labels, threshold);
    return report;
}

inline nlohmann::ordered_json agreement_to_json(const AgreementReport& r) {
    nlohmann::ordered_json j;
    j["threshold"] = r.threshold;
    nlohmann::ordered_json metrics = nlohmann::ordered_json::array();
    for (const auto& m : r.metrics) {
        nlohmann::ordered_json mj;
        mj["metric"] = m.metric;
        mj["score_metric"] = m.score_metric;
        mj["included"] = m.included;
        mj["tie_excluded"] = m.tie_excluded;
        mj["skipped_unknown"] = m.skipped_unknown;
        mj["matches"] = m.matches;
        mj["agreement"] = m.included > 0 ? nlohmann::ordered_json(m.agreement)
                                         : nlohmann::ordered_json(nullptr);
        metrics.push_back(std::move(mj));
    }
    j["metrics"] = std::move(metrics);
    return j;
}

inline std::string format_agreement_text(const AgreementReport& r) {
    std::ostringstream out;
    out << "binarization threshold: " << r.threshold << "\n";
    if (r.metrics.empty()) {
        out << "no labeled metrics found\n";
        return out.str();
    }
    for (const auto& m : r.metrics) {
        out << m.metric << ": ";
        if (m.included > 0) {
            out << detail::fmt6(m.agreement * 100.0) << "% (" << m.matches << "/" << m.included
                << " turns";
        } else {
            out << "undefined (0 usable turns";
        }
        if (m.tie_excluded > 0) out << ", " << m.tie_excluded << " tie-excluded";
        if (m.skipped_unknown > 0) out << ", " << m.skipped_unknown << " skipped";
        out << ")\n";
    }
    return out.str();
}

// =============================================================================
// Cost report
// =============================================================================

struct CostReport {
    stats::CostEstimate estimate;
    double rounded_per_turn = 0.0;  // per-turn rounded to the nearest 0.001
    double rounded_total = 0.0;     // rounded per-turn times the turn count
};

inline CostReport make_cost_report(const stats::CostEstimate& estimate) {
    CostReport r;
    r.estimate = estimate;
    r.rounded_per_turn = std::round(estimate.per_turn_dollars * 1000.0) / 1000.0;
    r.rounded_total = r.rounded_per_turn * static_cast<double>(estimate.turns);
    return r;
}

/// Cost from a run manifest's usage counters.
inline CostReport run_cost_from_manifest(const std::string& manifest_path,
                                         stats::TokenPrices prices = {}) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open manifest: " + manifest_path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error&) {
        throw ConfigError("manifest is not valid JSON: " + manifest_path);
    }
    if (!doc.contains("usage") || !doc["usage"].is_object() ||
        !doc["usage"].contains("input_tokens") || !doc["usage"].contains("output_tokens") ||
        !doc.contains("results") || !doc["results"].is_object() ||
        !doc["results"].contains("evaluated")) {
        throw ConfigError(
            "manifest has no usage counters; pass explicit token counts instead");
    }
    const long t_in = doc["usage"]["input_tokens"].get<long>();
    const long t_out = doc["usage"]["output_tokens"].get<long>();
    const auto turns = doc["results"]["evaluated"].get<std::size_t>();
    return make_cost_report(stats::estimate_run_cost(t_in, t_out, turns, prices));
}

/// Cost from explicit per-turn token counts and a turn count.
inline CostReport run_cost_from_tokens(long input_tokens_per_turn, long output_tokens_per_turn,
                                       std::size_t turns, stats::TokenPrices prices = {}) {
    if (turns == 0) {
        return make_cost_report(stats::estimate_run_cost(0, 0, 0, prices));
    }
    const long total_in = input_tokens_per_turn * static_cast<long>(turns);
    const long total_out = output_tokens_per_turn * static_cast<long>(turns);
    return make_cost_report(stats::estimate_run_cost(total_in, total_out, turns, prices));
}

inline nlohmann::ordered_json cost_to_json(const CostReport& r) {
    nlohmann::ordered_json j;
    j["turns"] = r.estimate.turns;
    j["input_tokens"] = r.estimate.input_tokens;
    j["output_tokens"] = r.estimate.output_tokens;
    j["input_price_per_token"] = r.estimate.prices.input_per_token;
    j["output_price_per_token"] = r.estimate.prices.output_per_token;
    j["per_turn_dollars"] = r.estimate.per_turn_dollars;
    j["total_dollars"] = r.estimate.total_dollars;
    j["rounded_per_turn_dollars"] = r.rounded_per_turn;
    j["rounded_total_dollars"] = r.rounded_total;
    return j;
}

/// Both derivations spelled out: the exact linear total and the total a
/// reader gets from the per-turn figure rounded to tenths of a cent.
inline std::string format_cost_text(const CostReport& r) {
    char buf[160];
    std::ostringstream out;
    out << "turns: " << r.estimate.turns << "\n";
    out << "input tokens: " << r.estimate.input_tokens
        << "  output tokens: " << r.estimate.output_tokens << "\n";
    std::snprintf(buf, sizeof(buf), "exact: $%.6f per turn, $%.6f total\n",
                  r.estimate.per_turn_dollars, r.estimate.total_dollars);
    out << buf;
    std::snprintf(buf, sizeof(buf),
                  "rounded: $%.3f per turn, which extrapolates to $%.3f total\n",
                  r.rounded_per_turn, r.rounded_total);
    out << buf;
    return out.str();
}

}  // namespace caseval
