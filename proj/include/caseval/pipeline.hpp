#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "caseval/case_model.hpp"
#include "caseval/judge_client.hpp"
#include "caseval/prompt.hpp"
#include "caseval/rubric.hpp"
#include "caseval/scoring.hpp"
#include "caseval/stats.hpp"
#include "caseval/util.hpp"
#include "caseval/verdict.hpp"
#include "caseval/version.hpp"

namespace caseval {

// =============================================================================
// Options and result
// =============================================================================

struct EvaluateOptions {
    std::string input_path;
    std::string output_dir;
    JudgeConfig judge;
    Rubric rubric = default_rubric();
    WeightProfile profile = builtin_profile("default");
    int max_retries = 2;
    int parallelism = 4;
    std::uint64_t seed = 0;
    DatasetMode dataset_mode = DatasetMode::lenient;
    VerdictMode verdict_mode = VerdictMode::strict;
    // Pin the manifest timestamp and duration so two identical runs produce
    // identical bytes; for audit runs leave it off and get wall-clock values.
    bool stable_output = false;
};

struct EvaluateResult {
    std::vector<EvalRecord> records;  // input order
    std::vector<RejectedRow> rejects;
    std::size_t ok = 0;
    std::size_t failed_closed = 0;
    ConversationScoreResult conversations;
    long input_tokens = 0;
    long output_tokens = 0;
    bool usage_fully_reported = true;

    std::string granular_path;
    std::string compact_path;
    std::string failures_path;
    std::string rejects_path;
    std::string manifest_path;
};

// =============================================================================
// Record serialization
// =============================================================================

namespace detail {

inline nlohmann::ordered_json usage_to_json(const TokenUsage& u) {
    return {{"input_tokens", u.input_tokens},
            {"output_tokens", u.output_tokens},
            {"reported", u.reported}};
}

inline nlohmann::ordered_json record_to_json(const EvalRecord& r) {
    nlohmann::ordered_json j = turn_to_json(r.turn);
    j["status"] = r.status == EvalStatus::ok ? "ok" : "failed_closed";
    j["attempts"] = r.attempts;
    if (r.status == EvalStatus::ok) {
        nlohmann::ordered_json v = verdict_to_json(*r.verdict);
        for (auto it = v.begin(); it != v.end(); ++it) j[it.key()] = it.value();
        j["final_score"] = *r.final_score;
        nlohmann::ordered_json sev;
        const auto& keys = metric_keys();
        for (std::size_t i = 0; i < kMetricCount; ++i) {
            sev[keys[i]] = band_label(severity_band(r.verdict->scores[i]));
        }
        j["metric_severity"] = std::move(sev);
        j["final_severity"] = band_label(severity_band(*r.final_score));
    }
    nlohmann::ordered_json attempts = nlohmann::ordered_json::array();
    for (const auto& a : r.attempt_log) {
        nlohmann::ordered_json aj;
        aj["raw"] = a.raw;
        if (a.failure) aj["failure"] = *a.failure;
        aj["warnings"] = a.warnings;
        aj["usage"] = usage_to_json(a.usage);
        attempts.push_back(std::move(aj));
    }
    j["attempt_log"] = std::move(attempts);
    return j;
}

inline std::string format_score(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

inline std::string compact_header() {
    std::string h = "conversation_id,turn_index,case_subject";
    for (const auto& k : metric_keys()) h += "," + k + "_score";
    h += ",final_score,severity_band";
    return h;
}

inline std::string compact_row(const EvalRecord& r) {
    std::string row = util::csv_escape(r.turn.conversation_id) + "," +
                      std::to_string(r.turn.turn_index) + "," +
                      util::csv_escape(r.turn.case_subject);
    if (r.status == EvalStatus::ok) {
        for (double s : r.verdict->scores) row += "," + format_score(s);
        row += "," + format_score(*r.final_score);
        row += ",";
        row += band_label(severity_band(*r.final_score));
    } else {
        for (std::size_t i = 0; i < kMetricCount; ++i) row += ",";
        row += ",,failed_closed";
    }
    return row;
}

}  // namespace detail

// =============================================================================
// Batch evaluation
// =============================================================================

/// Evaluate a dataset end to end: parse, judge under a bounded worker pool,
/// score, and write the four run artifacts into the output directory. Output
/// row order always equals input row order. Fail-closed rows never abort the
/// run; fatal config and dataset errors throw before any judging starts.
/// A non-null backend_override replaces the configured backend; tests use it
/// to drive scripted judges through the full path.
inline EvaluateResult run_evaluate(const EvaluateOptions& options,
                                   JudgeBackend* backend_override = nullptr) {
    const auto start = std::chrono::steady_clock::now();
    const std::time_t started_at = options.stable_output ? 0 : std::time(nullptr);

    validate_rubric(options.rubric);
    validate_profile(options.profile);
    if (backend_override == nullptr) validate_judge_config(options.judge);
    if (options.parallelism < 1) throw ConfigError("parallelism must be >= 1");
    if (options.max_retries < 0) throw ConfigError("max_retries must be >= 0");
    if (options.output_dir.empty()) throw ConfigError("output directory is required");

    std::ifstream in(options.input_path);
    if (!in) throw IoError("cannot open dataset: " + options.input_path);
    DatasetParseResult dataset = parse_dataset(in, options.dataset_mode);
    in.close();

    std::unique_ptr<JudgeBackend> owned;
    JudgeBackend* backend = backend_override;
    if (backend == nullptr) {
        owned = make_backend(options.judge);
        backend = owned.get();
    }

    EvaluateResult result;
    result.rejects = std::move(dataset.rejects);
    result.records.resize(dataset.turns.size());

    const std::size_t n = dataset.turns.size();
    if (n > 0) {
        std::atomic<std::size_t> next{0};
        const std::size_t workers =
            std::min<std::size_t>(static_cast<std::size_t>(options.parallelism), n);
        auto work = [&]() {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) break;
                const CaseTurn& turn = dataset.turns[i];
                try {
                    PromptText prompt = build_prompt(turn, options.rubric);
                    result.records[i] = evaluate_turn(turn, prompt, *backend,
                                                      options.max_retries, options.verdict_mode);
                } catch (const std::exception& e) {
                    EvalRecord rec;
                    rec.turn = turn;
                    rec.status = EvalStatus::failed_closed;
                    AttemptLog log;
                    log.failure = std::string("internal: ") + e.what();
                    rec.attempt_log.push_back(std::move(log));
                    rec.attempts = 1;
                    result.records[i] = std::move(rec);
                }
            }
        };
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    std::vector<TurnFinal> finals;
    finals.reserve(result.records.size());
    for (auto& rec : result.records) {
        if (rec.status == EvalStatus::ok) {
            rec.final_score = aggregate_final(rec.verdict->scores, options.profile);
            ++result.ok;
        } else {
            ++result.failed_closed;
        }
        finals.push_back({rec.turn.conversation_id, rec.turn.turn_index, rec.final_score});
        for (const auto& a : rec.attempt_log) {
            result.input_tokens += a.usage.input_tokens;
            result.output_tokens += a.usage.output_tokens;
            if (!a.usage.reported) result.usage_fully_reported = false;
        }
    }
    result.conversations = conversation_scores(finals);

    namespace fs = std::filesystem;
    fs::create_directories(options.output_dir);
    const fs::path dir(options.output_dir);
    result.granular_path = (dir / "granular.jsonl").string();
    result.compact_path = (dir / "compact.csv").string();
    result.failures_path = (dir / "failures.jsonl").string();
    result.rejects_path = (dir / "rejects.jsonl").string();
    result.manifest_path = (dir / "manifest.json").string();

    {
        std::ofstream granular(result.granular_path, std::ios::trunc);
        std::ofstream compact(result.compact_path, std::ios::trunc);
        std::ofstream failures(result.failures_path, std::ios::trunc);
        std::ofstream rejects(result.rejects_path, std::ios::trunc);
        if (!granular || !compact || !failures || !rejects) {
            throw IoError("cannot write outputs into " + options.output_dir);
        }
        compact << detail::compact_header() << "\n";
        for (const auto& rec : result.records) {
            const std::string line = detail::record_to_json(rec).dump();
            granular << line << "\n";
            compact << detail::compact_row(rec) << "\n";
            if (rec.status == EvalStatus::failed_closed) failures << line << "\n";
        }
        for (const auto& rej : result.rejects) {
            nlohmann::ordered_json j;
            j["line_number"] = rej.line_number;
            j["reason"] = rej.reason;
            j["raw_line"] = rej.raw_line;
            rejects << j.dump() << "\n";
        }
    }

    const stats::CostEstimate cost = stats::estimate_run_cost(
        result.input_tokens, result.output_tokens, result.records.size());
    const double duration =
        options.stable_output
            ? 0.0
            : std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    nlohmann::ordered_json manifest;
    manifest["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
    manifest["timestamp"] = util::iso8601_utc(started_at);
    manifest["duration_seconds"] = duration;
    manifest["dataset"] = {{"path", options.input_path},
                           {"parsed", result.records.size()},
                           {"rejected", result.rejects.size()}};
    manifest["judge"] = {
        {"kind", backend->name()},
        {"model", options.judge.model},
        {"endpoint", options.judge.endpoint},
        {"temperature", options.judge.temperature},
        {"top_p", options.judge.top_p},
        {"max_tokens", options.judge.max_tokens},
        {"fingerprint", judge_fingerprint(options.judge)},
    };
    manifest["rubric_fingerprint"] = rubric_fingerprint(options.rubric);
    manifest["prompt_fingerprint"] = prompt_fingerprint(options.rubric);
    nlohmann::ordered_json weights;
    for (std::size_t i = 0; i < kMetricCount; ++i) {
        weights[metric_keys()[i]] = options.profile.weights[i];
    }
    manifest["profile"] = {{"name", options.profile.name}, {"weights", std::move(weights)}};
    manifest["modes"] = {
        {"dataset", options.dataset_mode == DatasetMode::strict ? "strict" : "lenient"},
        {"verdict", options.verdict_mode == VerdictMode::strict ? "strict" : "tolerant"}};
    manifest["max_retries"] = options.max_retries;
    manifest["parallelism"] = options.parallelism;
    manifest["seed"] = options.seed;
    nlohmann::ordered_json omitted = nlohmann::ordered_json::array();
    for (const auto& id : result.conversations.omitted) omitted.push_back(id);
    manifest["results"] = {{"evaluated", result.records.size()},
                           {"ok", result.ok},
                           {"failed_closed", result.failed_closed},
                           {"conversations_scored", result.conversations.scores.size()},
                           {"conversations_omitted", std::move(omitted)}};
    manifest["usage"] = {{"input_tokens", result.input_tokens},
                         {"output_tokens", result.output_tokens},
                         {"fully_reported", result.usage_fully_reported}};
    manifest["cost"] = {{"input_price_per_token", cost.prices.input_per_token},
                        {"output_price_per_token", cost.prices.output_per_token},
                        {"per_turn_dollars", cost.per_turn_dollars},
                        {"total_dollars", cost.total_dollars}};
    manifest["outputs"] = {{"granular", "granular.jsonl"},
                           {"compact", "compact.csv"},
                           {"failures", "failures.jsonl"},
                           {"rejects", "rejects.jsonl"}};

    std::ofstream mf(result.manifest_path, std::ios::trunc);
    if (!mf) throw IoError("cannot write manifest into " + options.output_dir);
    mf << manifest.dump(2) << "\n";

    return result;
}

}  // namespace caseval
