#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "caseval/case_model.hpp"
#include "caseval/judge_client.hpp"
#include "caseval/prompt.hpp"
#include "caseval/rubric.hpp"
#include "caseval/util.hpp"

namespace caseval {

// =============================================================================
// Verdict schema
// =============================================================================

/// A validated judge verdict: eight scores and eight justifications in
/// canonical metric order. Instances exist only after full validation;
/// scores are accepted, never clamped.
struct JudgeVerdict {
    std::array<double, kMetricCount> scores{};
    std::array<std::string, kMetricCount> justifications;

    bool operator==(const JudgeVerdict&) const = default;
};

inline nlohmann::ordered_json verdict_to_json(const JudgeVerdict& v) {
    nlohmann::ordered_json j;
    const auto& keys = metric_keys();
    for (std::size_t i = 0; i < kMetricCount; ++i) {
        j[keys[i] + "_score"] = v.scores[i];
        j[keys[i] + "_justification"] = v.justifications[i];
    }
    return j;
}

// =============================================================================
// Validation
// =============================================================================

enum class VerdictErrorKind {
    not_json,
    missing_key,
    unknown_key,
    score_out_of_range,
    empty_justification,
    non_numeric_score,
};

struct ValidationError {
    VerdictErrorKind kind = VerdictErrorKind::not_json;
    std::string key;  // offending schema key when applicable
    std::string detail;

    std::string format() const {
        const char* label = "not_json";
        switch (kind) {
            case VerdictErrorKind::not_json: label = "not_json"; break;
            case VerdictErrorKind::missing_key: label = "missing_key"; break;
            case VerdictErrorKind::unknown_key: label = "unknown_key"; break;
            case VerdictErrorKind::score_out_of_range: label = "score_out_of_range"; break;
            case VerdictErrorKind::empty_justification: label = "empty_justification"; break;
            case VerdictErrorKind::non_numeric_score: label = "non_numeric_score"; break;
        }
        std::string s = label;
        if (!key.empty()) s += " [" + key + "]";
        if (!detail.empty()) s += ": " + detail;
        return s;
    }
};

enum class VerdictMode { strict, tolerant };

struct VerdictParseResult {
    std::optional<JudgeVerdict> verdict;
    std::optional<ValidationError> error;
    std::vector<std::string> warnings;
};

namespace detail {

/// Find the first top-level brace-balanced JSON object in free text,
/// respecting string literals and escapes. Returns nullopt when no balanced
/// object exists.
inline std::optional<std::string> extract_object(const std::string& text) {
    const auto start = text.find('{');
    if (start == std::string::npos) return std::nullopt;
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return text.substr(start, i - start + 1);
        }
    }
    return std::nullopt;
}

}  // namespace detail

/// Validate raw judge text against the 16-key schema. Strict mode demands the
/// text be exactly one JSON object with exactly the schema keys. Tolerant mode
/// additionally accepts one object embedded in surrounding prose and downgrades
/// unknown keys to warnings. The first violation in canonical metric order is
/// reported; out-of-range scores are rejected, never clamped.
inline VerdictParseResult parse_verdict(const std::string& raw, VerdictMode mode) {
    VerdictParseResult result;

    nlohmann::json doc;
    bool parsed = false;
    try {
        doc = nlohmann::json::parse(raw);
        parsed = true;
    } catch (const nlohmann::json::parse_error&) {
    }
    if (parsed && !doc.is_object()) {
        if (mode == VerdictMode::strict) {
            result.error = {VerdictErrorKind::not_json, "", "top-level value is not an object"};
            return result;
        }
        parsed = false;
    }
    if (!parsed) {
        if (mode == VerdictMode::strict) {
            result.error = {VerdictErrorKind::not_json, "", "text is not a JSON object"};
            return result;
        }
        auto embedded = detail::extract_object(raw);
        if (!embedded) {
            result.error = {VerdictErrorKind::not_json, "", "no JSON object found in text"};
            return result;
        }
        try {
            doc = nlohmann::json::parse(*embedded);
        } catch (const nlohmann::json::parse_error&) {
            result.error = {VerdictErrorKind::not_json, "", "embedded object is not valid JSON"};
            return result;
        }
        if (!doc.is_object()) {
            result.error = {VerdictErrorKind::not_json, "", "embedded value is not an object"};
            return result;
        }
        result.warnings.push_back("object extracted from surrounding prose");
    }

    JudgeVerdict v;
    const auto& keys = metric_keys();
    for (std::size_t i = 0; i < kMetricCount; ++i) {
        const std::string score_key = keys[i] + "_score";
        const std::string just_key = keys[i] + "_justification";

        auto sit = doc.find(score_key);
        if (sit == doc.end()) {
            result.error = {VerdictErrorKind::missing_key, score_key, ""};
            return result;
        }
        if (!sit->is_number()) {
            result.error = {VerdictErrorKind::non_numeric_score, score_key,
                            "value has type " + std::string(sit->type_name())};
            return result;
        }
        const double s = sit->get<double>();
        if (!std::isfinite(s) || s < 0.0 || s > 1.0) {
            result.error = {VerdictErrorKind::score_out_of_range, score_key,
                            "value " + std::to_string(s) + " outside [0,1]"};
            return result;
        }
        v.scores[i] = s;

        auto jit = doc.find(just_key);
        if (jit == doc.end()) {
            result.error = {VerdictErrorKind::missing_key, just_key, ""};
            return result;
        }
        if (!jit->is_string() || util::trim(jit->get<std::string>()).empty()) {
            result.error = {VerdictErrorKind::empty_justification, just_key,
                            "justification must be a non-empty string"};
            return result;
        }
        v.justifications[i] = jit->get<std::string>();
    }

    for (auto it = doc.begin(); it != doc.end(); ++it) {
        bool known = false;
        for (const auto& k : keys) {
            if (it.key() == k + "_score" || it.key() == k + "_justification") {
                known = true;
                break;
            }
        }
        if (known) continue;
        if (mode == VerdictMode::strict) {
            result.error = {VerdictErrorKind::unknown_key, it.key(), ""};
            return result;
        }
        result.warnings.push_back("ignored unknown key '" + it.key() + "'");
    }

    result.verdict = std::move(v);
    return result;
}

// =============================================================================
// Per-turn evaluation with bounded retries
// =============================================================================

enum class EvalStatus { ok, failed_closed };

struct AttemptLog {
    std::string raw;                     // backend text, empty on transport failure
    std::optional<std::string> failure;  // absent for the winning attempt
    std::vector<std::string> warnings;
    TokenUsage usage;
};

/// Everything known about one evaluated turn: the input, the outcome, and the
/// complete raw history of every attempt. Nothing is discarded on failure.
struct EvalRecord {
    CaseTurn turn;
    EvalStatus status = EvalStatus::failed_closed;
    std::optional<JudgeVerdict> verdict;  // present iff status == ok
    int attempts = 0;                     // == attempt_log.size()
    std::vector<AttemptLog> attempt_log;
    std::optional<double> final_score;    // filled by the pipeline when ok
};

/// Run the judge on one turn with the identical prompt up to max_retries + 1
/// times. The first attempt that survives validation wins. Validation
/// failures consume the retry budget; a TransportError has already consumed
/// the transport budget inside the backend, so it closes the record at once.
inline EvalRecord evaluate_turn(const CaseTurn& turn, const PromptText& prompt,
                                JudgeBackend& backend, int max_retries,
                                VerdictMode mode = VerdictMode::strict) {
    if (max_retries < 0) throw ConfigError("max_retries must be >= 0");

    EvalRecord record;
    record.turn = turn;

    const int budget = max_retries + 1;
    for (int attempt = 1; attempt <= budget; ++attempt) {
        AttemptLog log;
        RawJudgeOutput out;
        try {
            out = backend.invoke(turn, prompt);
        } catch (const TransportError& e) {
            log.failure = "transport: " + std::string(e.what());
            record.attempt_log.push_back(std::move(log));
            break;
        }
        log.raw = out.text;
        log.usage = out.usage;

        VerdictParseResult parsed = parse_verdict(out.text, mode);
        log.warnings = parsed.warnings;
        if (parsed.verdict) {
            record.attempt_log.push_back(std::move(log));
            record.verdict = std::move(parsed.verdict);
            record.status = EvalStatus::ok;
            break;
        }
        log.failure = parsed.error->format();
        record.attempt_log.push_back(std::move(log));
    }

    record.attempts = static_cast<int>(record.attempt_log.size());
    return record;
}

}  // namespace caseval
