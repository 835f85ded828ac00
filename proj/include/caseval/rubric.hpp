#pragma once

#include <array>
#include <cstddef>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "caseval/util.hpp"

namespace caseval {

inline constexpr std::size_t kMetricCount = 8;

// =============================================================================
// Metric definitions
// =============================================================================

struct MetricDef {
    std::string key;
    std::string title;
    std::string rubric_text;
    std::string score_field;          // "<key>_score"
    std::string justification_field;  // "<key>_justification"
};

struct SeverityAnchor {
    std::string name;   // None | Minor | Moderate | Severe
    std::string alias;  // vocabulary the judge may also use in prose
    double lower = 0.0;
    double upper = 0.0;  // inclusive
    std::string guidance;
};

/// A rubric is the full instruction package shown to the judge: the eight
/// scored dimensions plus the shared severity anchors.
struct Rubric {
    std::vector<MetricDef> metrics;
    std::vector<SeverityAnchor> anchors;
};

namespace detail {

inline MetricDef make_metric(std::string key, std::string title, std::string rubric_text) {
    MetricDef m;
    m.score_field = key + "_score";
    m.justification_field = key + "_justification";
    m.key = std::move(key);
    m.title = std::move(title);
    m.rubric_text = std::move(rubric_text);
    return m;
}

}  // namespace detail

/// The built-in rubric. Metric order here is canonical: every score array,
/// weight profile, and report column follows it.
inline const Rubric& default_rubric() {
    static const Rubric rubric = [] {
        Rubric r;
        r.metrics = {
            detail::make_metric(
                "hallucination", "Hallucination",
                "Score how well every factual claim in the answer is grounded in the "
                "retrieved contexts, the conversation history, or the case fields. "
                "1.0 means no fabricated content at all; lower the score as claims "
                "appear that the supplied evidence cannot support, and give 0.0 when "
                "the answer is dominated by invented facts."),
            detail::make_metric(
                "retrieval_correctness", "Retrieval Correctness",
                "Score whether the retrieved contexts are the right material for this "
                "query. 1.0 means the passages directly address the information the "
                "query needs; reduce the score when passages are topically adjacent "
                "but unhelpful, and give 0.0 when retrieval surfaced unrelated "
                "content."),
            detail::make_metric(
                "context_sufficiency", "Context Sufficiency",
                "Score whether the retrieved contexts, taken together with the "
                "conversation history, contain enough information to answer the query "
                "completely. 1.0 means a complete answer is derivable from the "
                "supplied evidence; reduce the score as required facts are missing, "
                "and give 0.0 when the evidence supports no useful part of an "
                "answer."),
            detail::make_metric(
                "answer_helpfulness", "Answer Helpfulness",
                "Score how useful the answer is to the user who asked the query: does "
                "it address the actual question, is it actionable, and is it complete "
                "at the level of detail the query calls for. Penalize evasion, "
                "boilerplate, and answers to a different question."),
            detail::make_metric(
                "answer_type_fit", "Answer Type Fit",
                "Score whether the form of the answer matches the form the query "
                "calls for: a procedure when steps were requested, a yes or no with "
                "reasoning for a confirmation question, a specific value for a "
                "lookup, a diagnosis for a troubleshooting question. Content may be "
                "correct yet mismatched in form; score the fit of the form."),
            detail::make_metric(
                "identifier_integrity", "Identifier Integrity",
                "Score whether concrete identifiers in the answer, such as product "
                "names, version numbers, error codes, ticket numbers, part numbers, "
                "and configuration keys, are reproduced exactly as they appear in the "
                "evidence. Any altered, conflated, or invented identifier is a "
                "serious defect; give 1.0 only when every identifier is faithful."),
            detail::make_metric(
                "case_issue_identification", "Case Issue Identification",
                "Score whether the answer reflects a correct understanding of the "
                "underlying problem described by the case subject and case "
                "description. 1.0 means the answer engages the actual reported "
                "issue; reduce the score when it addresses only a surface symptom or "
                "a different problem."),
            detail::make_metric(
                "case_resolution_alignment", "Case Resolution Alignment",
                "Score whether the answer moves the case toward resolution given "
                "everything tried so far in the conversation. Credit guidance "
                "consistent with the case's trajectory; penalize advice that repeats "
                "steps already reported as failed, contradicts earlier guidance, or "
                "walks the case away from a fix."),
        };
        r.anchors = {
            {"None", "Minor", 0.86, 1.00,
             "No material defect on this dimension. Wording nits at most."},
            {"Minor", "Moderate", 0.61, 0.85,
             "Small lapses a careful reader would catch, but the turn still serves "
             "its purpose."},
            {"Moderate", "Major", 0.31, 0.60,
             "Real defects that degrade the turn. A user would be misled or left "
             "short in a noticeable way."},
            {"Severe", "Critical", 0.00, 0.30,
             "The turn fails on this dimension. Fabricated, wrong, or unusable."},
        };
        return r;
    }();
    return rubric;
}

/// Canonical metric keys in canonical order.
inline const std::array<std::string, kMetricCount>& metric_keys() {
    static const std::array<std::string, kMetricCount> keys = [] {
        std::array<std::string, kMetricCount> k;
        const auto& defs = default_rubric().metrics;
        for (std::size_t i = 0; i < kMetricCount; ++i) k[i] = defs[i].key;
        return k;
    }();
    return keys;
}

/// Index of a metric key in canonical order, or nullopt.
inline std::optional<std::size_t> metric_index(const std::string& key) {
    const auto& keys = metric_keys();
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (keys[i] == key) return i;
    }
    return std::nullopt;
}

// =============================================================================
// Validation and loading
// =============================================================================

/// Enforce the structural contract: exactly eight metrics with distinct keys
/// and well-formed field names, and four anchors covering [0, 1] without
/// overlap. Throws ConfigError.
inline void validate_rubric(const Rubric& r) {
    if (r.metrics.size() != kMetricCount) {
        throw ConfigError("rubric must define exactly " + std::to_string(kMetricCount) +
                          " metrics, got " + std::to_string(r.metrics.size()));
    }
    for (const auto& m : r.metrics) {
        if (m.key.empty()) throw ConfigError("rubric metric with empty key");
        for (const auto& other : r.metrics) {
            if (&m != &other && m.key == other.key) {
                throw ConfigError("duplicate rubric metric key '" + m.key + "'");
            }
        }
        if (m.score_field != m.key + "_score") {
            throw ConfigError("metric '" + m.key + "' has score field '" + m.score_field + "'");
        }
        if (m.justification_field != m.key + "_justification") {
            throw ConfigError("metric '" + m.key + "' has justification field '" +
                              m.justification_field + "'");
        }
        if (util::trim(m.rubric_text).empty()) {
            throw ConfigError("metric '" + m.key + "' has empty rubric text");
        }
    }
    if (r.anchors.size() != 4) {
        throw ConfigError("rubric must define exactly 4 severity anchors");
    }
    for (const auto& a : r.anchors) {
        if (a.lower < 0.0 || a.upper > 1.0 || a.lower > a.upper) {
            throw ConfigError("severity anchor '" + a.name + "' has invalid range");
        }
        for (const auto& b : r.anchors) {
            if (&a != &b && a.lower <= b.upper && b.lower <= a.upper) {
                throw ConfigError("severity anchors '" + a.name + "' and '" + b.name +
                                  "' overlap");
            }
        }
    }
}

/// Load a rubric override from a JSON file. The file may replace metric
/// titles and rubric texts; keys and ranges stay canonical so downstream
/// schema validation is unaffected.
inline Rubric load_rubric_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open rubric file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("rubric file is not valid JSON: " + std::string(e.what()));
    }
    if (!doc.is_object() || !doc.contains("metrics") || !doc["metrics"].is_object()) {
        throw ConfigError("rubric file must be an object with a 'metrics' object");
    }

    Rubric r = default_rubric();
    for (auto it = doc["metrics"].begin(); it != doc["metrics"].end(); ++it) {
        auto idx = metric_index(it.key());
        if (!idx) throw ConfigError("rubric file names unknown metric '" + it.key() + "'");
        const auto& entry = *it;
        if (!entry.is_object()) {
            throw ConfigError("rubric entry for '" + it.key() + "' must be an object");
        }
        if (entry.contains("title")) {
            if (!entry["title"].is_string()) {
                throw ConfigError("rubric title for '" + it.key() + "' must be a string");
            }
            r.metrics[*idx].title = entry["title"].get<std::string>();
        }
        if (entry.contains("rubric_text")) {
            if (!entry["rubric_text"].is_string()) {
                throw ConfigError("rubric text for '" + it.key() + "' must be a string");
            }
            r.metrics[*idx].rubric_text = entry["rubric_text"].get<std::string>();
        }
    }
    validate_rubric(r);
    return r;
}

/// Stable fingerprint of the full rubric content, recorded in run manifests
/// so two runs are comparable only when their instructions matched.
inline std::string rubric_fingerprint(const Rubric& r) {
    std::string blob;
    for (const auto& m : r.metrics) {
        blob += m.key;
        blob += '\x1f';
        blob += m.title;
        blob += '\x1f';
        blob += m.rubric_text;
        blob += '\x1e';
    }
    for (const auto& a : r.anchors) {
        blob += a.name;
        blob += '\x1f';
        blob += std::to_string(a.lower);
        blob += '\x1f';
        blob += std::to_string(a.upper);
        blob += '\x1f';
        blob += a.guidance;
        blob += '\x1e';
    }
    return util::fnv1a64_hex(blob);
}

}  // namespace caseval
