#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "caseval/rubric.hpp"
#include "caseval/util.hpp"

namespace caseval {

// =============================================================================
// Weight profiles
// =============================================================================

/// Metric weights in canonical metric order. Weights are non-negative and
/// sum to 1 within 1e-9; construction enforces this.
struct WeightProfile {
    std::string name;
    std::array<double, kMetricCount> weights{};

    double weight_for(const std::string& key) const {
        auto idx = metric_index(key);
        if (!idx) throw ConfigError("unknown metric key '" + key + "'");
        return weights[*idx];
    }
};

inline void validate_profile(const WeightProfile& p) {
    double sum = 0.0;
    for (std::size_t i = 0; i < p.weights.size(); ++i) {
        if (!std::isfinite(p.weights[i]) || p.weights[i] < 0.0) {
            throw ConfigError("profile '" + p.name + "': weight for '" + metric_keys()[i] +
                              "' must be a non-negative finite number");
        }
        sum += p.weights[i];
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("profile '" + p.name + "': weights sum to " + std::to_string(sum) +
                          ", expected 1.0");
    }
}

/// Built-in profiles. "default" weights hallucination and helpfulness up;
/// "uniform" is flat; "retrieval_heavy" raises the two retrieval-side
/// dimensions to 0.20 each and rescales the remaining six proportionally.
inline WeightProfile builtin_profile(const std::string& name) {
    WeightProfile p;
    p.name = name;
    if (name == "default") {
        p.weights = {0.20, 0.15, 0.10, 0.15, 0.10, 0.10, 0.10, 0.10};
    } else if (name == "uniform") {
        p.weights.fill(0.125);
    } else if (name == "retrieval_heavy") {
        const WeightProfile base = builtin_profile("default");
        const double target_rc = 0.20;
        const double target_cs = 0.20;
        const double rest_mass = 1.0 - target_rc - target_cs;
        double base_rest = 0.0;
        for (std::size_t i = 0; i < base.weights.size(); ++i) {
            if (i != 1 && i != 2) base_rest += base.weights[i];
        }
        const double scale = rest_mass / base_rest;
        for (std::size_t i = 0; i < base.weights.size(); ++i) {
            p.weights[i] = base.weights[i] * scale;
        }
        p.weights[1] = target_rc;
        p.weights[2] = target_cs;
    } else {
        throw ConfigError("unknown weight profile '" + name + "'");
    }
    validate_profile(p);
    return p;
}

/// Load a profile from a JSON file: {"name": ..., "weights": {key: w, ...}}
/// with exactly the eight canonical keys.
inline WeightProfile load_profile_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open weight profile file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("weight profile file is not valid JSON: " + std::string(e.what()));
    }
    if (!doc.is_object() || !doc.contains("name") || !doc["name"].is_string() ||
        !doc.contains("weights") || !doc["weights"].is_object()) {
        throw ConfigError("weight profile file must be {\"name\": ..., \"weights\": {...}}");
    }
    WeightProfile p;
    p.name = doc["name"].get<std::string>();
    const auto& w = doc["weights"];
    if (w.size() != kMetricCount) {
        throw ConfigError("weight profile must list exactly " + std::to_string(kMetricCount) +
                          " metrics");
    }
    for (auto it = w.begin(); it != w.end(); ++it) {
        auto idx = metric_index(it.key());
        if (!idx) throw ConfigError("weight profile names unknown metric '" + it.key() + "'");
        if (!it->is_number()) {
            throw ConfigError("weight for '" + it.key() + "' must be a number");
        }
        p.weights[*idx] = it->get<double>();
    }
    validate_profile(p);
    return p;
}

/// Resolve a --weights argument: a built-in name or a path to a profile file.
inline WeightProfile resolve_profile(const std::string& spec) {
    if (spec == "default" || spec == "uniform" || spec == "retrieval_heavy") {
        return builtin_profile(spec);
    }
    return load_profile_file(spec);
}

// =============================================================================
// Aggregation
// =============================================================================

/// Weighted composite of the eight metric scores. Inputs live in [0,1] and
/// weights form a convex combination, so the result stays in [0,1].
inline double aggregate_final(const std::array<double, kMetricCount>& scores,
                              const WeightProfile& profile) {
    double s = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        s += profile.weights[i] * scores[i];
    }
    return s;
}

// =============================================================================
// Severity bands
// =============================================================================

enum class SeverityBand { Severe, Moderate, Minor, None };

/// Band partition of [0,1] with inclusive upper edges: scores at 0.30, 0.60,
/// and 0.85 land in the lower band, matching the anchor ranges shown to the
/// judge.
inline SeverityBand severity_band(double score) {
    if (!std::isfinite(score) || score < 0.0 || score > 1.0) {
        throw std::invalid_argument("severity_band: score " + std::to_string(score) +
                                    " outside [0,1]");
    }
    if (score <= 0.30) return SeverityBand::Severe;
    if (score <= 0.60) return SeverityBand::Moderate;
    if (score <= 0.85) return SeverityBand::Minor;
    return SeverityBand::None;
}

inline const char* band_label(SeverityBand b) {
    switch (b) {
        case SeverityBand::Severe: return "Severe";
        case SeverityBand::Moderate: return "Moderate";
        case SeverityBand::Minor: return "Minor";
        case SeverityBand::None: return "None";
    }
    return "None";
}

/// Alternate vocabulary for the same bands, worst to best:
/// Critical, Major, Moderate, Minor.
inline const char* band_alias(SeverityBand b) {
    switch (b) {
        case SeverityBand::Severe: return "Critical";
        case SeverityBand::Moderate: return "Major";
        case SeverityBand::Minor: return "Moderate";
        case SeverityBand::None: return "Minor";
    }
    return "Minor";
}

// =============================================================================
// Conversation-level aggregation
// =============================================================================

struct TurnFinal {
    std::string conversation_id;
    int turn_index = 0;
    std::optional<double> final_score;  // absent for failed-closed turns
};

struct ConversationScore {
    std::string conversation_id;
    double mean_final = 0.0;
    std::size_t turns_scored = 0;
    std::size_t turns_failed = 0;
};

struct ConversationScoreResult {
    std::vector<ConversationScore> scores;        // first-appearance order
    std::vector<std::string> omitted;             // conversations with no scored turn
};

/// Per-conversation mean of turn-level composites. Failed turns contribute
/// nothing to the mean; a conversation whose turns all failed is omitted from
/// the scores and listed separately.
inline ConversationScoreResult conversation_scores(const std::vector<TurnFinal>& turns) {
    struct Acc {
        double sum = 0.0;
        std::size_t scored = 0;
        std::size_t failed = 0;
    };
    std::vector<std::string> order;
    std::map<std::string, Acc> acc;
    for (const auto& t : turns) {
        auto it = acc.find(t.conversation_id);
        if (it == acc.end()) {
            order.push_back(t.conversation_id);
            it = acc.emplace(t.conversation_id, Acc{}).first;
        }
        if (t.final_score) {
            it->second.sum += *t.final_score;
            ++it->second.scored;
        } else {
            ++it->second.failed;
        }
    }
    ConversationScoreResult result;
    for (const auto& id : order) {
        const Acc& a = acc.at(id);
        if (a.scored == 0) {
            result.omitted.push_back(id);
        } else {
            result.scores.push_back(
                {id, a.sum / static_cast<double>(a.scored), a.scored, a.failed});
        }
    }
    return result;
}

}  // namespace caseval
