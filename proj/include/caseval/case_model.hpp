#pragma once

#include <algorithm>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "caseval/util.hpp"

namespace caseval {

// =============================================================================
// Domain types
// =============================================================================

struct Message {
    std::string role;
    std::string content;

    bool operator==(const Message&) const = default;
};

/// One evaluated turn of a support conversation: the full evidence set the
/// judge is allowed to see, nothing else.
struct CaseTurn {
    std::string conversation_id;
    int turn_index = 0;
    std::vector<Message> history;
    std::string query;
    std::string case_subject;
    std::string case_description;
    std::vector<std::string> retrieved_contexts;
    std::string answer;
    std::optional<std::string> ground_truth;

    bool operator==(const CaseTurn&) const = default;
};

/// Binary human judgment for one turn and one audited dimension.
struct HumanLabel {
    std::string conversation_id;
    int turn_index = 0;
    std::string annotator_id;
    std::string metric;  // hallucination | identifier_integrity | resolution_alignment
    int label = 0;       // 0 fail, 1 pass
};

inline const std::vector<std::string>& human_label_metrics() {
    static const std::vector<std::string> metrics{
        "hallucination", "identifier_integrity", "resolution_alignment"};
    return metrics;
}

/// Input row that failed validation. Kept for the rejects sidecar, never
/// silently dropped.
struct RejectedRow {
    std::size_t line_number = 0;  // 1-based
    std::string reason;
    std::string raw_line;
};

enum class DatasetMode { strict, lenient };

/// Raised in strict mode on the first invalid row, and for malformed label
/// files.
class DatasetError : public std::runtime_error {
public:
    DatasetError(std::size_t line_number, const std::string& reason)
        : std::runtime_error("line " + std::to_string(line_number) + ": " + reason),
          line_number_(line_number) {}

    std::size_t line_number() const { return line_number_; }

private:
    std::size_t line_number_;
};

class NormalizationError : public std::runtime_error {
public:
    NormalizationError(std::string field, const std::string& reason)
        : std::runtime_error(reason), field_(std::move(field)) {}

    const std::string& field() const { return field_; }

private:
    std::string field_;
};

// =============================================================================
// Normalization
// =============================================================================

/// Whitespace-trim every text field, replace stray control characters, and
/// enforce the non-empty query/answer contract. Missing optional fields stay
/// absent. Idempotent.
inline CaseTurn normalize_turn(CaseTurn raw) {
    CaseTurn t = std::move(raw);
    t.conversation_id = util::normalize_text(t.conversation_id);
    t.query = util::normalize_text(t.query);
    t.case_subject = util::normalize_text(t.case_subject);
    t.case_description = util::normalize_text(t.case_description);
    t.answer = util::normalize_text(t.answer);
    for (auto& m : t.history) {
        m.role = util::normalize_text(m.role);
        m.content = util::normalize_text(m.content);
    }
    for (auto& chunk : t.retrieved_contexts) {
        chunk = util::normalize_text(chunk);
    }
    if (t.ground_truth) {
        std::string g = util::normalize_text(*t.ground_truth);
        if (g.empty()) {
            t.ground_truth.reset();
        } else {
            t.ground_truth = std::move(g);
        }
    }
    if (t.conversation_id.empty()) {
        throw NormalizationError("conversation_id", "conversation_id is empty");
    }
    if (t.turn_index < 0) {
        throw NormalizationError("turn_index", "turn_index is negative");
    }
    if (t.query.empty()) {
        throw NormalizationError("query", "query is empty after normalization");
    }
    if (t.answer.empty()) {
        throw NormalizationError("answer", "answer is empty after normalization");
    }
    return t;
}

// =============================================================================
// JSON round trip
// =============================================================================

inline nlohmann::ordered_json turn_to_json(const CaseTurn& t) {
    nlohmann::ordered_json j;
    j["conversation_id"] = t.conversation_id;
    j["turn_index"] = t.turn_index;
    nlohmann::ordered_json hist = nlohmann::ordered_json::array();
    for (const auto& m : t.history) {
        hist.push_back({{"role", m.role}, {"content", m.content}});
    }
    j["history"] = std::move(hist);
    j["query"] = t.query;
    j["case_subject"] = t.case_subject;
    j["case_description"] = t.case_description;
    j["retrieved_contexts"] = t.retrieved_contexts;
    j["answer"] = t.answer;
    if (t.ground_truth) j["ground_truth"] = *t.ground_truth;
    return j;
}

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& row, const char* key) {
    auto it = row.find(key);
    if (it == row.end()) {
        throw std::runtime_error(std::string("missing required field '") + key + "'");
    }
    return *it;
}

inline std::string require_string(const nlohmann::json& row, const char* key) {
    const auto& v = require_field(row, key);
    if (!v.is_string()) {
        throw std::runtime_error(std::string("field '") + key + "' must be a string");
    }
    return v.get<std::string>();
}

inline int require_int(const nlohmann::json& row, const char* key) {
    const auto& v = require_field(row, key);
    if (!v.is_number_integer()) {
        throw std::runtime_error(std::string("field '") + key + "' must be an integer");
    }
    return v.get<int>();
}

}  // namespace detail

/// Parse one already-decoded record object into a normalized CaseTurn.
/// Throws std::runtime_error with a row-local reason on any violation.
inline CaseTurn turn_from_json(const nlohmann::json& row) {
    if (!row.is_object()) throw std::runtime_error("record is not a JSON object");

    static const std::vector<std::string> known{
        "conversation_id", "turn_index",  "history",
        "query",           "case_subject", "case_description",
        "retrieved_contexts", "answer",   "ground_truth"};
    for (auto it = row.begin(); it != row.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
            throw std::runtime_error("unexpected field '" + it.key() + "'");
        }
    }

    CaseTurn t;
    t.conversation_id = detail::require_string(row, "conversation_id");
    t.turn_index = detail::require_int(row, "turn_index");

    const auto& hist = detail::require_field(row, "history");
    if (!hist.is_array()) throw std::runtime_error("field 'history' must be an array");
    for (const auto& m : hist) {
        if (!m.is_object() || !m.contains("role") || !m.contains("content") ||
            !m["role"].is_string() || !m["content"].is_string()) {
            throw std::runtime_error("history entries must be {role, content} objects");
        }
        t.history.push_back({m["role"].get<std::string>(), m["content"].get<std::string>()});
    }

    t.query = detail::require_string(row, "query");
    t.case_subject = detail::require_string(row, "case_subject");
    t.case_description = detail::require_string(row, "case_description");

    const auto& ctx = detail::require_field(row, "retrieved_contexts");
    if (!ctx.is_array()) throw std::runtime_error("field 'retrieved_contexts' must be an array");
    for (const auto& chunk : ctx) {
        if (!chunk.is_string()) {
            throw std::runtime_error("retrieved_contexts entries must be strings");
        }
        t.retrieved_contexts.push_back(chunk.get<std::string>());
    }

    t.answer = detail::require_string(row, "answer");
    if (auto it = row.find("ground_truth"); it != row.end()) {
        if (!it->is_string()) throw std::runtime_error("field 'ground_truth' must be a string");
        t.ground_truth = it->get<std::string>();
    }

    try {
        return normalize_turn(std::move(t));
    } catch (const NormalizationError& e) {
        throw std::runtime_error("field '" + e.field() + "': " + e.what());
    }
}

// =============================================================================
// Dataset parsing
// =============================================================================

struct DatasetParseResult {
    std::vector<CaseTurn> turns;
    std::vector<RejectedRow> rejects;
};

/// Stream UTF-8 line-delimited records into CaseTurns. Valid rows keep input
/// order; invalid rows become RejectedRow with line number and reason.
/// Duplicate (conversation_id, turn_index) pairs are invalid. Strict mode
/// throws DatasetError at the first invalid row instead of collecting it.
inline DatasetParseResult parse_dataset(std::istream& in, DatasetMode mode) {
    if (!in.good()) throw IoError("dataset stream is not readable");

    DatasetParseResult result;
    std::map<std::pair<std::string, int>, std::size_t> seen;
    std::string line;
    std::size_t line_number = 0;

    while (std::getline(in, line)) {
        ++line_number;
        if (util::trim(line).empty()) continue;

        std::string reason;
        try {
            nlohmann::json row = nlohmann::json::parse(line);
            CaseTurn turn = turn_from_json(row);
            auto key = std::make_pair(turn.conversation_id, turn.turn_index);
            if (auto it = seen.find(key); it != seen.end()) {
                reason = "duplicate (conversation_id, turn_index) first seen at line " +
                         std::to_string(it->second);
            } else {
                seen.emplace(std::move(key), line_number);
                result.turns.push_back(std::move(turn));
                continue;
            }
        } catch (const nlohmann::json::parse_error&) {
            reason = "not valid JSON";
        } catch (const std::exception& e) {
            reason = e.what();
        }

        if (mode == DatasetMode::strict) throw DatasetError(line_number, reason);
        result.rejects.push_back({line_number, std::move(reason), line});
    }

    if (in.bad()) throw IoError("I/O failure while reading dataset");
    return result;
}

/// Parse the line-delimited human labels file.
inline std::vector<HumanLabel> parse_human_labels(std::istream& in) {
    if (!in.good()) throw IoError("labels stream is not readable");

    std::vector<HumanLabel> labels;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (util::trim(line).empty()) continue;
        try {
            nlohmann::json row = nlohmann::json::parse(line);
            HumanLabel l;
            l.conversation_id = detail::require_string(row, "conversation_id");
            l.turn_index = detail::require_int(row, "turn_index");
            l.annotator_id = detail::require_string(row, "annotator_id");
            l.metric = detail::require_string(row, "metric");
            l.label = detail::require_int(row, "label");
            const auto& metrics = human_label_metrics();
            if (std::find(metrics.begin(), metrics.end(), l.metric) == metrics.end()) {
                throw std::runtime_error("unknown metric '" + l.metric + "'");
            }
            if (l.label != 0 && l.label != 1) {
                throw std::runtime_error("label must be 0 or 1");
            }
            labels.push_back(std::move(l));
        } catch (const std::exception& e) {
            throw DatasetError(line_number, e.what());
        }
    }
    if (in.bad()) throw IoError("I/O failure while reading labels");
    return labels;
}

// =============================================================================
// Conversation grouping
// =============================================================================

struct ConversationGroup {
    std::string conversation_id;
    std::vector<CaseTurn> turns;  // sorted by turn_index
};

/// Partition turns by conversation. Group order is first-appearance order in
/// the input; turns within a group are sorted by turn_index.
inline std::vector<ConversationGroup> group_by_conversation(const std::vector<CaseTurn>& turns) {
    std::vector<ConversationGroup> groups;
    std::map<std::string, std::size_t> index;
    for (const auto& turn : turns) {
        auto it = index.find(turn.conversation_id);
        if (it == index.end()) {
            index.emplace(turn.conversation_id, groups.size());
            groups.push_back({turn.conversation_id, {turn}});
        } else {
            groups[it->second].turns.push_back(turn);
        }
    }
    for (auto& g : groups) {
        std::stable_sort(g.turns.begin(), g.turns.end(),
                         [](const CaseTurn& a, const CaseTurn& b) {
                             return a.turn_index < b.turn_index;
                         });
    }
    return groups;
}

}  // namespace caseval
