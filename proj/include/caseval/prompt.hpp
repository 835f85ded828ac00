#pragma once

#include <cstdio>
#include <string>

#include "caseval/case_model.hpp"
#include "caseval/rubric.hpp"
#include "caseval/util.hpp"

namespace caseval {

struct PromptText {
    std::string system;
    std::string user;

    std::string text() const { return system + "\n\n" + user; }
};

namespace detail {

inline std::string format_range(double lower, double upper) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f to %.2f", lower, upper);
    return buf;
}

inline std::string field_or_none(const std::string& s) {
    return s.empty() ? std::string("(none)") : s;
}

}  // namespace detail

/// Deterministic prompt for one turn. Same turn, same rubric, same bytes:
/// no timestamps, no sampling, no environment leakage. The judge sees the
/// conversation history, the case fields, the query, the retrieved contexts,
/// the answer, and the optional reference answer, and is told to use nothing
/// else.
inline PromptText build_prompt(const CaseTurn& turn, const Rubric& rubric = default_rubric()) {
    PromptText p;

    p.system =
        "You are a strict evaluation judge for enterprise support conversations. "
        "You grade one assistant answer at a time against a fixed rubric. "
        "Base every judgment only on the material provided in the request: the "
        "conversation history, the case subject and description, the user query, "
        "the retrieved context passages, the answer under evaluation, and the "
        "reference answer when one is given. Do not use outside knowledge and do "
        "not assume facts the material does not state.";

    std::string& u = p.user;
    u += "# Scoring rubric\n\n";
    u += "Score the answer on each dimension below with a real number between 0.0 "
         "and 1.0.\n\n";
    for (const auto& m : rubric.metrics) {
        u += "## " + m.title + " (" + m.key + ")\n";
        u += m.rubric_text + "\n\n";
    }

    u += "# Severity bands\n\n";
    u += "For each dimension, first identify the most severe issue present, then "
         "score inside the matching band:\n";
    for (const auto& a : rubric.anchors) {
        u += "- " + a.name + " (also called " + a.alias + "): " +
             detail::format_range(a.lower, a.upper) + ". " + a.guidance + "\n";
    }
    u += "\n";

    u += "# Case\n\n";
    u += "Subject: " + detail::field_or_none(turn.case_subject) + "\n";
    u += "Description: " + detail::field_or_none(turn.case_description) + "\n\n";

    u += "# Conversation history\n\n";
    if (turn.history.empty()) {
        u += "(no prior turns)\n";
    } else {
        for (std::size_t i = 0; i < turn.history.size(); ++i) {
            u += "Turn " + std::to_string(i + 1) + " (" + turn.history[i].role + "): " +
                 turn.history[i].content + "\n";
        }
    }
    u += "\n";

    u += "# Current query\n\n";
    u += turn.query + "\n\n";

    u += "# Retrieved contexts\n\n";
    if (turn.retrieved_contexts.empty()) {
        u += "(no contexts retrieved)\n";
    } else {
        for (std::size_t i = 0; i < turn.retrieved_contexts.size(); ++i) {
            u += "[" + std::to_string(i + 1) + "] " + turn.retrieved_contexts[i] + "\n";
        }
    }
    u += "\n";

    u += "# Answer under evaluation\n\n";
    u += turn.answer + "\n\n";

    if (turn.ground_truth) {
        u += "# Reference answer\n\n";
        u += *turn.ground_truth + "\n\n";
    }

    u += "# Output format\n\n";
    u += "Respond with a single JSON object, nothing else. No prose before or "
         "after it, no code fences. The object must contain exactly these " +
         std::to_string(2 * rubric.metrics.size()) + " keys:\n";
    for (const auto& m : rubric.metrics) {
        u += "- \"" + m.score_field + "\": number in [0,1]\n";
        u += "- \"" + m.justification_field + "\": short non-empty string citing the "
             "evidence for the score\n";
    }
    return p;
}

/// Fingerprint of the prompt a given rubric produces, independent of any
/// particular turn. Recorded in manifests alongside the rubric fingerprint.
inline std::string prompt_fingerprint(const Rubric& rubric = default_rubric()) {
    CaseTurn probe;
    probe.conversation_id = "probe";
    probe.query = "probe";
    probe.answer = "probe";
    return util::fnv1a64_hex(build_prompt(probe, rubric).text());
}

}  // namespace caseval
