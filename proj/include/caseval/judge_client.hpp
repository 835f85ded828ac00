#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <set>
#include <string>
#include <thread>
#include <utility>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "caseval/case_model.hpp"
#include "caseval/prompt.hpp"
#include "caseval/rubric.hpp"
#include "caseval/util.hpp"

namespace caseval {

// =============================================================================
// Config and wire types
// =============================================================================

enum class JudgeKind { remote, mock };

struct TokenUsage {
    long input_tokens = 0;
    long output_tokens = 0;
    bool reported = false;  // true when the backend returned real counters
};

/// Raw completion text exactly as the backend produced it, plus usage.
struct RawJudgeOutput {
    std::string text;
    TokenUsage usage;
};

/// Timeouts, connection failures, non-success statuses, and responses whose
/// envelope cannot be decoded. Distinct from verdict validation failures,
/// which operate on successfully transported text.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct JudgeConfig {
    JudgeKind kind = JudgeKind::mock;
    std::string endpoint;      // remote only
    std::string model;         // remote only
    std::string api_key_env;   // name of the env var holding the key
    double temperature = 0.0;
    double top_p = 1.0;
    int max_tokens = 1024;
    int timeout_seconds = 120;
    int transport_retries = 2;    // extra attempts after a transport failure
    int retry_backoff_ms = 250;   // linear backoff between transport attempts
    std::uint64_t mock_seed = 0;  // mock only
};

inline void validate_judge_config(const JudgeConfig& c) {
    if (c.max_tokens < 512) {
        throw ConfigError("max_tokens must be at least 512, got " + std::to_string(c.max_tokens));
    }
    if (c.temperature < 0.0 || c.top_p <= 0.0 || c.top_p > 1.0) {
        throw ConfigError("invalid decoding parameters");
    }
    if (c.timeout_seconds <= 0) throw ConfigError("timeout must be positive");
    if (c.transport_retries < 0) throw ConfigError("transport retry budget must be >= 0");
    if (c.kind == JudgeKind::remote) {
        if (c.endpoint.empty()) throw ConfigError("remote judge requires an endpoint");
        if (c.model.empty()) throw ConfigError("remote judge requires a model id");
        if (c.api_key_env.empty()) {
            throw ConfigError("remote judge requires an api key environment variable name");
        }
    }
}

/// Stable fingerprint of everything that shapes judge behavior, for run
/// manifests. The key itself never participates.
inline std::string judge_fingerprint(const JudgeConfig& c) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f|%.6f|%d", c.temperature, c.top_p, c.max_tokens);
    std::string blob = (c.kind == JudgeKind::remote ? "remote" : "mock");
    blob += '\x1f';
    blob += c.endpoint;
    blob += '\x1f';
    blob += c.model;
    blob += '\x1f';
    blob += buf;
    if (c.kind == JudgeKind::mock) {
        blob += '\x1f';
        blob += std::to_string(c.mock_seed);
    }
    return util::fnv1a64_hex(blob);
}

// =============================================================================
// Backend interface
// =============================================================================

class JudgeBackend {
public:
    virtual ~JudgeBackend() = default;

    /// One judge call for one turn. Throws TransportError after the
    /// transport budget is spent; never inspects or repairs the text.
    virtual RawJudgeOutput invoke(const CaseTurn& turn, const PromptText& prompt) = 0;

    virtual const char* name() const = 0;
};

// =============================================================================
// Mock judge
// =============================================================================

namespace detail {

inline double containment(const std::set<std::string>& inner, const std::set<std::string>& outer) {
    if (inner.empty() || outer.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& tok : inner) {
        if (outer.count(tok)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(inner.size());
}

inline double mock_jitter(const CaseTurn& turn, const std::string& key, std::uint64_t seed) {
    std::string blob = turn.conversation_id;
    blob += '\x1f';
    blob += std::to_string(turn.turn_index);
    blob += '\x1f';
    blob += key;
    blob += '\x1f';
    blob += std::to_string(seed);
    const std::uint64_t h = util::fnv1a64(blob);
    return (static_cast<double>(h % 41) - 20.0) / 1000.0;  // [-0.020, 0.020]
}

inline int pct(double v) { return static_cast<int>(std::lround(v * 100.0)); }

}  // namespace detail

/// Deterministic lexical-overlap verdict for offline runs and tests. Same
/// (turn, seed) always yields identical bytes. The scores loosely track
/// grounding and coverage; they make no claim of fidelity to a real judge.
inline RawJudgeOutput mock_judge(const CaseTurn& turn, std::uint64_t seed,
                                 const PromptText& prompt) {
    using util::token_set;

    std::set<std::string> ans = token_set(turn.answer);
    std::set<std::string> qry = token_set(turn.query);
    std::set<std::string> ctx;
    for (const auto& chunk : turn.retrieved_contexts) {
        auto toks = token_set(chunk);
        ctx.insert(toks.begin(), toks.end());
    }
    std::set<std::string> case_toks = token_set(turn.case_subject + " " + turn.case_description);
    std::set<std::string> prior_assistant;
    for (const auto& m : turn.history) {
        if (m.role == "assistant") {
            auto toks = token_set(m.content);
            prior_assistant.insert(toks.begin(), toks.end());
        }
    }
    std::set<std::string> evidence = ctx;
    evidence.insert(qry.begin(), qry.end());
    for (const auto& m : turn.history) {
        auto toks = token_set(m.content);
        evidence.insert(toks.begin(), toks.end());
    }

    const double grounding = detail::containment(ans, ctx);
    const double query_cov = detail::containment(qry, ctx);
    const double sufficiency = 0.5 * grounding + 0.5 * query_cov;
    const double helpfulness =
        std::min(1.0, static_cast<double>(util::word_count(turn.answer)) / 40.0);
    const double type_fit = 0.4 + 0.6 * detail::containment(qry, ans);

    std::size_t id_total = 0;
    std::size_t id_kept = 0;
    for (const auto& tok : ans) {
        if (std::none_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); }))
            continue;
        ++id_total;
        if (evidence.count(tok)) ++id_kept;
    }
    const double integrity =
        id_total == 0 ? 1.0 : static_cast<double>(id_kept) / static_cast<double>(id_total);

    const double issue_id = case_toks.empty() ? 0.5 : detail::containment(case_toks, ans);
    const double repeat = detail::containment(ans, prior_assistant);
    const double alignment = 0.6 * issue_id + 0.4 * (1.0 - repeat);

    struct Entry {
        const char* key;
        double score;
        std::string why;
    };
    const Entry entries[] = {
        {"hallucination", grounding,
         "Answer token containment in the retrieved contexts is " +
             std::to_string(detail::pct(grounding)) + " percent."},
        {"retrieval_correctness", query_cov,
         "Query token coverage in the retrieved contexts is " +
             std::to_string(detail::pct(query_cov)) + " percent."},
        {"context_sufficiency", sufficiency,
         "Mean of answer grounding and query coverage is " +
             std::to_string(detail::pct(sufficiency)) + " percent."},
        {"answer_helpfulness", helpfulness,
         "Answer length is " + std::to_string(util::word_count(turn.answer)) +
             " words against a 40 word target."},
        {"answer_type_fit", type_fit,
         "Answer engages " + std::to_string(detail::pct(detail::containment(qry, ans))) +
             " percent of the query vocabulary."},
        {"identifier_integrity", integrity,
         id_total == 0 ? std::string("No identifier-like tokens in the answer.")
                       : std::to_string(id_kept) + " of " + std::to_string(id_total) +
                             " identifier-like tokens match the evidence."},
        {"case_issue_identification", issue_id,
         case_toks.empty() ? std::string("Case fields are empty; neutral midpoint applied.")
                           : "Answer covers " + std::to_string(detail::pct(issue_id)) +
                                 " percent of the case vocabulary."},
        {"case_resolution_alignment", alignment,
         "Issue coverage blended with a repeated-guidance penalty of " +
             std::to_string(detail::pct(repeat)) + " percent."},
    };

    nlohmann::ordered_json verdict;
    for (const auto& e : entries) {
        double s = e.score;
        if (std::string(e.key) != "hallucination") {
            s = std::clamp(s + detail::mock_jitter(turn, e.key, seed), 0.0, 1.0);
        }
        verdict[std::string(e.key) + "_score"] = s;
        verdict[std::string(e.key) + "_justification"] = e.why;
    }

    RawJudgeOutput out;
    out.text = verdict.dump();
    out.usage.input_tokens = static_cast<long>(prompt.text().size() / 4);
    out.usage.output_tokens = static_cast<long>(out.text.size() / 4);
    out.usage.reported = true;
    return out;
}

class MockJudge final : public JudgeBackend {
public:
    explicit MockJudge(std::uint64_t seed) : seed_(seed) {}

    RawJudgeOutput invoke(const CaseTurn& turn, const PromptText& prompt) override {
        return mock_judge(turn, seed_, prompt);
    }

    const char* name() const override { return "mock"; }

private:
    std::uint64_t seed_;
};

// =============================================================================
// Remote judge
// =============================================================================

namespace detail {

struct EndpointParts {
    std::string base;  // scheme://host[:port]
    std::string path;  // /v1/chat/completions or caller-specified
};

inline EndpointParts split_endpoint(const std::string& endpoint) {
    const auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("endpoint must include a scheme: " + endpoint);
    }
    const auto path_start = endpoint.find('/', scheme_end + 3);
    EndpointParts parts;
    if (path_start == std::string::npos) {
        parts.base = endpoint;
        parts.path = "/v1/chat/completions";
        return parts;
    }
    parts.base = endpoint.substr(0, path_start);
    std::string path = endpoint.substr(path_start);
    while (path.size() > 1 && path.back() == '/') path.pop_back();
    if (path.empty() || path == "/") {
        parts.path = "/v1/chat/completions";
    } else if (path.size() >= 17 && path.compare(path.size() - 17, 17, "/chat/completions") == 0) {
        parts.path = path;
    } else {
        parts.path = path + "/v1/chat/completions";
    }
    return parts;
}

}  // namespace detail

/// OpenAI-compatible chat-completions client. The API key comes from the
/// environment variable named in the config and appears nowhere else.
class RemoteJudge final : public JudgeBackend {
public:
    explicit RemoteJudge(JudgeConfig config) : config_(std::move(config)) {
        validate_judge_config(config_);
        parts_ = detail::split_endpoint(config_.endpoint);
        const char* key = std::getenv(config_.api_key_env.c_str());
        if (key == nullptr || std::string(key).empty()) {
            throw ConfigError("environment variable " + config_.api_key_env +
                              " is not set; it must hold the judge API key");
        }
        api_key_ = key;
    }

    RawJudgeOutput invoke(const CaseTurn&, const PromptText& prompt) override {
        nlohmann::ordered_json body;
        body["model"] = config_.model;
        body["messages"] = nlohmann::ordered_json::array(
            {{{"role", "system"}, {"content", prompt.system}},
             {{"role", "user"}, {"content", prompt.user}}});
        body["temperature"] = config_.temperature;
        body["top_p"] = config_.top_p;
        body["max_tokens"] = config_.max_tokens;
        const std::string payload = body.dump();

        std::string last_error;
        const int attempts = config_.transport_retries + 1;
        for (int attempt = 1; attempt <= attempts; ++attempt) {
            if (attempt > 1 && config_.retry_backoff_ms > 0) {
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(config_.retry_backoff_ms * (attempt - 1)));
            }
            try {
                return post_once(payload, prompt);
            } catch (const TransportError& e) {
                last_error = e.what();
            }
        }
        throw TransportError(last_error + " (after " + std::to_string(attempts) +
                             " transport attempts)");
    }

    const char* name() const override { return "remote"; }

private:
    RawJudgeOutput post_once(const std::string& payload, const PromptText& prompt) {
        httplib::Client client(parts_.base);
        client.set_connection_timeout(config_.timeout_seconds, 0);
        client.set_read_timeout(config_.timeout_seconds, 0);
        client.set_write_timeout(config_.timeout_seconds, 0);
        client.set_bearer_token_auth(api_key_);

        auto res = client.Post(parts_.path, payload, "application/json");
        if (!res) {
            throw TransportError("connect/send failed: " + httplib::to_string(res.error()));
        }
        if (res->status < 200 || res->status >= 300) {
            throw TransportError("http status " + std::to_string(res->status));
        }

        nlohmann::json envelope;
        try {
            envelope = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::parse_error&) {
            throw TransportError("response body is not JSON");
        }
        if (!envelope.contains("choices") || !envelope["choices"].is_array() ||
            envelope["choices"].empty()) {
            throw TransportError("response has no choices");
        }
        const auto& choice = envelope["choices"][0];
        if (!choice.contains("message") || !choice["message"].contains("content") ||
            !choice["message"]["content"].is_string()) {
            throw TransportError("response choice has no message content");
        }

        RawJudgeOutput out;
        out.text = choice["message"]["content"].get<std::string>();
        if (envelope.contains("usage") && envelope["usage"].is_object() &&
            envelope["usage"].value("prompt_tokens", -1) >= 0 &&
            envelope["usage"].value("completion_tokens", -1) >= 0) {
            out.usage.input_tokens = envelope["usage"]["prompt_tokens"].get<long>();
            out.usage.output_tokens = envelope["usage"]["completion_tokens"].get<long>();
            out.usage.reported = true;
        } else {
            out.usage.input_tokens = static_cast<long>(prompt.text().size() / 4);
            out.usage.output_tokens = static_cast<long>(out.text.size() / 4);
            out.usage.reported = false;
        }
        return out;
    }

    JudgeConfig config_;
    detail::EndpointParts parts_;
    std::string api_key_;
};

inline std::unique_ptr<JudgeBackend> make_backend(const JudgeConfig& config) {
    validate_judge_config(config);
    if (config.kind == JudgeKind::mock) {
        return std::make_unique<MockJudge>(config.mock_seed);
    }
    return std::make_unique<RemoteJudge>(config);
}

}  // namespace caseval
