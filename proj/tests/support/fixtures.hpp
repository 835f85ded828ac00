#pragma once

// Shared test fixtures: deterministic synthetic turns, dataset writers, and
// scripted judge backends that drive the pipeline down chosen paths.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "caseval/case_model.hpp"
#include "caseval/judge_client.hpp"
#include "caseval/rubric.hpp"

namespace fixtures {

inline caseval::CaseTurn make_turn(const std::string& conversation_id, int turn_index) {
    caseval::CaseTurn t;
    t.conversation_id = conversation_id;
    t.turn_index = turn_index;
    t.history = {
        {"user", "The export job fails with error E1742 on build 10.4.2."},
        {"assistant", "Check the staging disk quota and rerun the export job."},
    };
    t.query = "How do I clear error E1742 after the quota check in " + conversation_id + "?";
    t.case_subject = "Export job fails with E1742";
    t.case_description =
        "Customer on build 10.4.2 reports recurring E1742 during nightly exports.";
    t.retrieved_contexts = {
        "Error E1742 indicates the staging disk quota was exceeded during export.",
        "On build 10.4.2 raise the export quota with set-quota --stage 20GB and rerun.",
    };
    t.answer = "Raise the staging quota with set-quota --stage 20GB on build 10.4.2, then "
               "rerun the nightly export; E1742 clears once the quota fits the export size.";
    return t;
}

/// n_conversations x turns_each grid of distinct valid turns.
inline std::vector<caseval::CaseTurn> make_turns(std::size_t n_conversations,
                                                 std::size_t turns_each,
                                                 const std::string& prefix = "conv") {
    std::vector<caseval::CaseTurn> turns;
    for (std::size_t c = 0; c < n_conversations; ++c) {
        for (std::size_t i = 0; i < turns_each; ++i) {
            turns.push_back(
                make_turn(prefix + "-" + std::to_string(c), static_cast<int>(i)));
        }
    }
    return turns;
}

inline void write_dataset(const std::string& path, const std::vector<caseval::CaseTurn>& turns) {
    std::ofstream out(path, std::ios::trunc);
    for (const auto& t : turns) out << caseval::turn_to_json(t).dump() << "\n";
}

inline std::string scratch_dir(const std::string& leaf) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "caseval_tests" / leaf;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

/// Well-formed verdict text with every score set per metric.
inline std::string verdict_text(const std::array<double, caseval::kMetricCount>& scores) {
    nlohmann::ordered_json j;
    const auto& keys = caseval::metric_keys();
    for (std::size_t i = 0; i < caseval::kMetricCount; ++i) {
        j[keys[i] + "_score"] = scores[i];
        j[keys[i] + "_justification"] = "scripted verdict for " + keys[i];
    }
    return j.dump();
}

inline std::string verdict_text_uniform(double score) {
    std::array<double, caseval::kMetricCount> scores;
    scores.fill(score);
    return verdict_text(scores);
}

/// Backend driven by an arbitrary function of the turn and call count for
/// that turn. Thread safe; counts invocations per (conversation, turn).
class ScriptedJudge final : public caseval::JudgeBackend {
public:
    using Script = std::function<std::string(const caseval::CaseTurn&, int call_number)>;

    explicit ScriptedJudge(Script script) : script_(std::move(script)) {}

    caseval::RawJudgeOutput invoke(const caseval::CaseTurn& turn,
                                   const caseval::PromptText& prompt) override {
        int call_number = 0;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            call_number = ++calls_[{turn.conversation_id, turn.turn_index}];
            ++total_calls_;
        }
        caseval::RawJudgeOutput out;
        out.text = script_(turn, call_number);
        out.usage.input_tokens = static_cast<long>(prompt.text().size() / 4);
        out.usage.output_tokens = static_cast<long>(out.text.size() / 4);
        out.usage.reported = true;
        return out;
    }

    const char* name() const override { return "scripted"; }

    int total_calls() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return total_calls_;
    }

private:
    Script script_;
    mutable std::mutex mutex_;
    std::map<std::pair<std::string, int>, int> calls_;
    int total_calls_ = 0;
};

/// Backend that always emits one fixed body.
inline ScriptedJudge fixed_judge(std::string body) {
    return ScriptedJudge(
        [body = std::move(body)](const caseval::CaseTurn&, int) { return body; });
}

/// Backend that scores every turn of a conversation with one uniform value
/// drawn from the map; unlisted conversations get the fallback.
inline ScriptedJudge per_conversation_judge(std::map<std::string, double> by_conversation,
                                            double fallback) {
    return ScriptedJudge([by_conversation = std::move(by_conversation),
                          fallback](const caseval::CaseTurn& turn, int) {
        auto it = by_conversation.find(turn.conversation_id);
        return verdict_text_uniform(it == by_conversation.end() ? fallback : it->second);
    });
}

/// Backend throwing TransportError every time.
class DeadJudge final : public caseval::JudgeBackend {
public:
    caseval::RawJudgeOutput invoke(const caseval::CaseTurn&,
                                   const caseval::PromptText&) override {
        throw caseval::TransportError("connect/send failed: scripted outage");
    }

    const char* name() const override { return "dead"; }
};

}  // namespace fixtures
