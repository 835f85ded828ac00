#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "caseval/pipeline.hpp"
#include "caseval/report.hpp"
#include "caseval/version.hpp"

namespace {

struct EvaluateArgs {
    std::string input;
    std::string output_dir;
    std::string judge = "mock";
    std::string endpoint;
    std::string model;
    std::string api_key_env = "CASEVAL_API_KEY";
    std::string weights = "default";
    std::string rubric;
    int max_retries = 2;
    int parallelism = 4;
    int timeout = 120;
    std::uint64_t seed = 0;
    bool strict = false;
    bool tolerant = false;
    bool stable_output = false;
    bool fail_on_closed = false;
    double gate_threshold = -1.0;
    bool gate_threshold_set = false;
};

int cmd_evaluate(const EvaluateArgs& args) {
    caseval::EvaluateOptions options;
    options.input_path = args.input;
    options.output_dir = args.output_dir;
    options.max_retries = args.max_retries;
    options.parallelism = args.parallelism;
    options.seed = args.seed;
    options.stable_output = args.stable_output;
    options.profile = caseval::resolve_profile(args.weights);
    if (!args.rubric.empty()) options.rubric = caseval::load_rubric_file(args.rubric);

    if (args.strict) {
        options.dataset_mode = caseval::DatasetMode::strict;
        options.verdict_mode = caseval::VerdictMode::strict;
    } else if (args.tolerant) {
        options.dataset_mode = caseval::DatasetMode::lenient;
        options.verdict_mode = caseval::VerdictMode::tolerant;
    }

    options.judge.kind =
        args.judge == "remote" ? caseval::JudgeKind::remote : caseval::JudgeKind::mock;
    options.judge.endpoint = args.endpoint;
    options.judge.model = args.model;
    options.judge.api_key_env = args.api_key_env;
    options.judge.timeout_seconds = args.timeout;
    options.judge.mock_seed = args.seed;

    const caseval::EvaluateResult result = caseval::run_evaluate(options);

    if (!result.rejects.empty()) {
        std::cerr << "warning: " << result.rejects.size()
                  << " input rows rejected; see rejects.jsonl\n";
    }
    for (const auto& rec : result.records) {
        for (const auto& attempt : rec.attempt_log) {
            for (const auto& w : attempt.warnings) {
                std::cerr << "warning: " << rec.turn.conversation_id << "#"
                          << rec.turn.turn_index << ": " << w << "\n";
            }
        }
    }

    double mean_final = 0.0;
    if (result.ok > 0) {
        for (const auto& rec : result.records) {
            if (rec.final_score) mean_final += *rec.final_score;
        }
        mean_final /= static_cast<double>(result.ok);
    }

    std::cout << "evaluated " << result.records.size() << " turns: " << result.ok << " ok, "
              << result.failed_closed << " failed closed, " << result.rejects.size()
              << " rejected rows\n";
    if (result.ok > 0) {
        std::cout << "mean final score: " << mean_final << " over " << result.ok
                  << " scored turns\n";
    }
    std::cout << "outputs in " << args.output_dir
              << ": granular.jsonl compact.csv failures.jsonl rejects.jsonl manifest.json\n";

    bool gate_tripped = false;
    if (args.fail_on_closed && result.failed_closed > 0) {
        std::cerr << "gate: " << result.failed_closed << " turns failed closed\n";
        gate_tripped = true;
    }
    if (args.gate_threshold_set) {
        if (result.ok == 0) {
            std::cerr << "gate: no scored turns, cannot meet threshold "
                      << args.gate_threshold << "\n";
            gate_tripped = true;
        } else if (mean_final < args.gate_threshold) {
            std::cerr << "gate: mean final score " << mean_final << " below threshold "
                      << args.gate_threshold << "\n";
            gate_tripped = true;
        }
    }
    return gate_tripped ? 2 : 0;
}

struct CompareArgs {
    std::string eval_a;
    std::string eval_b;
    std::string unit = "conversation";
    std::string output_dir;
    std::size_t resamples = 10000;
    std::uint64_t seed = 0;
    double level = 0.95;
};

int cmd_compare(const CompareArgs& args) {
    const caseval::CompareUnit unit = args.unit == "turn" ? caseval::CompareUnit::turn
                                                          : caseval::CompareUnit::conversation;
    const caseval::CompareReport report = caseval::run_compare(
        args.eval_a, args.eval_b, unit, args.resamples, args.seed, args.level);
    std::cout << caseval::format_compare_text(report);
    if (!args.output_dir.empty()) {
        const caseval::CompareArtifacts paths =
            caseval::write_compare_report(report, args.output_dir);
        std::cout << "\nreport written to " << paths.report_path << "\n";
    }
    return 0;
}

struct AgreementArgs {
    std::string eval_path;
    std::string labels_path;
    double threshold = 0.5;
    std::string output;
};

int cmd_agreement(const AgreementArgs& args) {
    const caseval::AgreementReport report =
        caseval::run_agreement(args.eval_path, args.labels_path, args.threshold);
    std::cout << caseval::format_agreement_text(report);
    if (!args.output.empty()) {
        std::ofstream out(args.output, std::ios::trunc);
        if (!out) throw caseval::IoError("cannot write " + args.output);
        out << caseval::agreement_to_json(report).dump(2) << "\n";
        std::cout << "report written to " << args.output << "\n";
    }
    return 0;
}

struct CostArgs {
    std::string manifest;
    long input_tokens = -1;
    long output_tokens = -1;
    long turns = 1;
    double input_price = 3e-6;
    double output_price = 12e-6;
    std::string output;
};

int cmd_cost(const CostArgs& args) {
    caseval::stats::TokenPrices prices;
    prices.input_per_token = args.input_price;
    prices.output_per_token = args.output_price;

    caseval::CostReport report;
    if (!args.manifest.empty()) {
        report = caseval::run_cost_from_manifest(args.manifest, prices);
    } else if (args.input_tokens >= 0 && args.output_tokens >= 0) {
        if (args.turns < 0) throw caseval::ConfigError("--turns must be non-negative");
        report = caseval::run_cost_from_tokens(args.input_tokens, args.output_tokens,
                                               static_cast<std::size_t>(args.turns), prices);
    } else {
        throw caseval::ConfigError(
            "provide --manifest, or --input-tokens and --output-tokens (per turn) with --turns");
    }
    std::cout << caseval::format_cost_text(report);
    if (!args.output.empty()) {
        std::ofstream out(args.output, std::ios::trunc);
        if (!out) throw caseval::IoError("cannot write " + args.output);
        out << caseval::cost_to_json(report).dump(2) << "\n";
        std::cout << "report written to " << args.output << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Batch judge harness for multi-turn enterprise RAG conversations"};
    app.set_version_flag("--version",
                         std::string(caseval::kToolName) + " " + caseval::kToolVersion);
    app.require_subcommand(1);

    EvaluateArgs ev;
    CLI::App* evaluate = app.add_subcommand("evaluate", "Score a dataset with the judge");
    evaluate->add_option("--input", ev.input, "Line-delimited JSON dataset")->required();
    evaluate->add_option("--output-dir", ev.output_dir, "Directory for run artifacts")
        ->required();
    evaluate->add_option("--judge", ev.judge, "Judge backend")
        ->check(CLI::IsMember({"remote", "mock"}))
        ->capture_default_str();
    evaluate->add_option("--endpoint", ev.endpoint, "Chat-completions endpoint (remote)");
    evaluate->add_option("--model", ev.model, "Judge model id (remote)");
    evaluate
        ->add_option("--api-key-env", ev.api_key_env,
                     "Environment variable holding the API key (remote)")
        ->capture_default_str();
    evaluate
        ->add_option("--weights", ev.weights,
                     "Weight profile: default, uniform, retrieval_heavy, or a JSON file")
        ->capture_default_str();
    evaluate->add_option("--rubric", ev.rubric, "Rubric override JSON file");
    evaluate->add_option("--max-retries", ev.max_retries, "Validation retries per turn")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    evaluate->add_option("--parallelism", ev.parallelism, "Concurrent judge calls")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    evaluate->add_option("--timeout", ev.timeout, "Request timeout in seconds (remote)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    evaluate->add_option("--seed", ev.seed, "Seed for every random element")
        ->capture_default_str();
    CLI::Option* strict_flag =
        evaluate->add_flag("--strict", ev.strict, "Strict dataset and verdict parsing");
    evaluate->add_flag("--tolerant", ev.tolerant, "Tolerant verdict parsing")
        ->excludes(strict_flag);
    evaluate->add_flag("--stable-output", ev.stable_output,
                       "Pin manifest timestamp and duration for reproducible bytes");
    evaluate->add_flag("--fail-on-closed", ev.fail_on_closed,
                       "Exit 2 when any turn fails closed");
    evaluate
        ->add_option("--gate-threshold", ev.gate_threshold,
                     "Exit 2 when the mean final score falls below this value")
        ->check(CLI::Range(0.0, 1.0));

    CompareArgs cp;
    CLI::App* compare = app.add_subcommand("compare", "Paired comparison of two runs");
    compare->add_option("eval_a", cp.eval_a, "granular.jsonl of system A")->required();
    compare->add_option("eval_b", cp.eval_b, "granular.jsonl of system B")->required();
    compare->add_option("--unit", cp.unit, "Pairing unit")
        ->check(CLI::IsMember({"conversation", "turn"}))
        ->capture_default_str();
    compare->add_option("--output-dir", cp.output_dir, "Directory for comparison artifacts");
    compare->add_option("--resamples", cp.resamples, "Bootstrap resamples")
        ->check(CLI::Range(std::size_t{1000}, std::size_t{10000000}))
        ->capture_default_str();
    compare->add_option("--seed", cp.seed, "Bootstrap seed")->capture_default_str();
    compare->add_option("--level", cp.level, "Confidence level")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();

    AgreementArgs ag;
    CLI::App* agreement =
        app.add_subcommand("agreement", "Judge vs human-majority agreement");
    agreement->add_option("eval", ag.eval_path, "granular.jsonl of the run")->required();
    agreement->add_option("labels", ag.labels_path, "Line-delimited human labels")->required();
    agreement->add_option("--threshold", ag.threshold, "Judge pass threshold")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    agreement->add_option("--output", ag.output, "Write the JSON report here");

    CostArgs co;
    CLI::App* cost = app.add_subcommand("cost", "Judge cost from usage counters");
    cost->add_option("--manifest", co.manifest, "manifest.json of a finished run");
    cost->add_option("--input-tokens", co.input_tokens, "Input tokens per turn");
    cost->add_option("--output-tokens", co.output_tokens, "Output tokens per turn");
    cost->add_option("--turns", co.turns, "Turn count for per-token mode")
        ->capture_default_str();
    cost->add_option("--input-price", co.input_price, "Dollars per input token")
        ->capture_default_str();
    cost->add_option("--output-price", co.output_price, "Dollars per output token")
        ->capture_default_str();
    cost->add_option("--output", co.output, "Write the JSON report here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    ev.gate_threshold_set = evaluate->count("--gate-threshold") > 0;

    try {
        if (app.got_subcommand(evaluate)) return cmd_evaluate(ev);
        if (app.got_subcommand(compare)) return cmd_compare(cp);
        if (app.got_subcommand(agreement)) return cmd_agreement(ag);
        if (app.got_subcommand(cost)) return cmd_cost(co);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
