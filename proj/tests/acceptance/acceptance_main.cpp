// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion is self-contained and uses only public library
// entry points plus the installed CLI binary.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "caseval/pipeline.hpp"
#include "caseval/report.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace {

using namespace caseval;

constexpr std::array<double, 8> kShortA = {0.6890, 0.7429, 0.6526, 0.6943,
                                           0.7603, 0.9421, 0.7636, 0.7004};
constexpr std::array<double, 8> kShortB = {0.7431, 0.7647, 0.6429, 0.6143,
                                           0.7274, 0.9354, 0.6956, 0.6459};
constexpr std::array<double, 8> kLongA = {0.7586, 0.7941, 0.7411, 0.7724,
                                          0.8360, 0.9559, 0.8783, 0.8208};
constexpr std::array<double, 8> kLongB = {0.7132, 0.7578, 0.6546, 0.6143,
                                          0.6825, 0.9329, 0.7052, 0.6759};

std::vector<std::string> g_details;

void note(const std::string& line) { g_details.push_back(line); }

bool close(double got, double want, double tol, const std::string& what) {
    if (std::fabs(got - want) <= tol) return true;
    std::ostringstream msg;
    msg.precision(12);
    msg << what << ": got " << got << ", want " << want << " +/- " << tol;
    note(msg.str());
    return false;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "<unreadable: " + path + ">";
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string scratch(const std::string& leaf) {
    return fixtures::scratch_dir("acceptance_" + leaf);
}

// ---------------------------------------------------------------------------
// 1. Default-profile aggregation reproduces the four reference composites.
// ---------------------------------------------------------------------------
bool criterion_aggregation() {
    const WeightProfile def = builtin_profile("default");
    bool ok = true;
    ok &= close(aggregate_final(kShortA, def), 0.7353, 0.0005, "short system A composite");
    ok &= close(aggregate_final(kShortB, def), 0.7202, 0.0005, "short system B composite");
    ok &= close(aggregate_final(kLongA, def), 0.8099, 0.0005, "long system A composite");
    ok &= close(aggregate_final(kLongB, def), 0.7136, 0.0005, "long system B composite");
    return ok;
}

// ---------------------------------------------------------------------------
// 2. Paired comparison of fixture runs reproduces the reference deltas.
// ---------------------------------------------------------------------------
double fixture_delta(const std::string& leaf, std::size_t conversations, double mean_a,
                     double mean_b) {
    const std::string dir = scratch(leaf);
    const std::string dataset = dir + "/turns.jsonl";
    fixtures::write_dataset(dataset, fixtures::make_turns(conversations, 2));

    EvaluateOptions options;
    options.input_path = dataset;
    options.judge.kind = JudgeKind::mock;
    options.stable_output = true;

    auto judge_a = fixtures::fixed_judge(fixtures::verdict_text_uniform(mean_a));
    options.output_dir = dir + "/a";
    const EvaluateResult run_a = run_evaluate(options, &judge_a);

    auto judge_b = fixtures::fixed_judge(fixtures::verdict_text_uniform(mean_b));
    options.output_dir = dir + "/b";
    const EvaluateResult run_b = run_evaluate(options, &judge_b);

    const CompareReport report = run_compare(run_a.granular_path, run_b.granular_path,
                                             CompareUnit::conversation, 1000, 0);
    if (report.paired.n != conversations) {
        note(leaf + ": paired " + std::to_string(report.paired.n) + " of " +
               std::to_string(conversations) + " conversations");
        return std::numeric_limits<double>::quiet_NaN();
    }
    return report.paired.delta;
}

bool criterion_deltas() {
    bool ok = true;
    ok &= close(fixture_delta("delta_short", 70, 0.7353, 0.7202), 0.0151, 1e-4,
                "short-query delta over 70 conversations");
    ok &= close(fixture_delta("delta_long", 63, 0.8099, 0.7136), 0.0963, 1e-4,
                "long-query delta over 63 conversations");
    return ok;
}

// ---------------------------------------------------------------------------
// 3. Severity band boundary grid.
// ---------------------------------------------------------------------------
bool criterion_severity() {
    const std::array<double, 9> grid = {0.0, 0.30, 0.305, 0.31, 0.60, 0.61, 0.85, 0.86, 1.0};
    const std::array<const char*, 9> want = {"Severe", "Severe",   "Moderate",
                                             "Moderate", "Moderate", "Minor",
                                             "Minor",    "None",     "None"};
    bool ok = true;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const std::string got = band_label(severity_band(grid[i]));
        if (got != want[i]) {
            std::ostringstream msg;
            msg << "score " << grid[i] << " mapped to " << got << ", want " << want[i];
            note(msg.str());
            ok = false;
        }
    }
    return ok;
}

// ---------------------------------------------------------------------------
// 4. Exact Wilcoxon p equals sign-enumeration oracle bit-exactly.
// ---------------------------------------------------------------------------
bool criterion_wilcoxon() {
    const auto start = std::chrono::steady_clock::now();
    bool ok = true;

    const std::vector<double> zeros = {0, 0, 0, 0, 0};
    const std::vector<double> ladder = {1, 2, 3, 4, 5};
    const auto frozen = stats::wilcoxon_signed_rank(ladder, zeros);
    if (frozen.p_value != 0.0625) {
        note("all-positive n=5 case produced p = " + std::to_string(frozen.p_value));
        ok = false;
    }

    oracles::Rng rng(20260822);
    int mismatches = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.upto(9);
        std::vector<double> x(n);
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = static_cast<double>(rng.upto(6)) / 5.0;
            y[i] = static_cast<double>(rng.upto(6)) / 5.0;
        }
        bool all_zero = true;
        for (std::size_t i = 0; i < n; ++i) {
            if (x[i] != y[i]) all_zero = false;
        }
        const auto r = stats::wilcoxon_signed_rank(x, y);
        const double want = all_zero ? 1.0 : oracles::wilcoxon_enum_p(x, y);
        if (r.p_value != want) {
            ++mismatches;
            if (mismatches <= 3) {
                std::ostringstream msg;
                msg.precision(17);
                msg << "trial " << trial << ": p " << r.p_value << " vs oracle " << want;
                note(msg.str());
            }
        }
    }
    if (mismatches > 0) {
        note(std::to_string(mismatches) + " of 200 samples mismatched the oracle");
        ok = false;
    }

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (elapsed >= 5.0) {
        note("oracle sweep took " + std::to_string(elapsed) + "s, budget 5s");
        ok = false;
    }
    return ok;
}

// ---------------------------------------------------------------------------
// 5. Correlation implementations match independent oracles.
// ---------------------------------------------------------------------------
bool criterion_correlations() {
    bool ok = true;

    const std::vector<double> base = {0.1, 0.4, 1.2, 2.5, 6.0};
    std::vector<double> mono;
    for (double v : base) mono.push_back(std::exp(v));
    ok &= close(*stats::spearman_rho(base, mono), 1.0, 1e-12, "spearman on increasing data");
    std::vector<double> anti;
    for (double v : base) anti.push_back(-std::sqrt(v));
    ok &= close(*stats::spearman_rho(base, anti), -1.0, 1e-12, "spearman on decreasing data");

    std::vector<double> affine;
    for (double v : base) affine.push_back(4.0 * v - 7.0);
    ok &= close(*stats::pearson_r(base, affine), 1.0, 1e-12, "pearson on affine data");

    oracles::Rng rng(5551202);
    int mismatches = 0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> a(12);
        std::vector<double> b(12);
        for (int i = 0; i < 12; ++i) {
            a[i] = rng.unit() * 5.0 - 1.0;
            b[i] = static_cast<double>(rng.upto(9));
        }
        const auto p = stats::pearson_r(a, b);
        const auto s = stats::spearman_rho(a, b);
        if (!p || !s) continue;
        if (std::fabs(*p - oracles::pearson_raw_moments(a, b)) > 1e-12) ++mismatches;
        if (std::fabs(*s - oracles::spearman_rank_then_pearson(a, b)) > 1e-12) ++mismatches;
    }
    if (mismatches > 0) {
        note(std::to_string(mismatches) + " correlation values drifted past 1e-12");
        ok = false;
    }
    return ok;
}

// ---------------------------------------------------------------------------
// 6. Bootstrap determinism and degeneracy.
// ---------------------------------------------------------------------------
bool criterion_bootstrap() {
    bool ok = true;
    std::vector<double> diffs;
    oracles::Rng rng(8086);
    for (int i = 0; i < 50; ++i) diffs.push_back(rng.unit() - 0.3);

    const auto first = stats::bootstrap_mean_diff_ci(diffs, 2000, 99);
    const auto second = stats::bootstrap_mean_diff_ci(diffs, 2000, 99);
    if (first.lo != second.lo || first.hi != second.hi) {
        note("same inputs produced different intervals");
        ok = false;
    }

    const std::vector<double> constant(20, -0.125);
    const auto degenerate = stats::bootstrap_mean_diff_ci(constant, 1000, 3);
    if (degenerate.lo != -0.125 || degenerate.hi != -0.125) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "constant differences gave [" << degenerate.lo << ", " << degenerate.hi << "]";
        note(msg.str());
        ok = false;
    }
    return ok;
}

// ---------------------------------------------------------------------------
// 7. Cost model figures and both documented derivations.
// ---------------------------------------------------------------------------
bool criterion_cost() {
    bool ok = true;
    const auto per_turn = stats::estimate_cost(3000, 400);
    ok &= close(per_turn.per_turn_dollars, 0.0138, 1e-9, "per-turn cost at (3000, 400)");

    const CostReport run = run_cost_from_tokens(3000, 400, 469);
    ok &= close(run.estimate.total_dollars, 6.4722, 1e-9, "469-turn exact total");
    ok &= close(run.rounded_per_turn, 0.014, 1e-12, "per-turn rounded to tenth of a cent");
    ok &= close(run.rounded_total, 6.566, 1e-9, "total extrapolated from rounded per-turn");

    const std::string text = format_cost_text(run);
    for (const char* needle : {"$0.013800 per turn", "$6.472200 total", "$0.014 per turn",
                               "$6.566 total"}) {
        if (text.find(needle) == std::string::npos) {
            note(std::string("cost report text missing '") + needle + "'");
            ok = false;
        }
    }
    return ok;
}

// ---------------------------------------------------------------------------
// 8. Schema enforcement under mutation, and fail-closed retry exhaustion.
// ---------------------------------------------------------------------------
bool criterion_schema() {
    bool ok = true;
    oracles::Rng rng(777001);
    const auto& keys = metric_keys();

    int wrong = 0;
    for (int trial = 0; trial < 300; ++trial) {
        std::array<double, kMetricCount> scores;
        for (auto& s : scores) s = rng.unit();
        nlohmann::ordered_json doc = nlohmann::ordered_json::parse(fixtures::verdict_text(scores));

        const int mutation = static_cast<int>(rng.upto(5));
        const std::string key = keys[rng.upto(kMetricCount)];
        bool should_pass = false;
        switch (mutation) {
            case 0:
                should_pass = true;
                break;
            case 1:
                doc.erase(key + "_score");
                break;
            case 2:
                doc[key + "_score"] = 1.0 + rng.unit() + 0.001;
                break;
            case 3:
                doc[key + "_score"] = "very high";
                break;
            case 4:
                doc[key + "_justification"] = "   ";
                break;
        }
        const VerdictParseResult r = parse_verdict(doc.dump(), VerdictMode::strict);
        if (static_cast<bool>(r.verdict) != should_pass) ++wrong;
    }
    if (wrong > 0) {
        note(std::to_string(wrong) + " of 300 mutated verdicts classified wrongly");
        ok = false;
    }

    // retry exhaustion: one turn always garbage, the batch still finishes
    const std::string dir = scratch("schema_retries");
    const std::string dataset = dir + "/turns.jsonl";
    fixtures::write_dataset(dataset, fixtures::make_turns(3, 1));
    fixtures::ScriptedJudge judge([](const CaseTurn& turn, int) -> std::string {
        if (turn.conversation_id == "conv-1") return "never a verdict";
        return fixtures::verdict_text_uniform(0.9);
    });
    EvaluateOptions options;
    options.input_path = dataset;
    options.output_dir = dir + "/out";
    options.judge.kind = JudgeKind::mock;
    options.max_retries = 2;
    options.stable_output = true;
    const EvaluateResult result = run_evaluate(options, &judge);

    if (result.ok != 2 || result.failed_closed != 1) {
        note("retry fixture finished with " + std::to_string(result.ok) + " ok, " +
               std::to_string(result.failed_closed) + " failed closed; want 2 and 1");
        ok = false;
    }
    for (const auto& rec : result.records) {
        if (rec.turn.conversation_id != "conv-1") continue;
        if (rec.status != EvalStatus::failed_closed || rec.attempts != 3 ||
            rec.attempt_log.size() != 3) {
            note("poisoned record kept " + std::to_string(rec.attempt_log.size()) +
                   " attempts; want all 3 raw attempts on a failed-closed record");
            ok = false;
        }
        for (const auto& a : rec.attempt_log) {
            if (a.raw != "never a verdict" || !a.failure) {
                note("raw judge output was not preserved verbatim on a failed attempt");
                ok = false;
                break;
            }
        }
    }
    return ok;
}

// ---------------------------------------------------------------------------
// 9. End-to-end determinism through the installed CLI binary.
// ---------------------------------------------------------------------------
bool criterion_cli_determinism() {
    const std::string dir = scratch("cli_determinism");
    const std::string dataset = dir + "/turns.jsonl";
    fixtures::write_dataset(dataset, fixtures::make_turns(5, 4));

    const std::string cli = CASEVAL_CLI_PATH;
    if (!std::filesystem::exists(cli)) {
        note("CLI binary not found at " + cli);
        return false;
    }

    auto invoke = [&](const std::string& out_dir) {
        std::ostringstream cmd;
        cmd << "\"" << cli << "\" evaluate --input \"" << dataset << "\" --output-dir \""
            << out_dir << "\" --judge mock --seed 7 --parallelism 4"
            << " --stable-output > /dev/null 2>&1";
        return std::system(cmd.str().c_str());
    };

    bool ok = true;
    if (invoke(dir + "/run1") != 0 || invoke(dir + "/run2") != 0) {
        note("CLI evaluate run exited nonzero");
        return false;
    }

    for (const char* name : {"granular.jsonl", "compact.csv", "failures.jsonl",
                             "rejects.jsonl", "manifest.json"}) {
        const std::string a = slurp(dir + "/run1/" + name);
        const std::string b = slurp(dir + "/run2/" + name);
        if (a != b || a.rfind("<unreadable", 0) == 0) {
            note(std::string(name) + " differs between the two runs");
            ok = false;
        }
    }

    const auto manifest = nlohmann::json::parse(slurp(dir + "/run1/manifest.json"),
                                                nullptr, false);
    if (manifest.is_discarded()) {
        note("manifest.json is not valid JSON");
        return false;
    }
    const auto evaluated = manifest.at("results").at("evaluated").get<std::size_t>();
    const auto ok_count = manifest.at("results").at("ok").get<std::size_t>();
    const auto failed = manifest.at("results").at("failed_closed").get<std::size_t>();
    const auto parsed = manifest.at("dataset").at("parsed").get<std::size_t>();
    if (evaluated != ok_count + failed || parsed != evaluated || evaluated != 20) {
        std::ostringstream msg;
        msg << "conservation violated: evaluated " << evaluated << ", ok " << ok_count
            << ", failed_closed " << failed << ", parsed " << parsed;
        note(msg.str());
        ok = false;
    }
    return ok;
}

// ---------------------------------------------------------------------------
// 10. Conclusions stable across all built-in weight profiles.
// ---------------------------------------------------------------------------
bool criterion_weight_robustness() {
    bool ok = true;
    const WeightProfile def = builtin_profile("default");
    const std::array<std::pair<const char*, std::array<double, 8>>, 4> systems = {{
        {"short A", kShortA},
        {"short B", kShortB},
        {"long A", kLongA},
        {"long B", kLongB},
    }};

    for (const char* name : {"default", "uniform", "retrieval_heavy"}) {
        const WeightProfile profile = builtin_profile(name);
        const double long_a = aggregate_final(kLongA, profile);
        const double long_b = aggregate_final(kLongB, profile);
        if (!(long_a > long_b)) {
            note(std::string("profile ") + name + " flipped the long-query ordering");
            ok = false;
        }
        for (const auto& [label, means] : systems) {
            const double baseline = aggregate_final(means, def);
            const double shifted = aggregate_final(means, profile);
            const double rel = std::fabs(shifted - baseline) / baseline;
            if (rel >= 0.03) {
                std::ostringstream msg;
                msg << label << " under " << name << " moved " << rel * 100.0
                    << "% relative, budget 3%";
                note(msg.str());
                ok = false;
            }
        }
    }
    return ok;
}

struct Criterion {
    int id;
    const char* description;
    std::function<bool()> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "default-profile aggregation reproduces the four reference composites",
         criterion_aggregation},
        {2, "paired comparison reproduces the reference deltas (+0.0151, +0.0963)",
         criterion_deltas},
        {3, "severity bands map the boundary grid correctly", criterion_severity},
        {4, "exact Wilcoxon p is bit-identical to the sign-enumeration oracle",
         criterion_wilcoxon},
        {5, "correlations match independent oracles to 1e-12", criterion_correlations},
        {6, "bootstrap intervals are deterministic and collapse on constant diffs",
         criterion_bootstrap},
        {7, "cost model yields $0.0138/turn and $6.4722 per 469 turns, both derivations shown",
         criterion_cost},
        {8, "mutated verdicts are rejected and exhausted retries fail closed with raw attempts",
         criterion_schema},
        {9, "CLI runs are byte-identical and the manifest counts are conserved",
         criterion_cli_determinism},
        {10, "system ordering and composites are stable across all built-in profiles",
         criterion_weight_robustness},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        g_details.clear();
        bool passed = false;
        try {
            passed = c.run();
        } catch (const std::exception& e) {
            note(std::string("unhandled exception: ") + e.what());
        }
        std::cout << (passed ? "[PASS]" : "[FAIL]") << " criterion " << c.id << ": "
                  << c.description << "\n";
        if (!passed) {
            ++failures;
            for (const auto& line : g_details) std::cout << "       " << line << "\n";
        }
    }

    if (failures > 0) {
        std::cout << failures << " of " << criteria.size() << " criteria failed\n";
        return 1;
    }
    std::cout << "all " << criteria.size() << " criteria passed\n";
    return 0;
}
