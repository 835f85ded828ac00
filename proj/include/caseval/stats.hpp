#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "caseval/rubric.hpp"
#include "caseval/util.hpp"
#include "caseval/verdict.hpp"

namespace caseval::stats {

// =============================================================================
// Ranking helpers
// =============================================================================

/// Average ranks (1-based) with ties sharing the mean of their rank span.
inline std::vector<double> average_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double shared = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

// =============================================================================
// Wilcoxon signed-rank test
// =============================================================================

struct WilcoxonResult {
    double w_statistic = 0.0;  // min(W+, W-)
    double w_plus = 0.0;
    double w_minus = 0.0;
    double p_value = 1.0;
    std::size_t n_effective = 0;  // pairs remaining after zero differences drop
    std::size_t zeros_dropped = 0;
    bool ties_present = false;
    bool degenerate = false;  // every difference was zero
    std::string method;       // "exact", "normal_approx", or "degenerate"
};

namespace detail {

/// Exact null distribution of 2*W+ by convolution over doubled ranks.
/// Doubling keeps average ranks integral, so the distribution fits an
/// integer-indexed table of size sum(2r) + 1.
inline double exact_p_two_sided(const std::vector<double>& ranks, double w_min) {
    long total2 = 0;
    std::vector<long> doubled;
    doubled.reserve(ranks.size());
    for (double r : ranks) {
        const long d = std::lround(2.0 * r);
        doubled.push_back(d);
        total2 += d;
    }

    std::vector<double> count(static_cast<std::size_t>(total2) + 1, 0.0);
    count[0] = 1.0;
    long reach = 0;
    for (long d : doubled) {
        reach += d;
        for (long s = reach; s >= d; --s) {
            count[static_cast<std::size_t>(s)] += count[static_cast<std::size_t>(s - d)];
        }
    }

    const long bound = std::lround(2.0 * w_min);
    double below = 0.0;
    double all = 0.0;
    for (long s = 0; s <= total2; ++s) {
        all += count[static_cast<std::size_t>(s)];
        if (s <= bound) below += count[static_cast<std::size_t>(s)];
    }
    return std::min(1.0, 2.0 * below / all);
}

inline double normal_two_sided(double z) {
    return std::erfc(std::abs(z) / std::sqrt(2.0));
}

}  // namespace detail

/// Paired two-sided Wilcoxon signed-rank test. Zero differences are dropped
/// and counted; tied magnitudes take average ranks. Effective n up to 25 is
/// handled exactly; larger n uses the normal approximation with tie and
/// continuity corrections.
inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& x,
                                           const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("wilcoxon: length mismatch");
    if (x.empty()) throw std::invalid_argument("wilcoxon: empty sample");

    WilcoxonResult r;
    std::vector<double> diffs;
    diffs.reserve(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        if (d == 0.0) {
            ++r.zeros_dropped;
        } else {
            diffs.push_back(d);
        }
    }
    r.n_effective = diffs.size();
    if (diffs.empty()) {
        r.degenerate = true;
        r.p_value = 1.0;
        r.method = "degenerate";
        return r;
    }

    std::vector<double> mags(diffs.size());
    for (std::size_t i = 0; i < diffs.size(); ++i) mags[i] = std::abs(diffs[i]);
    const std::vector<double> ranks = average_ranks(mags);

    for (std::size_t i = 0; i < mags.size() && !r.ties_present; ++i) {
        for (std::size_t j = i + 1; j < mags.size(); ++j) {
            if (mags[i] == mags[j]) {
                r.ties_present = true;
                break;
            }
        }
    }

    for (std::size_t i = 0; i < diffs.size(); ++i) {
        if (diffs[i] > 0.0) {
            r.w_plus += ranks[i];
        } else {
            r.w_minus += ranks[i];
        }
    }
    r.w_statistic = std::min(r.w_plus, r.w_minus);

    const std::size_t n = r.n_effective;
    if (n <= 25) {
        r.p_value = detail::exact_p_two_sided(ranks, r.w_statistic);
        r.method = "exact";
        return r;
    }

    const double dn = static_cast<double>(n);
    const double mu = dn * (dn + 1.0) / 4.0;
    double tie_term = 0.0;
    {
        std::vector<double> sorted = mags;
        std::sort(sorted.begin(), sorted.end());
        std::size_t i = 0;
        while (i < sorted.size()) {
            std::size_t j = i;
            while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
            const double t = static_cast<double>(j - i + 1);
            tie_term += t * t * t - t;
            i = j + 1;
        }
    }
    const double sigma2 = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0 - tie_term / 48.0;
    const double sigma = std::sqrt(sigma2);
    const double dev = r.w_plus - mu;
    const double cc = dev > 0.0 ? -0.5 : (dev < 0.0 ? 0.5 : 0.0);
    const double z = sigma > 0.0 ? (dev + cc) / sigma : 0.0;
    r.p_value = std::min(1.0, detail::normal_two_sided(z));
    r.method = "normal_approx";
    return r;
}

// =============================================================================
// Bootstrap confidence interval
// =============================================================================

struct BootstrapCI {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t resamples = 0;
    std::uint64_t seed = 0;
    double level = 0.95;
};

namespace detail {

/// Linear-interpolation quantile over a sorted vector (the common spreadsheet
/// definition: position q*(n-1)).
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double pos = q * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= n) return sorted[n - 1];
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace detail

/// Percentile bootstrap CI for the mean of diffs. Each resample draws its
/// indices from a counter-derived stream, so the interval is a pure function
/// of (diffs, resamples, seed, level) regardless of evaluation order.
inline BootstrapCI bootstrap_mean_diff_ci(const std::vector<double>& diffs,
                                          std::size_t resamples, std::uint64_t seed,
                                          double level = 0.95) {
    if (diffs.empty()) throw std::invalid_argument("bootstrap: empty sample");
    if (resamples < 1000) throw std::invalid_argument("bootstrap: need at least 1000 resamples");
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("bootstrap: bad level");

    const std::size_t n = diffs.size();
    std::vector<double> means(resamples);
    for (std::size_t b = 0; b < resamples; ++b) {
        std::uint64_t state = seed + (static_cast<std::uint64_t>(b) + 1) * 0x9E3779B97F4A7C15ULL;
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sum += diffs[util::splitmix64(state) % n];
        }
        means[b] = sum / static_cast<double>(n);
    }
    std::sort(means.begin(), means.end());

    BootstrapCI ci;
    ci.resamples = resamples;
    ci.seed = seed;
    ci.level = level;
    const double alpha = (1.0 - level) / 2.0;
    ci.lo = detail::sorted_quantile(means, alpha);
    ci.hi = detail::sorted_quantile(means, 1.0 - alpha);
    return ci;
}

// =============================================================================
// Correlations
// =============================================================================

/// Product-moment correlation; nullopt when either variance is zero.
inline std::optional<double> pearson_r(const std::vector<double>& x,
                                       const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("pearson: need at least 2 points");

    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

/// Rank correlation: Pearson over tie-averaged ranks; nullopt when either
/// rank vector is constant.
inline std::optional<double> spearman_rho(const std::vector<double>& x,
                                          const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("spearman: need at least 2 points");
    return pearson_r(average_ranks(x), average_ranks(y));
}

// =============================================================================
// Inter-metric correlation matrix
// =============================================================================

struct CorrelationMatrix {
    std::array<std::array<double, kMetricCount>, kMetricCount> values{};  // NaN = undefined
    std::array<bool, kMetricCount> constant_column{};
    std::size_t records_used = 0;
};

/// Pairwise Pearson correlations over turn-level metric score columns.
inline CorrelationMatrix metric_correlation_matrix(
    const std::vector<std::array<double, kMetricCount>>& rows) {
    if (rows.size() < 2) {
        throw std::invalid_argument("correlation matrix: need at least 2 scored records");
    }
    std::array<std::vector<double>, kMetricCount> cols;
    for (auto& c : cols) c.reserve(rows.size());
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < kMetricCount; ++i) cols[i].push_back(row[i]);
    }

    CorrelationMatrix m;
    m.records_used = rows.size();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < kMetricCount; ++i) {
        const auto self = pearson_r(cols[i], cols[i]);
        m.constant_column[i] = !self.has_value();
    }
    for (std::size_t i = 0; i < kMetricCount; ++i) {
        for (std::size_t j = 0; j < kMetricCount; ++j) {
            if (m.constant_column[i] || m.constant_column[j]) {
                m.values[i][j] = nan;
            } else if (i == j) {
                m.values[i][j] = 1.0;
            } else {
                m.values[i][j] = *pearson_r(cols[i], cols[j]);
            }
        }
    }
    return m;
}

inline CorrelationMatrix metric_correlation_matrix(const std::vector<EvalRecord>& records) {
    std::vector<std::array<double, kMetricCount>> rows;
    for (const auto& r : records) {
        if (r.status == EvalStatus::ok) rows.push_back(r.verdict->scores);
    }
    return metric_correlation_matrix(rows);
}

// =============================================================================
// Human agreement
// =============================================================================

struct MetricAgreement {
    std::string metric;            // label-file vocabulary
    std::string score_metric;      // canonical metric key it maps onto
    std::size_t included = 0;      // turns with a strict majority and a scored record
    std::size_t tie_excluded = 0;  // turns dropped for a split vote
    std::size_t skipped_unknown = 0;  // labels pointing at missing or failed turns
    std::size_t matches = 0;
    double agreement = std::numeric_limits<double>::quiet_NaN();  // matches / included
};

/// Canonical score key audited by a label-file metric name.
inline std::string agreement_score_metric(const std::string& label_metric) {
    if (label_metric == "resolution_alignment") return "case_resolution_alignment";
    return label_metric;
}

/// Judge-vs-human agreement per audited metric. Human votes are majority
/// over annotators with split votes excluded and counted; the judge passes a
/// turn when its score reaches the threshold.
inline std::vector<MetricAgreement> human_agreement(const std::vector<EvalRecord>& records,
                                                    const std::vector<HumanLabel>& labels,
                                                    double threshold = 0.5) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw std::invalid_argument("agreement threshold must be inside (0,1)");
    }

    std::map<std::pair<std::string, int>, const EvalRecord*> ok_records;
    for (const auto& r : records) {
        if (r.status == EvalStatus::ok) {
            ok_records[{r.turn.conversation_id, r.turn.turn_index}] = &r;
        }
    }

    // metric -> turn -> (zeros, ones)
    std::map<std::string, std::map<std::pair<std::string, int>, std::pair<int, int>>> votes;
    for (const auto& l : labels) {
        auto& tally = votes[l.metric][{l.conversation_id, l.turn_index}];
        if (l.label == 0) {
            ++tally.first;
        } else {
            ++tally.second;
        }
    }

    std::vector<MetricAgreement> out;
    for (const auto& metric : human_label_metrics()) {
        auto vit = votes.find(metric);
        if (vit == votes.end()) continue;

        MetricAgreement a;
        a.metric = metric;
        a.score_metric = agreement_score_metric(metric);
        const std::size_t score_idx = *metric_index(a.score_metric);

        for (const auto& [turn_key, tally] : vit->second) {
            auto rit = ok_records.find(turn_key);
            if (rit == ok_records.end()) {
                ++a.skipped_unknown;
                continue;
            }
            if (tally.first == tally.second) {
                ++a.tie_excluded;
                continue;
            }
            const bool human_pass = tally.second > tally.first;
            const bool judge_pass = rit->second->verdict->scores[score_idx] >= threshold;
            ++a.included;
            if (human_pass == judge_pass) ++a.matches;
        }
        if (a.included > 0) {
            a.agreement = static_cast<double>(a.matches) / static_cast<double>(a.included);
        }
        out.push_back(std::move(a));
    }
    return out;
}

// =============================================================================
// Cost model
// =============================================================================

struct TokenPrices {
    double input_per_token = 3e-6;    // dollars
    double output_per_token = 12e-6;  // dollars
};

struct CostEstimate {
    long input_tokens = 0;
    long output_tokens = 0;
    TokenPrices prices;
    std::size_t turns = 1;
    double per_turn_dollars = 0.0;
    double total_dollars = 0.0;
};

/// Cost of a single judge call.
inline CostEstimate estimate_cost(long input_tokens, long output_tokens,
                                  TokenPrices prices = {}) {
    if (input_tokens < 0 || output_tokens < 0) {
        throw std::invalid_argument("token counts must be non-negative");
    }
    CostEstimate c;
    c.input_tokens = input_tokens;
    c.output_tokens = output_tokens;
    c.prices = prices;
    c.turns = 1;
    c.total_dollars = prices.input_per_token * static_cast<double>(input_tokens) +
                      prices.output_per_token * static_cast<double>(output_tokens);
    c.per_turn_dollars = c.total_dollars;
    return c;
}

/// Cost of a whole run from total token counters.
inline CostEstimate estimate_run_cost(long total_input_tokens, long total_output_tokens,
                                      std::size_t turns, TokenPrices prices = {}) {
    CostEstimate c = estimate_cost(total_input_tokens, total_output_tokens, prices);
    c.turns = turns;
    c.per_turn_dollars = turns > 0 ? c.total_dollars / static_cast<double>(turns) : 0.0;
    return c;
}

// =============================================================================
// Corpus statistics
// =============================================================================

struct QueryLengthStats {
    std::size_t count = 0;
    double mean_words = 0.0;
    double median_words = 0.0;
};

inline QueryLengthStats query_length_stats(const std::vector<CaseTurn>& turns) {
    QueryLengthStats s;
    s.count = turns.size();
    if (turns.empty()) return s;

    std::vector<double> counts;
    counts.reserve(turns.size());
    double sum = 0.0;
    for (const auto& t : turns) {
        const auto w = static_cast<double>(util::word_count(t.query));
        counts.push_back(w);
        sum += w;
    }
    s.mean_words = sum / static_cast<double>(counts.size());
    std::sort(counts.begin(), counts.end());
    const std::size_t n = counts.size();
    s.median_words = (n % 2 == 1) ? counts[n / 2] : (counts[n / 2 - 1] + counts[n / 2]) / 2.0;
    return s;
}

// =============================================================================
// Paired comparison
// =============================================================================

struct PairedSample {
    std::vector<std::string> ids;
    std::vector<double> x;
    std::vector<double> y;
};

/// Inner-join two id -> score series, keeping the first series' id order.
inline PairedSample build_paired(const std::vector<std::pair<std::string, double>>& a,
                                 const std::vector<std::pair<std::string, double>>& b) {
    std::map<std::string, double> bmap;
    for (const auto& [id, v] : b) {
        if (!bmap.emplace(id, v).second) {
            throw std::invalid_argument("duplicate unit id in second sample: " + id);
        }
    }
    std::map<std::string, bool> seen;
    PairedSample s;
    for (const auto& [id, v] : a) {
        if (seen.count(id)) throw std::invalid_argument("duplicate unit id in first sample: " + id);
        seen[id] = true;
        auto it = bmap.find(id);
        if (it == bmap.end()) continue;
        s.ids.push_back(id);
        s.x.push_back(v);
        s.y.push_back(it->second);
    }
    return s;
}

struct StatReport {
    std::size_t n = 0;
    double mean_x = 0.0;
    double mean_y = 0.0;
    double delta = 0.0;  // mean_x - mean_y
    WilcoxonResult wilcoxon;
    BootstrapCI ci;
    std::vector<std::string> notes;
};

/// The paired comparison battery: means, delta, Wilcoxon, bootstrap CI.
inline StatReport compare_paired(const PairedSample& sample, std::size_t resamples,
                                 std::uint64_t seed, double level = 0.95) {
    if (sample.ids.empty()) {
        throw std::invalid_argument("paired comparison: no overlapping units");
    }
    StatReport r;
    r.n = sample.ids.size();
    const double n = static_cast<double>(r.n);
    r.mean_x = std::accumulate(sample.x.begin(), sample.x.end(), 0.0) / n;
    r.mean_y = std::accumulate(sample.y.begin(), sample.y.end(), 0.0) / n;
    r.delta = r.mean_x - r.mean_y;

    r.wilcoxon = wilcoxon_signed_rank(sample.x, sample.y);
    std::vector<double> diffs(r.n);
    for (std::size_t i = 0; i < r.n; ++i) diffs[i] = sample.x[i] - sample.y[i];
    r.ci = bootstrap_mean_diff_ci(diffs, resamples, seed, level);

    r.notes.push_back("wilcoxon method: " + r.wilcoxon.method);
    r.notes.push_back("zeros dropped: " + std::to_string(r.wilcoxon.zeros_dropped));
    r.notes.push_back("bootstrap: percentile, " + std::to_string(resamples) + " resamples, seed " +
                      std::to_string(seed));
    return r;
}

}  // namespace caseval::stats
