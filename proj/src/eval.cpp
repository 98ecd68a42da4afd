#include "icrs/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "icrs/error.hpp"
#include "icrs/rng.hpp"

namespace icrs::eval {

void EvalConfig::validate() const {
    if (k_values.empty())
        throw domain_error("malformed config", "k_values must be non-empty");
    for (int k : k_values) {
        if (k < 1 || k > 3)
            throw domain_error("malformed config",
                               "k = " + std::to_string(k) + " outside 1..3");
    }
    if (item_label_budget < 1 || item_label_budget > 10)
        throw domain_error("malformed config",
                           "item_label_budget outside 1..10");
    if (bootstrap_resamples < 1)
        throw domain_error("malformed config", "bootstrap_resamples < 1");
    if (confidence <= 0.0 || confidence >= 1.0)
        throw domain_error("malformed config", "confidence outside (0,1)");
}

std::string MetricValue::display() const {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f ± %.3f", point,
                  (ci_high - ci_low) / 2.0);
    return buf;
}

double precision_at_k(const retrieval::RankedList& ranked,
                      const std::set<std::string>& gt, int k) {
    if (k < 1) throw domain_error("malformed config", "k must be >= 1");
    int hits = 0;
    for (int j = 0; j < k && j < static_cast<int>(ranked.entries.size()); ++j) {
        if (gt.count(ranked.entries[j].id)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(k);
}

MeanPrecision mean_per_item_precision(
    const std::map<std::string, retrieval::RankedList>& selections,
    const std::map<std::string, std::set<std::string>>& gt_sets, int k,
    EmptyGtPolicy policy) {
    MeanPrecision result;
    double sum = 0.0;
    for (const auto& [item_id, gt] : gt_sets) {
        if (gt.empty() && policy == EmptyGtPolicy::exclude) continue;
        auto sel = selections.find(item_id);
        if (sel == selections.end())
            throw domain_error("missing selection", "item '" + item_id + "'");
        sum += gt.empty() ? 0.0 : precision_at_k(sel->second, gt, k);
        ++result.n;
    }
    result.value = result.n == 0 ? 0.0 : sum / static_cast<double>(result.n);
    return result;
}

namespace {

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Linear-interpolation quantile over a sorted vector.
double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.size() == 1) return sorted[0];
    double h = p * static_cast<double>(sorted.size() - 1);
    std::size_t lo = static_cast<std::size_t>(h);
    std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    double frac = h - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

double resample_mean(const std::vector<double>& samples, std::uint64_t seed) {
    SplitMix64 rng(seed);
    double s = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i)
        s += samples[rng.next_below(samples.size())];
    return s / static_cast<double>(samples.size());
}

MetricValue percentile_interval(const std::vector<double>& samples,
                                std::vector<double> means, double confidence) {
    MetricValue mv;
    mv.point = mean_of(samples);
    mv.n = samples.size();
    std::sort(means.begin(), means.end());
    double alpha = (1.0 - confidence) / 2.0;
    mv.ci_low = quantile_sorted(means, alpha);
    mv.ci_high = quantile_sorted(means, 1.0 - alpha);
    return mv;
}

}  // namespace

MetricValue bootstrap_ci(const std::vector<double>& samples, int resamples,
                         double confidence, std::uint64_t cell_seed) {
    if (samples.empty())
        throw domain_error("empty samples", "bootstrap_ci needs samples");
    std::vector<double> means(static_cast<std::size_t>(resamples));
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < static_cast<std::int64_t>(resamples); ++r)
        means[r] = resample_mean(
            samples, derive_seed(cell_seed, static_cast<std::uint64_t>(r)));
    return percentile_interval(samples, std::move(means), confidence);
}

MetricValue bootstrap_ci_serial(const std::vector<double>& samples, int resamples,
                                double confidence, std::uint64_t cell_seed) {
    if (samples.empty())
        throw domain_error("empty samples", "bootstrap_ci needs samples");
    std::vector<double> means(static_cast<std::size_t>(resamples));
    for (std::int64_t r = 0; r < static_cast<std::int64_t>(resamples); ++r)
        means[r] = resample_mean(
            samples, derive_seed(cell_seed, static_cast<std::uint64_t>(r)));
    return percentile_interval(samples, std::move(means), confidence);
}

retrieval::RankedList random_baseline(const std::vector<std::string>& candidates,
                                      int k, std::uint64_t seed) {
    if (k < 0 || static_cast<std::size_t>(k) > candidates.size())
        throw domain_error("k too large",
                           "k = " + std::to_string(k) + " over " +
                               std::to_string(candidates.size()) + " candidates");
    std::vector<std::string> pool(candidates);
    std::sort(pool.begin(), pool.end());
    SplitMix64 rng(seed);
    stable_shuffle(pool, rng);

    retrieval::RankedList out;
    for (int j = 0; j < k; ++j)
        out.entries.push_back({pool[j], static_cast<double>(k - j)});
    return out;
}

FalsePositiveBreakdown categorize_false_positives(
    const std::vector<std::string>& top3, const std::set<std::string>& gt_in_s,
    const std::set<std::string>& gt_eis,
    const std::map<std::string, bool>& visual_flags) {
    FalsePositiveBreakdown fp;
    for (const auto& id : top3) {
        if (gt_in_s.count(id)) continue;  // true positive
        auto flag = visual_flags.find(id);
        if (flag == visual_flags.end())
            throw domain_error("missing visual flag", "attribute '" + id + "'");
        if (flag->second)
            ++fp.vi;
        else if (gt_eis.count(id))
            ++fp.er;
        else
            ++fp.ip;
    }
    return fp;
}

}  // namespace icrs::eval
