#pragma once
// Metrics: precision at k, mean per-item precision, seeded percentile
// bootstrap, the random baseline, and the false-positive taxonomy.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "icrs/retrieval.hpp"

namespace icrs::eval {

struct EvalConfig {
    std::vector<int> k_values = {1, 2, 3};  // every k must be <= 3
    int item_label_budget = 10;             // persisted labels per item, <= 10
    int bootstrap_resamples = 1000;
    double confidence = 0.95;
    std::uint64_t seed = 0;

    // Throws when a k exceeds 3 or the budget exceeds 10.
    void validate() const;
};

struct MetricValue {
    double point = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t n = 0;

    // "0.425 ± 0.023" (point and half-width, three decimals)
    std::string display() const;
};

// (1/k) * |top-k hits|; positions past the end of the list count as misses.
double precision_at_k(const retrieval::RankedList& ranked,
                      const std::set<std::string>& gt, int k);

enum class EmptyGtPolicy { exclude, count_zero };

struct MeanPrecision {
    double value = 0.0;
    std::size_t n = 0;  // items contributing (0 => undefined cell)
};

// Mean over items of precision_at_k against each item's criterion set.
// Items with empty criterion sets are skipped (exclude) or scored zero
// (count_zero). Throws when a selection is missing for an evaluated item.
MeanPrecision mean_per_item_precision(
    const std::map<std::string, retrieval::RankedList>& selections,
    const std::map<std::string, std::set<std::string>>& gt_sets, int k,
    EmptyGtPolicy policy = EmptyGtPolicy::exclude);

// Percentile bootstrap of the sample mean; cell_seed drives a platform-
// stable resampling stream (one derived stream per resample, so the serial
// and OpenMP variants agree bit for bit).
MetricValue bootstrap_ci(const std::vector<double>& samples, int resamples,
                         double confidence, std::uint64_t cell_seed);
MetricValue bootstrap_ci_serial(const std::vector<double>& samples, int resamples,
                                double confidence, std::uint64_t cell_seed);

// Uniform draw of k candidates without replacement; the list order is the
// draw order (strictly decreasing pseudo-scores keep it a valid RankedList).
retrieval::RankedList random_baseline(const std::vector<std::string>& candidates,
                                      int k, std::uint64_t seed);

struct FalsePositiveBreakdown {
    int vi = 0;  // visually inferable
    int er = 0;  // responds to an explicit prefix request
    int ip = 0;  // misaligned proactive
    int total_fp() const { return vi + er + ip; }
};

// Classifies each top-3 id absent from gt_in_s with precedence
// VI > ER > IP. visual_flags must cover every top-3 id.
FalsePositiveBreakdown categorize_false_positives(
    const std::vector<std::string>& top3, const std::set<std::string>& gt_in_s,
    const std::set<std::string>& gt_eis,
    const std::map<std::string, bool>& visual_flags);

}  // namespace icrs::eval
