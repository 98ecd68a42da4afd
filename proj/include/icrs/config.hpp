#pragma once
// Run configuration: one declarative file, flags mirror keys one-to-one.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "icrs/corpus.hpp"
#include "icrs/eval.hpp"
#include "icrs/model.hpp"

namespace icrs::cli {

enum class MethodFamily {
    bm25,
    dense,
    cross_encoder,
    rerank,
    fused,
    random_baseline,
    model,
};

std::string to_string(MethodFamily f);

// Parsed "family[:form][:modality][:variant]" method selector, e.g. "bm25",
// "model:listwise:V_T:suppress_visual". "pointwise"/"listwise" are accepted
// as shorthand for "model:pointwise"/"model:listwise".
struct MethodSpec {
    MethodFamily family = MethodFamily::bm25;
    model::Form form = model::Form::pointwise;      // model only
    model::Modality modality = model::Modality::T;  // model only
    bool suppress_visual = false;                   // model only

    static MethodSpec parse(const std::string& spec);

    // "bm25" or "model:listwise:V_T:suppress_visual"; doubles as the run-log
    // key segment.
    std::string id() const;
    bool is_model() const { return family == MethodFamily::model; }
};

struct RunConfig {
    std::vector<std::string> dataset_manifests;
    std::vector<std::string> scenario_filter;  // empty = all
    std::string templates_dir = "templates";
    std::string output_dir = "out";

    std::vector<MethodSpec> methods;
    std::vector<model::Objective> objectives = {model::Objective::EIS,
                                                model::Objective::IN};
    corpus::PrefixMode prefix_mode = corpus::PrefixMode::pre_recommendation;

    double lambda = 0.7;
    std::uint64_t seed = 42;
    int jobs = 1;

    // client selection: "mock", "replay", or an http(s) endpoint
    std::string model_client = "mock";
    std::string judge_client = "mock";
    std::string embedding_client = "hash";  // "hash", "sidecar:<path>", endpoint
    std::string replay_log;                 // for "replay" clients
    std::string resume_log;                 // prior model log reused as cache

    std::string mask_token = "[ITEM]";
    int min_turns = 30;
    std::set<corpus::IntentTag> required_tags = {
        corpus::IntentTag::explicit_seeker_request,
        corpus::IntentTag::implicit_seeker_request,
        corpus::IntentTag::expert_explanation};
    int pool_size = 20;
    std::string strata_key = "category";
    std::size_t judge_batch_size = 10;
    std::size_t min_clause_len = 20;

    std::size_t rerank_k = 20;
    std::size_t embedding_dim = 1536;
    int retry_limit = 3;

    eval::EvalConfig eval;
    eval::EmptyGtPolicy empty_gt_policy = eval::EmptyGtPolicy::exclude;

    // True when every configured client is mock/replay/sidecar; hermetic runs
    // write zero timestamps so logs are byte-stable.
    bool hermetic() const;

    std::string adapted_dir(const std::string& scenario) const;
    std::string runs_dir(const std::string& scenario) const;
    std::string report_dir() const;
};

RunConfig load_run_config(const std::string& path);

// Resolves datasets, templates and referenced sidecars/logs before any work
// starts; throws io errors for missing paths.
void check_paths(const RunConfig& config);

}  // namespace icrs::cli
