#include "icrs/config.hpp"

#include <filesystem>
#include <set>
#include <sstream>

#include "icrs/error.hpp"
#include "icrs/kvfile.hpp"

namespace icrs::cli {

namespace fs = std::filesystem;

std::string to_string(MethodFamily f) {
    switch (f) {
        case MethodFamily::bm25: return "bm25";
        case MethodFamily::dense: return "dense";
        case MethodFamily::cross_encoder: return "cross_encoder";
        case MethodFamily::rerank: return "rerank";
        case MethodFamily::fused: return "fused";
        case MethodFamily::random_baseline: return "random";
        case MethodFamily::model: return "model";
    }
    return "";
}

MethodSpec MethodSpec::parse(const std::string& spec) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ':')) parts.push_back(part);
    if (parts.empty())
        throw domain_error("malformed config", "empty method spec");

    MethodSpec m;
    std::string family = parts[0];
    std::size_t next = 1;
    if (family == "pointwise" || family == "listwise") {
        m.family = MethodFamily::model;
        m.form = model::form_from_string(family);
    } else if (family == "bm25") {
        m.family = MethodFamily::bm25;
    } else if (family == "dense") {
        m.family = MethodFamily::dense;
    } else if (family == "cross_encoder") {
        m.family = MethodFamily::cross_encoder;
    } else if (family == "rerank") {
        m.family = MethodFamily::rerank;
    } else if (family == "fused") {
        m.family = MethodFamily::fused;
    } else if (family == "random") {
        m.family = MethodFamily::random_baseline;
    } else if (family == "model") {
        m.family = MethodFamily::model;
        if (parts.size() < 2)
            throw domain_error("malformed config",
                               "method 'model' needs a form, e.g. model:listwise");
        m.form = model::form_from_string(parts[1]);
        next = 2;
    } else {
        throw domain_error("malformed config", "unknown method '" + family + "'");
    }

    if (!m.is_model() && parts.size() > next)
        throw domain_error("malformed config",
                           "method '" + family + "' takes no qualifiers");
    if (m.is_model()) {
        if (parts.size() > next) m.modality = model::modality_from_string(parts[next]);
        if (parts.size() > next + 1) {
            if (parts[next + 1] == "suppress_visual") {
                m.suppress_visual = true;
            } else if (parts[next + 1] != "none") {
                throw domain_error("malformed config",
                                   "unknown instruct variant '" + parts[next + 1] + "'");
            }
        }
        if (parts.size() > next + 2)
            throw domain_error("malformed config", "method spec '" + spec + "'");
    }
    return m;
}

std::string MethodSpec::id() const {
    if (!is_model()) return to_string(family);
    std::string out = "model:" + model::to_string(form) + ":" + model::to_string(modality);
    if (suppress_visual) out += ":suppress_visual";
    return out;
}

bool RunConfig::hermetic() const {
    auto hermetic_client = [](const std::string& c) {
        return c == "mock" || c == "replay";
    };
    bool embed_ok = embedding_client == "hash" ||
                    embedding_client.rfind("sidecar:", 0) == 0;
    return hermetic_client(model_client) && hermetic_client(judge_client) && embed_ok;
}

std::string RunConfig::adapted_dir(const std::string& scenario) const {
    return output_dir + "/adapted/" + scenario;
}

std::string RunConfig::runs_dir(const std::string& scenario) const {
    return output_dir + "/runs/" + scenario;
}

std::string RunConfig::report_dir() const { return output_dir + "/report"; }

namespace {

std::vector<int> parse_int_list(const std::string& csv, const std::string& key) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(std::stoi(tok));
        } catch (const std::exception&) {
            throw domain_error("malformed config",
                               "'" + key + "' expects comma-separated integers");
        }
    }
    return out;
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
    KvFile kv = KvFile::parse_file(path);
    fs::path base = fs::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        if (p.empty() || fs::path(p).is_absolute()) return p;
        return (base / p).lexically_normal().string();
    };

    RunConfig c;
    for (const auto& m : kv.get_list_or("datasets", {}))
        c.dataset_manifests.push_back(resolve(m));
    if (kv.has("dataset")) c.dataset_manifests.push_back(resolve(kv.get_string("dataset")));
    c.scenario_filter = kv.get_list_or("scenarios", {});
    c.templates_dir = resolve(kv.get_string_or("templates", "templates"));
    c.output_dir = resolve(kv.get_string_or("output", "out"));

    for (const auto& m : kv.get_list_or("methods", {}))
        c.methods.push_back(MethodSpec::parse(m));

    if (kv.has("objectives")) {
        c.objectives.clear();
        for (const auto& o : kv.get_list_or("objectives", {}))
            c.objectives.push_back(model::objective_from_string(o));
    }

    std::string prefix_mode = kv.get_string_or("prefix_mode", "pre");
    if (prefix_mode == "pre") {
        c.prefix_mode = corpus::PrefixMode::pre_recommendation;
    } else if (prefix_mode == "full-masked") {
        c.prefix_mode = corpus::PrefixMode::full_masked;
    } else {
        throw domain_error("malformed config",
                           "prefix_mode must be 'pre' or 'full-masked'");
    }

    c.lambda = kv.get_real_or("lambda", 0.7);
    if (c.lambda < 0.0 || c.lambda > 1.0)
        throw domain_error("malformed config", "lambda outside [0,1]");
    c.seed = static_cast<std::uint64_t>(kv.get_int_or("seed", 42));
    c.jobs = static_cast<int>(kv.get_int_or("jobs", 1));
    if (c.jobs < 1) throw domain_error("malformed config", "jobs must be >= 1");

    c.model_client = kv.get_string_or("model_client", "mock");
    c.judge_client = kv.get_string_or("judge_client", "mock");
    c.embedding_client = kv.get_string_or("embedding_client", "hash");
    if (c.embedding_client.rfind("sidecar:", 0) == 0)
        c.embedding_client = "sidecar:" + resolve(c.embedding_client.substr(8));
    c.replay_log = resolve(kv.get_string_or("replay", ""));
    c.resume_log = resolve(kv.get_string_or("resume", ""));

    c.mask_token = kv.get_string_or("mask_token", "[ITEM]");
    c.min_turns = static_cast<int>(kv.get_int_or("min_turns", 30));
    if (kv.has("required_tags")) {
        c.required_tags.clear();
        for (const auto& t : kv.get_list_or("required_tags", {}))
            c.required_tags.insert(corpus::intent_tag_from_string(t));
    }
    c.pool_size = static_cast<int>(kv.get_int_or("pool_size", 20));
    c.strata_key = kv.get_string_or("strata_key", "category");
    c.judge_batch_size =
        static_cast<std::size_t>(kv.get_int_or("judge_batch_size", 10));
    if (c.judge_batch_size < 1 || c.judge_batch_size > 10)
        throw domain_error("malformed config", "judge_batch_size outside 1..10");
    c.min_clause_len =
        static_cast<std::size_t>(kv.get_int_or("min_clause_len", 20));

    c.rerank_k = static_cast<std::size_t>(kv.get_int_or("rerank_k", 20));
    c.embedding_dim = static_cast<std::size_t>(kv.get_int_or("embedding_dim", 1536));
    c.retry_limit = static_cast<int>(kv.get_int_or("retry_limit", 3));

    if (kv.has("k_values"))
        c.eval.k_values = parse_int_list(kv.get_string("k_values"), "k_values");
    c.eval.item_label_budget =
        static_cast<int>(kv.get_int_or("item_label_budget", 10));
    c.eval.bootstrap_resamples =
        static_cast<int>(kv.get_int_or("bootstrap_resamples", 1000));
    c.eval.confidence = kv.get_real_or("confidence", 0.95);
    c.eval.seed = c.seed;
    c.eval.validate();

    std::string policy = kv.get_string_or("empty_gt_policy", "exclude");
    if (policy == "exclude") {
        c.empty_gt_policy = eval::EmptyGtPolicy::exclude;
    } else if (policy == "count_zero") {
        c.empty_gt_policy = eval::EmptyGtPolicy::count_zero;
    } else {
        throw domain_error("malformed config",
                           "empty_gt_policy must be 'exclude' or 'count_zero'");
    }
    return c;
}

void check_paths(const RunConfig& config) {
    if (config.dataset_manifests.empty())
        throw domain_error("malformed config", "no datasets configured");
    std::set<std::string> scenarios;
    for (const auto& m : config.dataset_manifests) {
        if (!fs::exists(m)) throw io_error("manifest not found", m);
        // scenario names key the output directories, so they must be unique
        std::string scenario = KvFile::parse_file(m).get_string("scenario");
        if (!scenarios.insert(scenario).second)
            throw domain_error("malformed config",
                               "two datasets declare scenario '" + scenario + "'");
    }
    if (!fs::exists(config.templates_dir))
        throw io_error("templates not found", config.templates_dir);
    if (!config.replay_log.empty() && !fs::exists(config.replay_log))
        throw io_error("replay log not found", config.replay_log);
    if (!config.resume_log.empty() && !fs::exists(config.resume_log))
        throw io_error("resume log not found", config.resume_log);
    if (config.embedding_client.rfind("sidecar:", 0) == 0) {
        std::string p = config.embedding_client.substr(8);
        if (!fs::exists(p)) throw io_error("embedding sidecar not found", p);
    }
}

}  // namespace icrs::cli
