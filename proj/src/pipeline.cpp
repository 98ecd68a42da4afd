#include "icrs/pipeline.hpp"

#include <algorithm>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <nlohmann/json.hpp>

#include "icrs/adaptation.hpp"
#include "icrs/error.hpp"
#include "icrs/http_clients.hpp"
#include "icrs/model.hpp"
#include "icrs/rng.hpp"
#include "icrs/text.hpp"

namespace icrs::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using corpus::Conversation;
using corpus::Criterion;
using corpus::Dataset;
using corpus::Item;
using retrieval::RankedList;
using retrieval::ScoredEntry;

std::string item_text(const Item& item) {
    std::string out;
    for (const auto& [key, value] : item.composite_attributes) {
        if (!out.empty()) out += "; ";
        out += text::capitalize_ascii(key) + ": " + value;
    }
    return out;
}

namespace {

void set_jobs(int jobs) {
#ifdef _OPENMP
    omp_set_num_threads(jobs);
#else
    (void)jobs;
#endif
}

std::int64_t now_or_zero(bool hermetic) {
    return hermetic ? 0 : static_cast<std::int64_t>(std::time(nullptr));
}

// Replay stores can be a single log file or a directory tree of run logs
// (files named *_log.jsonl; other .jsonl artifacts are not logs).
ReplayStore load_replay_store(const std::string& path) {
    if (fs::is_directory(path)) {
        RunLog merged;
        std::vector<fs::path> files;
        for (const auto& entry : fs::recursive_directory_iterator(path)) {
            std::string name = entry.path().filename().string();
            if (entry.is_regular_file() && name.size() > 10 &&
                name.substr(name.size() - 10) == "_log.jsonl")
                files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty())
            throw io_error("replay log not found",
                           path + " contains no *_log.jsonl files");
        std::string tmp = (fs::temp_directory_path() / "icrs_replay_merge.jsonl").string();
        for (const auto& f : files)
            for (auto& r : read_run_log(f.string())) merged.append(std::move(r));
        merged.write(tmp);
        ReplayStore store = ReplayStore::load(tmp);
        fs::remove(tmp);
        return store;
    }
    return ReplayStore::load(path);
}

struct Clients {
    std::shared_ptr<ModelClient> model;
    std::shared_ptr<JudgeClient> judge;
    std::shared_ptr<EmbeddingClient> embedding;
    std::shared_ptr<PairScorerClient> pair;
};

Clients make_clients(const RunConfig& config) {
    Clients c;
    if (config.model_client == "mock") {
        c.model = std::make_shared<MockKeywordModel>();
    } else if (config.model_client == "replay") {
        if (config.replay_log.empty())
            throw domain_error("malformed config", "replay client without replay log");
        c.model = std::make_shared<ReplayModelClient>(load_replay_store(config.replay_log));
    } else {
        c.model = std::make_shared<HttpModelClient>(config.model_client, "default");
    }
    if (!config.resume_log.empty())
        c.model = std::make_shared<CachingModelClient>(
            c.model, load_replay_store(config.resume_log));

    if (config.judge_client == "mock") {
        c.judge = std::make_shared<MockKeywordJudge>();
    } else if (config.judge_client == "replay") {
        if (config.replay_log.empty())
            throw domain_error("malformed config", "replay client without replay log");
        c.judge = std::make_shared<ReplayJudgeClient>(load_replay_store(config.replay_log));
    } else {
        c.judge = std::make_shared<HttpJudgeClient>(config.judge_client, "default");
    }

    if (config.embedding_client == "hash") {
        c.embedding = std::make_shared<HashingEmbeddingClient>(config.embedding_dim);
    } else if (config.embedding_client.rfind("sidecar:", 0) == 0) {
        c.embedding = std::make_shared<retrieval::EmbeddingSidecar>(
            retrieval::EmbeddingSidecar::load(config.embedding_client.substr(8)));
    } else {
        c.embedding = std::make_shared<HttpEmbeddingClient>(config.embedding_client,
                                                            "default");
    }

    c.pair = std::make_shared<MockOverlapPairScorer>();
    return c;
}

std::string run_key(const std::string& scenario, const std::string& conversation,
                    const std::string& method, const std::string& task,
                    const std::string& objective, const std::string& item) {
    return scenario + "/" + conversation + "/" + method + "/" + task + "/" +
           objective + "/" + item;
}

json ranking_to_json(const RankedList& list) {
    json arr = json::array();
    for (const auto& e : list.entries)
        arr.push_back({{"id", e.id}, {"score", e.score}});
    return arr;
}

RankedList ranking_from_json(const json& arr) {
    RankedList list;
    for (const auto& e : arr)
        list.entries.push_back(
            {e.at("id").get<std::string>(), e.at("score").get<double>()});
    return list;
}

}  // namespace

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

int cmd_ingest(const std::vector<std::string>& manifests, std::ostream& out) {
    if (manifests.empty()) {
        out << "error: no dataset manifests given\n";
        return exit_domain;
    }
    bool any_violation = false;
    for (const auto& manifest : manifests) {
        Dataset d = corpus::load_dataset(manifest);
        auto report = corpus::validate_dataset(d);
        if (report.ok()) {
            out << manifest << ": ok (" << corpus::to_string(d.scenario) << ", "
                << d.conversations.size() << " conversations, " << d.items.size()
                << " items)\n";
        } else {
            any_violation = true;
            out << manifest << ": " << report.violations.size() << " violation(s)\n";
            for (const auto& v : report.violations)
                out << "  [" << v.rule << "] " << v.location << ": " << v.detail << "\n";
        }
    }
    return any_violation ? exit_domain : exit_ok;
}

// ---------------------------------------------------------------------------
// adapt
// ---------------------------------------------------------------------------

namespace {

void write_candidates(const std::string& path,
                      const std::vector<adaptation::CandidateSet>& sets) {
    std::ofstream file(path);
    if (!file) throw io_error("cannot write", path);
    for (const auto& s : sets) {
        json j;
        j["conversation_id"] = s.conversation_id;
        j["item_ids"] = s.item_ids;
        j["pool_size"] = s.pool_size;
        j["seed"] = s.seed;
        file << j.dump() << "\n";
    }
}

std::map<std::string, adaptation::CandidateSet> read_candidates(
    const std::string& path) {
    std::ifstream file(path);
    if (!file) throw io_error("file not found", path);
    std::map<std::string, adaptation::CandidateSet> out;
    std::string line;
    while (std::getline(file, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        adaptation::CandidateSet s;
        s.conversation_id = j.at("conversation_id").get<std::string>();
        s.item_ids = j.at("item_ids").get<std::vector<std::string>>();
        s.pool_size = j.at("pool_size").get<int>();
        s.seed = j.at("seed").get<std::uint64_t>();
        out[s.conversation_id] = std::move(s);
    }
    return out;
}

}  // namespace

int cmd_adapt(const RunConfig& config, std::ostream& out) {
    check_paths(config);
    Clients clients = make_clients(config);
    bool hermetic = config.hermetic();

    for (const auto& manifest : config.dataset_manifests) {
        Dataset raw = corpus::load_dataset(manifest);
        std::string scenario = corpus::to_string(raw.scenario);
        if (!config.scenario_filter.empty() &&
            std::find(config.scenario_filter.begin(), config.scenario_filter.end(),
                      scenario) == config.scenario_filter.end())
            continue;

        auto violations = corpus::validate_dataset(raw);
        if (!violations.ok()) {
            out << manifest << ": dataset invalid, run ingest for details\n";
            return exit_domain;
        }

        Dataset adapted =
            adaptation::filter_conversations(raw, config.min_turns, config.required_tags);
        if (adapted.conversations.empty())
            out << "warning: no conversation in '" << scenario
                << "' survives filtering\n";

        // Decomposition regenerates atomic attributes from composites;
        // pre-annotated visual flags carry over by attribute id.
        adaptation::DecomposeOptions decompose_options;
        decompose_options.min_clause_len = config.min_clause_len;
        for (auto& [id, item] : adapted.items) {
            if (item.composite_attributes.empty()) continue;
            auto regenerated =
                adaptation::decompose_attributes(item, nullptr, decompose_options);
            for (auto& attr : regenerated) {
                for (const auto& prior : item.atomic_attributes) {
                    if (prior.id == attr.id && prior.visually_inferable.has_value())
                        attr.visually_inferable = prior.visually_inferable;
                }
            }
            item.atomic_attributes = std::move(regenerated);
        }

        adaptation::GroundTruthOptions gt_options;
        gt_options.batch_size = config.judge_batch_size;
        gt_options.templates_dir = config.templates_dir;
        gt_options.log_timestamp = now_or_zero(hermetic);

        // Judge calls run concurrently across conversations up to the jobs
        // limit; per-conversation slots merge in order afterwards, so the
        // bundle is identical regardless of completion order.
        set_jobs(config.jobs);
        const auto n_conversations =
            static_cast<std::int64_t>(adapted.conversations.size());
        std::vector<adaptation::CandidateSet> candidate_sets(adapted.conversations.size());
        std::vector<corpus::ConversationGroundTruth> slices(adapted.conversations.size());
        RunLog judge_log;
        std::string first_error;
        ErrorKind first_kind = ErrorKind::domain;
#pragma omp parallel for schedule(dynamic)
        for (std::int64_t i = 0; i < n_conversations; ++i) {
            const auto& c = adapted.conversations[static_cast<std::size_t>(i)];
            try {
                adaptation::CandidateSet candidates = adaptation::sample_candidates(
                    adapted, c, config.pool_size, config.strata_key,
                    derive_seed(config.seed, "candidates:" + scenario + ":" + c.id));
                slices[i] = adaptation::build_ground_truth_all(
                    c, adapted.items, candidates, *clients.judge, gt_options,
                    &judge_log);
                candidate_sets[i] = std::move(candidates);
            } catch (const Error& e) {
#pragma omp critical
                if (first_error.empty()) {
                    first_error = e.what();
                    first_kind = e.kind();
                }
            } catch (const std::exception& e) {
#pragma omp critical
                if (first_error.empty()) first_error = e.what();
            }
        }
        if (!first_error.empty())
            throw Error(first_kind, "adapt failed", first_error);

        corpus::GroundTruthBundle bundle;
        for (std::int64_t i = 0; i < n_conversations; ++i)
            bundle.conversations[adapted.conversations[i].id] = std::move(slices[i]);
        adapted.ground_truth_labels = bundle;

        // All artifacts are in memory; only now touch the filesystem.
        std::string dir = config.adapted_dir(scenario);
        fs::create_directories(dir);
        corpus::write_dataset(adapted, dir);
        write_candidates(dir + "/candidates.jsonl", candidate_sets);
        judge_log.write(dir + "/judge_log.jsonl");

        // Pass the visual-similarity sidecar through when the source ships one.
        fs::path source_sims = fs::path(manifest).parent_path() / "visual_sims.jsonl";
        if (fs::exists(source_sims))
            fs::copy_file(source_sims, fs::path(dir) / "visual_sims.jsonl",
                          fs::copy_options::overwrite_existing);

        json manifest_json;
        manifest_json["scenario"] = scenario;
        manifest_json["seed"] = config.seed;
        manifest_json["min_turns"] = config.min_turns;
        manifest_json["pool_size"] = config.pool_size;
        manifest_json["strata_key"] = config.strata_key;
        manifest_json["judge_batch_size"] = config.judge_batch_size;
        manifest_json["judge_client"] = clients.judge->identity();
        manifest_json["conversations"] = adapted.conversations.size();
        manifest_json["items"] = adapted.items.size();
        std::ofstream mf(dir + "/adapt_manifest.json");
        mf << manifest_json.dump(2) << "\n";

        out << scenario << ": adapted " << adapted.conversations.size()
            << " conversations, " << adapted.items.size() << " items, "
            << judge_log.size() << " judge calls\n";
    }
    return exit_ok;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

namespace {

struct SelectionRecord {
    std::string conversation;
    std::string item;
    std::string method;
    std::string objective;  // "EIS", "IN", or "-"
    RankedList ranking;
};

struct RecommendationRecord {
    std::string conversation;
    std::string method;
    RankedList ranking;
};

struct CellOutput {
    std::optional<RecommendationRecord> recommendation;
    std::vector<SelectionRecord> selections;
    std::vector<std::string> fallbacks;  // listwise -> pointwise keys
    std::string error;                   // non-empty when the cell failed
    std::string cell_name;
};

struct ScenarioData {
    std::string name;
    Dataset dataset;
    std::map<std::string, adaptation::CandidateSet> candidates;
    std::map<std::pair<std::string, std::string>, double> visual_sims;
    bool has_visual_sims = false;
};

ScenarioData load_adapted(const std::string& dir) {
    ScenarioData data;
    data.dataset = corpus::load_dataset(dir + "/dataset.toml");
    data.name = corpus::to_string(data.dataset.scenario);
    data.candidates = read_candidates(dir + "/candidates.jsonl");
    if (fs::exists(dir + "/visual_sims.jsonl")) {
        data.visual_sims = retrieval::load_visual_sims(dir + "/visual_sims.jsonl");
        data.has_visual_sims = true;
    }
    if (!data.dataset.ground_truth_labels.has_value())
        throw domain_error("missing ground truth",
                           dir + " has no ground_truth_labels.json (run adapt)");
    return data;
}

// Shared embedding cache, filled serially before cells run.
using EmbeddingCache = std::map<std::string, retrieval::EmbeddingVector>;

void cache_embedding(EmbeddingCache& cache, EmbeddingClient& client,
                     const std::string& text_in) {
    if (!cache.count(text_in))
        cache[text_in] = retrieval::encode(client, text_in);
}

const retrieval::EmbeddingVector& cached(const EmbeddingCache& cache,
                                         const std::string& text_in) {
    auto it = cache.find(text_in);
    if (it == cache.end())
        throw domain_error("missing embedding", "text not precomputed");
    return it->second;
}

RankedList model_rank(const RunConfig& config, const ScenarioData& data,
                      const corpus::ConversationPrefix& prefix,
                      const MethodSpec& method, model::Objective objective,
                      bool item_task, const std::map<std::string, std::string>& cands,
                      const std::vector<std::string>& image_refs,
                      const std::string& key, ModelClient& client, RunLog* log,
                      std::int64_t timestamp, std::vector<std::string>& fallbacks) {
    model::Form form = method.form;
    if (form == model::Form::listwise && cands.size() < 5) {
        // The listwise contract cannot hold below 5 candidates; fall back to
        // pointwise for this cell and record it.
        form = model::Form::pointwise;
        fallbacks.push_back(key);
    }
    model::BuildPromptInputs inputs;
    inputs.candidates = cands;
    inputs.image_refs = method.modality == model::Modality::T
                            ? std::vector<std::string>{}
                            : image_refs;
    inputs.templates_dir = config.templates_dir;
    inputs.item_task = item_task;

    model::InstructVariant variant =
        method.suppress_visual
            ? model::InstructVariant::suppress_visual(data.dataset.scenario)
            : model::InstructVariant::none();

    model::PromptBundle bundle = model::build_prompt(prefix, inputs, objective,
                                                     form, method.modality, variant);
    model::QueryOptions query_options;
    query_options.retry_limit = config.retry_limit;
    query_options.log_timestamp = timestamp;
    std::string raw = model::query_model(bundle, key, client, query_options, log);

    if (form == model::Form::pointwise)
        return model::verdicts_to_ranked(model::parse_pointwise(raw, bundle.expected_ids));
    return model::listwise_to_ranked(model::parse_listwise(raw, bundle.expected_ids));
}

RankedList retrieval_rank(const RunConfig& config, const ScenarioData& data,
                          const std::string& prefix_text,
                          const EmbeddingCache& embeddings, const MethodSpec& method,
                          const std::string& item_id,  // empty for the item task
                          const std::map<std::string, std::string>& cands,
                          PairScorerClient& pair, std::uint64_t seed) {
    switch (method.family) {
        case MethodFamily::bm25:
            return retrieval::rank_lexical(prefix_text, cands, {});
        case MethodFamily::dense: {
            std::map<std::string, retrieval::EmbeddingVector> vecs;
            for (const auto& [id, candidate_text] : cands)
                vecs[id] = cached(embeddings, candidate_text);
            return retrieval::rank_dense(cached(embeddings, prefix_text), vecs);
        }
        case MethodFamily::cross_encoder: {
            std::vector<ScoredEntry> scored;
            for (const auto& [id, candidate_text] : cands)
                scored.push_back({id, pair.score(prefix_text, candidate_text)});
            return RankedList::from_scores(std::move(scored));
        }
        case MethodFamily::rerank: {
            RankedList lexical = retrieval::rank_lexical(prefix_text, cands, {});
            return retrieval::rerank(prefix_text, lexical, config.rerank_k, cands, pair);
        }
        case MethodFamily::fused: {
            if (item_id.empty())
                throw domain_error("unsupported method",
                                   "fused applies to label selection only");
            if (!data.has_visual_sims)
                throw domain_error("missing visual similarity",
                                   "no visual_sims.jsonl for scenario " + data.name);
            std::map<std::string, retrieval::EmbeddingVector> vecs;
            std::map<std::string, double> sims;
            for (const auto& [id, candidate_text] : cands) {
                vecs[id] = cached(embeddings, candidate_text);
                auto sim = data.visual_sims.find({item_id, id});
                if (sim == data.visual_sims.end())
                    throw domain_error("missing visual similarity",
                                       "(" + item_id + ", " + id + ")");
                sims[id] = sim->second;
            }
            return retrieval::rank_fused(cached(embeddings, prefix_text), vecs, sims,
                                         {config.lambda});
        }
        case MethodFamily::random_baseline: {
            std::vector<std::string> ids;
            for (const auto& [id, ignored] : cands) ids.push_back(id);
            int k = static_cast<int>(
                std::min<std::size_t>(ids.size(),
                                      static_cast<std::size_t>(config.eval.item_label_budget)));
            return eval::random_baseline(ids, k, seed);
        }
        case MethodFamily::model:
            break;
    }
    throw domain_error("unsupported method", "not a retrieval family");
}

CellOutput run_cell(const RunConfig& config, const ScenarioData& data,
                    const Conversation& conversation, const MethodSpec& method,
                    const EmbeddingCache& embeddings, Clients& clients,
                    RunLog* log, std::int64_t timestamp) {
    CellOutput cell;
    cell.cell_name = data.name + "/" + conversation.id + "/" + method.id();

    corpus::ConversationPrefix prefix = corpus::extract_prefix(
        conversation, data.dataset.items, config.prefix_mode, config.mask_token);
    std::string prefix_text = prefix.transcript();

    const auto& candidate_set = data.candidates.at(conversation.id);

    // --- item recommendation ---
    if (method.family != MethodFamily::fused) {
        std::map<std::string, std::string> cands;
        std::vector<std::string> image_refs;
        for (const auto& id : candidate_set.item_ids) {
            const Item& item = data.dataset.items.at(id);
            cands[id] = item_text(item);
            if (item.visual_segment_ref) image_refs.push_back(*item.visual_segment_ref);
        }
        std::string key =
            run_key(data.name, conversation.id, method.id(), "items", "-", "-");
        RankedList ranking;
        if (method.is_model()) {
            ranking = model_rank(config, data, prefix, method, model::Objective::EIS,
                                 /*item_task=*/true, cands, image_refs, key,
                                 *clients.model, log, timestamp, cell.fallbacks);
        } else {
            ranking = retrieval_rank(config, data, prefix_text, embeddings, method,
                                     "", cands, *clients.pair,
                                     derive_seed(config.seed, key));
        }
        cell.recommendation = RecommendationRecord{conversation.id, method.id(), ranking};
    }

    // --- label selection over recommended items ---
    std::vector<model::Objective> objectives;
    if (method.is_model()) {
        objectives = config.objectives;
    } else {
        objectives = {model::Objective::EIS};  // single run, objective "-"
    }

    for (const auto& item_id : conversation.ground_truth_items) {
        const Item& item = data.dataset.items.at(item_id);
        std::map<std::string, std::string> cands;
        for (const auto& attr : item.atomic_attributes) cands[attr.id] = attr.text;
        if (cands.empty())
            throw domain_error("missing atomic attributes", "item '" + item_id + "'");
        std::vector<std::string> image_refs;
        if (item.visual_segment_ref) image_refs.push_back(*item.visual_segment_ref);

        for (model::Objective objective : objectives) {
            std::string objective_name =
                method.is_model() ? model::to_string(objective) : "-";
            std::string key = run_key(data.name, conversation.id, method.id(),
                                      "labels", objective_name, item_id);
            RankedList ranking;
            if (method.is_model()) {
                ranking = model_rank(config, data, prefix, method, objective,
                                     /*item_task=*/false, cands, image_refs, key,
                                     *clients.model, log, timestamp, cell.fallbacks);
            } else {
                ranking = retrieval_rank(config, data, prefix_text, embeddings, method,
                                         item_id, cands, *clients.pair,
                                         derive_seed(config.seed, key));
            }
            // Budget: persist at most item_label_budget labels per item.
            if (ranking.entries.size() >
                static_cast<std::size_t>(config.eval.item_label_budget))
                ranking.entries.resize(
                    static_cast<std::size_t>(config.eval.item_label_budget));
            cell.selections.push_back(SelectionRecord{conversation.id, item_id,
                                                      method.id(), objective_name,
                                                      std::move(ranking)});
        }
    }
    return cell;
}

void write_runs(const std::string& dir, const std::vector<CellOutput>& cells) {
    fs::create_directories(dir);
    std::ofstream recs(dir + "/recommendations.jsonl");
    std::ofstream sels(dir + "/selections.jsonl");
    for (const auto& cell : cells) {
        if (!cell.error.empty()) continue;
        if (cell.recommendation) {
            json j;
            j["conversation"] = cell.recommendation->conversation;
            j["method"] = cell.recommendation->method;
            j["ranking"] = ranking_to_json(cell.recommendation->ranking);
            recs << j.dump() << "\n";
        }
        for (const auto& s : cell.selections) {
            json j;
            j["conversation"] = s.conversation;
            j["item"] = s.item;
            j["method"] = s.method;
            j["objective"] = s.objective;
            j["ranking"] = ranking_to_json(s.ranking);
            sels << j.dump() << "\n";
        }
    }
}

}  // namespace

int cmd_run(const RunConfig& config, std::ostream& out) {
    check_paths(config);
    if (config.methods.empty())
        throw domain_error("nothing to run", "method list is empty");
    set_jobs(config.jobs);
    Clients clients = make_clients(config);
    bool hermetic = config.hermetic();
    std::int64_t timestamp = now_or_zero(hermetic);

    bool any_failed = false;
    std::size_t hits_before = 0;

    for (const auto& manifest : config.dataset_manifests) {
        // The adapted directory is keyed by the source scenario name.
        Dataset probe = corpus::load_dataset(manifest);
        std::string scenario = corpus::to_string(probe.scenario);
        if (!config.scenario_filter.empty() &&
            std::find(config.scenario_filter.begin(), config.scenario_filter.end(),
                      scenario) == config.scenario_filter.end())
            continue;
        std::string adapted = config.adapted_dir(scenario);
        if (!fs::exists(adapted + "/dataset.toml"))
            throw io_error("adapted dataset not found", adapted + " (run adapt first)");
        ScenarioData data = load_adapted(adapted);

        bool needs_embeddings = std::any_of(
            config.methods.begin(), config.methods.end(), [](const MethodSpec& m) {
                return m.family == MethodFamily::dense || m.family == MethodFamily::fused;
            });
        EmbeddingCache embeddings;
        if (needs_embeddings) {
            for (const auto& c : data.dataset.conversations) {
                auto prefix = corpus::extract_prefix(c, data.dataset.items,
                                                     config.prefix_mode,
                                                     config.mask_token);
                cache_embedding(embeddings, *clients.embedding, prefix.transcript());
            }
            for (const auto& [id, item] : data.dataset.items) {
                cache_embedding(embeddings, *clients.embedding, item_text(item));
                for (const auto& attr : item.atomic_attributes)
                    cache_embedding(embeddings, *clients.embedding, attr.text);
            }
        }

        struct CellTask {
            const Conversation* conversation;
            const MethodSpec* method;
        };
        std::vector<CellTask> tasks;
        for (const auto& c : data.dataset.conversations)
            for (const auto& m : config.methods) tasks.push_back({&c, &m});

        RunLog model_log;
        std::vector<CellOutput> cells(tasks.size());
#pragma omp parallel for schedule(dynamic)
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(tasks.size()); ++i) {
            try {
                cells[i] = run_cell(config, data, *tasks[i].conversation,
                                    *tasks[i].method, embeddings, clients,
                                    &model_log, timestamp);
            } catch (const std::exception& e) {
                cells[i].cell_name = data.name + "/" + tasks[i].conversation->id +
                                     "/" + tasks[i].method->id();
                cells[i].error = e.what();
            }
        }

        std::string dir = config.runs_dir(scenario);
        write_runs(dir, cells);
        model_log.write(dir + "/model_log.jsonl");

        json manifest_json;
        manifest_json["scenario"] = scenario;
        manifest_json["seed"] = config.seed;
        manifest_json["lambda"] = config.lambda;
        manifest_json["prefix_mode"] =
            config.prefix_mode == corpus::PrefixMode::pre_recommendation ? "pre"
                                                                         : "full-masked";
        manifest_json["model_client"] = clients.model->identity();
        manifest_json["embedding_client"] = clients.embedding->identity();
        json failed = json::array();
        json fallbacks = json::array();
        std::size_t selection_count = 0;
        for (const auto& cell : cells) {
            if (!cell.error.empty())
                failed.push_back({{"cell", cell.cell_name}, {"error", cell.error}});
            for (const auto& f : cell.fallbacks) fallbacks.push_back(f);
            selection_count += cell.selections.size();
        }
        manifest_json["failed_cells"] = failed;
        manifest_json["listwise_fallbacks"] = fallbacks;
        std::size_t scenario_hits = 0;
        if (auto* caching = dynamic_cast<CachingModelClient*>(clients.model.get())) {
            scenario_hits = caching->cache_hits() - hits_before;
            hits_before = caching->cache_hits();
            manifest_json["cache_hits"] = scenario_hits;
        }
        std::ofstream mf(dir + "/run_manifest.json");
        mf << manifest_json.dump(2) << "\n";

        out << scenario << ": " << tasks.size() << " cells, " << selection_count
            << " selections, " << model_log.size() << " model calls";
        if (!config.resume_log.empty()) out << ", " << scenario_hits << " cache hits";
        out << "\n";
        for (const auto& cell : cells) {
            if (!cell.error.empty()) {
                any_failed = true;
                out << "  failed " << cell.cell_name << ": " << cell.error << "\n";
            }
        }
    }
    return any_failed ? exit_domain : exit_ok;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

namespace {

struct ReportCell {
    std::string scenario;
    std::string task;       // "items" or "labels"
    std::string method;
    std::string criterion;  // "-", "EIS", "IN_E", "IN_S"
    int k = 0;
    eval::MetricValue metric;
    bool defined = false;
};

struct FpCell {
    std::string scenario;
    std::string method;
    eval::FalsePositiveBreakdown fp;
};

// Splits "model:listwise:V_T:suppress_visual" into columns.
void method_columns(const std::string& method_id, std::string& family,
                    std::string& form, std::string& modality, std::string& variant) {
    std::vector<std::string> parts;
    std::stringstream ss(method_id);
    std::string part;
    while (std::getline(ss, part, ':')) parts.push_back(part);
    family = parts.empty() ? "" : parts[0];
    form = parts.size() > 1 ? parts[1] : "";
    modality = parts.size() > 2 ? parts[2] : "";
    variant = parts.size() > 3 ? parts[3] : "none";
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

int cmd_report(const RunConfig& config, std::ostream& out) {
    check_paths(config);
    set_jobs(config.jobs);
    config.eval.validate();

    std::vector<ReportCell> cells;
    std::vector<FpCell> fp_cells;
    std::vector<std::string> sources;

    for (const auto& manifest : config.dataset_manifests) {
        Dataset probe = corpus::load_dataset(manifest);
        std::string scenario = corpus::to_string(probe.scenario);
        if (!config.scenario_filter.empty() &&
            std::find(config.scenario_filter.begin(), config.scenario_filter.end(),
                      scenario) == config.scenario_filter.end())
            continue;

        ScenarioData data = load_adapted(config.adapted_dir(scenario));
        const auto& bundle = *data.dataset.ground_truth_labels;
        std::string runs = config.runs_dir(scenario);
        if (!fs::exists(runs + "/selections.jsonl"))
            throw io_error("run logs not found", runs + " (run the run stage first)");
        sources.push_back("runs/" + scenario);

        // recommendations: conversation -> method -> ranking
        std::map<std::string, std::map<std::string, RankedList>> recs;
        {
            std::ifstream in(runs + "/recommendations.jsonl");
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                json j = json::parse(line);
                recs[j.at("method").get<std::string>()]
                    [j.at("conversation").get<std::string>()] =
                        ranking_from_json(j.at("ranking"));
            }
        }
        // selections: method -> objective -> conversation -> item -> ranking
        std::map<std::string,
                 std::map<std::string,
                          std::map<std::string, std::map<std::string, RankedList>>>>
            sels;
        {
            std::ifstream in(runs + "/selections.jsonl");
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                json j = json::parse(line);
                sels[j.at("method").get<std::string>()]
                    [j.at("objective").get<std::string>()]
                    [j.at("conversation").get<std::string>()]
                    [j.at("item").get<std::string>()] =
                        ranking_from_json(j.at("ranking"));
            }
        }

        // Configured methods that never produced a record are reported as
        // absent cells (n = 0) rather than silently dropped.
        for (const auto& m : config.methods) {
            std::string id = m.id();
            bool has_items = recs.count(id) > 0;
            bool has_labels = sels.count(id) > 0;
            if (!has_items && m.family != MethodFamily::fused) {
                for (int k : config.eval.k_values)
                    cells.push_back({scenario, "items", id, "-", k, {}, false});
            }
            if (!has_labels) {
                for (const auto& criterion : {"EIS", "IN_E", "IN_S"}) {
                    for (int k : config.eval.k_values)
                        cells.push_back({scenario, "labels", id, criterion, k, {}, false});
                }
            }
        }

        // --- item recommendation cells ---
        for (const auto& [method, by_conv] : recs) {
            for (int k : config.eval.k_values) {
                std::vector<double> samples;
                for (const auto& c : data.dataset.conversations) {
                    auto it = by_conv.find(c.id);
                    if (it == by_conv.end()) continue;
                    samples.push_back(
                        eval::precision_at_k(it->second, c.ground_truth_items, k));
                }
                ReportCell cell{scenario, "items", method, "-", k, {}, false};
                if (!samples.empty()) {
                    cell.metric = eval::bootstrap_ci(
                        samples, config.eval.bootstrap_resamples, config.eval.confidence,
                        derive_seed(config.eval.seed, scenario + "|items|" + method +
                                                          "|-|" + std::to_string(k)));
                    cell.defined = true;
                }
                cells.push_back(std::move(cell));
            }
        }

        // --- label selection cells ---
        static const std::map<std::string, std::vector<std::string>> criterion_sources =
            {{"EIS", {"EIS", "-"}},
             {"IN_E", {"IN", "-"}},
             {"IN_S", {"IN", "-"}}};
        for (const auto& [method, by_objective] : sels) {
            for (const auto& [criterion_name, accepted] : criterion_sources) {
                Criterion criterion = corpus::criterion_from_string(criterion_name);
                const std::map<std::string, std::map<std::string, RankedList>>* chosen =
                    nullptr;
                for (const auto& objective : accepted) {
                    auto it = by_objective.find(objective);
                    if (it != by_objective.end()) {
                        chosen = &it->second;
                        break;
                    }
                }
                if (!chosen) {
                    // ran, but not under an objective feeding this criterion
                    for (int k : config.eval.k_values)
                        cells.push_back(
                            {scenario, "labels", method, criterion_name, k, {}, false});
                    continue;
                }
                for (int k : config.eval.k_values) {
                    std::vector<double> samples;
                    for (const auto& [conv_id, cgt] : bundle.conversations) {
                        auto conv_it = chosen->find(conv_id);
                        if (conv_it == chosen->end()) continue;
                        for (const auto& [item_id, igt] : cgt.items) {
                            auto gt = igt.criterion_set(criterion);
                            if (gt.empty() &&
                                config.empty_gt_policy == eval::EmptyGtPolicy::exclude)
                                continue;
                            auto sel_it = conv_it->second.find(item_id);
                            if (sel_it == conv_it->second.end())
                                throw domain_error("missing selection",
                                                   conv_id + "/" + item_id + "/" + method);
                            samples.push_back(
                                gt.empty() ? 0.0
                                           : eval::precision_at_k(sel_it->second, gt, k));
                        }
                    }
                    ReportCell cell{scenario, "labels", method, criterion_name, k, {}, false};
                    if (!samples.empty()) {
                        cell.metric = eval::bootstrap_ci(
                            samples, config.eval.bootstrap_resamples,
                            config.eval.confidence,
                            derive_seed(config.eval.seed,
                                        scenario + "|labels|" + method + "|" +
                                            criterion_name + "|" + std::to_string(k)));
                        cell.defined = true;
                    }
                    cells.push_back(std::move(cell));
                }
            }

            // --- false positives against IN_S, over the IN-side selections ---
            const std::map<std::string, std::map<std::string, RankedList>>* in_side =
                nullptr;
            for (const auto& objective : {std::string("IN"), std::string("-")}) {
                auto it = by_objective.find(objective);
                if (it != by_objective.end()) {
                    in_side = &it->second;
                    break;
                }
            }
            if (in_side) {
                eval::FalsePositiveBreakdown total;
                for (const auto& [conv_id, cgt] : bundle.conversations) {
                    auto conv_it = in_side->find(conv_id);
                    if (conv_it == in_side->end()) continue;
                    for (const auto& [item_id, igt] : cgt.items) {
                        auto sel_it = conv_it->second.find(item_id);
                        if (sel_it == conv_it->second.end()) continue;
                        std::map<std::string, bool> flags(igt.visually_inferable.begin(),
                                                          igt.visually_inferable.end());
                        auto fp = eval::categorize_false_positives(
                            sel_it->second.top_ids(3), igt.criterion_set(Criterion::IN_S),
                            igt.criterion_set(Criterion::EIS), flags);
                        total.vi += fp.vi;
                        total.er += fp.er;
                        total.ip += fp.ip;
                    }
                }
                fp_cells.push_back({scenario, method, total});
            }
        }
    }

    // --- serialize ---
    std::string dir = config.report_dir();
    fs::create_directories(dir + "/plots");

    json report;
    report["config"] = {
        {"lambda", config.lambda},
        {"seed", config.seed},
        {"bootstrap_resamples", config.eval.bootstrap_resamples},
        {"confidence", config.eval.confidence},
        {"empty_gt_policy",
         config.empty_gt_policy == eval::EmptyGtPolicy::exclude ? "exclude"
                                                                : "count_zero"},
        {"prefix_mode", config.prefix_mode == corpus::PrefixMode::pre_recommendation
                            ? "pre"
                            : "full-masked"},
        {"k_values", config.eval.k_values},
        {"item_label_budget", config.eval.item_label_budget},
    };
    json jcells = json::array();
    for (const auto& cell : cells) {
        std::string family, form, modality, variant;
        method_columns(cell.method, family, form, modality, variant);
        json j = {{"scenario", cell.scenario}, {"task", cell.task},
                  {"method", family},          {"form", form},
                  {"modality", modality},      {"variant", variant},
                  {"criterion", cell.criterion}, {"k", cell.k},
                  {"n", cell.defined ? cell.metric.n : 0}};
        if (cell.defined) {
            j["point"] = cell.metric.point;
            j["ci_low"] = cell.metric.ci_low;
            j["ci_high"] = cell.metric.ci_high;
            j["display"] = cell.metric.display();
        } else {
            j["point"] = nullptr;
            j["display"] = "n/a";
        }
        jcells.push_back(std::move(j));
    }
    report["cells"] = std::move(jcells);
    json jfp = json::array();
    for (const auto& fp : fp_cells) {
        std::string family, form, modality, variant;
        method_columns(fp.method, family, form, modality, variant);
        jfp.push_back({{"scenario", fp.scenario},
                       {"method", family},
                       {"form", form},
                       {"modality", modality},
                       {"variant", variant},
                       {"vi", fp.fp.vi},
                       {"er", fp.fp.er},
                       {"ip", fp.fp.ip},
                       {"total_fp", fp.fp.total_fp()}});
    }
    report["false_positives"] = std::move(jfp);
    report["sources"] = sources;
    {
        std::ofstream f(dir + "/report.json");
        f << report.dump(2) << "\n";
    }

    {
        std::ofstream f(dir + "/report.csv");
        f << "scenario,task,method,form,modality,variant,criterion,k,n,point,ci_low,"
             "ci_high,display\n";
        for (const auto& cell : cells) {
            std::string family, form, modality, variant;
            method_columns(cell.method, family, form, modality, variant);
            f << cell.scenario << ',' << cell.task << ',' << family << ',' << form
              << ',' << modality << ',' << variant << ',' << cell.criterion << ','
              << cell.k << ',' << (cell.defined ? cell.metric.n : 0) << ',';
            if (cell.defined) {
                f << format_real(cell.metric.point) << ','
                  << format_real(cell.metric.ci_low) << ','
                  << format_real(cell.metric.ci_high) << ','
                  << csv_escape(cell.metric.display());
            } else {
                f << ",,," << "n/a";
            }
            f << "\n";
        }
    }

    // plot series
    {
        std::ofstream f(dir + "/plots/criterion_comparison.csv");
        f << "scenario,method,form,modality,variant,criterion,k,point,ci_low,ci_high\n";
        for (const auto& cell : cells) {
            if (cell.task != "labels" || !cell.defined) continue;
            std::string family, form, modality, variant;
            method_columns(cell.method, family, form, modality, variant);
            f << cell.scenario << ',' << family << ',' << form << ',' << modality
              << ',' << variant << ',' << cell.criterion << ',' << cell.k << ','
              << format_real(cell.metric.point) << ','
              << format_real(cell.metric.ci_low) << ','
              << format_real(cell.metric.ci_high) << "\n";
        }
    }
    {
        std::ofstream f(dir + "/plots/modality_comparison.csv");
        f << "scenario,form,variant,criterion,k,modality,point,ci_low,ci_high\n";
        for (const auto& cell : cells) {
            std::string family, form, modality, variant;
            method_columns(cell.method, family, form, modality, variant);
            if (family != "model" || !cell.defined) continue;
            f << cell.scenario << ',' << form << ',' << variant << ','
              << (cell.task == "items" ? std::string("-") : cell.criterion) << ','
              << cell.k << ',' << modality << ',' << format_real(cell.metric.point)
              << ',' << format_real(cell.metric.ci_low) << ','
              << format_real(cell.metric.ci_high) << "\n";
        }
    }
    {
        std::ofstream f(dir + "/plots/instruct_ablation.csv");
        f << "scenario,form,modality,criterion,k,variant,point,ci_low,ci_high\n";
        for (const auto& cell : cells) {
            std::string family, form, modality, variant;
            method_columns(cell.method, family, form, modality, variant);
            if (family != "model" || cell.task != "labels" || !cell.defined) continue;
            f << cell.scenario << ',' << form << ',' << modality << ','
              << cell.criterion << ',' << cell.k << ',' << variant << ','
              << format_real(cell.metric.point) << ','
              << format_real(cell.metric.ci_low) << ','
              << format_real(cell.metric.ci_high) << "\n";
        }
    }
    {
        std::ofstream f(dir + "/plots/fp_distribution.csv");
        f << "scenario,method,form,modality,variant,vi,er,ip,total_fp\n";
        for (const auto& fp : fp_cells) {
            std::string family, form, modality, variant;
            method_columns(fp.method, family, form, modality, variant);
            f << fp.scenario << ',' << family << ',' << form << ',' << modality << ','
              << variant << ',' << fp.fp.vi << ',' << fp.fp.er << ',' << fp.fp.ip
              << ',' << fp.fp.total_fp() << "\n";
        }
    }

    // human summary: one table per (scenario, task, criterion), methods as
    // rows and k values as columns
    std::vector<std::tuple<std::string, std::string, std::string>> groups;
    for (const auto& cell : cells) {
        auto g = std::make_tuple(cell.scenario, cell.task, cell.criterion);
        if (std::find(groups.begin(), groups.end(), g) == groups.end())
            groups.push_back(g);
    }
    std::sort(groups.begin(), groups.end());
    for (const auto& [scenario, task, criterion] : groups) {
        out << "\n" << scenario << " / "
            << (task == "items" ? "item recommendation (P@k)"
                                : "label selection (mP@k), criterion " + criterion)
            << "\n";
        char header[160];
        std::string head = "  method";
        head.resize(38, ' ');
        for (int k : config.eval.k_values) {
            std::snprintf(header, sizeof(header), "k=%-16d", k);
            head += header;
        }
        out << head << "\n";
        std::vector<std::string> methods;
        for (const auto& cell : cells) {
            if (cell.scenario != scenario || cell.task != task ||
                cell.criterion != criterion)
                continue;
            if (std::find(methods.begin(), methods.end(), cell.method) ==
                methods.end())
                methods.push_back(cell.method);
        }
        std::sort(methods.begin(), methods.end());
        for (const auto& method : methods) {
            std::string row = "  " + method;
            row.resize(38, ' ');
            for (int k : config.eval.k_values) {
                std::string value = "n/a";
                for (const auto& cell : cells) {
                    if (cell.scenario == scenario && cell.task == task &&
                        cell.criterion == criterion && cell.method == method &&
                        cell.k == k && cell.defined)
                        value = cell.metric.display();
                }
                // the plus-minus sign is two bytes; pad to equal visible width
                value.resize(value.find("±") != std::string::npos ? 19 : 18, ' ');
                row += value;
            }
            while (!row.empty() && row.back() == ' ') row.pop_back();
            out << row << "\n";
        }
    }
    out << "\nreport written to " << dir << "\n";
    return exit_ok;
}

// ---------------------------------------------------------------------------
// replay-verify
// ---------------------------------------------------------------------------

int cmd_replay_verify(const RunConfig& config, const std::string& log_path,
                      std::ostream& out) {
    if (!fs::exists(log_path)) throw io_error("replay log not found", log_path);

    RunConfig replay_config = config;
    replay_config.model_client = "replay";
    replay_config.replay_log = log_path;
    replay_config.resume_log.clear();
    replay_config.output_dir = config.output_dir + "/replay_verify";

    // Reuse the adapted datasets from the original output.
    fs::create_directories(replay_config.output_dir);
    fs::path adapted_src = fs::path(config.output_dir) / "adapted";
    fs::path adapted_dst = fs::path(replay_config.output_dir) / "adapted";
    if (!fs::exists(adapted_src))
        throw io_error("adapted dataset not found", adapted_src.string());
    fs::remove_all(adapted_dst);
    fs::copy(adapted_src, adapted_dst, fs::copy_options::recursive);

    int rc = cmd_run(replay_config, out);
    if (rc != exit_ok) return rc;

    // Compare every regenerated model log byte-for-byte with its source.
    bool all_ok = true;
    for (const auto& manifest : config.dataset_manifests) {
        Dataset probe = corpus::load_dataset(manifest);
        std::string scenario = corpus::to_string(probe.scenario);
        std::string regenerated =
            replay_config.runs_dir(scenario) + "/model_log.jsonl";
        std::string original = fs::is_directory(log_path)
                                   ? log_path + "/" + scenario + "/model_log.jsonl"
                                   : log_path;
        std::ifstream a(regenerated, std::ios::binary);
        std::ifstream b(original, std::ios::binary);
        std::stringstream sa, sb;
        sa << a.rdbuf();
        sb << b.rdbuf();
        bool same = sa.str() == sb.str();
        all_ok = all_ok && same;
        out << scenario << ": replay " << (same ? "matches" : "DIFFERS") << "\n";
    }
    return all_ok ? exit_ok : exit_domain;
}

}  // namespace icrs::cli
