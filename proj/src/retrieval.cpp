#include "icrs/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "icrs/error.hpp"
#include "icrs/text.hpp"

namespace icrs::retrieval {

using nlohmann::json;

RankedList RankedList::from_scores(std::vector<ScoredEntry> scored) {
    std::sort(scored.begin(), scored.end(),
              [](const ScoredEntry& a, const ScoredEntry& b) {
                  if (a.score != b.score) return a.score > b.score;
                  return a.id < b.id;
              });
    return RankedList{std::move(scored)};
}

std::vector<std::string> RankedList::ids() const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.id);
    return out;
}

std::vector<std::string> RankedList::top_ids(std::size_t k) const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < entries.size() && i < k; ++i)
        out.push_back(entries[i].id);
    return out;
}

CorpusStats CorpusStats::compute(const std::vector<std::vector<std::string>>& docs) {
    CorpusStats stats;
    stats.doc_count = docs.size();
    std::size_t total_len = 0;
    for (const auto& doc : docs) {
        total_len += doc.size();
        std::set<std::string> uniq(doc.begin(), doc.end());
        for (const auto& term : uniq) ++stats.doc_freq[term];
    }
    stats.avg_doc_len =
        docs.empty() ? 0.0 : static_cast<double>(total_len) / docs.size();
    return stats;
}

namespace {

void check_params(const Bm25Params& params) {
    if (params.k1 < 0.0)
        throw domain_error("malformed config", "bm25 k1 must be >= 0");
    if (params.b < 0.0 || params.b > 1.0)
        throw domain_error("malformed config", "bm25 b must lie in [0,1]");
}

}  // namespace

double bm25_score(const std::vector<std::string>& query_tokens,
                  const std::vector<std::string>& doc_tokens,
                  const CorpusStats& stats, const Bm25Params& params) {
    check_params(params);
    if (query_tokens.empty() || doc_tokens.empty()) return 0.0;

    std::map<std::string, std::size_t> tf;
    for (const auto& t : doc_tokens) ++tf[t];

    const double n_docs = static_cast<double>(stats.doc_count);
    const double dl = static_cast<double>(doc_tokens.size());
    const double len_norm =
        params.k1 * (1.0 - params.b +
                     params.b * (stats.avg_doc_len > 0.0 ? dl / stats.avg_doc_len : 0.0));

    double score = 0.0;
    for (const auto& term : query_tokens) {
        auto tf_it = tf.find(term);
        if (tf_it == tf.end()) continue;
        auto df_it = stats.doc_freq.find(term);
        double df = df_it == stats.doc_freq.end()
                        ? 0.0
                        : static_cast<double>(df_it->second);
        double idf = std::log((n_docs - df + 0.5) / (df + 0.5) + 1.0);
        double f = static_cast<double>(tf_it->second);
        score += idf * (f * (params.k1 + 1.0)) / (f + len_norm);
    }
    return score;
}

namespace {

struct TokenizedCorpus {
    std::vector<std::string> ids;
    std::vector<std::vector<std::string>> docs;
    CorpusStats stats;
};

TokenizedCorpus tokenize_candidates(
    const std::map<std::string, std::string>& candidates) {
    TokenizedCorpus c;
    for (const auto& [id, doc_text] : candidates) {
        c.ids.push_back(id);
        c.docs.push_back(text::tokenize(doc_text));
    }
    c.stats = CorpusStats::compute(c.docs);
    return c;
}

}  // namespace

RankedList rank_lexical(const std::string& prefix_text,
                        const std::map<std::string, std::string>& candidates,
                        const Bm25Params& params) {
    if (candidates.empty())
        throw domain_error("empty candidates", "rank_lexical needs at least one");
    auto corpus = tokenize_candidates(candidates);
    auto query = text::tokenize(prefix_text);

    std::vector<ScoredEntry> scored(corpus.ids.size());
    const auto n = static_cast<std::int64_t>(corpus.ids.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        scored[i] = {corpus.ids[i],
                     bm25_score(query, corpus.docs[i], corpus.stats, params)};
    }
    return RankedList::from_scores(std::move(scored));
}

RankedList rank_lexical_serial(const std::string& prefix_text,
                               const std::map<std::string, std::string>& candidates,
                               const Bm25Params& params) {
    if (candidates.empty())
        throw domain_error("empty candidates", "rank_lexical needs at least one");
    auto corpus = tokenize_candidates(candidates);
    auto query = text::tokenize(prefix_text);

    std::vector<ScoredEntry> scored;
    scored.reserve(corpus.ids.size());
    for (std::size_t i = 0; i < corpus.ids.size(); ++i)
        scored.push_back({corpus.ids[i],
                          bm25_score(query, corpus.docs[i], corpus.stats, params)});
    return RankedList::from_scores(std::move(scored));
}

double EmbeddingVector::norm() const {
    double s = 0.0;
    for (double x : values) s += x * x;
    return std::sqrt(s);
}

void EmbeddingVector::normalize() {
    double n = norm();
    if (n == 0.0) return;
    for (double& x : values) x /= n;
}

namespace {

void check_vector(const EmbeddingVector& v, std::size_t dim, const std::string& id) {
    if (v.dimension() != dim)
        throw domain_error("dimension mismatch",
                           "vector '" + id + "' has dimension " +
                               std::to_string(v.dimension()) + ", expected " +
                               std::to_string(dim));
    if (std::abs(v.norm() - 1.0) > 1e-6)
        throw domain_error("non-normalized vector", "vector '" + id + "'");
}

double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) s += a.values[i] * b.values[i];
    return s;
}

}  // namespace

RankedList rank_dense(const EmbeddingVector& query,
                      const std::map<std::string, EmbeddingVector>& candidates) {
    check_vector(query, query.dimension(), "query");
    std::vector<const std::pair<const std::string, EmbeddingVector>*> rows;
    rows.reserve(candidates.size());
    for (const auto& kv : candidates) {
        check_vector(kv.second, query.dimension(), kv.first);
        rows.push_back(&kv);
    }

    std::vector<ScoredEntry> scored(rows.size());
    const auto n = static_cast<std::int64_t>(rows.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i)
        scored[i] = {rows[i]->first, dot(query, rows[i]->second)};
    return RankedList::from_scores(std::move(scored));
}

RankedList rank_dense_serial(const EmbeddingVector& query,
                             const std::map<std::string, EmbeddingVector>& candidates) {
    check_vector(query, query.dimension(), "query");
    std::vector<ScoredEntry> scored;
    scored.reserve(candidates.size());
    for (const auto& [id, vec] : candidates) {
        check_vector(vec, query.dimension(), id);
        scored.push_back({id, dot(query, vec)});
    }
    return RankedList::from_scores(std::move(scored));
}

double fuse_scores(double text_sim, double visual_sim, const FusionConfig& cfg) {
    return cfg.lambda * text_sim - (1.0 - cfg.lambda) * visual_sim;
}

RankedList rank_fused(const EmbeddingVector& prefix_vec,
                      const std::map<std::string, EmbeddingVector>& attribute_vecs,
                      const std::map<std::string, double>& visual_sims,
                      const FusionConfig& cfg) {
    for (const auto& [id, vec] : attribute_vecs) {
        if (!visual_sims.count(id))
            throw domain_error("missing visual similarity", "attribute '" + id + "'");
    }
    RankedList dense = rank_dense(prefix_vec, attribute_vecs);
    std::vector<ScoredEntry> fused;
    fused.reserve(dense.entries.size());
    for (const auto& e : dense.entries)
        fused.push_back({e.id, fuse_scores(e.score, visual_sims.at(e.id), cfg)});
    return RankedList::from_scores(std::move(fused));
}

RankedList rerank(const std::string& prefix_text, const RankedList& lexical_top,
                  std::size_t k,
                  const std::map<std::string, std::string>& candidate_texts,
                  PairScorerClient& scorer) {
    if (lexical_top.entries.empty())
        throw domain_error("empty candidates", "rerank needs a non-empty list");
    std::size_t head = std::min(k, lexical_top.entries.size());

    std::vector<ScoredEntry> block;
    block.reserve(head);
    for (std::size_t i = 0; i < head; ++i) {
        const auto& e = lexical_top.entries[i];
        auto text_it = candidate_texts.find(e.id);
        if (text_it == candidate_texts.end())
            throw domain_error("missing score", "no text for candidate '" + e.id + "'");
        double s;
        try {
            s = scorer.score(prefix_text, text_it->second);
        } catch (const Error&) {
            throw;
        } catch (const std::exception& ex) {
            throw domain_error("pair scorer failure",
                               "candidate '" + e.id + "': " + ex.what());
        }
        block.push_back({e.id, s});
    }
    RankedList reranked = RankedList::from_scores(std::move(block));
    // Tail keeps its lexical order below the reranked block.
    for (std::size_t i = head; i < lexical_top.entries.size(); ++i)
        reranked.entries.push_back(lexical_top.entries[i]);
    return reranked;
}

EmbeddingVector encode(EmbeddingClient& client, const std::string& text_in) {
    EmbeddingVector v{client.embed(text_in)};
    if (v.values.empty())
        throw domain_error("empty embedding", "client returned no values");
    check_vector(v, v.dimension(), "encoded");
    return v;
}

EmbeddingSidecar EmbeddingSidecar::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("file not found", path);
    EmbeddingSidecar side;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw domain_error("malformed record",
                               path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        auto values = j.at("values").get<std::vector<double>>();
        auto dim = j.at("dimension").get<std::size_t>();
        if (values.size() != dim)
            throw domain_error("dimension mismatch",
                               path + ":" + std::to_string(lineno));
        side.by_hash_[j.at("text_hash").get<std::string>()] = std::move(values);
    }
    return side;
}

std::vector<double> EmbeddingSidecar::embed(const std::string& text_in) {
    auto it = by_hash_.find(text::text_hash(text_in));
    if (it == by_hash_.end())
        throw domain_error("missing embedding",
                           "no sidecar entry for hash " + text::text_hash(text_in));
    return it->second;
}

std::map<std::pair<std::string, std::string>, double> load_visual_sims(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("file not found", path);
    std::map<std::pair<std::string, std::string>, double> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw domain_error("malformed record",
                               path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        out[{j.at("item_id").get<std::string>(),
             j.at("attribute_id").get<std::string>()}] = j.at("sim").get<double>();
    }
    return out;
}

}  // namespace icrs::retrieval
