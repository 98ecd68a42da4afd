#pragma once
// Retrieval-based rankers: Okapi BM25, exhaustive dense similarity, linear
// text/visual fusion, and two-stage rerank. Scoring loops are OpenMP-parallel;
// each has a serial twin (suffix _serial) used by tests and the kernel
// benchmark. Parallel and serial variants are bit-identical by construction:
// every candidate is scored independently and ordering is a deterministic
// sort with id tie-break.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "icrs/clients.hpp"

namespace icrs::retrieval {

struct Bm25Params {
    double k1 = 1.5;
    double b = 0.75;
};

struct ScoredEntry {
    std::string id;
    double score = 0.0;
};

// Ordered candidates, highest score first; equal scores break ties by
// ascending candidate id. Built via from_scores except for rerank, which
// keeps its documented block structure.
struct RankedList {
    std::vector<ScoredEntry> entries;

    static RankedList from_scores(std::vector<ScoredEntry> scored);

    std::vector<std::string> ids() const;
    std::vector<std::string> top_ids(std::size_t k) const;
};

// Corpus statistics for BM25: document frequencies and average length over
// the full candidate corpus.
struct CorpusStats {
    std::size_t doc_count = 0;
    double avg_doc_len = 0.0;
    std::map<std::string, std::size_t> doc_freq;

    static CorpusStats compute(const std::vector<std::vector<std::string>>& docs);
};

// Okapi BM25 with idf = ln((N - n + 0.5) / (n + 0.5) + 1). Empty query or
// document scores 0. Stop-words are retained (the tokenizer never filters).
double bm25_score(const std::vector<std::string>& query_tokens,
                  const std::vector<std::string>& doc_tokens,
                  const CorpusStats& stats, const Bm25Params& params);

// BM25 over all candidates; stats computed over exactly these candidates.
RankedList rank_lexical(const std::string& prefix_text,
                        const std::map<std::string, std::string>& candidates,
                        const Bm25Params& params);
RankedList rank_lexical_serial(const std::string& prefix_text,
                               const std::map<std::string, std::string>& candidates,
                               const Bm25Params& params);

struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dimension() const { return values.size(); }
    double norm() const;
    // Scales to unit Euclidean norm (no-op on the zero vector).
    void normalize();
};

// Exhaustive inner-product ranking; all vectors must share the query's
// dimension and be unit-norm (tolerance 1e-6), otherwise a domain error.
RankedList rank_dense(const EmbeddingVector& query,
                      const std::map<std::string, EmbeddingVector>& candidates);
RankedList rank_dense_serial(const EmbeddingVector& query,
                             const std::map<std::string, EmbeddingVector>& candidates);

struct FusionConfig {
    double lambda = 0.7;
};

// lambda * text_sim - (1 - lambda) * visual_sim
double fuse_scores(double text_sim, double visual_sim, const FusionConfig& cfg);

// Dense similarity fused with per-attribute visual similarity; visual_sims
// must cover every candidate id.
RankedList rank_fused(const EmbeddingVector& prefix_vec,
                      const std::map<std::string, EmbeddingVector>& attribute_vecs,
                      const std::map<std::string, double>& visual_sims,
                      const FusionConfig& cfg);

// Rescores the top `k` entries of `lexical_top` with the pair scorer
// (each pair is (prefix_text, candidate text)) and re-sorts that block by
// client score with id tie-break; entries beyond the top k keep their
// lexical order below the reranked block.
RankedList rerank(const std::string& prefix_text, const RankedList& lexical_top,
                  std::size_t k,
                  const std::map<std::string, std::string>& candidate_texts,
                  PairScorerClient& scorer);

// ---------------------------------------------------------------------------
// Embedding sources
// ---------------------------------------------------------------------------

// Wraps an EmbeddingClient, enforcing the unit-norm/dimension contract.
EmbeddingVector encode(EmbeddingClient& client, const std::string& text);

// Precomputed sidecar: embeddings.jsonl, one {text_hash, dimension, values}
// per line, keyed by "fnv1a64:<16 hex digits>" of the UTF-8 text.
class EmbeddingSidecar : public EmbeddingClient {
public:
    static EmbeddingSidecar load(const std::string& path);

    std::vector<double> embed(const std::string& text) override;
    std::string identity() const override { return "sidecar"; }

private:
    std::map<std::string, std::vector<double>> by_hash_;
};

// Visual-similarity sidecar: visual_sims.jsonl, one {item_id, attribute_id,
// sim} per line.
std::map<std::pair<std::string, std::string>, double> load_visual_sims(
    const std::string& path);

}  // namespace icrs::retrieval
