#pragma once
// Pluggable client seams. Every external model dependency (relevance judge,
// ranking model, pair scorer, embedder, attribute splitter) sits behind one
// of these interfaces so runs can be hermetic: deterministic keyword mocks
// for tests and fixtures, replay clients for bit-exact re-evaluation, live
// HTTP clients supplied by the embedding application.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace icrs {

struct ModelRequest {
    std::string key;           // run-log key (scenario/conversation/method/...)
    std::string text;          // rendered prompt
    std::vector<std::string> image_refs;
    double temperature = 0.0;  // fixed decoding profile
};

class ModelClient {
public:
    virtual ~ModelClient() = default;
    virtual std::string complete(const ModelRequest& request) = 0;
    virtual std::string identity() const = 0;
};

class JudgeClient {
public:
    virtual ~JudgeClient() = default;
    virtual std::string judge(const std::string& key, const std::string& prompt) = 0;
    virtual std::string identity() const = 0;
};

class PairScorerClient {
public:
    virtual ~PairScorerClient() = default;
    virtual double score(const std::string& query, const std::string& candidate) = 0;
    virtual std::string identity() const = 0;
};

class EmbeddingClient {
public:
    virtual ~EmbeddingClient() = default;
    virtual std::vector<double> embed(const std::string& text) = 0;
    virtual std::string identity() const = 0;
};

class DecomposerClient {
public:
    virtual ~DecomposerClient() = default;
    // Splits a composite value into self-contained fragments. The caller
    // re-attaches the originating key.
    virtual std::vector<std::string> split(const std::string& key,
                                           const std::string& value) = 0;
    virtual std::string identity() const = 0;
};

// ---------------------------------------------------------------------------
// Deterministic mocks
// ---------------------------------------------------------------------------

// Relevance 1 iff a content word of the snippet text (stop-words removed)
// appears in any utterance of the rendered utterance set; snippets whose key
// is in `visual_keys` are flagged visually inferable. Parses the prompt's
// trailing "...: <json>" input lines, so it honors the real client contract
// (request = rendered prompt string).
class MockKeywordJudge : public JudgeClient {
public:
    explicit MockKeywordJudge(std::set<std::string> visual_keys = default_visual_keys());

    std::string judge(const std::string& key, const std::string& prompt) override;
    std::string identity() const override { return "mock-keyword-judge"; }

    static std::set<std::string> default_visual_keys();

private:
    std::set<std::string> visual_keys_;
};

// Scores each snippet by content-word overlap with the conversation section
// of the prompt: pointwise relevance = min(3, overlap), listwise = top-5 by
// (overlap desc, id asc). Emits the exact JSON array formats the parsers
// expect.
class MockKeywordModel : public ModelClient {
public:
    std::string complete(const ModelRequest& request) override;
    std::string identity() const override { return "mock-keyword-model"; }
};

// Jaccard similarity over content-word sets.
class MockOverlapPairScorer : public PairScorerClient {
public:
    double score(const std::string& query, const std::string& candidate) override;
    std::string identity() const override { return "mock-overlap-scorer"; }
};

// Feature-hashing encoder: tokens hashed into `dimension` signed buckets,
// then L2-normalized. Hermetic stand-in for a dense embedding backend.
class HashingEmbeddingClient : public EmbeddingClient {
public:
    explicit HashingEmbeddingClient(std::size_t dimension = 1536)
        : dimension_(dimension) {}

    std::vector<double> embed(const std::string& text) override;
    std::string identity() const override;

private:
    std::size_t dimension_;
};

// Identity passthrough splitter (client-backed decomposition tests swap in
// scripted implementations).
class PassthroughDecomposer : public DecomposerClient {
public:
    std::vector<std::string> split(const std::string&,
                                   const std::string& value) override {
        return {value};
    }
    std::string identity() const override { return "passthrough-decomposer"; }
};

// ---------------------------------------------------------------------------
// Replay and caching
// ---------------------------------------------------------------------------

// Serves responses recorded in a prior run log, keyed by run-log key; the
// last record per key wins. Requests whose key is absent fail with
// "replay missing key"; a prompt whose hash differs from the recorded one
// fails with "replay prompt mismatch".
class ReplayStore {
public:
    static ReplayStore load(const std::string& log_path);

    // Returns the recorded response; throws per the class contract.
    std::string lookup(const std::string& key, const std::string& prompt) const;
    bool contains(const std::string& key) const { return records_.count(key) > 0; }
    std::size_t size() const { return records_.size(); }

private:
    struct Entry {
        std::string prompt_hash;
        std::string response;
    };
    std::map<std::string, Entry> records_;
};

class ReplayModelClient : public ModelClient {
public:
    explicit ReplayModelClient(ReplayStore store) : store_(std::move(store)) {}
    std::string complete(const ModelRequest& request) override {
        return store_.lookup(request.key, request.text);
    }
    std::string identity() const override { return "replay"; }

private:
    ReplayStore store_;
};

class ReplayJudgeClient : public JudgeClient {
public:
    explicit ReplayJudgeClient(ReplayStore store) : store_(std::move(store)) {}
    std::string judge(const std::string& key, const std::string& prompt) override {
        return store_.lookup(key, prompt);
    }
    std::string identity() const override { return "replay"; }

private:
    ReplayStore store_;
};

// Resume support: answers from a prior log when the key is present, else
// delegates to the live client. Hits never touch the inner client.
class CachingModelClient : public ModelClient {
public:
    CachingModelClient(std::shared_ptr<ModelClient> inner, ReplayStore cache)
        : inner_(std::move(inner)), cache_(std::move(cache)) {}

    std::string complete(const ModelRequest& request) override;
    std::string identity() const override { return inner_->identity(); }

    std::size_t cache_hits() const;
    std::size_t inner_calls() const;

private:
    std::shared_ptr<ModelClient> inner_;
    ReplayStore cache_;
    mutable std::mutex mu_;
    std::size_t hits_ = 0;
    std::size_t inner_calls_ = 0;
};

class CachingJudgeClient : public JudgeClient {
public:
    CachingJudgeClient(std::shared_ptr<JudgeClient> inner, ReplayStore cache)
        : inner_(std::move(inner)), cache_(std::move(cache)) {}

    std::string judge(const std::string& key, const std::string& prompt) override;
    std::string identity() const override { return inner_->identity(); }

    std::size_t cache_hits() const;
    std::size_t inner_calls() const;

private:
    std::shared_ptr<JudgeClient> inner_;
    ReplayStore cache_;
    mutable std::mutex mu_;
    std::size_t hits_ = 0;
    std::size_t inner_calls_ = 0;
};

}  // namespace icrs
