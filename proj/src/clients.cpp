#include "icrs/clients.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "icrs/error.hpp"
#include "icrs/rng.hpp"
#include "icrs/runlog.hpp"
#include "icrs/text.hpp"

namespace icrs {

using nlohmann::json;

namespace {

// Last line of `prompt` starting with `label`, with the label stripped.
std::optional<std::string> last_labeled_line(const std::string& prompt,
                                             const std::string& label) {
    std::istringstream in(prompt);
    std::string line;
    std::optional<std::string> found;
    while (std::getline(in, line)) {
        if (line.rfind(label, 0) == 0) found = line.substr(label.size());
    }
    return found;
}

std::size_t overlap_count(const std::vector<std::string>& words,
                          const std::set<std::string>& hay) {
    std::set<std::string> uniq(words.begin(), words.end());
    std::size_t n = 0;
    for (const auto& w : uniq) n += hay.count(w);
    return n;
}

}  // namespace

// ---------------------------------------------------------------------------
// MockKeywordJudge
// ---------------------------------------------------------------------------

MockKeywordJudge::MockKeywordJudge(std::set<std::string> visual_keys)
    : visual_keys_(std::move(visual_keys)) {}

std::set<std::string> MockKeywordJudge::default_visual_keys() {
    return {"color", "colour", "pattern", "shape", "style", "size"};
}

std::string MockKeywordJudge::judge(const std::string& /*key*/,
                                    const std::string& prompt) {
    static const std::vector<std::string> utterance_labels = {
        "explicit_seeker_requests: ",
        "recommender_explanations: ",
        "seeker_questions: ",
    };
    std::optional<std::string> utterances_raw;
    for (const auto& label : utterance_labels) {
        if (auto v = last_labeled_line(prompt, label)) utterances_raw = v;
    }
    auto snippets_raw = last_labeled_line(prompt, "item_snippets: ");
    if (!utterances_raw || !snippets_raw)
        throw domain_error("malformed prompt",
                           "mock judge cannot locate input sections");

    std::vector<std::string> utterances =
        json::parse(*utterances_raw).get<std::vector<std::string>>();
    json snippets = json::parse(*snippets_raw);

    const auto& stop = text::default_stopwords();
    json out = json::array();
    for (const auto& snippet : snippets) {
        std::string id = snippet.at("id").get<std::string>();
        std::string key = snippet.value("key", "");
        std::string snippet_text = snippet.at("text").get<std::string>();

        json verdict;
        verdict["id"] = id;
        bool visual = visual_keys_.count(text::to_lower_ascii(key)) > 0;
        if (visual) {
            verdict["relevance"] = 0;
            verdict["reason"] = "visually obvious from the item itself";
            verdict["visually_inferable"] = true;
        } else {
            auto words = text::content_words(snippet_text, stop);
            std::string matched;
            for (const auto& utt : utterances) {
                auto utt_tokens = text::tokenize(utt);
                std::set<std::string> hay(utt_tokens.begin(), utt_tokens.end());
                for (const auto& w : words) {
                    if (hay.count(w)) {
                        matched = w;
                        break;
                    }
                }
                if (!matched.empty()) break;
            }
            verdict["relevance"] = matched.empty() ? 0 : 1;
            verdict["reason"] = matched.empty()
                                    ? "no overlap with the utterance set"
                                    : "keyword overlap on '" + matched + "'";
        }
        out.push_back(std::move(verdict));
    }
    return out.dump();
}

// ---------------------------------------------------------------------------
// MockKeywordModel
// ---------------------------------------------------------------------------

namespace {

struct PromptSnippet {
    std::string id;
    std::string text;
};

// Extracts the conversation section and snippet blocks from a rendered
// pointwise/listwise prompt.
void parse_model_prompt(const std::string& prompt, std::string& conversation,
                        std::vector<PromptSnippet>& snippets, bool& listwise) {
    listwise = prompt.find("Return ONLY the TOP 5") != std::string::npos;

    std::istringstream in(prompt);
    std::string line;
    bool in_conversation = false;
    std::optional<std::string> pending_id;
    while (std::getline(in, line)) {
        if (line == "Conversation:") {
            in_conversation = true;
            continue;
        }
        if (line == "Scoring Scale:" || line == "Ranking Instruction:")
            in_conversation = false;
        if (in_conversation) {
            conversation += line;
            conversation += "\n";
            continue;
        }
        for (const char* id_label : {"SNIPPET_ID: ", "INFORMATION_ID: "}) {
            auto pos = line.find(id_label);
            if (pos != std::string::npos)
                pending_id = line.substr(pos + std::string(id_label).size());
        }
        for (const char* text_label : {"SNIPPET_TEXT: ", "INFORMATION_TEXT: "}) {
            if (line.rfind(text_label, 0) == 0 && pending_id) {
                snippets.push_back(
                    {*pending_id, line.substr(std::string(text_label).size())});
                pending_id.reset();
            }
        }
    }
}

}  // namespace

std::string MockKeywordModel::complete(const ModelRequest& request) {
    std::string conversation;
    std::vector<PromptSnippet> snippets;
    bool listwise = false;
    parse_model_prompt(request.text, conversation, snippets, listwise);
    if (snippets.empty())
        throw domain_error("malformed prompt", "mock model found no snippets");

    const auto& stop = text::default_stopwords();
    auto conv_tokens = text::tokenize(conversation);
    std::set<std::string> conv(conv_tokens.begin(), conv_tokens.end());

    std::vector<std::pair<std::string, std::size_t>> scored;  // id -> overlap
    for (const auto& s : snippets)
        scored.emplace_back(s.id, overlap_count(text::content_words(s.text, stop), conv));

    json out = json::array();
    if (!listwise) {
        for (const auto& [id, n] : scored) {
            out.push_back({{"id", id},
                           {"relevance", static_cast<int>(std::min<std::size_t>(n, 3))},
                           {"rationale", "overlap " + std::to_string(n)}});
        }
        return out.dump();
    }

    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    for (std::size_t i = 0; i < std::min<std::size_t>(5, scored.size()); ++i) {
        out.push_back({{"id", scored[i].first},
                       {"rank", static_cast<int>(i + 1)},
                       {"rationale", "overlap " + std::to_string(scored[i].second)}});
    }
    return out.dump();
}

// ---------------------------------------------------------------------------
// MockOverlapPairScorer / HashingEmbeddingClient
// ---------------------------------------------------------------------------

double MockOverlapPairScorer::score(const std::string& query,
                                    const std::string& candidate) {
    const auto& stop = text::default_stopwords();
    auto qa = text::content_words(query, stop);
    auto ca = text::content_words(candidate, stop);
    std::set<std::string> q(qa.begin(), qa.end());
    std::set<std::string> c(ca.begin(), ca.end());
    if (q.empty() && c.empty()) return 0.0;
    std::size_t inter = 0;
    for (const auto& w : q) inter += c.count(w);
    std::size_t uni = q.size() + c.size() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<double> HashingEmbeddingClient::embed(const std::string& text_in) {
    std::vector<double> v(dimension_, 0.0);
    for (const auto& tok : text::tokenize(text_in)) {
        std::uint64_t h = fnv1a64(tok);
        std::size_t bucket = static_cast<std::size_t>(h % dimension_);
        v[bucket] += (h >> 63) ? -1.0 : 1.0;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm == 0.0) {
        v[0] = 1.0;  // empty text still yields a unit vector
        return v;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

std::string HashingEmbeddingClient::identity() const {
    return "hash-embed-" + std::to_string(dimension_);
}

// ---------------------------------------------------------------------------
// Replay / caching
// ---------------------------------------------------------------------------

ReplayStore ReplayStore::load(const std::string& log_path) {
    ReplayStore store;
    for (auto& r : read_run_log(log_path))
        store.records_[r.key] = Entry{r.prompt_hash, r.response_text};
    return store;
}

std::string ReplayStore::lookup(const std::string& key,
                                const std::string& prompt) const {
    auto it = records_.find(key);
    if (it == records_.end())
        throw domain_error("replay missing key", key);
    if (it->second.prompt_hash != text::text_hash(prompt))
        throw domain_error("replay prompt mismatch", key);
    return it->second.response;
}

std::string CachingModelClient::complete(const ModelRequest& request) {
    if (cache_.contains(request.key)) {
        {
            std::lock_guard<std::mutex> lock(mu_);
            ++hits_;
        }
        return cache_.lookup(request.key, request.text);
    }
    {
        std::lock_guard<std::mutex> lock(mu_);
        ++inner_calls_;
    }
    return inner_->complete(request);
}

std::size_t CachingModelClient::cache_hits() const {
    std::lock_guard<std::mutex> lock(mu_);
    return hits_;
}

std::size_t CachingModelClient::inner_calls() const {
    std::lock_guard<std::mutex> lock(mu_);
    return inner_calls_;
}

std::string CachingJudgeClient::judge(const std::string& key,
                                      const std::string& prompt) {
    if (cache_.contains(key)) {
        {
            std::lock_guard<std::mutex> lock(mu_);
            ++hits_;
        }
        return cache_.lookup(key, prompt);
    }
    {
        std::lock_guard<std::mutex> lock(mu_);
        ++inner_calls_;
    }
    return inner_->judge(key, prompt);
}

std::size_t CachingJudgeClient::cache_hits() const {
    std::lock_guard<std::mutex> lock(mu_);
    return hits_;
}

std::size_t CachingJudgeClient::inner_calls() const {
    std::lock_guard<std::mutex> lock(mu_);
    return inner_calls_;
}

}  // namespace icrs
