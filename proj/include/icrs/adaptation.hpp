#pragma once
// Dataset adaptation: conversation filtering, candidate sampling, composite
// attribute decomposition, and judge-driven ground-truth construction.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "icrs/clients.hpp"
#include "icrs/corpus.hpp"
#include "icrs/runlog.hpp"

namespace icrs::adaptation {

// Keeps exactly the conversations with at least `min_turns` turns and at
// least one turn carrying each tag in `required_tags`. Items are untouched.
corpus::Dataset filter_conversations(
    const corpus::Dataset& d, int min_turns,
    const std::set<corpus::IntentTag>& required_tags);

// Default thresholds: 30 turns, all three intent tags present.
corpus::Dataset filter_conversations(const corpus::Dataset& d);

struct CandidateSet {
    std::string conversation_id;
    std::vector<std::string> item_ids;  // ground truth first, then sampled
    int pool_size = 0;
    std::uint64_t seed = 0;
};

// Largest-remainder apportionment of `slots` across strata proportional to
// `counts`; remainder ties go to the lexicographically smaller stratum. A
// stratum's share never exceeds its count.
std::map<std::string, std::size_t> stratum_quotas(
    const std::map<std::string, std::size_t>& counts, std::size_t slots);

// Ground-truth items always included; remaining slots drawn per-stratum
// (stratum = the item's value under `strata_key`; items without the key fall
// into the "" stratum) with quotas proportional to catalog frequency,
// uniformly without replacement inside each stratum. Output order is stable
// given the seed. Throws on pool_size < |ground truth| and on a strata key
// no catalog item has.
CandidateSet sample_candidates(const corpus::Dataset& d,
                               const corpus::Conversation& c, int pool_size,
                               const std::string& strata_key, std::uint64_t seed);

struct DecomposeOptions {
    // " and " splits apply only when both clauses are at least this long.
    std::size_t min_clause_len = 20;
};

// Rule-based decomposition: one atomic attribute per sentence (split on
// sentence-final punctuation), then on "; " and on top-level " and " between
// sufficiently long clauses. Each fragment renders as "Key: fragment" with
// ids "<key>#<ordinal>". With a splitter client, the client proposes the
// fragments and the key is re-attached here.
std::vector<corpus::AtomicAttribute> decompose_attributes(
    const corpus::Item& item, DecomposerClient* splitter = nullptr,
    const DecomposeOptions& options = {});

struct JudgeVerdict {
    std::string attribute_id;
    int relevance = 0;  // 0 or 1
    std::string reason;
    bool visually_inferable = false;
};

// Parses a judge response: the first well-formed JSON array of
// {id, relevance, reason} objects, after one repair pass stripping non-array
// pre/postamble. Enforces exact coverage of `expected_ids` and the 0/1
// relevance range.
std::vector<JudgeVerdict> parse_judge_response(
    const std::string& raw, const std::vector<std::string>& expected_ids);

struct GroundTruthOptions {
    std::size_t batch_size = 10;  // judge batches never exceed 10 per item
    std::string templates_dir;
    std::int64_t log_timestamp = 0;
};

// Builds one criterion slice for one conversation: selects the criterion's
// utterance set (EIS: explicit requests in the prefix; IN_S: implicit
// requests in the suffix; IN_E: expert explanations in the suffix), batches
// each recommended item's atomic attributes (<= batch_size, never mixing
// items), renders the criterion prompt, parses verdicts, applies the
// non-visual rule (visually-inferable verdicts force relevance 0 and are
// remembered across criteria via `visual_cache`), and records the surviving
// attribute ids. Every judge call is appended to `log`.
void build_ground_truth(const corpus::Conversation& c,
                        const std::map<std::string, corpus::Item>& catalog,
                        const CandidateSet& candidates, JudgeClient& judge,
                        corpus::Criterion criterion,
                        const GroundTruthOptions& options,
                        std::map<std::string, bool>& visual_cache,
                        corpus::ConversationGroundTruth& out, RunLog* log);

// All three criteria for one conversation.
corpus::ConversationGroundTruth build_ground_truth_all(
    const corpus::Conversation& c,
    const std::map<std::string, corpus::Item>& catalog,
    const CandidateSet& candidates, JudgeClient& judge,
    const GroundTruthOptions& options, RunLog* log);

// The utterance texts feeding one criterion, in turn order.
std::vector<std::string> criterion_utterances(const corpus::Conversation& c,
                                              corpus::Criterion criterion);

// Renders a judge prompt template ({CONVERSATION}, {UTTERANCE_SET},
// {SNIPPETS}) for one batch of snippets.
std::string render_judge_prompt(const std::string& template_text,
                                const std::string& conversation_transcript,
                                const std::vector<std::string>& utterances,
                                const std::vector<corpus::AtomicAttribute>& snippets);

}  // namespace icrs::adaptation
