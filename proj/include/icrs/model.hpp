#pragma once
// Prompt construction and strict response parsing for the pointwise/listwise
// ranking models, plus the retrying query path that feeds the run log.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "icrs/clients.hpp"
#include "icrs/corpus.hpp"
#include "icrs/retrieval.hpp"
#include "icrs/runlog.hpp"

namespace icrs::model {

enum class Objective { EIS, IN };
enum class Form { pointwise, listwise };
enum class Modality { T, V, V_T };

std::string to_string(Objective o);
std::string to_string(Form f);
std::string to_string(Modality m);
Objective objective_from_string(const std::string& s);
Form form_from_string(const std::string& s);
Modality modality_from_string(const std::string& s);

struct InstructVariant {
    enum class Kind { none, suppress_visual } kind = Kind::none;
    corpus::Scenario scenario = corpus::Scenario::custom;  // for suppress_visual

    static InstructVariant none() { return {}; }
    static InstructVariant suppress_visual(corpus::Scenario s) {
        return {Kind::suppress_visual, s};
    }
    std::string name() const;
};

struct PromptBundle {
    Objective objective = Objective::EIS;
    Form form = Form::pointwise;
    Modality modality = Modality::T;
    InstructVariant instruct_variant;
    std::string rendered_text;
    std::vector<std::string> attached_image_refs;
    std::vector<std::string> expected_ids;  // snippet order in the prompt
};

struct BuildPromptInputs {
    // Candidate id -> text; snippet blocks render in ascending id order.
    std::map<std::string, std::string> candidates;
    std::vector<std::string> image_refs;
    std::string templates_dir;
    // label templates score attribute snippets, item templates score catalog
    // items for recommendation
    bool item_task = false;
};

// Renders the repo-shipped template for (form, objective): the objective
// block replaces {OBJECTIVE_BLOCK}, the prefix transcript replaces
// {CONVERSATION_PREFIX}, {N} is the snippet count, and snippet blocks fill
// {SNIPPET_BLOCKS}. suppress_visual appends the scenario block after the
// base template. Throws on modality/image inconsistency, unknown scenario
// and unresolved placeholders.
PromptBundle build_prompt(const corpus::ConversationPrefix& prefix,
                          const BuildPromptInputs& inputs, Objective objective,
                          Form form, Modality modality,
                          const InstructVariant& variant);

struct QueryOptions {
    int retry_limit = 3;  // total attempts
    std::int64_t log_timestamp = 0;
};

// Calls the client with bounded retries; every attempt is appended to the
// log (failures with empty response_text). Throws a transport error carrying
// the request key once attempts are exhausted; an empty final response is an
// error too.
std::string query_model(const PromptBundle& bundle, const std::string& key,
                        ModelClient& client, const QueryOptions& options,
                        RunLog* log);

struct PointwiseVerdict {
    int relevance = 0;  // 0..3
    std::string rationale;
};

using PointwiseVerdicts = std::map<std::string, PointwiseVerdict>;

// Strict pointwise parse: first well-formed JSON array after one repair
// pass; every expected id exactly once; relevance an integer in 0..3.
// Error codes: "malformed response", "missing id", "duplicate id",
// "out-of-range relevance", "foreign id".
PointwiseVerdicts parse_pointwise(const std::string& raw,
                                  const std::vector<std::string>& expected_ids);

struct ListwiseEntry {
    std::string id;
    int rank = 0;  // 1..5
    std::string rationale;
};

struct ListwiseRanking {
    std::vector<ListwiseEntry> entries;  // in rank order
};

// Strict listwise parse: exactly 5 entries whose ranks are a permutation of
// 1..5 and whose ids come from expected_ids without duplicates. Error codes:
// "malformed response", "wrong entry count", "duplicate id",
// "rank not a permutation", "foreign id".
ListwiseRanking parse_listwise(const std::string& raw,
                               const std::vector<std::string>& expected_ids);

// Relevance descending, id ascending among ties.
retrieval::RankedList verdicts_to_ranked(const PointwiseVerdicts& verdicts);

retrieval::RankedList listwise_to_ranked(const ListwiseRanking& ranking);

}  // namespace icrs::model
