#include "icrs/adaptation.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "icrs/error.hpp"
#include "icrs/rng.hpp"
#include "icrs/text.hpp"

namespace icrs::adaptation {

using corpus::AtomicAttribute;
using corpus::Conversation;
using corpus::Criterion;
using corpus::Dataset;
using corpus::IntentTag;
using corpus::Item;
using nlohmann::json;

// ---------------------------------------------------------------------------
// filtering
// ---------------------------------------------------------------------------

Dataset filter_conversations(const Dataset& d, int min_turns,
                             const std::set<IntentTag>& required_tags) {
    Dataset out;
    out.scenario = d.scenario;
    out.items = d.items;
    for (const auto& c : d.conversations) {
        if (static_cast<int>(c.turns.size()) < min_turns) continue;
        std::set<IntentTag> seen;
        for (const auto& t : c.turns)
            seen.insert(t.intent_tags.begin(), t.intent_tags.end());
        bool has_all = std::all_of(required_tags.begin(), required_tags.end(),
                                   [&](IntentTag tag) { return seen.count(tag) > 0; });
        if (!has_all) continue;
        out.conversations.push_back(c);
    }
    if (d.ground_truth_labels) {
        corpus::GroundTruthBundle bundle;
        for (const auto& c : out.conversations) {
            auto it = d.ground_truth_labels->conversations.find(c.id);
            if (it != d.ground_truth_labels->conversations.end())
                bundle.conversations[c.id] = it->second;
        }
        out.ground_truth_labels = std::move(bundle);
    }
    return out;
}

Dataset filter_conversations(const Dataset& d) {
    return filter_conversations(d, 30,
                                {IntentTag::explicit_seeker_request,
                                 IntentTag::implicit_seeker_request,
                                 IntentTag::expert_explanation});
}

// ---------------------------------------------------------------------------
// candidate sampling
// ---------------------------------------------------------------------------

std::map<std::string, std::size_t> stratum_quotas(
    const std::map<std::string, std::size_t>& counts, std::size_t slots) {
    std::map<std::string, std::size_t> quota;
    std::size_t total = 0;
    for (const auto& [label, n] : counts) total += n;
    if (total == 0 || slots == 0) {
        for (const auto& [label, n] : counts) quota[label] = 0;
        return quota;
    }

    struct Rem {
        std::string label;
        double remainder;
    };
    std::vector<Rem> rems;
    std::size_t assigned = 0;
    for (const auto& [label, n] : counts) {
        double exact = static_cast<double>(slots) * static_cast<double>(n) /
                       static_cast<double>(total);
        std::size_t base = static_cast<std::size_t>(exact);
        base = std::min(base, n);
        quota[label] = base;
        assigned += base;
        rems.push_back({label, exact - static_cast<double>(base)});
    }
    std::sort(rems.begin(), rems.end(), [](const Rem& a, const Rem& b) {
        if (a.remainder != b.remainder) return a.remainder > b.remainder;
        return a.label < b.label;
    });
    // Leftover slots by largest remainder, skipping saturated strata. Repeat
    // passes until all slots are placed (feasible while slots <= total).
    while (assigned < slots) {
        bool progressed = false;
        for (const auto& r : rems) {
            if (assigned >= slots) break;
            if (quota[r.label] < counts.at(r.label)) {
                ++quota[r.label];
                ++assigned;
                progressed = true;
            }
        }
        if (!progressed) break;  // every stratum saturated
    }
    return quota;
}

CandidateSet sample_candidates(const Dataset& d, const Conversation& c,
                               int pool_size, const std::string& strata_key,
                               std::uint64_t seed) {
    if (pool_size < static_cast<int>(c.ground_truth_items.size()))
        throw domain_error("pool_size smaller than ground-truth set",
                           "conversation '" + c.id + "'");
    bool key_known = std::any_of(
        d.items.begin(), d.items.end(), [&](const auto& kv) {
            return kv.second.composite_attributes.count(strata_key) > 0;
        });
    if (!key_known)
        throw domain_error("unknown strata_key",
                           "no catalog item carries '" + strata_key + "'");

    CandidateSet set;
    set.conversation_id = c.id;
    set.pool_size = pool_size;
    set.seed = seed;

    std::size_t effective =
        std::min<std::size_t>(static_cast<std::size_t>(pool_size), d.items.size());

    // Ground truth first, ascending id.
    for (const auto& gt : c.ground_truth_items) set.item_ids.push_back(gt);

    std::size_t remaining = effective - set.item_ids.size();

    // Strata over non-ground-truth items; missing key maps to the "" stratum.
    std::map<std::string, std::vector<std::string>> strata;
    for (const auto& [id, item] : d.items) {
        if (c.ground_truth_items.count(id)) continue;
        auto it = item.composite_attributes.find(strata_key);
        strata[it == item.composite_attributes.end() ? "" : it->second].push_back(id);
    }
    std::map<std::string, std::size_t> counts;
    for (const auto& [label, ids] : strata) counts[label] = ids.size();

    auto quotas = stratum_quotas(counts, remaining);
    for (auto& [label, ids] : strata) {
        std::size_t take = quotas[label];
        if (take == 0) continue;
        SplitMix64 rng(derive_seed(seed, "stratum:" + label));
        stable_shuffle(ids, rng);
        for (std::size_t i = 0; i < take; ++i) set.item_ids.push_back(ids[i]);
    }
    return set;
}

// ---------------------------------------------------------------------------
// attribute decomposition
// ---------------------------------------------------------------------------

namespace {

std::string trim_fragment(std::string s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n.!?;,");
    if (e == std::string::npos || e < b) return "";
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_sentences(const std::string& value) {
    std::vector<std::string> out;
    std::string cur;
    for (std::size_t i = 0; i < value.size(); ++i) {
        cur.push_back(value[i]);
        char ch = value[i];
        if (ch == '.' || ch == '!' || ch == '?') {
            bool at_end = i + 1 >= value.size();
            bool before_space = !at_end && (value[i + 1] == ' ' || value[i + 1] == '\n');
            if (at_end || before_space) {
                out.push_back(cur);
                cur.clear();
            }
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

// Splits one sentence on "; " always and on top-level " and " when both
// sides are at least min_clause_len characters.
std::vector<std::string> split_clauses(const std::string& sentence,
                                       std::size_t min_clause_len) {
    std::vector<std::string> semi;
    {
        std::string cur;
        int depth = 0;
        for (char ch : sentence) {
            if (ch == '(' || ch == '[') ++depth;
            if (ch == ')' || ch == ']') depth = std::max(0, depth - 1);
            if (ch == ';' && depth == 0) {
                semi.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(ch);
            }
        }
        semi.push_back(cur);
    }

    std::vector<std::string> out;
    for (const auto& clause : semi) {
        std::size_t best = std::string::npos;
        int depth = 0;
        for (std::size_t i = 0; i + 5 <= clause.size(); ++i) {
            char ch = clause[i];
            if (ch == '(' || ch == '[') ++depth;
            if (ch == ')' || ch == ']') depth = std::max(0, depth - 1);
            if (depth == 0 && clause.compare(i, 5, " and ") == 0) {
                std::string left = trim_fragment(clause.substr(0, i));
                std::string right = trim_fragment(clause.substr(i + 5));
                if (left.size() >= min_clause_len && right.size() >= min_clause_len) {
                    best = i;
                    break;
                }
            }
        }
        if (best == std::string::npos) {
            out.push_back(clause);
        } else {
            out.push_back(clause.substr(0, best));
            out.push_back(clause.substr(best + 5));
        }
    }
    return out;
}

}  // namespace

std::vector<AtomicAttribute> decompose_attributes(const Item& item,
                                                  DecomposerClient* splitter,
                                                  const DecomposeOptions& options) {
    if (item.composite_attributes.empty())
        throw domain_error("empty composite attributes", "item '" + item.id + "'");

    std::vector<AtomicAttribute> out;
    for (const auto& [key, value] : item.composite_attributes) {
        std::vector<std::string> fragments;
        if (splitter != nullptr) {
            std::vector<std::string> proposed;
            try {
                proposed = splitter->split(key, value);
            } catch (const std::exception& e) {
                throw domain_error("splitter client failure",
                                   "item '" + item.id + "' attribute '" + key +
                                       "': " + e.what());
            }
            for (auto& frag : proposed) {
                std::string t = trim_fragment(frag);
                if (t.empty())
                    throw domain_error("empty fragment",
                                       "item '" + item.id + "' attribute '" + key + "'");
                fragments.push_back(std::move(t));
            }
        } else {
            for (const auto& sentence : split_sentences(value)) {
                for (const auto& clause :
                     split_clauses(sentence, options.min_clause_len)) {
                    std::string t = trim_fragment(clause);
                    if (!t.empty()) fragments.push_back(std::move(t));
                }
            }
        }
        if (fragments.empty())
            throw domain_error("empty fragment",
                               "item '" + item.id + "' attribute '" + key +
                                   "' decomposed to nothing");
        int ordinal = 0;
        for (auto& frag : fragments) {
            AtomicAttribute a;
            a.id = key + "#" + std::to_string(++ordinal);
            a.key = key;
            a.text = text::capitalize_ascii(key) + ": " + frag;
            out.push_back(std::move(a));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// judge-driven ground truth
// ---------------------------------------------------------------------------

std::vector<std::string> criterion_utterances(const Conversation& c,
                                              Criterion criterion) {
    int cut = c.first_ground_truth_turn();
    std::vector<std::string> out;
    for (const auto& t : c.turns) {
        switch (criterion) {
            case Criterion::EIS:
                if (t.index < cut && t.speaker == corpus::Speaker::seeker &&
                    t.intent_tags.count(IntentTag::explicit_seeker_request))
                    out.push_back(t.text);
                break;
            case Criterion::IN_S:
                if (t.index >= cut && t.speaker == corpus::Speaker::seeker &&
                    t.intent_tags.count(IntentTag::implicit_seeker_request))
                    out.push_back(t.text);
                break;
            case Criterion::IN_E:
                if (t.index >= cut && t.speaker == corpus::Speaker::recommender &&
                    t.intent_tags.count(IntentTag::expert_explanation))
                    out.push_back(t.text);
                break;
        }
    }
    return out;
}

namespace {

void replace_all(std::string& s, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

std::string load_template(const std::string& templates_dir, const std::string& name) {
    std::string path = templates_dir + "/" + name;
    std::ifstream in(path);
    if (!in) throw io_error("template not found", path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string judge_template_name(Criterion criterion) {
    switch (criterion) {
        case Criterion::EIS: return "judge_eis.txt";
        case Criterion::IN_E: return "judge_in_e.txt";
        case Criterion::IN_S: return "judge_in_s.txt";
    }
    return "";
}

// Extracts the first well-formed JSON array from raw text: one repair pass
// strips everything before the first '[' and after the last ']'.
json extract_json_array(const std::string& raw) {
    try {
        json j = json::parse(raw);
        if (j.is_array()) return j;
    } catch (const json::exception&) {
    }
    std::size_t open = raw.find('[');
    std::size_t close = raw.rfind(']');
    if (open == std::string::npos || close == std::string::npos || close <= open)
        throw domain_error("malformed response",
                           "no JSON array found after repair");
    try {
        json j = json::parse(raw.substr(open, close - open + 1));
        if (!j.is_array())
            throw domain_error("malformed response", "repaired text is not an array");
        return j;
    } catch (const json::exception& e) {
        throw domain_error("malformed response",
                           std::string("repair failed: ") + e.what());
    }
}

}  // namespace

std::string render_judge_prompt(const std::string& template_text,
                                const std::string& conversation_transcript,
                                const std::vector<std::string>& utterances,
                                const std::vector<AtomicAttribute>& snippets) {
    json utt = json(utterances);
    json snip = json::array();
    for (const auto& a : snippets)
        snip.push_back({{"id", a.id}, {"key", a.key}, {"text", a.text}});

    std::string rendered = template_text;
    replace_all(rendered, "{CONVERSATION}", conversation_transcript);
    replace_all(rendered, "{UTTERANCE_SET}", utt.dump());
    replace_all(rendered, "{SNIPPETS}", snip.dump());
    if (rendered.find("{CONVERSATION}") != std::string::npos ||
        rendered.find("{UTTERANCE_SET}") != std::string::npos ||
        rendered.find("{SNIPPETS}") != std::string::npos)
        throw domain_error("placeholder unresolved", "judge template");
    return rendered;
}

std::vector<JudgeVerdict> parse_judge_response(
    const std::string& raw, const std::vector<std::string>& expected_ids) {
    json arr = extract_json_array(raw);

    std::map<std::string, JudgeVerdict> by_id;
    for (const auto& entry : arr) {
        JudgeVerdict v;
        try {
            v.attribute_id = entry.at("id").get<std::string>();
            if (!entry.at("relevance").is_number_integer())
                throw domain_error("malformed response", "relevance is not an integer");
            v.relevance = entry.at("relevance").get<int>();
            v.reason = entry.value("reason", "");
            v.visually_inferable = entry.value("visually_inferable", false);
        } catch (const json::exception& e) {
            throw domain_error("malformed response", e.what());
        }
        if (v.relevance != 0 && v.relevance != 1)
            throw domain_error("out-of-range relevance",
                               "attribute '" + v.attribute_id + "' relevance " +
                                   std::to_string(v.relevance));
        if (by_id.count(v.attribute_id))
            throw domain_error("duplicate id", "attribute '" + v.attribute_id + "'");
        by_id[v.attribute_id] = std::move(v);
    }

    std::set<std::string> expected(expected_ids.begin(), expected_ids.end());
    for (const auto& [id, v] : by_id) {
        if (!expected.count(id))
            throw domain_error("unknown id", "verdict for unsent attribute '" + id + "'");
    }
    std::vector<JudgeVerdict> out;
    for (const auto& id : expected_ids) {
        auto it = by_id.find(id);
        if (it == by_id.end())
            throw domain_error("missing id", "no verdict for attribute '" + id + "'");
        out.push_back(it->second);
    }
    return out;
}

void build_ground_truth(const Conversation& c,
                        const std::map<std::string, Item>& catalog,
                        const CandidateSet& candidates, JudgeClient& judge,
                        Criterion criterion, const GroundTruthOptions& options,
                        std::map<std::string, bool>& visual_cache,
                        corpus::ConversationGroundTruth& out, RunLog* log) {
    std::set<std::string> pool(candidates.item_ids.begin(), candidates.item_ids.end());
    for (const auto& gt : c.ground_truth_items) {
        if (!pool.count(gt))
            throw domain_error("dangling item reference",
                               "candidate set for '" + c.id +
                                   "' is missing ground-truth item '" + gt + "'");
    }

    out.recommended_items = c.ground_truth_items;

    auto utterances = criterion_utterances(c, criterion);

    // Transcript slice: prefix for EIS, the full conversation otherwise.
    std::string transcript;
    if (criterion == Criterion::EIS) {
        transcript =
            corpus::extract_prefix(c, catalog, corpus::PrefixMode::pre_recommendation)
                .transcript();
    } else {
        corpus::ConversationPrefix full;
        full.turns = c.turns;
        transcript = full.transcript();
    }

    std::string template_text =
        load_template(options.templates_dir, judge_template_name(criterion));

    for (const auto& item_id : c.ground_truth_items) {
        auto item_it = catalog.find(item_id);
        if (item_it == catalog.end())
            throw domain_error("dangling item reference", "item '" + item_id + "'");
        const Item& item = item_it->second;

        auto& slice = out.items[item_id];
        auto& relevant = slice.criteria[criterion];
        relevant.clear();

        // Pre-annotated flags participate before any judging.
        for (const auto& a : item.atomic_attributes) {
            std::string cache_key = item_id + "/" + a.id;
            if (a.visually_inferable.has_value() && !visual_cache.count(cache_key))
                visual_cache[cache_key] = *a.visually_inferable;
        }

        if (utterances.empty()) {
            for (const auto& a : item.atomic_attributes) {
                std::string cache_key = item_id + "/" + a.id;
                if (visual_cache.count(cache_key))
                    slice.visually_inferable[a.id] = visual_cache[cache_key];
            }
            continue;  // empty utterance set admits no relevance
        }

        // Batches of at most batch_size attributes, never mixing items.
        int batch_ordinal = 0;
        for (std::size_t start = 0; start < item.atomic_attributes.size();
             start += options.batch_size) {
            ++batch_ordinal;
            std::vector<AtomicAttribute> batch(
                item.atomic_attributes.begin() + start,
                item.atomic_attributes.begin() +
                    std::min(start + options.batch_size,
                             item.atomic_attributes.size()));
            std::vector<std::string> expected;
            for (const auto& a : batch) expected.push_back(a.id);

            std::string prompt =
                render_judge_prompt(template_text, transcript, utterances, batch);
            std::string key = "judge/" + c.id + "/" + to_string(criterion) + "/" +
                              item_id + "/" + std::to_string(batch_ordinal);

            std::string raw;
            try {
                raw = judge.judge(key, prompt);
            } catch (const Error&) {
                throw;
            } catch (const std::exception& e) {
                throw domain_error("judge failure", key + ": " + e.what());
            }
            if (log)
                log->append({key, text::text_hash(prompt), raw, options.log_timestamp});

            std::vector<JudgeVerdict> verdicts;
            try {
                verdicts = parse_judge_response(raw, expected);
            } catch (const Error& e) {
                throw domain_error(e.code(), key + ": " + e.what());
            }

            for (const auto& v : verdicts) {
                std::string cache_key = item_id + "/" + v.attribute_id;
                bool visual = visual_cache.count(cache_key)
                                  ? visual_cache[cache_key]
                                  : false;
                if (v.visually_inferable) visual = true;
                visual_cache[cache_key] = visual;
                slice.visually_inferable[v.attribute_id] = visual;
                // The non-visual rule: visually-inferable content never
                // enters a criterion set.
                if (v.relevance == 1 && !visual)
                    relevant.push_back({v.attribute_id, v.reason});
            }
        }
        std::sort(relevant.begin(), relevant.end(),
                  [](const corpus::AttributeVerdict& a,
                     const corpus::AttributeVerdict& b) {
                      return a.attribute_id < b.attribute_id;
                  });
    }
}

corpus::ConversationGroundTruth build_ground_truth_all(
    const Conversation& c, const std::map<std::string, Item>& catalog,
    const CandidateSet& candidates, JudgeClient& judge,
    const GroundTruthOptions& options, RunLog* log) {
    corpus::ConversationGroundTruth out;
    std::map<std::string, bool> visual_cache;
    for (Criterion crit : {Criterion::EIS, Criterion::IN_E, Criterion::IN_S})
        build_ground_truth(c, catalog, candidates, judge, crit, options,
                           visual_cache, out, log);
    return out;
}

}  // namespace icrs::adaptation
