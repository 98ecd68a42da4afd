#include "icrs/model.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "icrs/error.hpp"
#include "icrs/text.hpp"

namespace icrs::model {

using nlohmann::json;

std::string to_string(Objective o) { return o == Objective::EIS ? "EIS" : "IN"; }

std::string to_string(Form f) {
    return f == Form::pointwise ? "pointwise" : "listwise";
}

std::string to_string(Modality m) {
    switch (m) {
        case Modality::T: return "T";
        case Modality::V: return "V";
        case Modality::V_T: return "V_T";
    }
    return "";
}

Objective objective_from_string(const std::string& s) {
    if (s == "EIS") return Objective::EIS;
    if (s == "IN") return Objective::IN;
    throw domain_error("malformed config", "unknown objective '" + s + "'");
}

Form form_from_string(const std::string& s) {
    if (s == "pointwise") return Form::pointwise;
    if (s == "listwise") return Form::listwise;
    throw domain_error("malformed config", "unknown form '" + s + "'");
}

Modality modality_from_string(const std::string& s) {
    if (s == "T") return Modality::T;
    if (s == "V") return Modality::V;
    if (s == "V_T" || s == "V+T") return Modality::V_T;
    throw domain_error("malformed config", "unknown modality '" + s + "'");
}

std::string InstructVariant::name() const {
    if (kind == Kind::none) return "none";
    return "suppress_visual(" + corpus::to_string(scenario) + ")";
}

namespace {

std::string read_template(const std::string& templates_dir, const std::string& name) {
    std::string path = templates_dir + "/" + name;
    std::ifstream in(path);
    if (!in) throw io_error("template not found", path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

std::string suppress_block_name(corpus::Scenario s) {
    switch (s) {
        case corpus::Scenario::fashion: return "suppress_visual_fashion.txt";
        case corpus::Scenario::movie: return "suppress_visual_movie.txt";
        case corpus::Scenario::retail: return "suppress_visual_retail.txt";
        case corpus::Scenario::custom: break;
    }
    throw domain_error("unknown scenario",
                       "no visual-suppression block for scenario '" +
                           corpus::to_string(s) + "'");
}

// Extracts the first well-formed JSON array after one repair pass.
json extract_json_array(const std::string& raw) {
    try {
        json j = json::parse(raw);
        if (j.is_array()) return j;
    } catch (const json::exception&) {
    }
    std::size_t open = raw.find('[');
    std::size_t close = raw.rfind(']');
    if (open == std::string::npos || close == std::string::npos || close <= open)
        throw domain_error("malformed response", "no JSON array found after repair");
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

PromptBundle build_prompt(const corpus::ConversationPrefix& prefix,
                          const BuildPromptInputs& inputs, Objective objective,
                          Form form, Modality modality,
                          const InstructVariant& variant) {
    if (inputs.candidates.empty())
        throw domain_error("empty candidates", "build_prompt needs candidates");
    if (modality == Modality::T && !inputs.image_refs.empty())
        throw domain_error("modality mismatch",
                           "modality T does not attach images");
    if (modality != Modality::T && inputs.image_refs.empty())
        throw domain_error("modality mismatch",
                           "modality " + to_string(modality) + " needs image refs");

    PromptBundle bundle;
    bundle.objective = objective;
    bundle.form = form;
    bundle.modality = modality;
    bundle.instruct_variant = variant;
    bundle.attached_image_refs = inputs.image_refs;
    for (const auto& [id, ignored] : inputs.candidates)
        bundle.expected_ids.push_back(id);

    const char* base_name =
        inputs.item_task
            ? (form == Form::pointwise ? "item_pointwise.txt" : "item_listwise.txt")
            : (form == Form::pointwise ? "label_pointwise.txt" : "label_listwise.txt");
    std::string rendered = read_template(inputs.templates_dir, base_name);

    std::string objective_block = read_template(
        inputs.templates_dir,
        std::string("objective_") + (form == Form::pointwise ? "pointwise" : "listwise") +
            (objective == Objective::EIS ? "_eis.txt" : "_in.txt"));

    // Snippet blocks in expected id order, matching the documented layout.
    const char* id_label = form == Form::pointwise ? "SNIPPET_ID" : "INFORMATION_ID";
    const char* text_label =
        form == Form::pointwise ? "SNIPPET_TEXT" : "INFORMATION_TEXT";
    std::string blocks;
    int n = 0;
    for (const auto& [id, candidate_text] : inputs.candidates) {
        ++n;
        blocks += "[" + std::to_string(n) + "] " + id_label + ": " + id + "\n";
        blocks += std::string(text_label) + ": " + candidate_text + "\n";
        blocks += "---\n";
    }

    replace_all(rendered, "{OBJECTIVE_BLOCK}", objective_block);
    replace_all(rendered, "{CONVERSATION_PREFIX}", prefix.transcript());
    replace_all(rendered, "{N}", std::to_string(bundle.expected_ids.size()));
    replace_all(rendered, "{SNIPPET_BLOCKS}", blocks);

    if (variant.kind == InstructVariant::Kind::suppress_visual) {
        rendered += "\n";
        rendered += read_template(inputs.templates_dir,
                                  suppress_block_name(variant.scenario));
    }

    // Any leftover {ALL_CAPS} token is an unresolved placeholder (brace-
    // delimited JSON in the output-format examples never matches).
    for (std::size_t i = rendered.find('{'); i != std::string::npos;
         i = rendered.find('{', i + 1)) {
        std::size_t j = i + 1;
        while (j < rendered.size() &&
               (std::isupper(static_cast<unsigned char>(rendered[j])) ||
                std::isdigit(static_cast<unsigned char>(rendered[j])) ||
                rendered[j] == '_'))
            ++j;
        if (j > i + 1 && j < rendered.size() && rendered[j] == '}')
            throw domain_error("placeholder unresolved",
                               rendered.substr(i, j - i + 1));
    }

    bundle.rendered_text = std::move(rendered);
    return bundle;
}

std::string query_model(const PromptBundle& bundle, const std::string& key,
                        ModelClient& client, const QueryOptions& options,
                        RunLog* log) {
    ModelRequest request;
    request.key = key;
    request.text = bundle.rendered_text;
    request.image_refs = bundle.attached_image_refs;
    request.temperature = 0.0;

    std::string last_error;
    for (int attempt = 1; attempt <= options.retry_limit; ++attempt) {
        std::string raw;
        bool ok = true;
        try {
            raw = client.complete(request);
        } catch (const std::exception& e) {
            ok = false;
            last_error = e.what();
        }
        if (log)
            log->append({key, text::text_hash(request.text), ok ? raw : "",
                         options.log_timestamp});
        if (!ok) continue;
        if (raw.empty()) {
            last_error = "empty response";
            continue;
        }
        return raw;
    }
    throw domain_error("transport failure",
                       key + ": " + std::to_string(options.retry_limit) +
                           " attempts exhausted (" + last_error + ")");
}

PointwiseVerdicts parse_pointwise(const std::string& raw,
                                  const std::vector<std::string>& expected_ids) {
    json arr = extract_json_array(raw);
    std::set<std::string> expected(expected_ids.begin(), expected_ids.end());

    PointwiseVerdicts verdicts;
    for (const auto& entry : arr) {
        std::string id;
        PointwiseVerdict v;
        try {
            id = entry.at("id").get<std::string>();
            if (!entry.at("relevance").is_number_integer())
                throw domain_error("out-of-range relevance",
                                   "relevance is not an integer");
            v.relevance = entry.at("relevance").get<int>();
            v.rationale = entry.value("rationale", "");
        } catch (const json::exception& e) {
            throw domain_error("malformed response", e.what());
        }
        if (!expected.count(id))
            throw domain_error("foreign id", "id '" + id + "' was not offered");
        if (v.relevance < 0 || v.relevance > 3)
            throw domain_error("out-of-range relevance",
                               "id '" + id + "' relevance " +
                                   std::to_string(v.relevance));
        if (verdicts.count(id))
            throw domain_error("duplicate id", "id '" + id + "'");
        verdicts[id] = std::move(v);
    }
    for (const auto& id : expected_ids) {
        if (!verdicts.count(id))
            throw domain_error("missing id", "no verdict for id '" + id + "'");
    }
    return verdicts;
}

ListwiseRanking parse_listwise(const std::string& raw,
                               const std::vector<std::string>& expected_ids) {
    if (expected_ids.size() < 5)
        throw domain_error("wrong entry count",
                           "listwise parsing needs at least 5 candidates");
    json arr = extract_json_array(raw);
    if (arr.size() != 5)
        throw domain_error("wrong entry count",
                           "expected exactly 5 entries, got " +
                               std::to_string(arr.size()));

    std::set<std::string> expected(expected_ids.begin(), expected_ids.end());
    std::set<std::string> seen;
    std::set<int> ranks;
    std::vector<ListwiseEntry> entries;
    for (const auto& e : arr) {
        ListwiseEntry entry;
        try {
            entry.id = e.at("id").get<std::string>();
            if (!e.at("rank").is_number_integer())
                throw domain_error("rank not a permutation", "rank is not an integer");
            entry.rank = e.at("rank").get<int>();
            entry.rationale = e.value("rationale", "");
        } catch (const json::exception& ex) {
            throw domain_error("malformed response", ex.what());
        }
        if (!expected.count(entry.id))
            throw domain_error("foreign id", "id '" + entry.id + "' was not offered");
        if (!seen.insert(entry.id).second)
            throw domain_error("duplicate id", "id '" + entry.id + "'");
        if (entry.rank < 1 || entry.rank > 5 || !ranks.insert(entry.rank).second)
            throw domain_error("rank not a permutation",
                               "rank " + std::to_string(entry.rank));
        entries.push_back(std::move(entry));
    }
    std::sort(entries.begin(), entries.end(),
              [](const ListwiseEntry& a, const ListwiseEntry& b) {
                  return a.rank < b.rank;
              });
    return ListwiseRanking{std::move(entries)};
}

retrieval::RankedList verdicts_to_ranked(const PointwiseVerdicts& verdicts) {
    std::vector<retrieval::ScoredEntry> scored;
    scored.reserve(verdicts.size());
    for (const auto& [id, v] : verdicts)
        scored.push_back({id, static_cast<double>(v.relevance)});
    return retrieval::RankedList::from_scores(std::move(scored));
}

retrieval::RankedList listwise_to_ranked(const ListwiseRanking& ranking) {
    retrieval::RankedList out;
    for (const auto& e : ranking.entries)
        out.entries.push_back({e.id, static_cast<double>(6 - e.rank)});
    return out;
}

}  // namespace icrs::model
