#include "icrs/corpus.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "icrs/error.hpp"
#include "icrs/kvfile.hpp"
#include "icrs/text.hpp"

namespace icrs::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Speaker s) {
    return s == Speaker::seeker ? "seeker" : "recommender";
}

std::string to_string(IntentTag t) {
    switch (t) {
        case IntentTag::explicit_seeker_request: return "explicit_seeker_request";
        case IntentTag::implicit_seeker_request: return "implicit_seeker_request";
        case IntentTag::expert_explanation: return "expert_explanation";
    }
    return "";
}

std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::fashion: return "fashion";
        case Scenario::retail: return "retail";
        case Scenario::movie: return "movie";
        case Scenario::custom: return "custom";
    }
    return "";
}

std::string to_string(Criterion c) {
    switch (c) {
        case Criterion::EIS: return "EIS";
        case Criterion::IN_E: return "IN_E";
        case Criterion::IN_S: return "IN_S";
    }
    return "";
}

Speaker speaker_from_string(const std::string& s) {
    if (s == "seeker") return Speaker::seeker;
    if (s == "recommender") return Speaker::recommender;
    throw domain_error("malformed record", "unknown speaker '" + s + "'");
}

IntentTag intent_tag_from_string(const std::string& s) {
    if (s == "explicit_seeker_request") return IntentTag::explicit_seeker_request;
    if (s == "implicit_seeker_request") return IntentTag::implicit_seeker_request;
    if (s == "expert_explanation") return IntentTag::expert_explanation;
    throw domain_error("malformed record", "unknown intent tag '" + s + "'");
}

Scenario scenario_from_string(const std::string& s) {
    if (s == "fashion") return Scenario::fashion;
    if (s == "retail") return Scenario::retail;
    if (s == "movie") return Scenario::movie;
    if (s == "custom") return Scenario::custom;
    throw domain_error("malformed record", "unknown scenario '" + s + "'");
}

Criterion criterion_from_string(const std::string& s) {
    if (s == "EIS") return Criterion::EIS;
    if (s == "IN_E") return Criterion::IN_E;
    if (s == "IN_S") return Criterion::IN_S;
    throw domain_error("malformed record", "unknown criterion '" + s + "'");
}

int Conversation::first_ground_truth_turn() const {
    for (const auto& turn : turns) {
        for (const auto& ref : turn.referenced_items) {
            if (ground_truth_items.count(ref)) return turn.index;
        }
    }
    return static_cast<int>(turns.size()) + 1;
}

std::string Item::display_name() const {
    auto it = composite_attributes.find("name");
    if (it != composite_attributes.end()) return it->second;
    it = composite_attributes.find("title");
    if (it != composite_attributes.end()) return it->second;
    return "";
}

std::set<std::string> ItemGroundTruth::criterion_set(Criterion c) const {
    std::set<std::string> out;
    auto it = criteria.find(c);
    if (it == criteria.end()) return out;
    for (const auto& v : it->second) out.insert(v.attribute_id);
    return out;
}

// ---------------------------------------------------------------------------
// JSON (de)serialization
// ---------------------------------------------------------------------------

namespace {

json item_to_json(const Item& item) {
    json j;
    j["id"] = item.id;
    j["composite_attributes"] = item.composite_attributes;
    json attrs = json::array();
    for (const auto& a : item.atomic_attributes) {
        json ja;
        ja["id"] = a.id;
        ja["key"] = a.key;
        ja["text"] = a.text;
        if (a.visually_inferable.has_value())
            ja["visually_inferable"] = *a.visually_inferable;
        attrs.push_back(std::move(ja));
    }
    j["atomic_attributes"] = std::move(attrs);
    if (item.visual_segment_ref) j["visual_segment_ref"] = *item.visual_segment_ref;
    if (item.scene_ref) j["scene_ref"] = *item.scene_ref;
    return j;
}

Item item_from_json(const json& j) {
    Item item;
    item.id = j.at("id").get<std::string>();
    if (j.contains("composite_attributes"))
        item.composite_attributes =
            j.at("composite_attributes").get<std::map<std::string, std::string>>();
    if (j.contains("atomic_attributes")) {
        for (const auto& ja : j.at("atomic_attributes")) {
            AtomicAttribute a;
            a.id = ja.at("id").get<std::string>();
            a.key = ja.at("key").get<std::string>();
            a.text = ja.at("text").get<std::string>();
            if (ja.contains("visually_inferable"))
                a.visually_inferable = ja.at("visually_inferable").get<bool>();
            item.atomic_attributes.push_back(std::move(a));
        }
    }
    if (j.contains("visual_segment_ref"))
        item.visual_segment_ref = j.at("visual_segment_ref").get<std::string>();
    if (j.contains("scene_ref"))
        item.scene_ref = j.at("scene_ref").get<std::string>();
    return item;
}

json conversation_to_json(const Conversation& c) {
    json j;
    j["id"] = c.id;
    j["scenario"] = to_string(c.scenario);
    json turns = json::array();
    for (const auto& t : c.turns) {
        json jt;
        jt["index"] = t.index;
        jt["speaker"] = to_string(t.speaker);
        jt["text"] = t.text;
        jt["referenced_items"] = t.referenced_items;
        json tags = json::array();
        for (const auto& tag : t.intent_tags) tags.push_back(to_string(tag));
        jt["intent_tags"] = std::move(tags);
        turns.push_back(std::move(jt));
    }
    j["turns"] = std::move(turns);
    j["ground_truth_items"] = c.ground_truth_items;
    return j;
}

Conversation conversation_from_json(const json& j) {
    Conversation c;
    c.id = j.at("id").get<std::string>();
    c.scenario = scenario_from_string(j.at("scenario").get<std::string>());
    for (const auto& jt : j.at("turns")) {
        Turn t;
        t.index = jt.at("index").get<int>();
        t.speaker = speaker_from_string(jt.at("speaker").get<std::string>());
        t.text = jt.at("text").get<std::string>();
        if (jt.contains("referenced_items"))
            t.referenced_items =
                jt.at("referenced_items").get<std::set<std::string>>();
        if (jt.contains("intent_tags")) {
            for (const auto& tag : jt.at("intent_tags"))
                t.intent_tags.insert(intent_tag_from_string(tag.get<std::string>()));
        }
        c.turns.push_back(std::move(t));
    }
    c.ground_truth_items = j.at("ground_truth_items").get<std::set<std::string>>();
    return c;
}

// Reads a JSONL file, applying `fn` to each parsed line. Parse and schema
// failures carry "<file>:<line>".
template <typename Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
    std::ifstream in(path);
    if (!in) throw io_error("file not found", path);
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
        try {
            fn(j);
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw domain_error("malformed record",
                               path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

}  // namespace

GroundTruthBundle ground_truth_from_json(const std::string& json_text) {
    GroundTruthBundle bundle;
    json j = json::parse(json_text);
    for (const auto& [conv_id, jc] : j.at("conversations").items()) {
        ConversationGroundTruth cgt;
        cgt.recommended_items =
            jc.at("recommended_items").get<std::set<std::string>>();
        if (jc.contains("items")) {
            for (const auto& [item_id, ji] : jc.at("items").items()) {
                ItemGroundTruth igt;
                if (ji.contains("criteria")) {
                    for (const auto& [crit, jlist] : ji.at("criteria").items()) {
                        std::vector<AttributeVerdict> verdicts;
                        for (const auto& jv : jlist) {
                            AttributeVerdict v;
                            v.attribute_id = jv.at("attribute_id").get<std::string>();
                            v.reason = jv.value("reason", "");
                            verdicts.push_back(std::move(v));
                        }
                        igt.criteria[criterion_from_string(crit)] = std::move(verdicts);
                    }
                }
                if (ji.contains("visually_inferable"))
                    igt.visually_inferable =
                        ji.at("visually_inferable").get<std::map<std::string, bool>>();
                cgt.items[item_id] = std::move(igt);
            }
        }
        bundle.conversations[conv_id] = std::move(cgt);
    }
    return bundle;
}

std::string ground_truth_to_json(const GroundTruthBundle& bundle) {
    json j;
    json convs = json::object();
    for (const auto& [conv_id, cgt] : bundle.conversations) {
        json jc;
        jc["recommended_items"] = cgt.recommended_items;
        json items = json::object();
        for (const auto& [item_id, igt] : cgt.items) {
            json ji;
            json crits = json::object();
            for (const auto& [crit, verdicts] : igt.criteria) {
                json jlist = json::array();
                for (const auto& v : verdicts) {
                    jlist.push_back({{"attribute_id", v.attribute_id},
                                     {"reason", v.reason}});
                }
                crits[to_string(crit)] = std::move(jlist);
            }
            ji["criteria"] = std::move(crits);
            ji["visually_inferable"] = igt.visually_inferable;
            items[item_id] = std::move(ji);
        }
        jc["items"] = std::move(items);
        convs[conv_id] = std::move(jc);
    }
    j["conversations"] = std::move(convs);
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// load / write
// ---------------------------------------------------------------------------

Dataset load_dataset(const std::string& manifest_path) {
    if (!fs::exists(manifest_path))
        throw io_error("manifest not found", manifest_path);
    KvFile manifest = KvFile::parse_file(manifest_path);
    fs::path base = fs::path(manifest_path).parent_path();

    Dataset d;
    d.scenario = scenario_from_string(manifest.get_string("scenario"));

    std::string items_path = (base / manifest.get_string_or("items", "items.jsonl")).string();
    std::string convs_path =
        (base / manifest.get_string_or("conversations", "conversations.jsonl")).string();

    for_each_jsonl(items_path, [&](const json& j) {
        Item item = item_from_json(j);
        std::set<std::string> attr_ids;
        for (const auto& a : item.atomic_attributes) {
            if (!attr_ids.insert(a.id).second)
                throw domain_error("duplicate ids",
                                   "attribute '" + a.id + "' repeated on item '" +
                                       item.id + "'");
        }
        if (!d.items.emplace(item.id, item).second)
            throw domain_error("duplicate ids", "item '" + item.id + "' repeated");
    });

    std::set<std::string> conv_ids;
    for_each_jsonl(convs_path, [&](const json& j) {
        Conversation c = conversation_from_json(j);
        if (!conv_ids.insert(c.id).second)
            throw domain_error("duplicate ids", "conversation '" + c.id + "' repeated");
        for (const auto& t : c.turns) {
            for (const auto& ref : t.referenced_items) {
                if (!d.items.count(ref))
                    throw domain_error("dangling item reference",
                                       "conversation '" + c.id + "' turn " +
                                           std::to_string(t.index) +
                                           " references unknown item '" + ref + "'");
            }
        }
        for (const auto& gt : c.ground_truth_items) {
            if (!d.items.count(gt))
                throw domain_error("dangling item reference",
                                   "conversation '" + c.id +
                                       "' ground truth names unknown item '" + gt + "'");
        }
        d.conversations.push_back(std::move(c));
    });

    if (manifest.has("ground_truth_labels")) {
        fs::path gt_path = base / manifest.get_string("ground_truth_labels");
        if (fs::exists(gt_path)) {
            std::ifstream in(gt_path);
            std::ostringstream buf;
            buf << in.rdbuf();
            try {
                d.ground_truth_labels = ground_truth_from_json(buf.str());
            } catch (const json::exception& e) {
                throw domain_error("malformed record",
                                   gt_path.string() + ": " + e.what());
            }
            // cross-check bundle references against the catalog
            for (const auto& [conv_id, cgt] : d.ground_truth_labels->conversations) {
                for (const auto& [item_id, igt] : cgt.items) {
                    if (!d.items.count(item_id))
                        throw domain_error("dangling item reference",
                                           "ground truth bundle names unknown item '" +
                                               item_id + "'");
                }
            }
        }
    }
    return d;
}

void write_dataset(const Dataset& d, const std::string& dir) {
    fs::create_directories(dir);
    fs::path base(dir);
    {
        std::ofstream out(base / "items.jsonl");
        for (const auto& [id, item] : d.items) out << item_to_json(item).dump() << "\n";
    }
    {
        std::ofstream out(base / "conversations.jsonl");
        for (const auto& c : d.conversations)
            out << conversation_to_json(c).dump() << "\n";
    }
    if (d.ground_truth_labels) {
        std::ofstream out(base / "ground_truth_labels.json");
        out << ground_truth_to_json(*d.ground_truth_labels);
    }
    {
        std::ofstream out(base / "dataset.toml");
        out << "scenario = \"" << to_string(d.scenario) << "\"\n";
        out << "items = \"items.jsonl\"\n";
        out << "conversations = \"conversations.jsonl\"\n";
        if (d.ground_truth_labels)
            out << "ground_truth_labels = \"ground_truth_labels.json\"\n";
    }
}

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------

ValidationReport validate_dataset(const Dataset& d) {
    ValidationReport report;
    auto add = [&](std::string location, std::string rule, std::string detail) {
        report.violations.push_back(
            {std::move(location), std::move(rule), std::move(detail)});
    };

    std::set<std::string> gt_members;  // items appearing in any ground-truth set
    for (const auto& c : d.conversations)
        gt_members.insert(c.ground_truth_items.begin(), c.ground_truth_items.end());

    for (const auto& [id, item] : d.items) {
        std::string loc = "item " + id;
        std::set<std::string> seen;
        for (const auto& a : item.atomic_attributes) {
            if (!seen.insert(a.id).second)
                add(loc, "duplicate-attribute-id", "attribute id '" + a.id + "'");
            if (a.text.empty())
                add(loc, "empty-attribute-text", "attribute '" + a.id + "'");
        }
        if (gt_members.count(id) && item.atomic_attributes.empty())
            add(loc, "missing-atomic-attributes",
                "item appears in a ground-truth set but has no atomic attributes");
    }

    for (const auto& c : d.conversations) {
        std::string cloc = "conversation " + c.id;
        int expected = 1;
        for (const auto& t : c.turns) {
            std::string tloc = cloc + " turn " + std::to_string(t.index);
            if (t.index != expected)
                add(tloc, "turn-index-contiguity",
                    "expected index " + std::to_string(expected));
            ++expected;
            for (const auto& tag : t.intent_tags) {
                bool seeker_tag = tag != IntentTag::expert_explanation;
                bool is_seeker = t.speaker == Speaker::seeker;
                if (seeker_tag != is_seeker)
                    add(tloc, "tag-speaker",
                        to_string(tag) + " on a " + to_string(t.speaker) + " turn");
            }
            for (const auto& ref : t.referenced_items) {
                if (!d.items.count(ref))
                    add(tloc, "dangling-item-reference", "item '" + ref + "'");
            }
        }
        if (c.ground_truth_items.empty())
            add(cloc, "empty-ground-truth", "no ground-truth items");
        for (const auto& gt : c.ground_truth_items) {
            if (!d.items.count(gt))
                add(cloc, "dangling-item-reference", "ground-truth item '" + gt + "'");
        }
        if (!c.turns.empty() && c.first_ground_truth_turn() == 1)
            add(cloc, "no-usable-prefix",
                "first turn already references a ground-truth item");
    }
    return report;
}

// ---------------------------------------------------------------------------
// prefix extraction
// ---------------------------------------------------------------------------

std::string ConversationPrefix::transcript() const {
    std::string out;
    for (const auto& t : turns) {
        out += to_string(t.speaker);
        out += ": ";
        out += t.text;
        out += "\n";
    }
    return out;
}

ConversationPrefix extract_prefix(const Conversation& c,
                                  const std::map<std::string, Item>& catalog,
                                  PrefixMode mode,
                                  const std::string& mask_token) {
    ConversationPrefix prefix;
    prefix.cut_index = c.first_ground_truth_turn();

    if (mode == PrefixMode::pre_recommendation) {
        if (prefix.cut_index == 1)
            throw domain_error("no usable prefix",
                               "conversation '" + c.id +
                                   "' references a ground-truth item in its first turn");
        for (const auto& t : c.turns) {
            if (t.index >= prefix.cut_index) break;
            prefix.turns.push_back(t);
        }
        return prefix;
    }

    // full_masked: every ground-truth item name, whole-phrase and
    // case-insensitive, becomes the mask token.
    std::vector<std::string> names;
    for (const auto& gt : c.ground_truth_items) {
        auto it = catalog.find(gt);
        if (it == catalog.end()) continue;
        std::string name = it->second.display_name();
        if (!name.empty()) names.push_back(name);
    }
    for (const auto& t : c.turns) {
        Turn masked = t;
        for (const auto& name : names)
            masked.text = text::mask_phrase(masked.text, name, mask_token);
        prefix.turns.push_back(std::move(masked));
    }
    return prefix;
}

}  // namespace icrs::corpus
