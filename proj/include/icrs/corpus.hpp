#pragma once
// On-disk data model for evaluation instances: conversations, items and their
// attribute decompositions, plus dataset-level validation and prefix cutting.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace icrs::corpus {

enum class Speaker { seeker, recommender };

enum class IntentTag {
    explicit_seeker_request,
    implicit_seeker_request,
    expert_explanation,
};

enum class Scenario { fashion, retail, movie, custom };

std::string to_string(Speaker s);
std::string to_string(IntentTag t);
std::string to_string(Scenario s);
Speaker speaker_from_string(const std::string& s);
IntentTag intent_tag_from_string(const std::string& s);
Scenario scenario_from_string(const std::string& s);

struct Turn {
    int index = 0;  // 1-based, contiguous within a conversation
    Speaker speaker = Speaker::seeker;
    std::string text;
    std::set<std::string> referenced_items;
    std::set<IntentTag> intent_tags;
};

struct Conversation {
    std::string id;
    Scenario scenario = Scenario::custom;
    std::vector<Turn> turns;
    std::set<std::string> ground_truth_items;

    // 1-based index of the first turn referencing a ground-truth item;
    // turns.size() + 1 when no turn does.
    int first_ground_truth_turn() const;
};

struct AtomicAttribute {
    std::string id;    // "<key>#<ordinal>", stable across runs
    std::string key;   // originating composite key, verbatim
    std::string text;  // single self-contained statement
    std::optional<bool> visually_inferable;  // absent until judged/annotated
};

struct Item {
    std::string id;
    std::map<std::string, std::string> composite_attributes;
    std::vector<AtomicAttribute> atomic_attributes;
    std::optional<std::string> visual_segment_ref;  // opaque, never decoded
    std::optional<std::string> scene_ref;           // opaque, never decoded

    // Display name used for masking: composite "name", falling back to
    // "title"; empty when neither key exists.
    std::string display_name() const;
};

// Ground truth for label selection, produced by adaptation or shipped with a
// dataset. Criterion sets hold only attributes judged relevant and not
// visually inferable.
enum class Criterion { EIS, IN_E, IN_S };

std::string to_string(Criterion c);
Criterion criterion_from_string(const std::string& s);

struct AttributeVerdict {
    std::string attribute_id;
    std::string reason;
};

struct ItemGroundTruth {
    // criterion -> judged-relevant attribute verdicts, ordered by attribute id
    std::map<Criterion, std::vector<AttributeVerdict>> criteria;
    // attribute id -> visual-inferability verdict for every judged attribute
    std::map<std::string, bool> visually_inferable;

    std::set<std::string> criterion_set(Criterion c) const;
};

struct ConversationGroundTruth {
    std::set<std::string> recommended_items;
    std::map<std::string, ItemGroundTruth> items;  // item id -> slice
};

struct GroundTruthBundle {
    std::map<std::string, ConversationGroundTruth> conversations;
};

struct Dataset {
    Scenario scenario = Scenario::custom;
    std::map<std::string, Item> items;
    std::vector<Conversation> conversations;
    std::optional<GroundTruthBundle> ground_truth_labels;
};

// One validation rule breach: where and which rule.
struct Violation {
    std::string location;  // "conversation c1 turn 3", "item i7", ...
    std::string rule;      // stable rule id, see validate_dataset
    std::string detail;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

// Loads the documented directory layout: a manifest (plain key = "value"
// lines) naming scenario and file paths, items.jsonl, conversations.jsonl and
// an optional ground_truth_labels.json. Throws icrs::Error on malformed
// records (with line numbers), dangling item references and duplicate ids.
Dataset load_dataset(const std::string& manifest_path);

// Writes a dataset back out in the same layout (round-trips with
// load_dataset). `dir` is created if needed.
void write_dataset(const Dataset& d, const std::string& dir);

GroundTruthBundle ground_truth_from_json(const std::string& json_text);
std::string ground_truth_to_json(const GroundTruthBundle& bundle);

// Pure invariant check. Rules:
//   turn-index-contiguity   turn indexes contiguous from 1
//   tag-speaker             seeker-only / recommender-only tag placement
//   dangling-item-reference referenced or ground-truth id not in catalog
//   empty-ground-truth      conversation without ground-truth items
//   no-usable-prefix        first turn already references a ground-truth item
//   duplicate-attribute-id  atomic attribute ids not unique within an item
//   empty-attribute-text    atomic attribute with empty text
//   missing-atomic-attributes  ground-truth item with no atomic attributes
ValidationReport validate_dataset(const Dataset& d);

enum class PrefixMode { pre_recommendation, full_masked };

struct ConversationPrefix {
    std::vector<Turn> turns;
    int cut_index = 0;  // first ground-truth turn index t (turns.size()+1 if none)

    // Turns serialized as "speaker: text" lines, the query text for rankers
    // and the {CONVERSATION_PREFIX} placeholder.
    std::string transcript() const;
};

// pre_recommendation: turns strictly before the first turn whose
// referenced_items intersects ground_truth_items (throws "no usable prefix"
// when that would be empty). full_masked: all turns, with every ground-truth
// item name replaced by mask_token (whole-phrase, case-insensitive, names
// resolved against `catalog`).
ConversationPrefix extract_prefix(const Conversation& c,
                                  const std::map<std::string, Item>& catalog,
                                  PrefixMode mode,
                                  const std::string& mask_token = "[ITEM]");

}  // namespace icrs::corpus
