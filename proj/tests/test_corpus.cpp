#include <doctest.h>

#include <algorithm>

#include "helpers.hpp"
#include "icrs/corpus.hpp"
#include "icrs/error.hpp"
#include "icrs/text.hpp"

using namespace icrs;
using namespace icrs::corpus;
using icrs_test::TempDir;

TEST_CASE("load_dataset materializes the bundled fixture") {
    Dataset d = load_dataset(icrs_test::fixture_manifest());
    CHECK(d.scenario == Scenario::retail);
    CHECK(d.conversations.size() == 3);
    CHECK(d.items.size() == 12);
    CHECK(d.items.count("i01") == 1);
    CHECK(d.items.at("i01").display_name() == "TrailGuard Hiking Boots");
}

TEST_CASE("load_dataset rejects dangling references from an empty catalog") {
    TempDir dir("empty_items");
    icrs_test::spit(dir.str() + "/items.jsonl", "");
    icrs_test::spit(dir.str() + "/conversations.jsonl",
                    R"({"id":"c1","scenario":"retail","turns":[{"index":1,"speaker":"seeker","text":"hi","referenced_items":[],"intent_tags":[]}],"ground_truth_items":["i99"]})"
                    "\n");
    icrs_test::spit(dir.str() + "/dataset.toml", "scenario = \"retail\"\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir.str() + "/dataset.toml"),
                         doctest::Contains("dangling item reference"), Error);
}

TEST_CASE("load_dataset rejects duplicate attribute ids within one item") {
    TempDir dir("dup_attr");
    icrs_test::spit(
        dir.str() + "/items.jsonl",
        R"({"id":"i1","composite_attributes":{"a":"x"},"atomic_attributes":[{"id":"a#1","key":"a","text":"A: x"},{"id":"a#1","key":"a","text":"A: x again"}]})"
        "\n");
    icrs_test::spit(dir.str() + "/conversations.jsonl", "");
    icrs_test::spit(dir.str() + "/dataset.toml", "scenario = \"retail\"\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir.str() + "/dataset.toml"),
                         doctest::Contains("duplicate ids"), Error);
}

TEST_CASE("load_dataset reports the line number of a malformed record") {
    TempDir dir("malformed");
    icrs_test::spit(dir.str() + "/items.jsonl", "{\"id\": \"i1\"}\nnot json\n");
    icrs_test::spit(dir.str() + "/conversations.jsonl", "");
    icrs_test::spit(dir.str() + "/dataset.toml", "scenario = \"retail\"\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir.str() + "/dataset.toml"),
                         doctest::Contains("items.jsonl:2"), Error);
}

TEST_CASE("validate_dataset passes the fixture") {
    Dataset d = load_dataset(icrs_test::fixture_manifest());
    auto report = validate_dataset(d);
    CHECK(report.ok());
}

TEST_CASE("validate_dataset flags tag/speaker mismatches") {
    Dataset d = load_dataset(icrs_test::fixture_manifest());
    // expert_explanation belongs on recommender turns only
    d.conversations[0].turns[0].intent_tags.insert(IntentTag::expert_explanation);
    auto report = validate_dataset(d);
    REQUIRE_FALSE(report.ok());
    bool found = std::any_of(report.violations.begin(), report.violations.end(),
                             [](const Violation& v) { return v.rule == "tag-speaker"; });
    CHECK(found);
}

TEST_CASE("validate_dataset flags a conversation with no usable prefix") {
    Dataset d = load_dataset(icrs_test::fixture_manifest());
    auto& turn1 = d.conversations[0].turns[0];
    turn1.referenced_items.insert("i01");
    auto report = validate_dataset(d);
    bool found =
        std::any_of(report.violations.begin(), report.violations.end(),
                    [](const Violation& v) { return v.rule == "no-usable-prefix"; });
    CHECK(found);
}

TEST_CASE("validate_dataset covers the remaining structural rules") {
    Dataset d = load_dataset(icrs_test::fixture_manifest());
    auto has_rule = [](const ValidationReport& r, const std::string& rule) {
        return std::any_of(r.violations.begin(), r.violations.end(),
                           [&](const Violation& v) { return v.rule == rule; });
    };
    SUBCASE("non-contiguous turn indexes") {
        d.conversations[0].turns[4].index = 99;
        CHECK(has_rule(validate_dataset(d), "turn-index-contiguity"));
    }
    SUBCASE("empty ground-truth set") {
        d.conversations[0].ground_truth_items.clear();
        CHECK(has_rule(validate_dataset(d), "empty-ground-truth"));
    }
    SUBCASE("ground-truth item without atomic attributes") {
        d.items.at("i01").atomic_attributes.clear();
        CHECK(has_rule(validate_dataset(d), "missing-atomic-attributes"));
    }
    SUBCASE("empty attribute text") {
        d.items.at("i01").atomic_attributes[0].text.clear();
        CHECK(has_rule(validate_dataset(d), "empty-attribute-text"));
    }
    SUBCASE("dangling reference detected at validation") {
        d.conversations[0].turns[2].referenced_items.insert("ghost");
        CHECK(has_rule(validate_dataset(d), "dangling-item-reference"));
    }
}

TEST_CASE("validate_dataset is pure: identical input, identical report") {
    Dataset d = load_dataset(icrs_test::fixture_manifest());
    d.conversations[1].turns[3].intent_tags.insert(IntentTag::implicit_seeker_request);
    auto a = validate_dataset(d);
    auto b = validate_dataset(d);
    REQUIRE(a.violations.size() == b.violations.size());
    for (std::size_t i = 0; i < a.violations.size(); ++i) {
        CHECK(a.violations[i].rule == b.violations[i].rule);
        CHECK(a.violations[i].location == b.violations[i].location);
    }
}

TEST_CASE("round-trip: load(write(d)) reproduces the dataset byte-for-byte") {
    Dataset d = load_dataset(icrs_test::fixture_manifest());
    TempDir dir1("rt1");
    TempDir dir2("rt2");
    write_dataset(d, dir1.str());
    Dataset d2 = load_dataset(dir1.str() + "/dataset.toml");
    write_dataset(d2, dir2.str());
    for (const char* name : {"items.jsonl", "conversations.jsonl", "dataset.toml"}) {
        CHECK(icrs_test::slurp(dir1.str() + "/" + name) ==
              icrs_test::slurp(dir2.str() + "/" + name));
    }
}

TEST_CASE("extract_prefix cuts strictly before the first ground-truth turn") {
    Dataset d = load_dataset(icrs_test::fixture_manifest());
    const Conversation* c01 = nullptr;
    for (const auto& c : d.conversations)
        if (c.id == "c01") c01 = &c;
    REQUIRE(c01 != nullptr);

    auto prefix = extract_prefix(*c01, d.items, PrefixMode::pre_recommendation);
    CHECK(prefix.cut_index == 22);
    REQUIRE(prefix.turns.size() == 21);
    CHECK(prefix.turns.back().index == 21);

    // No prefix turn references a ground-truth item.
    for (const auto& t : prefix.turns) {
        for (const auto& ref : t.referenced_items)
            CHECK(c01->ground_truth_items.count(ref) == 0);
    }
}

TEST_CASE("extract_prefix(pre_recommendation) needs a usable prefix") {
    auto c = icrs_test::make_conversation("bad", 4, 1, "x");
    std::map<std::string, Item> catalog;
    catalog["x"] = Item{"x", {{"name", "X"}}, {}, {}, {}};
    CHECK_THROWS_WITH_AS(extract_prefix(c, catalog, PrefixMode::pre_recommendation),
                         doctest::Contains("no usable prefix"), Error);
}

TEST_CASE("full_masked replaces whole-phrase item names, case-insensitive") {
    Conversation c;
    c.id = "m1";
    c.scenario = Scenario::movie;
    c.ground_truth_items = {"m_ron"};
    Turn t;
    t.index = 1;
    t.speaker = Speaker::seeker;
    t.text = "I loved Ready or Not";
    c.turns.push_back(t);
    Turn t2;
    t2.index = 2;
    t2.speaker = Speaker::recommender;
    t2.text = "ready or not is great; readier or not so much";
    c.turns.push_back(t2);

    std::map<std::string, Item> catalog;
    catalog["m_ron"] = Item{"m_ron", {{"title", "Ready or Not"}}, {}, {}, {}};

    auto masked = extract_prefix(c, catalog, PrefixMode::full_masked);
    CHECK(masked.turns[0].text == "I loved [ITEM]");
    // whole-phrase only: "readier or not" must survive
    CHECK(masked.turns[1].text == "[ITEM] is great; readier or not so much");
}

TEST_CASE("full_masked with no ground-truth mentions leaves turns unchanged") {
    auto c = icrs_test::make_conversation("plain", 6, 0, "x");
    std::map<std::string, Item> catalog;
    catalog["x"] = Item{"x", {{"name", "Velvet Armchair"}}, {}, {}, {}};
    auto masked = extract_prefix(c, catalog, PrefixMode::full_masked);
    REQUIRE(masked.turns.size() == c.turns.size());
    for (std::size_t i = 0; i < c.turns.size(); ++i)
        CHECK(masked.turns[i].text == c.turns[i].text);
}

TEST_CASE("full_masked output never contains a ground-truth item name") {
    for (const auto& manifest :
         {icrs_test::fixture_manifest(), icrs_test::movie_manifest()}) {
        Dataset d = load_dataset(manifest);
        for (const auto& c : d.conversations) {
            auto masked = extract_prefix(c, d.items, PrefixMode::full_masked);
            for (const auto& gt : c.ground_truth_items) {
                std::string name = d.items.at(gt).display_name();
                REQUIRE_FALSE(name.empty());
                for (const auto& t : masked.turns)
                    CHECK_FALSE(text::contains_phrase(t.text, name));
            }
        }
    }
}

TEST_CASE("the movie fixture resolves display names through the title key") {
    Dataset d = load_dataset(icrs_test::movie_manifest());
    CHECK(d.conversations.size() == 2);
    CHECK(d.items.size() == 6);
    CHECK(d.items.at("m02").display_name() == "Ready or Not");
    CHECK(validate_dataset(d).ok());

    for (const auto& c : d.conversations) {
        if (c.id != "c10") continue;
        auto masked = extract_prefix(c, d.items, PrefixMode::full_masked);
        // turn 23 mentions the recommended title by name
        CHECK(masked.turns[22].text ==
              "My sister already saw [ITEM] twice, actually.");
    }
}

TEST_CASE("ground truth bundle round-trips through JSON") {
    GroundTruthBundle bundle;
    ConversationGroundTruth cgt;
    cgt.recommended_items = {"i01"};
    ItemGroundTruth igt;
    igt.criteria[Criterion::EIS] = {{"material#1", "keyword overlap on 'leather'"}};
    igt.criteria[Criterion::IN_S] = {};
    igt.visually_inferable = {{"color#1", true}, {"material#1", false}};
    cgt.items["i01"] = igt;
    bundle.conversations["c01"] = cgt;

    auto text_form = ground_truth_to_json(bundle);
    auto back = ground_truth_from_json(text_form);
    CHECK(ground_truth_to_json(back) == text_form);
    CHECK(back.conversations.at("c01").items.at("i01").criterion_set(Criterion::EIS) ==
          std::set<std::string>{"material#1"});
}
