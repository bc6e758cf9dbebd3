#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <string>

#include "aie/core.hpp"

using namespace aie;

TEST_CASE("flatten joins category and name with a dot") {
    const AttributeMap attrs = {
        {"identity", {{"name", "Iris"}, {"role", "navigator"}}},
        {"style", {{"tone", "calm"}}},
    };
    const auto flat = flatten_attributes(attrs);
    REQUIRE(flat.size() == 3);
    CHECK(flat.at("identity.name") == "Iris");
    CHECK(flat.at("identity.role") == "navigator");
    CHECK(flat.at("style.tone") == "calm");
    CHECK(flatten_attributes({}).empty());
}

TEST_CASE("format_double round-trips through parsing") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> val(-1e6, 1e6);
    for (int i = 0; i < 200; ++i) {
        const double x = val(rng);
        CHECK(std::stod(format_double(x)) == x);
    }
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(-0.25) == "-0.25");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("identity line renders name and role") {
    const AttributeMap attrs = {{"identity", {{"name", "Iris"}, {"role", "navigator"}}}};
    CHECK(identity_line(attrs) == "I am Iris, navigator.");

    CHECK_THROWS_AS(identity_line({}), ValidationError);
    const AttributeMap no_role = {{"identity", {{"name", "Iris"}}}};
    CHECK_THROWS_AS(identity_line(no_role), ValidationError);
}

TEST_CASE("profile validation requires prompt and concise template") {
    AgentProfile profile;
    profile.system_prompt = "You are Iris.";
    profile.concise_template = "I am Iris, navigator.";
    CHECK_NOTHROW(profile.validate());

    profile.system_prompt.clear();
    CHECK_THROWS_AS(profile.validate(), ValidationError);
    profile.system_prompt = "You are Iris.";
    profile.concise_template.clear();
    CHECK_THROWS_AS(profile.validate(), ValidationError);
}

TEST_CASE("validation errors carry key and constraint") {
    try {
        identity_line({});
        FAIL("expected a throw");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()) == "structured_template: missing 'identity' category");
    }
}

TEST_CASE("role names round-trip") {
    for (Role role : {Role::system, Role::agent, Role::probe, Role::distractor, Role::corrector,
                      Role::environment, Role::judge}) {
        CHECK(role_from_string(to_string(role)) == role);
    }
    CHECK_THROWS_AS(role_from_string("narrator"), ParseError);
}

TEST_CASE("append_turn indexes sequentially and validates content") {
    Trace trace = new_trace("run", 0, 42, {"condition:default"});
    CHECK(trace.run_id == "run");
    CHECK(trace.seed == 42);
    CHECK(trace.condition_labels.count("condition:default") == 1);

    // the returned reference is only good until the next append; copy out
    const Turn first = append_turn(trace, Role::system, "You are Iris.");
    const Turn second = append_turn(trace, Role::probe, "Who are you?", {"identity-probe"});
    CHECK(first.index == 0);
    CHECK(second.index == 1);
    CHECK(second.tags.count("identity-probe") == 1);
    CHECK(append_turn(trace, Role::agent, "I am Iris, navigator.").index == 2);

    CHECK_THROWS_AS(append_turn(trace, Role::agent, ""), EmptyContent);
    CHECK_THROWS_AS(append_turn(trace, Role::probe, ""), EmptyContent);
    // non-speaking roles may be empty
    CHECK_NOTHROW(append_turn(trace, Role::environment, ""));
    CHECK(trace.turns.size() == 4);
}

TEST_CASE("probe answers pair a tagged probe with the following agent turn") {
    Trace trace = new_trace("run", 0, 1, {});
    append_turn(trace, Role::system, "setup");
    append_turn(trace, Role::probe, "Who are you?", {"identity-probe"});
    append_turn(trace, Role::agent, "I am Iris, navigator.");
    append_turn(trace, Role::probe, "What is the berth?", {"recall-probe"});
    append_turn(trace, Role::agent, "Dock nineteen.");
    append_turn(trace, Role::probe, "Who are you?", {"identity-probe"});
    append_turn(trace, Role::agent, "I am Iris, the navigator.");

    const auto answers = probe_answers(trace, "identity-probe");
    REQUIRE(answers.size() == 2);
    CHECK(answers[0] == std::pair<int, std::string>(2, "I am Iris, navigator."));
    CHECK(answers[1] == std::pair<int, std::string>(6, "I am Iris, the navigator."));

    CHECK(identity_representation(trace, "identity-probe") == "I am Iris, the navigator.");
    CHECK(identity_representation(trace, "recall-probe") == "Dock nineteen.");
    CHECK_THROWS_AS(identity_representation(trace, "missing-tag"), NoSuchProbe);
    CHECK(probe_answers(trace, "missing-tag").empty());
}

TEST_CASE("a probe not followed by an agent turn yields no answer") {
    Trace trace = new_trace("run", 0, 1, {});
    append_turn(trace, Role::probe, "Who are you?", {"identity-probe"});
    append_turn(trace, Role::distractor, "Talk about the weather instead.");
    append_turn(trace, Role::agent, "The weather is mild.");
    CHECK(probe_answers(trace, "identity-probe").empty());
}

TEST_CASE("snapshot captures an agent turn") {
    Trace trace = new_trace("run", 0, 1, {});
    append_turn(trace, Role::system, "setup");
    append_turn(trace, Role::agent, "I am Iris, navigator.");

    const StateSnapshot snap = snapshot(trace, 1);
    CHECK(snap.at_turn == 1);
    CHECK(snap.representation_text == "I am Iris, navigator.");
    CHECK_FALSE(snap.embedding.has_value());
    CHECK_FALSE(snap.attribute_values.has_value());

    CHECK_THROWS_AS(snapshot(trace, 0), NotAgentTurn);
    CHECK_THROWS_AS(snapshot(trace, 7), NoSuchTurn);
    CHECK_THROWS_AS(snapshot(trace, -1), NoSuchTurn);
}

TEST_CASE("snapshot applies embedder and parser when supplied") {
    Trace trace = new_trace("run", 0, 1, {});
    append_turn(trace, Role::agent, "identity.name: Iris\nidentity.role: navigator");

    const Embedder embedder = [](const std::string&) { return EmbeddingVector{{1.0, 0.0}}; };
    const StateSnapshot snap = snapshot(trace, 0, embedder, parse_attribute_block);
    REQUIRE(snap.embedding.has_value());
    CHECK(snap.embedding->dim() == 2);
    REQUIRE(snap.attribute_values.has_value());
    CHECK(snap.attribute_values->at("identity").at("name") == "Iris");
}

TEST_CASE("attribute block parser reads category.name: value lines") {
    const auto attrs = parse_attribute_block(
        "identity.name: Iris\n"
        "identity.role:   navigator  \n"
        "style.tone: calm\n");
    REQUIRE(attrs.has_value());
    CHECK(attrs->at("identity").at("name") == "Iris");
    CHECK(attrs->at("identity").at("role") == "navigator");  // trimmed
    CHECK(attrs->at("style").at("tone") == "calm");
}

TEST_CASE("attribute block parser skips prose and rejects empty results") {
    CHECK_FALSE(parse_attribute_block("Plain prose without any block.").has_value());
    CHECK_FALSE(parse_attribute_block("").has_value());

    // prose lines around a block are ignored, the block still parses
    const auto attrs = parse_attribute_block(
        "Here is my state. Note: nothing odd today.\n"
        "mission.goal: charting\n"
        "That is all.\n");
    REQUIRE(attrs.has_value());
    CHECK(attrs->size() == 1);
    CHECK(attrs->at("mission").at("goal") == "charting");

    // a dotted word with spaces around the dot segments is not a key
    CHECK_FALSE(parse_attribute_block("the ship. cargo: heavy").has_value());
    // colon before the dot is prose, not a key
    CHECK_FALSE(parse_attribute_block("note: ship.level").has_value());
}

TEST_CASE("attribute values may contain colons and dots") {
    const auto attrs = parse_attribute_block("mission.goal: charting: phase 2.1");
    REQUIRE(attrs.has_value());
    CHECK(attrs->at("mission").at("goal") == "charting: phase 2.1");
}
