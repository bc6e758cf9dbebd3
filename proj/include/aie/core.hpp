#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "aie/distance.hpp"
#include "aie/errors.hpp"

namespace aie {

// category -> (attribute name -> value)
using AttributeMap = std::map<std::string, std::map<std::string, std::string>>;

// flatten to "category.name" -> value
std::map<std::string, std::string> flatten_attributes(const AttributeMap& attrs);

// shortest decimal form that parses back to the same double; locale-free
std::string format_double(double value);

// The persona under test: instantiating system prompt plus the structured
// and concise identity templates that act as the t0 reference.
struct AgentProfile {
    std::string profile_id;
    std::string system_prompt;
    AttributeMap structured_template;
    std::string concise_template;

    void validate() const;  // throws ValidationError
};

// "I am <name>, <role>." rendered from the identity category of a
// structured attribute map; throws ValidationError when absent.
std::string identity_line(const AttributeMap& attrs);

enum class Role { system, agent, probe, distractor, corrector, environment, judge };

const char* to_string(Role role);
Role role_from_string(std::string_view name);

using Tags = std::set<std::string>;

struct Turn {
    int index = 0;
    Role role = Role::system;
    std::string content;
    Tags tags;
    // recorded at millisecond precision; excluded from every metric
    std::chrono::system_clock::time_point wall_time{};

    bool operator==(const Turn&) const = default;
};

struct Trace {
    std::string run_id;
    int trial = 0;
    std::int64_t seed = 0;
    Tags condition_labels;
    std::vector<Turn> turns;

    bool operator==(const Trace&) const = default;
};

Trace new_trace(std::string run_id, int trial, std::int64_t seed, Tags condition_labels);

// Appends a turn with index = current length; content must be non-empty for
// agent and probe roles (EmptyContent otherwise). Existing turns are never
// touched.
Turn& append_turn(Trace& trace, Role role, std::string content, Tags tags = {});

// content of the last agent turn that directly answers a probe turn
// carrying probe_tag; NoSuchProbe when no such pair exists
std::string identity_representation(const Trace& trace, const std::string& probe_tag);

// all probe answers for a tag, in trace order: (answer turn index, content)
std::vector<std::pair<int, std::string>> probe_answers(const Trace& trace,
                                                       const std::string& probe_tag);

struct StateSnapshot {
    int at_turn = 0;
    std::string representation_text;
    std::optional<EmbeddingVector> embedding;
    std::optional<AttributeMap> attribute_values;
};

using AttributeParser = std::function<std::optional<AttributeMap>(const std::string&)>;

// Snapshot of the agent turn at at_turn. The embedding is populated when an
// embedder is supplied; attribute_values when a parser is supplied and the
// turn content contains a parseable attribute block.
StateSnapshot snapshot(const Trace& trace, int at_turn, const Embedder& embedder = {},
                       const AttributeParser& parser = {});

// default attribute block parser: lines of the form "category.name: value"
std::optional<AttributeMap> parse_attribute_block(const std::string& text);

// Identity probe spec: reference set, distance and match threshold.
struct ProbeSpec {
    std::string probe_text;
    std::vector<std::string> references;
    DistanceSpec distance;
    double threshold = 0.2;
};

}  // namespace aie
