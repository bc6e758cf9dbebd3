#include "aie/core.hpp"

#include <algorithm>
#include <charconv>

namespace aie {

std::map<std::string, std::string> flatten_attributes(const AttributeMap& attrs) {
    std::map<std::string, std::string> flat;
    for (const auto& [category, names] : attrs)
        for (const auto& [name, value] : names) flat[category + "." + name] = value;
    return flat;
}

std::string format_double(double value) {
    char buffer[64];
    const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
    return std::string(buffer, result.ptr);
}

void AgentProfile::validate() const {
    if (system_prompt.empty())
        throw ValidationError("profile.system_prompt", "must be non-empty");
    if (concise_template.empty())
        throw ValidationError("profile.concise_template", "must be non-empty");
    // std::map already enforces unique categories and unique names per category
}

std::string identity_line(const AttributeMap& attrs) {
    const auto category = attrs.find("identity");
    if (category == attrs.end())
        throw ValidationError("structured_template", "missing 'identity' category");
    const auto name = category->second.find("name");
    const auto role = category->second.find("role");
    if (name == category->second.end() || role == category->second.end())
        throw ValidationError("structured_template.identity",
                              "needs both 'name' and 'role' attributes");
    return "I am " + name->second + ", " + role->second + ".";
}

const char* to_string(Role role) {
    switch (role) {
        case Role::system: return "system";
        case Role::agent: return "agent";
        case Role::probe: return "probe";
        case Role::distractor: return "distractor";
        case Role::corrector: return "corrector";
        case Role::environment: return "environment";
        case Role::judge: return "judge";
    }
    return "system";
}

Role role_from_string(std::string_view name) {
    if (name == "system") return Role::system;
    if (name == "agent") return Role::agent;
    if (name == "probe") return Role::probe;
    if (name == "distractor") return Role::distractor;
    if (name == "corrector") return Role::corrector;
    if (name == "environment") return Role::environment;
    if (name == "judge") return Role::judge;
    throw ParseError("unknown turn role '" + std::string(name) + "'");
}

Trace new_trace(std::string run_id, int trial, std::int64_t seed, Tags condition_labels) {
    Trace trace;
    trace.run_id = std::move(run_id);
    trace.trial = trial;
    trace.seed = seed;
    trace.condition_labels = std::move(condition_labels);
    return trace;
}

Turn& append_turn(Trace& trace, Role role, std::string content, Tags tags) {
    if (content.empty() && (role == Role::agent || role == Role::probe))
        throw EmptyContent("turn content must be non-empty for role " +
                           std::string(to_string(role)));
    Turn turn;
    turn.index = static_cast<int>(trace.turns.size());
    turn.role = role;
    turn.content = std::move(content);
    turn.tags = std::move(tags);
    turn.wall_time = std::chrono::time_point_cast<std::chrono::milliseconds>(
        std::chrono::system_clock::now());
    trace.turns.push_back(std::move(turn));
    return trace.turns.back();
}

std::vector<std::pair<int, std::string>> probe_answers(const Trace& trace,
                                                       const std::string& probe_tag) {
    std::vector<std::pair<int, std::string>> out;
    for (std::size_t i = 0; i + 1 < trace.turns.size(); ++i) {
        const Turn& probe = trace.turns[i];
        const Turn& answer = trace.turns[i + 1];
        if (probe.role == Role::probe && probe.tags.count(probe_tag) &&
            answer.role == Role::agent) {
            out.emplace_back(answer.index, answer.content);
        }
    }
    return out;
}

std::string identity_representation(const Trace& trace, const std::string& probe_tag) {
    const auto answers = probe_answers(trace, probe_tag);
    if (answers.empty())
        throw NoSuchProbe("no agent answer to a probe tagged '" + probe_tag + "'");
    return answers.back().second;
}

StateSnapshot snapshot(const Trace& trace, int at_turn, const Embedder& embedder,
                       const AttributeParser& parser) {
    if (at_turn < 0 || at_turn >= static_cast<int>(trace.turns.size()))
        throw NoSuchTurn("turn " + std::to_string(at_turn) + " not in a trace of " +
                         std::to_string(trace.turns.size()) + " turns");
    const Turn& turn = trace.turns[at_turn];
    if (turn.role != Role::agent)
        throw NotAgentTurn("snapshots are only taken from agent turns, turn " +
                           std::to_string(at_turn) + " has role " +
                           std::string(to_string(turn.role)));
    StateSnapshot snap;
    snap.at_turn = at_turn;
    snap.representation_text = turn.content;
    if (embedder) snap.embedding = embedder(turn.content);
    if (parser) snap.attribute_values = parser(turn.content);
    return snap;
}

std::optional<AttributeMap> parse_attribute_block(const std::string& text) {
    AttributeMap attrs;
    bool any = false;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string_view line(text.data() + start, end - start);
        start = end + 1;

        const std::size_t dot = line.find('.');
        const std::size_t colon = line.find(':');
        if (dot == std::string_view::npos || colon == std::string_view::npos || dot >= colon)
            continue;
        const auto trim = [](std::string_view s) {
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
                s.remove_prefix(1);
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
                s.remove_suffix(1);
            return s;
        };
        const std::string_view category = trim(line.substr(0, dot));
        const std::string_view name = trim(line.substr(dot + 1, colon - dot - 1));
        const std::string_view value = trim(line.substr(colon + 1));
        if (category.empty() || name.empty()) continue;
        if (category.find(' ') != std::string_view::npos ||
            name.find(' ') != std::string_view::npos)
            continue;
        attrs[std::string(category)][std::string(name)] = std::string(value);
        any = true;
    }
    if (!any) return std::nullopt;
    return attrs;
}

}  // namespace aie
