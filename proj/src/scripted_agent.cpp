#include "aie/agents.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <numeric>
#include <set>
#include <sstream>
#include <string_view>

#include "aie/errors.hpp"

namespace aie {

namespace {

constexpr std::string_view kReplacementAlphabet = "abcdefghijklmnopqrstuvwxyz0123456789";
constexpr std::string_view kRecallMiss = "I do not recall";

// FNV-1a over labelled parts, keyed by the config seed. Every scripted
// decision (mutation position order, replacement char, partial-correction
// rank) flows through this so traces replay bit-identically.
std::uint64_t mix(std::uint64_t seed, std::initializer_list<std::string_view> parts) {
    std::uint64_t h = 1469598103934665603ULL ^ (seed * 0x9E3779B97F4A7C15ULL);
    for (std::string_view part : parts) {
        for (unsigned char b : part) {
            h ^= b;
            h *= 1099511628211ULL;
        }
        h ^= 0xFFULL;  // part separator so ("ab","c") != ("a","bc")
        h *= 1099511628211ULL;
    }
    return h;
}

std::string u64s(std::uint64_t v) { return std::to_string(v); }

// Fixed per-attribute visit order over character positions. Fresh positions
// first, so the edit distance from the base value grows by exactly one per
// mutation until every position has been touched.
std::vector<std::size_t> position_order(std::uint64_t seed, const std::string& key,
                                        std::size_t len) {
    std::vector<std::size_t> order(len);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<std::uint64_t> rank(len);
    for (std::size_t i = 0; i < len; ++i) rank[i] = mix(seed, {key, u64s(i), "perm"});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (rank[a] != rank[b]) return rank[a] < rank[b];
        return a < b;
    });
    return order;
}

// Replacement chars avoid every character of the base value, so the
// Levenshtein distance from base equals the count of mutated positions
// (foreign chars can never re-align). Falls back to merely avoiding the
// local base char when the base exhausts the alphabet.
char pick_replacement(std::uint64_t seed, const std::string& key, int turn, int j, char current,
                      const std::set<char>& base_chars, char base_at_pos) {
    std::size_t start = mix(seed, {key, u64s(static_cast<std::uint64_t>(turn)), u64s(
                                        static_cast<std::uint64_t>(j)),
                                   "chr"}) %
                        kReplacementAlphabet.size();
    for (std::size_t step = 0; step < kReplacementAlphabet.size(); ++step) {
        char c = kReplacementAlphabet[(start + step) % kReplacementAlphabet.size()];
        if (c != current && base_chars.find(c) == base_chars.end()) return c;
    }
    for (std::size_t step = 0; step < kReplacementAlphabet.size(); ++step) {
        char c = kReplacementAlphabet[(start + step) % kReplacementAlphabet.size()];
        if (c != current && c != base_at_pos) return c;
    }
    return current == 'z' ? 'y' : 'z';
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

struct PlanRequest {
    std::vector<std::string> toolkit;
    int stages = 0;
    std::vector<std::string> goals;  // 0-based, may be shorter than stages
};

PlanRequest parse_plan_request(const std::string& prompt) {
    PlanRequest req;
    bool saw_toolkit = false;
    bool saw_stages = false;
    std::istringstream in(prompt);
    std::string line;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t.rfind("Toolkit:", 0) == 0) {
            saw_toolkit = true;
            std::string rest = t.substr(8);
            std::size_t at = 0;
            while (at <= rest.size()) {
                std::size_t comma = rest.find(',', at);
                std::string tool = trim(comma == std::string::npos ? rest.substr(at)
                                                                   : rest.substr(at, comma - at));
                if (!tool.empty()) req.toolkit.push_back(tool);
                if (comma == std::string::npos) break;
                at = comma + 1;
            }
        } else if (t.rfind("Stages:", 0) == 0) {
            saw_stages = true;
            try {
                req.stages = std::stoi(trim(t.substr(7)));
            } catch (const std::exception&) {
                throw ParseFailure("plan request has a non-numeric Stages: line");
            }
            if (req.stages < 0) throw ParseFailure("plan request has a negative Stages: line");
        } else if (t.rfind("Stage ", 0) == 0) {
            std::size_t colon = t.find(" goal:");
            if (colon == std::string::npos) continue;
            int idx = 0;
            try {
                idx = std::stoi(t.substr(6, colon - 6));
            } catch (const std::exception&) {
                continue;
            }
            if (idx < 1) continue;
            if (static_cast<std::size_t>(idx) > req.goals.size()) req.goals.resize(idx);
            req.goals[idx - 1] = trim(t.substr(colon + 6));
        }
    }
    if (!saw_toolkit || !saw_stages)
        throw ParseFailure("plan request needs Toolkit: and Stages: lines");
    return req;
}

}  // namespace

ScriptedAgent::ScriptedAgent(ScriptedDriftConfig config)
    : config_(std::move(config)), current_(config_.base_attributes) {
    if (config_.drift_per_turn < 0)
        throw ValidationError("drift_per_turn", "must be non-negative");
    if (config_.memory_window && *config_.memory_window < 1)
        throw ValidationError("memory_window", "must be positive when bounded");
    if (config_.correction_rho < 0.0 || config_.correction_rho > 1.0)
        throw ValidationError("correction_rho", "must be in [0,1]");
    if (config_.plan_quality < 0.0 || config_.plan_quality > 1.0)
        throw ValidationError("plan_quality", "must be in [0,1]");
}

std::string ScriptedAgent::respond(const std::vector<ChatMessage>& history,
                                   const GenerationParams&) {
    const ChatMessage* last_user = nullptr;
    for (auto it = history.rbegin(); it != history.rend(); ++it) {
        if (it->role == ChatRole::user) {
            last_user = &*it;
            break;
        }
    }
    if (last_user == nullptr)
        throw InsufficientHistory("scripted agent needs at least one user message");
    auto probe = Probe::parse(last_user->content);
    if (!probe) return last_user->content;  // freeform: echo
    return respond_probe(*probe, history);
}

std::string ScriptedAgent::respond_probe(const Probe& probe,
                                         const std::vector<ChatMessage>& history) {
    switch (probe.kind) {
        case Probe::Kind::identity:
            return render_identity();
        case Probe::Kind::attribute: {
            auto flat = flatten_attributes(current_);
            auto it = flat.find(probe.arg);
            if (it == flat.end())
                throw ValidationError(probe.arg, "not an attribute of this agent");
            return it->second;
        }
        case Probe::Kind::recall:
            return recall(probe.arg);
        case Probe::Kind::plan:
            return build_plan(probe.text);
        case Probe::Kind::freeform:
            break;
    }
    for (auto it = history.rbegin(); it != history.rend(); ++it)
        if (it->role == ChatRole::user) return it->content;
    return probe.text;
}

void ScriptedAgent::advance() {
    ++turn_;
    if (config_.drift_per_turn == 0 || turn_ < config_.drift_start_turn) return;
    for (auto& [category, values] : current_) {
        for (auto& [name, value] : values) {
            if (value.empty()) continue;
            const std::string key = category + "." + name;
            std::string base = value;
            auto cat_it = config_.base_attributes.find(category);
            if (cat_it != config_.base_attributes.end()) {
                auto name_it = cat_it->second.find(name);
                if (name_it != cat_it->second.end()) base = name_it->second;
            }
            std::set<char> base_chars(base.begin(), base.end());
            auto order = position_order(config_.seed, key, value.size());
            for (int j = 0; j < config_.drift_per_turn; ++j) {
                std::size_t count = mutation_counts_[key]++;
                std::size_t pos = order[count % value.size()];
                char base_at_pos = pos < base.size() ? base[pos] : value[pos];
                value[pos] = pick_replacement(config_.seed, key, turn_, j, value[pos],
                                              base_chars, base_at_pos);
            }
        }
    }
}

void ScriptedAgent::begin_session() {
    turn_ = 0;
    current_ = config_.base_attributes;
    facts_.clear();
    mutation_counts_.clear();
}

void ScriptedAgent::note_fact(const std::string& key, const std::string& value) {
    facts_[key] = Fact{value, turn_};
}

void ScriptedAgent::perturb() {
    for (const auto& [category, values] : config_.perturbation_attributes)
        for (const auto& [name, value] : values) current_[category][name] = value;
}

void ScriptedAgent::correct(CorrectionStrength strength) {
    switch (config_.correction_behavior) {
        case CorrectionBehavior::ignore:
            return;
        case CorrectionBehavior::restore_on_strong:
            if (strength == CorrectionStrength::strong) current_ = config_.base_attributes;
            return;
        case CorrectionBehavior::partial_on_weak:
            break;
    }
    if (strength == CorrectionStrength::strong) {
        current_ = config_.base_attributes;
        return;
    }
    // weak: restore round(rho * |diff positions|) characters per attribute,
    // picked in seeded-hash order so replays agree
    for (const auto& [category, values] : config_.base_attributes) {
        auto cat_it = current_.find(category);
        if (cat_it == current_.end()) {
            current_[category] = values;
            continue;
        }
        for (const auto& [name, base] : values) {
            auto name_it = cat_it->second.find(name);
            if (name_it == cat_it->second.end()) {
                cat_it->second[name] = base;
                continue;
            }
            std::string& value = name_it->second;
            if (value.size() != base.size()) value.resize(base.size(), ' ');
            std::vector<std::size_t> diff;
            for (std::size_t i = 0; i < base.size(); ++i)
                if (value[i] != base[i]) diff.push_back(i);
            if (diff.empty()) continue;
            const std::string key = category + "." + name;
            std::vector<std::uint64_t> rank(diff.size());
            for (std::size_t i = 0; i < diff.size(); ++i)
                rank[i] = mix(config_.seed, {key, u64s(diff[i]), "corr"});
            std::vector<std::size_t> idx(diff.size());
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
                if (rank[a] != rank[b]) return rank[a] < rank[b];
                return diff[a] < diff[b];
            });
            auto restored = static_cast<std::size_t>(
                std::llround(config_.correction_rho * static_cast<double>(diff.size())));
            restored = std::min(restored, diff.size());
            for (std::size_t i = 0; i < restored; ++i) value[diff[idx[i]]] = base[diff[idx[i]]];
        }
    }
}

std::string ScriptedAgent::render_identity() const {
    std::string line = identity_line(current_);
    auto it = facts_.find("goal");
    if (it != facts_.end()) {
        bool in_window = !config_.memory_window ||
                         (turn_ - it->second.turn) <= *config_.memory_window;
        if (in_window) line += " My current goal is " + it->second.value + ".";
    }
    return line;
}

std::string ScriptedAgent::recall(const std::string& key) const {
    auto it = facts_.find(key);
    if (it == facts_.end()) return std::string(kRecallMiss);
    if (config_.memory_window && (turn_ - it->second.turn) > *config_.memory_window)
        return std::string(kRecallMiss);
    return it->second.value;
}

std::string ScriptedAgent::build_plan(const std::string& prompt) const {
    PlanRequest req = parse_plan_request(prompt);
    auto valid = static_cast<int>(
        std::llround(config_.plan_quality * static_cast<double>(req.stages)));
    valid = std::clamp(valid, 0, req.stages);
    std::string out = "===PLAN===\n";
    for (int i = 1; i <= req.stages; ++i) {
        std::string tool;
        if (i <= valid && !req.toolkit.empty())
            tool = req.toolkit[static_cast<std::size_t>(i - 1) % req.toolkit.size()];
        else
            tool = "invented_tool_" + std::to_string(i);
        std::string goal = static_cast<std::size_t>(i) <= req.goals.size() && !req.goals[i - 1].empty()
                               ? req.goals[i - 1]
                               : "Complete stage " + std::to_string(i) + ".";
        out += "Stage " + std::to_string(i) + ": tool=" + tool + "; description=" + goal + "\n";
    }
    out += "===END===";
    return out;
}

}  // namespace aie
