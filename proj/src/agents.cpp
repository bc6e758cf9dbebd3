#include "aie/agents.hpp"

#include <string_view>
#include <vector>

#include "aie/errors.hpp"

namespace aie {

namespace {

constexpr std::string_view kProbePrefix = "[probe:";
constexpr std::string_view kDistractorDelimiter = "--- unrelated context ---";

std::string_view trim_left(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    return s;
}

std::vector<std::string> split_paragraphs(const std::string& text) {
    std::vector<std::string> paragraphs;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t brk = text.find("\n\n", start);
        if (brk == std::string::npos) {
            paragraphs.push_back(text.substr(start));
            break;
        }
        paragraphs.push_back(text.substr(start, brk - start));
        start = brk + 2;
    }
    return paragraphs;
}

}  // namespace

const char* to_string(ChatRole role) {
    switch (role) {
        case ChatRole::system: return "system";
        case ChatRole::user: return "user";
        case ChatRole::assistant: return "assistant";
    }
    return "user";
}

const char* to_string(CorrectionStrength strength) {
    return strength == CorrectionStrength::weak ? "weak" : "strong";
}

const char* to_string(CorrectionBehavior behavior) {
    switch (behavior) {
        case CorrectionBehavior::restore_on_strong: return "restore-on-strong";
        case CorrectionBehavior::partial_on_weak: return "partial-on-weak";
        case CorrectionBehavior::ignore: return "ignore";
    }
    return "ignore";
}

CorrectionBehavior correction_behavior_from_string(std::string_view name) {
    if (name == "restore-on-strong") return CorrectionBehavior::restore_on_strong;
    if (name == "partial-on-weak") return CorrectionBehavior::partial_on_weak;
    if (name == "ignore") return CorrectionBehavior::ignore;
    throw ValidationError(std::string(name),
                          "expected one of restore-on-strong, partial-on-weak, ignore");
}

std::string Probe::content() const {
    switch (kind) {
        case Kind::identity: return "[probe:identity] " + text;
        case Kind::attribute: return "[probe:attribute:" + arg + "] " + text;
        case Kind::recall: return "[probe:recall:" + arg + "] " + text;
        case Kind::plan: return "[probe:plan] " + text;
        case Kind::freeform: return text;
    }
    return text;
}

std::optional<Probe> Probe::parse(std::string_view content) {
    // the marker may sit anywhere: distractors are allowed to precede it
    std::size_t at = content.find(kProbePrefix);
    if (at == std::string_view::npos) return std::nullopt;
    std::size_t body_start = at + kProbePrefix.size();
    std::size_t close = content.find(']', body_start);
    if (close == std::string_view::npos) return std::nullopt;
    std::string_view body = content.substr(body_start, close - body_start);

    Probe probe;
    if (body == "identity") {
        probe.kind = Kind::identity;
    } else if (body == "plan") {
        probe.kind = Kind::plan;
    } else if (body.rfind("attribute:", 0) == 0) {
        probe.kind = Kind::attribute;
        probe.arg = std::string(body.substr(10));
    } else if (body.rfind("recall:", 0) == 0) {
        probe.kind = Kind::recall;
        probe.arg = std::string(body.substr(7));
    } else {
        return std::nullopt;
    }
    if (probe.kind != Kind::identity && probe.kind != Kind::plan && probe.arg.empty())
        return std::nullopt;
    probe.text = std::string(trim_left(content.substr(close + 1)));
    return probe;
}

std::string fact_message(const std::string& key, const std::string& value) {
    return "[fact:" + key + "] " + value;
}

std::string inject_distractor(const std::string& prompt, const std::string& distractor,
                              DistractorPlacement placement) {
    if (distractor.empty()) throw EmptyDistractor("distractor text is empty");
    std::string block;
    block.append(kDistractorDelimiter);
    block.push_back('\n');
    block.append(distractor);
    block.push_back('\n');
    block.append(kDistractorDelimiter);

    switch (placement) {
        case DistractorPlacement::prefix:
            return block + "\n" + prompt;
        case DistractorPlacement::suffix:
            return prompt + "\n" + block;
        case DistractorPlacement::interleave: {
            auto paragraphs = split_paragraphs(prompt);
            // splice after the middle paragraph, rounding up
            std::size_t after = (paragraphs.size() + 1) / 2;
            std::string out;
            for (std::size_t i = 0; i < paragraphs.size(); ++i) {
                if (i > 0) out += "\n\n";
                out += paragraphs[i];
                if (i + 1 == after) {
                    out += "\n\n";
                    out += block;
                }
            }
            return out;
        }
    }
    return prompt + "\n" + block;
}

void apply_perturbation(Trace& trace, AgentBackend& backend,
                        const std::string& perturbation_prompt, Tags extra_tags) {
    extra_tags.insert("perturbation");
    append_turn(trace, Role::environment, perturbation_prompt, std::move(extra_tags));
    backend.perturb();
}

void apply_correction(Trace& trace, AgentBackend& backend, const std::string& correction_prompt,
                      CorrectionStrength strength, Tags extra_tags) {
    extra_tags.insert(std::string("correction:") + to_string(strength));
    append_turn(trace, Role::corrector, correction_prompt, std::move(extra_tags));
    backend.correct(strength);
}

}  // namespace aie
