#include "aie/metrics.hpp"

#include <algorithm>
#include <cctype>

namespace aie {

namespace {

// distance between snapshots: embeddings when the spec wants cosine and both
// snapshots carry one, representation text otherwise
double snapshot_dist(const DistanceSpec& spec, const StateSnapshot& a, const StateSnapshot& b) {
    if (spec.kind == DistanceKind::cosine_embedding && a.embedding && b.embedding)
        return cosine_distance(*a.embedding, *b.embedding);
    return dist(spec, a.representation_text, b.representation_text);
}

std::string fold_case(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    for (const char c : text)
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
}

}  // namespace

std::map<std::string, double> MetricReport::present_scores() const {
    std::map<std::string, double> scores;
    if (identifiability) scores["identifiability"] = *identifiability;
    if (continuity) scores["continuity"] = *continuity;
    if (consistency) scores["consistency"] = *consistency;
    if (persistence) scores["persistence"] = *persistence;
    if (recovery) scores["recovery"] = recovery->final_r();
    return scores;
}

double identifiability(const std::vector<std::string>& reps, const ProbeSpec& probe) {
    if (reps.empty()) throw EmptyReps("identifiability needs at least one representation");
    if (probe.references.empty())
        throw EmptyReferences("identifiability needs a non-empty reference set");
    double best = 0.0;
    for (const std::string& reference : probe.references) {
        std::size_t matches = 0;
        for (const std::string& rep : reps)
            if (dist(probe.distance, rep, reference) <= probe.threshold) ++matches;
        best = std::max(best, static_cast<double>(matches) / static_cast<double>(reps.size()));
    }
    return best;
}

bool is_correct(const CheckerSpec& checker, const std::string& actual,
                const std::string& expected) {
    switch (checker.kind) {
        case CheckerSpec::Kind::containment:
            return fold_case(actual).find(fold_case(expected)) != std::string::npos;
        case CheckerSpec::Kind::distance:
            return within(checker.distance, actual, expected);
        case CheckerSpec::Kind::judge:
            if (!checker.judge) throw Error("judge checker without a judge callable");
            return checker.judge(actual, expected);
    }
    return false;
}

double continuity(const std::vector<ContinuityCheck>& checks) {
    if (checks.empty()) throw EmptyChecks("continuity needs at least one check");
    std::size_t correct = 0;
    for (const ContinuityCheck& check : checks)
        if (is_correct(check.checker, check.actual, check.expected)) ++correct;
    return static_cast<double>(correct) / static_cast<double>(checks.size());
}

double consistency(const std::vector<std::vector<std::string>>& scenarios,
                   const DistanceSpec& spec) {
    if (scenarios.empty()) throw TooFewOutputs("consistency needs at least one scenario");
    double total = 0.0;
    for (std::size_t m = 0; m < scenarios.size(); ++m) {
        const auto& outputs = scenarios[m];
        if (outputs.size() < 2)
            throw TooFewOutputs("scenario " + std::to_string(m) + " has " +
                                std::to_string(outputs.size()) + " outputs, needs >= 2");
        std::size_t agreeing = 0;
        std::size_t pairs = 0;
        for (std::size_t j = 0; j < outputs.size(); ++j) {
            for (std::size_t k = j + 1; k < outputs.size(); ++k) {
                ++pairs;
                if (dist(spec, outputs[j], outputs[k]) <= spec.threshold) ++agreeing;
            }
        }
        total += static_cast<double>(agreeing) / static_cast<double>(pairs);
    }
    return total / static_cast<double>(scenarios.size());
}

double persistence(const std::vector<StateSnapshot>& snapshots, const DistanceSpec& spec,
                   double epsilon) {
    if (snapshots.size() < 2) throw TooFewSnapshots("persistence needs at least two snapshots");
    double d_max = 0.0;
    for (std::size_t i = 0; i < snapshots.size(); ++i)
        for (std::size_t j = i + 1; j < snapshots.size(); ++j)
            d_max = std::max(d_max, snapshot_dist(spec, snapshots[i], snapshots[j]));
    double total = 0.0;
    for (std::size_t t = 0; t + 1 < snapshots.size(); ++t) {
        const double d = snapshot_dist(spec, snapshots[t], snapshots[t + 1]);
        total += std::max(0.0, 1.0 - d / (d_max + epsilon));
    }
    return total / static_cast<double>(snapshots.size() - 1);
}

RecoveryResult recovery_profile(const StateSnapshot& s_ref, const StateSnapshot& s_drift,
                                const std::vector<StateSnapshot>& s_recov,
                                const DistanceSpec& spec, double epsilon, double tau_rec) {
    if (s_recov.empty())
        throw EmptyRecoverySequence("recovery needs at least one correction snapshot");
    const double d_drift = snapshot_dist(spec, s_drift, s_ref);
    RecoveryResult result;
    result.r_k.reserve(s_recov.size());
    for (const StateSnapshot& snap : s_recov) {
        const double d = snapshot_dist(spec, snap, s_ref);
        result.r_k.push_back(std::max(0.0, 1.0 - d / (d_drift + epsilon)));
    }
    for (std::size_t k = 0; k < result.r_k.size(); ++k) {
        if (result.r_k[k] >= tau_rec) {
            result.speed = static_cast<int>(k) + 1;
            break;
        }
    }
    double worst_regression = 0.0;
    for (std::size_t k = 0; k < result.r_k.size(); ++k)
        for (std::size_t later = k + 1; later < result.r_k.size(); ++later)
            worst_regression = std::max(worst_regression, result.r_k[k] - result.r_k[later]);
    result.stability = 1.0 - std::max(0.0, worst_regression);
    return result;
}

std::set<std::string> extract_agentic_identity(
    const std::map<std::string, std::vector<std::pair<int, std::string>>>& series,
    const std::map<std::string, double>& thresholds, double default_epsilon,
    const DistanceSpec& spec) {
    std::set<std::string> stable;
    for (const auto& [attribute, values] : series) {
        if (values.size() < 2)
            throw InsufficientHistory("attribute '" + attribute + "' has " +
                                      std::to_string(values.size()) +
                                      " timestamped values, needs >= 2");
        const auto custom = thresholds.find(attribute);
        const double eps = custom == thresholds.end() ? default_epsilon : custom->second;
        bool all_within = true;
        for (std::size_t i = 0; i < values.size() && all_within; ++i)
            for (std::size_t j = i + 1; j < values.size() && all_within; ++j)
                if (dist(spec, values[i].second, values[j].second) > eps) all_within = false;
        if (all_within) stable.insert(attribute);
    }
    return stable;
}

double composite_stability(const std::map<std::string, double>& scores,
                           const std::map<std::string, double>* weights) {
    if (scores.empty()) throw EmptyScores("composite needs at least one score");
    double weight_total = 0.0;
    double weighted = 0.0;
    for (const auto& [name, value] : scores) {
        double w = 1.0;
        if (weights) {
            const auto it = weights->find(name);
            if (it != weights->end()) w = it->second;
        }
        if (w < 0.0) throw NegativeWeight("weight for '" + name + "' is negative");
        weight_total += w;
        weighted += w * value;
    }
    if (weight_total == 0.0) throw NegativeWeight("all weights are zero");
    return weighted / weight_total;
}

DriftSeries drift_series(const std::vector<StateSnapshot>& snapshots,
                         const StateSnapshot& reference, const DistanceSpec& spec) {
    if (snapshots.empty()) throw EmptySnapshots("drift series needs at least one snapshot");
    DriftSeries series;
    series.reserve(snapshots.size());
    for (const StateSnapshot& snap : snapshots)
        series.emplace_back(snap.at_turn, snapshot_dist(spec, snap, reference));
    std::stable_sort(series.begin(), series.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    return series;
}

AttributeDrift attribute_drift(const AttributeMap& t0,
                               const std::vector<std::pair<int, AttributeMap>>& per_turn,
                               const DistanceSpec& spec) {
    const std::map<std::string, std::string> base = flatten_attributes(t0);
    AttributeDrift out;
    for (const auto& [key, base_value] : base) out[key] = {};
    for (const auto& [turn, attrs] : per_turn) {
        const std::map<std::string, std::string> flat = flatten_attributes(attrs);
        for (const auto& [key, base_value] : base) {
            const auto it = flat.find(key);
            if (it == flat.end()) {
                out[key].emplace_back(turn, 0.0);
            } else {
                const double d = dist(spec, it->second, base_value);
                out[key].emplace_back(turn, 1.0 - std::min(1.0, d));
            }
        }
    }
    return out;
}

}  // namespace aie
