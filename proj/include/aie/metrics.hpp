#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "aie/core.hpp"
#include "aie/distance.hpp"

namespace aie {

// How a continuity check decides is_correct(actual, expected). The default
// is case-insensitive substring containment of expected in actual.
struct CheckerSpec {
    enum class Kind { containment, distance, judge };
    Kind kind = Kind::containment;
    DistanceSpec distance;  // used when kind == distance
    std::function<bool(const std::string& actual, const std::string& expected)>
        judge;  // used when kind == judge
};

struct ContinuityCheck {
    std::string expected;
    std::string actual;
    CheckerSpec checker;
};

struct RecoveryResult {
    std::vector<double> r_k;
    std::optional<int> speed;  // first k reaching tau_rec; nullopt = not recovered
    double stability = 1.0;

    double final_r() const { return r_k.empty() ? 0.0 : r_k.back(); }
    bool operator==(const RecoveryResult&) const = default;
};

using DriftSeries = std::vector<std::pair<int, double>>;                 // (turn, distance)
using AttributeDrift = std::map<std::string, DriftSeries>;               // key -> (turn, similarity)

// One trial's (or one aggregate's) scores. Absent fields were not measured.
struct MetricReport {
    std::optional<double> identifiability;
    std::optional<double> continuity;
    std::optional<double> consistency;
    std::optional<double> persistence;
    std::optional<RecoveryResult> recovery;
    std::optional<double> composite;
    std::optional<DriftSeries> drift;
    std::optional<AttributeDrift> attribute_drift;

    std::map<std::string, double> present_scores() const;
};

// Fraction of representations within probe.threshold of the best-matching
// reference: max over references r of (1/N) * #{j : d(rep_j, r) <= delta}.
double identifiability(const std::vector<std::string>& reps, const ProbeSpec& probe);

// fraction of checks whose is_correct(actual, expected) holds
double continuity(const std::vector<ContinuityCheck>& checks);

bool is_correct(const CheckerSpec& checker, const std::string& actual,
                const std::string& expected);

// Mean over scenarios of the fraction of output pairs within spec.threshold.
double consistency(const std::vector<std::vector<std::string>>& scenarios,
                   const DistanceSpec& spec);

// Mean over consecutive snapshot pairs of max(0, 1 - d_t / (d_max + eps)),
// d_max taken over all snapshot pairs.
double persistence(const std::vector<StateSnapshot>& snapshots, const DistanceSpec& spec,
                   double epsilon);

// R_k = max(0, 1 - d(recov_k, ref) / (d(drift, ref) + eps)); speed = first k
// with R_k >= tau_rec; stability = 1 - largest regression across the R
// sequence.
RecoveryResult recovery_profile(const StateSnapshot& s_ref, const StateSnapshot& s_drift,
                                const std::vector<StateSnapshot>& s_recov,
                                const DistanceSpec& spec, double epsilon, double tau_rec);

// The stable-attribute subset: attributes whose value pairs all sit within
// the per-attribute threshold (default_epsilon when not listed).
std::set<std::string> extract_agentic_identity(
    const std::map<std::string, std::vector<std::pair<int, std::string>>>& series,
    const std::map<std::string, double>& thresholds, double default_epsilon,
    const DistanceSpec& spec);

// Weighted mean over the metrics present in scores; weights renormalized
// over present keys, uniform by default. Callers pass recovery as its final
// R_K value.
double composite_stability(const std::map<std::string, double>& scores,
                           const std::map<std::string, double>* weights = nullptr);

// per-snapshot distance from the reference snapshot, ordered by turn
DriftSeries drift_series(const std::vector<StateSnapshot>& snapshots,
                         const StateSnapshot& reference, const DistanceSpec& spec);

// Per-attribute similarity to the t0 template: 1 - min(1, d); attributes
// missing from a turn's map score 0 at that turn.
AttributeDrift attribute_drift(const AttributeMap& t0,
                               const std::vector<std::pair<int, AttributeMap>>& per_turn,
                               const DistanceSpec& spec);

}  // namespace aie
