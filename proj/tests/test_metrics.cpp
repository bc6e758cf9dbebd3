#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "aie/metrics.hpp"

using namespace aie;

// Every oracle below recomputes the metric from its definition with plain
// loops and an independently written edit distance, so agreement is evidence
// rather than tautology.
namespace {

std::size_t lev_oracle(const std::string& a, const std::string& b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::vector<std::size_t>> d(n + 1, std::vector<std::size_t>(m + 1, 0));
    for (std::size_t i = 0; i <= n; ++i) d[i][0] = i;
    for (std::size_t j = 0; j <= m; ++j) d[0][j] = j;
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= m; ++j)
            d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1,
                                d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
    return d[n][m];
}

double ned_oracle(const std::string& a, const std::string& b) {
    if (a.empty() && b.empty()) return 0.0;
    return static_cast<double>(lev_oracle(a, b)) /
           static_cast<double>(std::max(a.size(), b.size()));
}

double identifiability_oracle(const std::vector<std::string>& reps,
                              const std::vector<std::string>& refs, double delta) {
    double best = 0.0;
    for (const auto& ref : refs) {
        int matches = 0;
        for (const auto& rep : reps)
            if (ned_oracle(rep, ref) <= delta) ++matches;
        best = std::max(best, static_cast<double>(matches) / static_cast<double>(reps.size()));
    }
    return best;
}

double consistency_oracle(const std::vector<std::vector<std::string>>& scenarios,
                          double delta_c) {
    double total = 0.0;
    for (const auto& outputs : scenarios) {
        int agree = 0, pairs = 0;
        for (std::size_t j = 0; j < outputs.size(); ++j)
            for (std::size_t k = j + 1; k < outputs.size(); ++k) {
                ++pairs;
                if (ned_oracle(outputs[j], outputs[k]) <= delta_c) ++agree;
            }
        total += static_cast<double>(agree) / static_cast<double>(pairs);
    }
    return total / static_cast<double>(scenarios.size());
}

double persistence_oracle(const std::vector<std::string>& texts, double epsilon) {
    double d_max = 0.0;
    for (std::size_t i = 0; i < texts.size(); ++i)
        for (std::size_t j = i + 1; j < texts.size(); ++j)
            d_max = std::max(d_max, ned_oracle(texts[i], texts[j]));
    double total = 0.0;
    for (std::size_t t = 0; t + 1 < texts.size(); ++t)
        total += std::max(0.0, 1.0 - ned_oracle(texts[t], texts[t + 1]) / (d_max + epsilon));
    return total / static_cast<double>(texts.size() - 1);
}

struct RecoveryOracle {
    std::vector<double> r_k;
    std::optional<int> speed;
    double stability = 1.0;
};

RecoveryOracle recovery_oracle(const std::string& ref, const std::string& drift,
                               const std::vector<std::string>& recov, double epsilon,
                               double tau) {
    RecoveryOracle out;
    const double d_drift = ned_oracle(drift, ref);
    for (const auto& text : recov)
        out.r_k.push_back(std::max(0.0, 1.0 - ned_oracle(text, ref) / (d_drift + epsilon)));
    for (std::size_t k = 0; k < out.r_k.size(); ++k)
        if (out.r_k[k] >= tau) {
            out.speed = static_cast<int>(k) + 1;
            break;
        }
    double regression = 0.0;
    for (std::size_t k = 0; k < out.r_k.size(); ++k)
        for (std::size_t later = k + 1; later < out.r_k.size(); ++later)
            regression = std::max(regression, out.r_k[k] - out.r_k[later]);
    out.stability = 1.0 - std::max(0.0, regression);
    return out;
}

std::string random_string(std::mt19937& rng, std::size_t max_len) {
    std::uniform_int_distribution<std::size_t> len(0, max_len);
    std::uniform_int_distribution<int> pick(0, 2);
    std::string out(len(rng), ' ');
    for (char& c : out) c = static_cast<char>('a' + pick(rng));
    return out;
}

StateSnapshot snap_at(int turn, std::string text) {
    StateSnapshot s;
    s.at_turn = turn;
    s.representation_text = std::move(text);
    return s;
}

DistanceSpec edit_spec(double threshold = 0.2) {
    DistanceSpec spec;
    spec.kind = DistanceKind::normalized_edit;
    spec.threshold = threshold;
    return spec;
}

}  // namespace

TEST_CASE("identifiability worked value: three near misses and one stranger") {
    ProbeSpec probe;
    probe.references = {"Atlas, research assistant"};
    probe.threshold = 0.2;
    const std::vector<std::string> reps = {
        "Atlas, research assistant",
        "Atlas research assistant",
        "Atlas, research asistant",
        "HelperBot",
    };
    CHECK(identifiability(reps, probe) == 0.75);
}

TEST_CASE("identifiability matches the exhaustive oracle on random instances") {
    std::mt19937 rng(101);
    std::uniform_int_distribution<int> count(1, 6);
    std::uniform_real_distribution<double> delta(0.0, 1.0);
    for (int i = 0; i < 300; ++i) {
        std::vector<std::string> reps, refs;
        for (int j = count(rng); j > 0; --j) reps.push_back(random_string(rng, 5));
        for (int j = count(rng); j > 0; --j) refs.push_back(random_string(rng, 5));
        ProbeSpec probe;
        probe.references = refs;
        probe.threshold = delta(rng);
        const double got = identifiability(reps, probe);
        const double want = identifiability_oracle(reps, refs, probe.threshold);
        CHECK(std::abs(got - want) <= 1e-12);
        CHECK(got >= 0.0);
        CHECK(got <= 1.0);
    }
}

TEST_CASE("identifiability is invariant under permutation of reps and references") {
    std::mt19937 rng(55);
    for (int i = 0; i < 50; ++i) {
        std::vector<std::string> reps, refs;
        for (int j = 0; j < 4; ++j) reps.push_back(random_string(rng, 5));
        for (int j = 0; j < 3; ++j) refs.push_back(random_string(rng, 5));
        ProbeSpec probe;
        probe.references = refs;
        probe.threshold = 0.4;
        const double base = identifiability(reps, probe);
        std::shuffle(reps.begin(), reps.end(), rng);
        std::shuffle(probe.references.begin(), probe.references.end(), rng);
        CHECK(identifiability(reps, probe) == base);
    }
}

TEST_CASE("identifiability is non-decreasing in the match threshold") {
    std::mt19937 rng(56);
    for (int i = 0; i < 100; ++i) {
        std::vector<std::string> reps = {random_string(rng, 6), random_string(rng, 6),
                                         random_string(rng, 6)};
        ProbeSpec probe;
        probe.references = {random_string(rng, 6), random_string(rng, 6)};
        double prev = -1.0;
        for (double delta : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) {
            probe.threshold = delta;
            const double now = identifiability(reps, probe);
            CHECK(now >= prev);
            prev = now;
        }
        CHECK(prev == 1.0);  // everything matches at delta = 1
    }
}

TEST_CASE("identifiability rejects empty inputs") {
    ProbeSpec probe;
    probe.references = {"ref"};
    CHECK_THROWS_AS(identifiability({}, probe), EmptyReps);
    probe.references.clear();
    CHECK_THROWS_AS(identifiability({"rep"}, probe), EmptyReferences);
}

TEST_CASE("continuity worked value: four of five recalls hold") {
    CheckerSpec contain;  // default containment
    std::vector<ContinuityCheck> checks = {
        {"2934", "You assigned me ID 2934", contain},
        {"blue", "The color you chose was blue.", contain},
        {"seven", "It was seven items.", contain},
        {"garnet", "I believe it was amethyst.", contain},
        {"north", "Heading north as instructed.", contain},
    };
    CHECK(continuity(checks) == 0.8);
}

TEST_CASE("containment checking folds case and accepts empty expected") {
    CheckerSpec contain;
    CHECK(is_correct(contain, "The ID is 2934", "id is 2934"));
    CHECK(is_correct(contain, "SHOUTED ANSWER", "shouted"));
    CHECK(is_correct(contain, "anything", ""));
    CHECK_FALSE(is_correct(contain, "nothing relevant", "2934"));
}

TEST_CASE("distance and judge checkers") {
    CheckerSpec by_distance;
    by_distance.kind = CheckerSpec::Kind::distance;
    by_distance.distance = edit_spec(0.3);
    CHECK(is_correct(by_distance, "recieve", "receive"));
    CHECK_FALSE(is_correct(by_distance, "transmit", "receive"));

    CheckerSpec by_judge;
    by_judge.kind = CheckerSpec::Kind::judge;
    by_judge.judge = [](const std::string& actual, const std::string& expected) {
        return actual.size() == expected.size();
    };
    CHECK(is_correct(by_judge, "abc", "xyz"));
    CHECK_FALSE(is_correct(by_judge, "abc", "wxyz"));

    CheckerSpec broken;
    broken.kind = CheckerSpec::Kind::judge;
    CHECK_THROWS_AS(is_correct(broken, "a", "b"), Error);
}

TEST_CASE("continuity rejects an empty check list") {
    CHECK_THROWS_AS(continuity({}), EmptyChecks);
}

TEST_CASE("consistency worked values") {
    // one pair of three sits within 0.4: d(abc,abd)=1/3, d(abc,xyz)=1, d(abd,xyz)=1
    CHECK(consistency({{"abc", "abd", "xyz"}}, edit_spec(0.4)) == 1.0 / 3.0);
    // a fully agreeing scenario averages in
    CHECK(consistency({{"same", "same", "same"}, {"abc", "abd", "xyz"}}, edit_spec(0.4)) ==
          doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("consistency matches the exhaustive pair oracle on random instances") {
    std::mt19937 rng(202);
    std::uniform_int_distribution<int> scenario_count(1, 4);
    std::uniform_int_distribution<int> output_count(2, 6);
    std::uniform_real_distribution<double> delta(0.0, 1.0);
    for (int i = 0; i < 300; ++i) {
        std::vector<std::vector<std::string>> scenarios(scenario_count(rng));
        for (auto& outputs : scenarios)
            for (int j = output_count(rng); j > 0; --j) outputs.push_back(random_string(rng, 5));
        const double delta_c = delta(rng);
        const double got = consistency(scenarios, edit_spec(delta_c));
        CHECK(std::abs(got - consistency_oracle(scenarios, delta_c)) <= 1e-12);
        CHECK(got >= 0.0);
        CHECK(got <= 1.0);
    }
}

TEST_CASE("consistency is invariant under permutation within a scenario") {
    std::mt19937 rng(57);
    for (int i = 0; i < 50; ++i) {
        std::vector<std::string> outputs;
        for (int j = 0; j < 5; ++j) outputs.push_back(random_string(rng, 5));
        const double base = consistency({outputs}, edit_spec(0.4));
        std::shuffle(outputs.begin(), outputs.end(), rng);
        CHECK(consistency({outputs}, edit_spec(0.4)) == base);
    }
}

TEST_CASE("consistency is non-decreasing in the agreement threshold") {
    std::mt19937 rng(58);
    for (int i = 0; i < 100; ++i) {
        std::vector<std::vector<std::string>> scenarios = {
            {random_string(rng, 6), random_string(rng, 6), random_string(rng, 6)},
            {random_string(rng, 6), random_string(rng, 6)},
        };
        double prev = -1.0;
        for (double delta : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            const double now = consistency(scenarios, edit_spec(delta));
            CHECK(now >= prev);
            prev = now;
        }
        CHECK(prev == 1.0);
    }
}

TEST_CASE("consistency rejects undersized scenarios") {
    CHECK_THROWS_AS(consistency({}, edit_spec()), TooFewOutputs);
    CHECK_THROWS_AS(consistency({{"only one"}}, edit_spec()), TooFewOutputs);
    CHECK_THROWS_AS(consistency({{"a", "b"}, {}}, edit_spec()), TooFewOutputs);
}

TEST_CASE("persistence worked value: two steps against a unit diameter") {
    const std::vector<StateSnapshot> snaps = {snap_at(0, "aaaa"), snap_at(1, "aaab"),
                                              snap_at(2, "bbbb")};
    // consecutive distances 0.25 and 0.75; d_max = d(aaaa, bbbb) = 1
    CHECK(persistence(snaps, edit_spec(), 1e-9) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("persistence matches the plain-loop oracle on random instances") {
    std::mt19937 rng(303);
    std::uniform_int_distribution<int> count(2, 6);
    for (int i = 0; i < 300; ++i) {
        std::vector<std::string> texts;
        for (int j = count(rng); j > 0; --j) texts.push_back(random_string(rng, 5));
        std::vector<StateSnapshot> snaps;
        for (std::size_t t = 0; t < texts.size(); ++t)
            snaps.push_back(snap_at(static_cast<int>(t), texts[t]));
        const double got = persistence(snaps, edit_spec(), 1e-9);
        CHECK(std::abs(got - persistence_oracle(texts, 1e-9)) <= 1e-12);
        CHECK(got >= 0.0);
        CHECK(got <= 1.0);
    }
}

TEST_CASE("persistence of an unchanged state is 1") {
    const std::vector<StateSnapshot> snaps = {snap_at(0, "stable"), snap_at(1, "stable"),
                                              snap_at(2, "stable")};
    CHECK(persistence(snaps, edit_spec(), 1e-9) == 1.0);
}

TEST_CASE("persistence uses embeddings when the spec asks for cosine") {
    DistanceSpec spec;
    spec.kind = DistanceKind::cosine_embedding;
    // no embedder anywhere: only the attached vectors can carry the distance
    StateSnapshot a = snap_at(0, "ignored");
    StateSnapshot b = snap_at(1, "ignored");
    StateSnapshot c = snap_at(2, "ignored");
    a.embedding = EmbeddingVector{{1.0, 0.0}};
    b.embedding = EmbeddingVector{{1.0, 0.0}};
    c.embedding = EmbeddingVector{{0.0, 1.0}};
    // consecutive distances 0 and 1; d_max = 1
    CHECK(persistence({a, b, c}, spec, 1e-9) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("persistence rejects fewer than two snapshots") {
    CHECK_THROWS_AS(persistence({}, edit_spec(), 1e-9), TooFewSnapshots);
    CHECK_THROWS_AS(persistence({snap_at(0, "x")}, edit_spec(), 1e-9), TooFewSnapshots);
}

TEST_CASE("recovery worked value: drift 0.8 corrected through 0.4, 0.2, 0.2") {
    const StateSnapshot ref = snap_at(0, "aaaaaaaaaa");
    const StateSnapshot drift = snap_at(1, "bbbbbbbbaa");             // d = 0.8
    const std::vector<StateSnapshot> recov = {snap_at(2, "bbbbaaaaaa"),   // d = 0.4
                                              snap_at(3, "bbaaaaaaaa"),   // d = 0.2
                                              snap_at(4, "bbaaaaaaaa")};  // d = 0.2
    const RecoveryResult r = recovery_profile(ref, drift, recov, edit_spec(), 1e-9, 0.7);
    REQUIRE(r.r_k.size() == 3);
    CHECK(r.r_k[0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(r.r_k[1] == doctest::Approx(0.75).epsilon(1e-6));
    CHECK(r.r_k[2] == doctest::Approx(0.75).epsilon(1e-6));
    REQUIRE(r.speed.has_value());
    CHECK(*r.speed == 2);
    CHECK(r.stability == 1.0);
    CHECK(r.final_r() == doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("recovery matches the oracle on random instances") {
    std::mt19937 rng(404);
    std::uniform_int_distribution<int> count(1, 6);
    std::uniform_real_distribution<double> tau(0.0, 1.0);
    for (int i = 0; i < 300; ++i) {
        const std::string ref_text = random_string(rng, 5);
        const std::string drift_text = random_string(rng, 5);
        std::vector<std::string> recov_texts;
        for (int j = count(rng); j > 0; --j) recov_texts.push_back(random_string(rng, 5));

        std::vector<StateSnapshot> recov;
        for (std::size_t k = 0; k < recov_texts.size(); ++k)
            recov.push_back(snap_at(static_cast<int>(k) + 2, recov_texts[k]));
        const double tau_rec = tau(rng);
        const RecoveryResult got = recovery_profile(snap_at(0, ref_text), snap_at(1, drift_text),
                                                    recov, edit_spec(), 1e-9, tau_rec);
        const RecoveryOracle want =
            recovery_oracle(ref_text, drift_text, recov_texts, 1e-9, tau_rec);
        REQUIRE(got.r_k.size() == want.r_k.size());
        for (std::size_t k = 0; k < want.r_k.size(); ++k) {
            CHECK(std::abs(got.r_k[k] - want.r_k[k]) <= 1e-12);
            CHECK(got.r_k[k] >= 0.0);
            CHECK(got.r_k[k] <= 1.0);
        }
        CHECK(got.speed == want.speed);
        CHECK(std::abs(got.stability - want.stability) <= 1e-12);
    }
}

TEST_CASE("a never-recovering sequence reports no speed") {
    const RecoveryResult r = recovery_profile(snap_at(0, "aaaa"), snap_at(1, "bbbb"),
                                              {snap_at(2, "bbbb"), snap_at(3, "bbba")},
                                              edit_spec(), 1e-9, 0.9);
    CHECK_FALSE(r.speed.has_value());
}

TEST_CASE("a regression after recovery lowers stability") {
    // distances to ref: drift 1.0; recov 0.0 then 0.5 -> R = (1, 0.5), regression 0.5
    const RecoveryResult r = recovery_profile(snap_at(0, "aaaa"), snap_at(1, "bbbb"),
                                              {snap_at(2, "aaaa"), snap_at(3, "bbaa")},
                                              edit_spec(), 1e-9, 0.9);
    CHECK(r.stability == doctest::Approx(0.5).epsilon(1e-6));
    REQUIRE(r.speed.has_value());
    CHECK(*r.speed == 1);
    CHECK(r.final_r() == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("recovery rejects an empty correction sequence") {
    CHECK_THROWS_AS(recovery_profile(snap_at(0, "a"), snap_at(1, "b"), {}, edit_spec(), 1e-9, 0.9),
                    EmptyRecoverySequence);
}

TEST_CASE("empty recovery result reports final r of zero") {
    CHECK(RecoveryResult{}.final_r() == 0.0);
}

TEST_CASE("stable attribute extraction keeps constant attributes only") {
    const std::map<std::string, std::vector<std::pair<int, std::string>>> series = {
        {"role", {{1, "guide"}, {2, "guide"}, {3, "guide"}}},
        {"version", {{1, "1.0"}, {2, "2.0"}, {3, "1.0"}}},
    };
    // d("1.0", "2.0") = 1/3 exceeds 0.2, so version drops out
    CHECK(extract_agentic_identity(series, {}, 0.2, edit_spec()) ==
          std::set<std::string>{"role"});

    // an infinite tolerance admits everything
    CHECK(extract_agentic_identity(series, {}, std::numeric_limits<double>::infinity(),
                                   edit_spec()) == std::set<std::string>{"role", "version"});

    // a zero tolerance admits exactly the constant attributes
    CHECK(extract_agentic_identity(series, {}, 0.0, edit_spec()) ==
          std::set<std::string>{"role"});

    // per-attribute thresholds override the default
    CHECK(extract_agentic_identity(series, {{"version", 0.5}}, 0.0, edit_spec()) ==
          std::set<std::string>{"role", "version"});
}

TEST_CASE("stable attribute extraction needs two points per attribute") {
    const std::map<std::string, std::vector<std::pair<int, std::string>>> series = {
        {"role", {{1, "guide"}}},
    };
    CHECK_THROWS_AS(extract_agentic_identity(series, {}, 0.2, edit_spec()), InsufficientHistory);
}

TEST_CASE("composite worked values") {
    const std::map<std::string, double> scores = {{"identifiability", 0.0},
                                                  {"continuity", 0.0},
                                                  {"consistency", 1.0},
                                                  {"persistence", 1.0},
                                                  {"recovery", 1.0}};
    CHECK(composite_stability(scores) == 0.6);

    const std::map<std::string, double> two = {{"identifiability", 0.0}, {"continuity", 1.0}};
    const std::map<std::string, double> weights = {{"identifiability", 0.0}};
    CHECK(composite_stability(two, &weights) == 1.0);
}

TEST_CASE("composite stays within the hull of its inputs") {
    std::mt19937 rng(505);
    std::uniform_real_distribution<double> val(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const std::map<std::string, double> scores = {
            {"identifiability", val(rng)}, {"continuity", val(rng)}, {"consistency", val(rng)}};
        double lo = 1.0, hi = 0.0;
        for (const auto& [name, v] : scores) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const double c = composite_stability(scores);
        CHECK(c >= lo - 1e-12);
        CHECK(c <= hi + 1e-12);
    }
}

TEST_CASE("composite input validation") {
    CHECK_THROWS_AS(composite_stability({}), EmptyScores);
    const std::map<std::string, double> scores = {{"identifiability", 0.5}};
    const std::map<std::string, double> negative = {{"identifiability", -1.0}};
    CHECK_THROWS_AS(composite_stability(scores, &negative), NegativeWeight);
    const std::map<std::string, double> zeros = {{"identifiability", 0.0}};
    CHECK_THROWS_AS(composite_stability(scores, &zeros), NegativeWeight);
}

TEST_CASE("drift series orders by turn and measures against the reference") {
    const StateSnapshot ref = snap_at(0, "aaaa");
    // handed over out of turn order on purpose
    const std::vector<StateSnapshot> snaps = {snap_at(9, "bbbb"), snap_at(3, "aaab"),
                                              snap_at(5, "aabb")};
    const DriftSeries series = drift_series(snaps, ref, edit_spec());
    REQUIRE(series.size() == 3);
    CHECK(series[0] == std::pair<int, double>(3, 0.25));
    CHECK(series[1] == std::pair<int, double>(5, 0.5));
    CHECK(series[2] == std::pair<int, double>(9, 1.0));
    CHECK_THROWS_AS(drift_series({}, ref, edit_spec()), EmptySnapshots);
}

TEST_CASE("attribute drift worked value: one typo costs a seventh") {
    const AttributeMap t0 = {{"style", {{"tone", "precise"}}}};
    const std::vector<std::pair<int, AttributeMap>> per_turn = {
        {3, {{"style", {{"tone", "precize"}}}}},
    };
    const AttributeDrift out = attribute_drift(t0, per_turn, edit_spec());
    REQUIRE(out.count("style.tone") == 1);
    REQUIRE(out.at("style.tone").size() == 1);
    CHECK(out.at("style.tone")[0].first == 3);
    CHECK(out.at("style.tone")[0].second == doctest::Approx(1.0 - 1.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("attribute drift scores missing attributes as zero") {
    const AttributeMap t0 = {{"identity", {{"name", "Iris"}, {"role", "navigator"}}}};
    const std::vector<std::pair<int, AttributeMap>> per_turn = {
        {1, {{"identity", {{"name", "Iris"}}}}},  // role absent this turn
        {2, {}},                                  // everything absent
    };
    const AttributeDrift out = attribute_drift(t0, per_turn, edit_spec());
    REQUIRE(out.size() == 2);
    CHECK(out.at("identity.name")[0].second == 1.0);
    CHECK(out.at("identity.name")[1].second == 0.0);
    CHECK(out.at("identity.role")[0].second == 0.0);
    CHECK(out.at("identity.role")[1].second == 0.0);
}

TEST_CASE("present scores maps recovery to its final value") {
    MetricReport report;
    CHECK(report.present_scores().empty());
    report.identifiability = 0.4;
    report.recovery = RecoveryResult{{0.5, 0.9}, 2, 1.0};
    const auto scores = report.present_scores();
    REQUIRE(scores.size() == 2);
    CHECK(scores.at("identifiability") == 0.4);
    CHECK(scores.at("recovery") == 0.9);
}
