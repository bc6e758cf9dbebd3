#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aie/errors.hpp"

namespace aie {

struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dim() const { return values.size(); }
    bool operator==(const EmbeddingVector&) const = default;
};

using Embedder = std::function<EmbeddingVector(const std::string&)>;

enum class DistanceKind { normalized_edit, cosine_embedding, token_jaccard, exact };

const char* to_string(DistanceKind kind);
DistanceKind distance_kind_from_string(std::string_view name);

struct LocalEmbedderConfig {
    std::size_t dim = 64;
    std::uint64_t seed = 1;
};

// How to measure d(a, b), plus the threshold used by within(). For
// cosine_embedding an embedder must be reachable: either a bound callable
// (remote) or a local embedder config.
struct DistanceSpec {
    DistanceKind kind = DistanceKind::normalized_edit;
    double threshold = 0.2;
    std::optional<LocalEmbedderConfig> embedder_config;
    Embedder embedder;  // bound at runtime; wins over embedder_config when set
};

// raw Levenshtein distance (unit insert/delete/substitute costs)
std::size_t levenshtein(std::string_view a, std::string_view b);

// Levenshtein / max(|a|, |b|); 0 when both inputs are empty
double normalized_edit_distance(std::string_view a, std::string_view b);

// 1 - u.v / (|u||v|), clamped to [0, 2]
double cosine_distance(const EmbeddingVector& u, const EmbeddingVector& v);

// 1 - |A intersect B| / |A union B| over whitespace-split, case-folded
// token sets; 0 when both sets are empty
double token_jaccard_distance(std::string_view a, std::string_view b);

// Deterministic hashed character-trigram embedding of the case-folded text.
// Each trigram lands in a seeded-hash bucket with a +-1 sign drawn from a
// second hash bit; the bucket vector is L2-normalized. Text shorter than 3
// characters maps to the unit vector e0. dim must be >= 8.
EmbeddingVector local_embed(std::string_view text, std::size_t dim, std::uint64_t seed);

double dist(const DistanceSpec& spec, const std::string& a, const std::string& b);
double dist(const DistanceSpec& spec, const EmbeddingVector& u, const EmbeddingVector& v);
bool within(const DistanceSpec& spec, const std::string& a, const std::string& b);

// the embedder a cosine_embedding spec resolves to (throws EmbedderUnavailable)
Embedder resolve_embedder(const DistanceSpec& spec);

}  // namespace aie
