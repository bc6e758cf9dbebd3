#include "aie/distance.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "aie/vec_kernels.hpp"

namespace aie {

const char* to_string(DistanceKind kind) {
    switch (kind) {
        case DistanceKind::normalized_edit: return "normalized-edit";
        case DistanceKind::cosine_embedding: return "cosine-embedding";
        case DistanceKind::token_jaccard: return "token-jaccard";
        case DistanceKind::exact: return "exact";
    }
    return "normalized-edit";
}

DistanceKind distance_kind_from_string(std::string_view name) {
    if (name == "normalized-edit") return DistanceKind::normalized_edit;
    if (name == "cosine-embedding") return DistanceKind::cosine_embedding;
    if (name == "token-jaccard") return DistanceKind::token_jaccard;
    if (name == "exact") return DistanceKind::exact;
    throw ValidationError("distance.kind", "unknown kind '" + std::string(name) + "'");
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
    if (a.size() > b.size()) std::swap(a, b);
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    std::vector<std::size_t> row(n + 1);
    for (std::size_t i = 0; i <= n; ++i) row[i] = i;
    for (std::size_t j = 1; j <= m; ++j) {
        std::size_t prev_diag = row[0];
        row[0] = j;
        for (std::size_t i = 1; i <= n; ++i) {
            const std::size_t prev = row[i];
            const std::size_t sub = prev_diag + (a[i - 1] == b[j - 1] ? 0 : 1);
            row[i] = std::min({row[i] + 1, row[i - 1] + 1, sub});
            prev_diag = prev;
        }
    }
    return row[n];
}

double normalized_edit_distance(std::string_view a, std::string_view b) {
    const std::size_t longest = std::max(a.size(), b.size());
    if (longest == 0) return 0.0;
    return static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

double cosine_distance(const EmbeddingVector& u, const EmbeddingVector& v) {
    if (u.dim() != v.dim())
        throw DimensionMismatch("cosine distance over dims " + std::to_string(u.dim()) + " and " +
                                std::to_string(v.dim()));
    const std::size_t n = u.dim();
    const double nu = simd::sum_squares(u.values.data(), n);
    const double nv = simd::sum_squares(v.values.data(), n);
    if (nu == 0.0 || nv == 0.0) throw ZeroVector("cosine distance of an all-zero vector");
    const double d = 1.0 - simd::dot(u.values.data(), v.values.data(), n) / std::sqrt(nu * nv);
    return std::clamp(d, 0.0, 2.0);
}

namespace {

std::set<std::string> fold_tokens(std::string_view text) {
    std::set<std::string> out;
    std::string current;
    for (const char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!current.empty()) out.insert(current);
            current.clear();
        } else {
            current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (!current.empty()) out.insert(current);
    return out;
}

// seeded FNV-1a over the given bytes
std::uint64_t seeded_hash(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = 1469598103934665603ULL ^ (seed * 0x9E3779B97F4A7C15ULL);
    for (const char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

double token_jaccard_distance(std::string_view a, std::string_view b) {
    const std::set<std::string> ta = fold_tokens(a);
    const std::set<std::string> tb = fold_tokens(b);
    if (ta.empty() && tb.empty()) return 0.0;
    std::size_t shared = 0;
    for (const auto& t : ta) shared += tb.count(t);
    const std::size_t total = ta.size() + tb.size() - shared;
    return 1.0 - static_cast<double>(shared) / static_cast<double>(total);
}

EmbeddingVector local_embed(std::string_view text, std::size_t dim, std::uint64_t seed) {
    if (dim < 8) throw DimTooSmall("local embedder needs dim >= 8, got " + std::to_string(dim));
    std::string folded;
    folded.reserve(text.size());
    for (const char c : text)
        folded.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));

    EmbeddingVector out;
    out.values.assign(dim, 0.0);
    if (folded.size() < 3) {
        out.values[0] = 1.0;
        return out;
    }
    for (std::size_t i = 0; i + 3 <= folded.size(); ++i) {
        const std::uint64_t h = seeded_hash(std::string_view(folded).substr(i, 3), seed);
        const std::size_t bucket = h % dim;
        const double sign = ((h >> 63) & 1U) ? -1.0 : 1.0;
        out.values[bucket] += sign;
    }
    const double norm2 = simd::sum_squares(out.values.data(), dim);
    if (norm2 == 0.0) {
        // opposing signs cancelled every bucket; fall back to the degenerate vector
        out.values.assign(dim, 0.0);
        out.values[0] = 1.0;
        return out;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& v : out.values) v *= inv;
    return out;
}

Embedder resolve_embedder(const DistanceSpec& spec) {
    if (spec.embedder) return spec.embedder;
    if (spec.embedder_config) {
        const LocalEmbedderConfig cfg = *spec.embedder_config;
        return [cfg](const std::string& text) { return local_embed(text, cfg.dim, cfg.seed); };
    }
    throw EmbedderUnavailable("cosine-embedding distance configured without an embedder");
}

double dist(const DistanceSpec& spec, const std::string& a, const std::string& b) {
    switch (spec.kind) {
        case DistanceKind::normalized_edit: return normalized_edit_distance(a, b);
        case DistanceKind::token_jaccard: return token_jaccard_distance(a, b);
        case DistanceKind::exact: return a == b ? 0.0 : 1.0;
        case DistanceKind::cosine_embedding: {
            const Embedder embed = resolve_embedder(spec);
            return cosine_distance(embed(a), embed(b));
        }
    }
    throw Error("unreachable distance kind");
}

double dist(const DistanceSpec& spec, const EmbeddingVector& u, const EmbeddingVector& v) {
    if (spec.kind != DistanceKind::cosine_embedding)
        throw Error("vector operands require a cosine-embedding spec");
    return cosine_distance(u, v);
}

bool within(const DistanceSpec& spec, const std::string& a, const std::string& b) {
    return dist(spec, a, b) <= spec.threshold;
}

}  // namespace aie
