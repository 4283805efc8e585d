// SPDX-License-Identifier: Apache-2.0
#include "urba/retrieval.hpp"

#include "urba/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace urba {

void check_embedding(const Embedding& e) {
    if (e.values.empty()) throw Error(ErrorCode::invalid_argument, "empty embedding");
    double norm2 = 0.0;
    for (double v : e.values) {
        if (!std::isfinite(v)) throw Error(ErrorCode::invalid_argument, "embedding has a non-finite component");
        norm2 += v * v;
    }
    if (norm2 == 0.0) throw Error(ErrorCode::zero_norm, "zero embedding vector");
}

double cosine(const Embedding& a, const Embedding& b) {
    if (a.dim() != b.dim()) {
        throw Error(ErrorCode::dim_mismatch, fmt::format("embedding dims differ: {} vs {}", a.dim(), b.dim()));
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::zero_norm, "cosine of a zero vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

EmbeddedIndex embed_corpus(std::shared_ptr<const AbstractionIndex> index, EmbedBackend& embedder,
                           std::size_t batch_size) {
    if (!index) throw Error(ErrorCode::invalid_argument, "null index");
    batch_size = std::max<std::size_t>(batch_size, 1);
    EmbeddedIndex out;
    out.embedder_id = embedder.id();
    out.embeddings.reserve(index->chunks.size());
    std::vector<std::string> batch;
    for (std::size_t start = 0; start < index->chunks.size(); start += batch_size) {
        const std::size_t end = std::min(index->chunks.size(), start + batch_size);
        batch.clear();
        for (std::size_t i = start; i < end; ++i) batch.push_back(index->chunks[i].caption);
        auto vectors = embedder.embed(batch);
        if (vectors.size() != batch.size()) {
            throw Error(ErrorCode::embed_inconsistent,
                        fmt::format("embedder returned {} vectors for {} texts", vectors.size(), batch.size()));
        }
        for (auto& v : vectors) {
            check_embedding(v);
            if (!out.embeddings.empty() && v.dim() != out.embeddings.front().dim()) {
                throw Error(ErrorCode::embed_inconsistent,
                            fmt::format("embedding dim changed from {} to {}", out.embeddings.front().dim(), v.dim()));
            }
            out.embeddings.push_back(std::move(v));
        }
    }
    out.base = std::move(index);
    return out;
}

std::vector<ScoredChunk> rank(const EmbeddedIndex& eidx, const Embedding& query, int k,
                              const RetrieveOptions& options) {
    if (k < 1) throw Error(ErrorCode::invalid_argument, fmt::format("k must be >= 1, got {}", k));
    if (!eidx.base) return {};
    const auto& chunks = eidx.base->chunks;
    if (eidx.embeddings.size() != chunks.size()) {
        throw Error(ErrorCode::embed_inconsistent, "embeddings are not aligned with chunks");
    }
    std::vector<ScoredChunk> scored;
    scored.reserve(chunks.size());
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        if (chunks[i].failed && !options.include_failed) continue;
        scored.push_back({chunks[i].id, cosine(query, eidx.embeddings[i]), chunks[i].caption, chunks[i].region});
    }
    auto better = [](const ScoredChunk& a, const ScoredChunk& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.chunk_id < b.chunk_id;
    };
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), better);
    scored.resize(take);
    return scored;
}

std::vector<ScoredChunk> retrieve(const EmbeddedIndex& eidx, std::string_view query, int k, EmbedBackend& embedder,
                                  const RetrieveOptions& options) {
    if (query.empty()) throw Error(ErrorCode::invalid_argument, "empty query");
    if (k < 1) throw Error(ErrorCode::invalid_argument, fmt::format("k must be >= 1, got {}", k));
    if (!eidx.base || eidx.base->chunks.empty()) return {};
    if (embedder.id() != eidx.embedder_id) {
        throw Error(ErrorCode::embed_inconsistent,
                    fmt::format("index was embedded with '{}', query embedder is '{}'", eidx.embedder_id,
                                embedder.id()));
    }
    const std::string text(query);
    auto vectors = embedder.embed(std::span<const std::string>(&text, 1));
    if (vectors.size() != 1) {
        throw Error(ErrorCode::embed_inconsistent, fmt::format("embedder returned {} vectors for 1 text", vectors.size()));
    }
    check_embedding(vectors.front());
    return rank(eidx, vectors.front(), k, options);
}

RegionSet aggregate_regions(const std::vector<ScoredChunk>& results) {
    std::vector<BBox> regions;
    regions.reserve(results.size());
    for (const auto& r : results) regions.push_back(r.region);
    return union_regions(std::move(regions));
}

std::string render_results(const std::vector<ScoredChunk>& results) {
    std::string out;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        out += fmt::format("{}. [chunk {}] bbox={} score={:.6f}: {}\n", i + 1, r.chunk_id, r.region.to_string(),
                           r.score, r.caption);
    }
    return out;
}

} // namespace urba
