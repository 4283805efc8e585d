// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "urba/abstraction.hpp"
#include "urba/backends.hpp"

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace urba {

inline constexpr double kScoreEpsilon = 1e-9;

struct ScoredChunk {
    int chunk_id = 0;
    double score = 0.0;
    std::string caption;
    BBox region;

    friend bool operator==(const ScoredChunk&, const ScoredChunk&) = default;
};

struct EmbeddedIndex {
    std::shared_ptr<const AbstractionIndex> base;
    std::vector<Embedding> embeddings;  // aligned with base->chunks
    std::string embedder_id;
};

/// Throws invalid-argument for empty or non-finite vectors, zero-norm for a
/// zero vector.
void check_embedding(const Embedding& e);

/// dot(a,b) / (|a| |b|). Throws dim-mismatch or zero-norm.
double cosine(const Embedding& a, const Embedding& b);

EmbeddedIndex embed_corpus(std::shared_ptr<const AbstractionIndex> index, EmbedBackend& embedder,
                           std::size_t batch_size = 32);

struct RetrieveOptions {
    bool include_failed = false;
};

/// Top-k of the index against an already embedded query, ordered by score
/// descending then chunk id ascending.
std::vector<ScoredChunk> rank(const EmbeddedIndex& eidx, const Embedding& query, int k,
                              const RetrieveOptions& options = {});

std::vector<ScoredChunk> retrieve(const EmbeddedIndex& eidx, std::string_view query, int k, EmbedBackend& embedder,
                                  const RetrieveOptions& options = {});

RegionSet aggregate_regions(const std::vector<ScoredChunk>& results);

/// Numbered lines "1. [chunk 3] bbox=[..] score=0.812345: caption".
std::string render_results(const std::vector<ScoredChunk>& results);

} // namespace urba
