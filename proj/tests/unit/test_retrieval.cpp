// SPDX-License-Identifier: Apache-2.0
#include "urba/error.hpp"
#include "urba/mock_backends.hpp"
#include "urba/retrieval.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace urba;

namespace {

std::shared_ptr<AbstractionIndex> make_index(const std::vector<std::string>& captions) {
    auto idx = std::make_shared<AbstractionIndex>();
    idx->width = 100 * static_cast<std::int64_t>(captions.size());
    idx->height = 100;
    idx->requested_n = static_cast<int>(captions.size());
    idx->grid = {1, static_cast<int>(captions.size())};
    idx->budget = {256, 28};
    for (std::size_t i = 0; i < captions.size(); ++i) {
        const auto x = static_cast<std::int64_t>(i) * 100;
        idx->chunks.push_back({static_cast<int>(i), {x, 0, x + 100, 100}, captions[i], count_tokens(captions[i]), false});
    }
    return idx;
}

// Embedder that returns whatever vectors it is told to, for shape errors.
class FixedEmbedder : public EmbedBackend {
public:
    std::vector<std::vector<double>> replies;
    std::vector<Embedding> embed(std::span<const std::string> texts) override {
        std::vector<Embedding> out;
        for (std::size_t i = 0; i < texts.size() && next < replies.size(); ++i) out.push_back({replies[next++]});
        if (short_by > 0) out.resize(texts.size() - short_by);
        return out;
    }
    std::string id() const override { return "fixed"; }
    std::size_t short_by = 0;
    std::size_t next = 0;
};

long double cosine_oracle(const std::vector<double>& a, const std::vector<double>& b) {
    long double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<long double>(a[i]) * b[i];
        na += static_cast<long double>(a[i]) * a[i];
        nb += static_cast<long double>(b[i]) * b[i];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

} // namespace

TEST_CASE("cosine") {
    CHECK(cosine({{1, 0}}, {{1, 0}}) == doctest::Approx(1.0));
    CHECK(cosine({{1, 0}}, {{0, 1}}) == 0.0);
    CHECK(std::abs(cosine({{1, 2}}, {{2, 1}}) - 4.0 / (std::sqrt(5.0) * std::sqrt(5.0))) < 1e-12);
    CHECK(std::abs(cosine({{1, 2}}, {{2, 1}}) - 0.8) < 1e-12);
    CHECK_THROWS_WITH_AS(cosine({{1, 2}}, {{1, 2, 3}}), doctest::Contains("dim"), Error);
    try {
        cosine({{0, 0}}, {{1, 1}});
        FAIL("zero vector accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::zero_norm);
    }
}

TEST_CASE("cosine properties") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    for (int t = 0; t < 500; ++t) {
        Embedding a, b;
        for (int i = 0; i < 64; ++i) {
            a.values.push_back(g(rng));
            b.values.push_back(g(rng));
        }
        CHECK(std::abs(cosine(a, a) - 1.0) < 1e-9);
        CHECK(std::abs(cosine(a, b) - cosine(b, a)) < 1e-12);
        CHECK(std::abs(static_cast<long double>(cosine(a, b)) - cosine_oracle(a.values, b.values)) < 1e-9L);
    }
}

TEST_CASE("identical text retrieves its chunk with score 1") {
    HashEmbedder emb;
    const auto idx = make_index({"green field with cows", "busy harbor with cranes", "red pagoda beside a pond",
                                 "empty parking lot"});
    const auto eidx = embed_corpus(idx, emb);
    CHECK(eidx.embeddings.size() == 4);
    CHECK(eidx.embeddings[0].dim() == 64);
    CHECK(eidx.embedder_id == emb.id());
    const auto top = retrieve(eidx, "red pagoda beside a pond", 1, emb);
    REQUIRE(top.size() == 1);
    CHECK(top[0].chunk_id == 2);
    CHECK(std::abs(top[0].score - 1.0) < 1e-9);
}

TEST_CASE("k is clamped to the available chunks") {
    HashEmbedder emb;
    const auto eidx = embed_corpus(make_index({"a b", "c d", "e f"}), emb);
    CHECK(retrieve(eidx, "a", 5, emb).size() == 3);
    CHECK(retrieve(embed_corpus(make_index({}), emb), "a", 5, emb).empty());
    CHECK_THROWS_AS(retrieve(eidx, "", 2, emb), Error);
}

TEST_CASE("failed chunks are excluded unless requested") {
    HashEmbedder emb;
    auto idx = make_index({"river", std::string(kPlaceholderCaption), "river bank"});
    idx->chunks[1].failed = true;
    const auto eidx = embed_corpus(idx, emb);
    CHECK(eidx.embeddings[1] == emb.embed_one(kPlaceholderCaption));
    for (const auto& r : retrieve(eidx, "uncaptioned", 3, emb)) CHECK(r.chunk_id != 1);
    CHECK(retrieve(eidx, "uncaptioned", 3, emb, RetrieveOptions{true}).size() == 3);
}

TEST_CASE("embed_corpus detects inconsistent backends") {
    const auto idx = make_index({"a", "b", "c", "d", "e", "f", "g", "h"});
    FixedEmbedder short_reply;
    short_reply.replies.assign(8, {1.0, 0.0});
    short_reply.short_by = 1;
    CHECK_THROWS_WITH_AS(embed_corpus(idx, short_reply), doctest::Contains("7"), Error);

    FixedEmbedder ragged;
    ragged.replies = {{1, 0}, {1, 0}, {1, 0, 0}, {1, 0}, {1, 0}, {1, 0}, {1, 0}, {1, 0}};
    try {
        embed_corpus(idx, ragged, 2);
        FAIL("ragged dims accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::embed_inconsistent);
    }
}

TEST_CASE("rank equals a brute-force sort") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g;
    for (int t = 0; t < 300; ++t) {
        const int n = static_cast<int>(rng() % 33);
        const int k = 1 + static_cast<int>(rng() % 10);
        std::vector<std::string> caps(n, "c");
        EmbeddedIndex eidx{make_index(caps), {}, "test"};
        for (int i = 0; i < n; ++i) {
            Embedding e;
            for (int d = 0; d < 64; ++d) e.values.push_back(g(rng));
            // occasional duplicates to exercise tie-breaking
            if (i > 0 && rng() % 5 == 0) e = eidx.embeddings[rng() % i];
            eidx.embeddings.push_back(e);
        }
        Embedding q;
        for (int d = 0; d < 64; ++d) q.values.push_back(g(rng));

        std::vector<std::pair<double, int>> all;
        for (int i = 0; i < n; ++i) all.emplace_back(cosine(q, eidx.embeddings[i]), i);
        std::sort(all.begin(), all.end(), [](auto& a, auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        all.resize(std::min<std::size_t>(all.size(), k));

        const auto got = rank(eidx, q, k);
        REQUIRE(got.size() == all.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].chunk_id == all[i].second);
            CHECK(got[i].score == all[i].first);
        }

        // Positive scaling moves no score by more than 1e-9. A power-of-two
        // factor is exact in binary floating point, so ties survive it and the
        // order must be identical.
        if (n > 0) {
            const auto victim = rng() % n;
            for (const double lambda : {7.5, 4.0}) {
                auto scaled = eidx;
                for (auto& v : scaled.embeddings[victim].values) v *= lambda;
                const auto again = rank(scaled, q, n);
                const auto base = rank(eidx, q, n);
                for (std::size_t i = 0; i < base.size(); ++i) {
                    const auto it = std::find_if(again.begin(), again.end(),
                                                 [&](const ScoredChunk& s) { return s.chunk_id == base[i].chunk_id; });
                    CHECK(std::abs(it->score - base[i].score) < 1e-9);
                    if (lambda == 4.0) CHECK(again[i].chunk_id == base[i].chunk_id);
                }
            }
        }
    }
}

TEST_CASE("aggregate_regions and rendering") {
    CHECK(aggregate_regions({}).empty());
    const std::vector<ScoredChunk> rs{{1, 0.5, "left", {0, 0, 10, 10}},
                                      {2, 0.25, "right", {10, 0, 20, 10}},
                                      {1, 0.5, "left", {0, 0, 10, 10}}};
    const auto set = aggregate_regions(rs);
    CHECK(set.regions.size() == 2);
    CHECK(set.enclosing == BBox{0, 0, 20, 10});
    CHECK(render_results({rs[0], rs[1]}) ==
          "1. [chunk 1] bbox=[0,0,10,10] score=0.500000: left\n"
          "2. [chunk 2] bbox=[10,0,20,10] score=0.250000: right\n");
    CHECK(render_results({{4, -0.1234567, "neg", {0, 0, 1, 1}}}) == "1. [chunk 4] bbox=[0,0,1,1] score=-0.123457: neg\n");
}
