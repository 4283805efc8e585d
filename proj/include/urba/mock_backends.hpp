// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "urba/backends.hpp"
#include "urba/fixture.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace urba {

inline constexpr std::string_view kNoContentCaption = "[no notable content]";
inline constexpr std::string_view kCannotTell = "I cannot tell from this image.";

/// Replays a fixed list of replies, then fails with script-exhausted.
class ScriptedChat final : public ChatBackend {
public:
    explicit ScriptedChat(std::vector<std::string> script);
    std::string chat(std::span<const Message> messages) override;
    std::size_t calls() const;

private:
    mutable std::mutex mutex_;
    std::vector<std::string> script_;
    std::size_t next_ = 0;
};

/// Replies by exact match on the last message, else picks a canned reply by
/// hash of the last message.
class RuleChat final : public ChatBackend {
public:
    RuleChat(std::map<std::string, std::string> rules, std::vector<std::string> canned);
    std::string chat(std::span<const Message> messages) override;

private:
    std::map<std::string, std::string> rules_;
    std::vector<std::string> canned_;
};

/// Unit vectors built from the hashed lowercase words of a text: the same
/// text always maps to the same vector, and texts sharing words score higher
/// than unrelated ones.
class HashEmbedder final : public EmbedBackend {
public:
    explicit HashEmbedder(std::size_t dim = 64, std::uint64_t seed = 0);
    std::vector<Embedding> embed(std::span<const std::string> texts) override;
    std::string id() const override;
    Embedding embed_one(std::string_view text) const;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

/// Perception driven by marker glyphs: reads marker ids from the pixels it
/// is given and answers from the plant manifest.
class FixtureVision final : public CaptionBackend, public VlmBackend, public GroundBackend {
public:
    explicit FixtureVision(std::shared_ptr<const FixtureManifest> manifest);

    std::string caption(const PixelWindow& image) override;
    std::string answer(const PixelWindow& image, std::string_view prompt) override;
    std::vector<GroundingBox> ground(const PixelWindow& image, std::string_view keyword) override;

    /// Known plants visible in `image`, by ascending id.
    std::vector<const Plant*> visible_plants(const PixelWindow& image) const;

private:
    std::string answer_question(const std::vector<const Plant*>& plants, std::string_view question) const;
    std::string compose(std::string_view prompt) const;

    std::shared_ptr<const FixtureManifest> manifest_;
};

} // namespace urba
