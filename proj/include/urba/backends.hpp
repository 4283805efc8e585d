// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "urba/geometry.hpp"
#include "urba/image_store.hpp"

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace urba {

enum class Role { system, user, assistant };

std::string to_string(Role role);
Role parse_role(std::string_view name);

struct Message {
    Role role = Role::user;
    std::string content;
    friend bool operator==(const Message&, const Message&) = default;
};

/// A dense vector. Finite components; the dimension is values.size().
struct Embedding {
    std::vector<double> values;

    std::size_t dim() const noexcept { return values.size(); }
    friend bool operator==(const Embedding&, const Embedding&) = default;
};

struct GroundingBox {
    BBox bbox;
    double score = 0.0;
    std::string label;
    friend bool operator==(const GroundingBox&, const GroundingBox&) = default;
};

inline constexpr std::string_view kDefaultCaptionPrompt =
    "Describe all visible objects, text, people, and activities in this image region in detail.";

// Text only: a decision model never sees pixels.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string chat(std::span<const Message> messages) = 0;
};

class CaptionBackend {
public:
    virtual ~CaptionBackend() = default;
    virtual std::string caption(const PixelWindow& image) = 0;
};

class VlmBackend {
public:
    virtual ~VlmBackend() = default;
    virtual std::string answer(const PixelWindow& image, std::string_view prompt) = 0;
};

class GroundBackend {
public:
    virtual ~GroundBackend() = default;
    /// Boxes in the coordinates of `image` (0,0 at its top-left), score descending.
    virtual std::vector<GroundingBox> ground(const PixelWindow& image, std::string_view keyword) = 0;
};

class EmbedBackend {
public:
    virtual ~EmbedBackend() = default;
    virtual std::vector<Embedding> embed(std::span<const std::string> texts) = 0;
    /// Identifies the model so embeddings from different models are never mixed.
    virtual std::string id() const = 0;
};

/// Captions through a VLM with a fixed prompt, for setups without a
/// dedicated captioning endpoint.
class VlmCaptioner final : public CaptionBackend {
public:
    explicit VlmCaptioner(std::shared_ptr<VlmBackend> vlm, std::string prompt = std::string(kDefaultCaptionPrompt));
    std::string caption(const PixelWindow& image) override;

private:
    std::shared_ptr<VlmBackend> vlm_;
    std::string prompt_;
};

/// The perception and embedding roles an episode needs. Chat is supplied per
/// episode because scripted backends carry state.
struct Backends {
    std::shared_ptr<CaptionBackend> caption;
    std::shared_ptr<VlmBackend> vlm;
    std::shared_ptr<GroundBackend> ground;
    std::shared_ptr<EmbedBackend> embed;
};

} // namespace urba
