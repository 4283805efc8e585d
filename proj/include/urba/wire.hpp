// SPDX-License-Identifier: Apache-2.0
#pragma once

// JSON bodies of the /v1/* endpoints. Images travel as base64 PNG.

#include "urba/backends.hpp"
#include "urba/error.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace urba::wire {

inline constexpr std::size_t kDefaultMaxPayload = 24u * 1024u * 1024u;

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws undecodable-image on characters outside the alphabet or bad padding.
std::vector<std::uint8_t> base64_decode(std::string_view text);

struct ChatRequest {
    std::vector<Message> messages;
    friend bool operator==(const ChatRequest&, const ChatRequest&) = default;
};
struct CaptionRequest {
    std::string image_b64;
    friend bool operator==(const CaptionRequest&, const CaptionRequest&) = default;
};
struct VlmRequest {
    std::string image_b64;
    std::string prompt;
    friend bool operator==(const VlmRequest&, const VlmRequest&) = default;
};
struct GroundRequest {
    std::string image_b64;
    std::string keyword;
    friend bool operator==(const GroundRequest&, const GroundRequest&) = default;
};
struct EmbedRequest {
    std::vector<std::string> texts;
    friend bool operator==(const EmbedRequest&, const EmbedRequest&) = default;
};
struct TextResponse {
    std::string text;
    friend bool operator==(const TextResponse&, const TextResponse&) = default;
};
struct GroundResponse {
    std::vector<GroundingBox> boxes;
    friend bool operator==(const GroundResponse&, const GroundResponse&) = default;
};
struct EmbedResponse {
    std::vector<std::vector<double>> vectors;
    std::size_t dim = 0;
    friend bool operator==(const EmbedResponse&, const EmbedResponse&) = default;
};
struct ErrorResponse {
    std::string code;
    std::string message;
    friend bool operator==(const ErrorResponse&, const ErrorResponse&) = default;
};

std::string encode(const ChatRequest& r);
std::string encode(const CaptionRequest& r);
std::string encode(const VlmRequest& r);
std::string encode(const GroundRequest& r);
std::string encode(const EmbedRequest& r);
std::string encode(const TextResponse& r);
std::string encode(const GroundResponse& r);
std::string encode(const EmbedResponse& r);
std::string encode(const ErrorResponse& r);

// Decoders throw schema-violation on missing or mistyped fields.
ChatRequest decode_chat_request(std::string_view body);
CaptionRequest decode_caption_request(std::string_view body);
VlmRequest decode_vlm_request(std::string_view body);
GroundRequest decode_ground_request(std::string_view body);
EmbedRequest decode_embed_request(std::string_view body);
TextResponse decode_text_response(std::string_view body);
GroundResponse decode_ground_response(std::string_view body);
EmbedResponse decode_embed_response(std::string_view body);
ErrorResponse decode_error_response(std::string_view body);

std::string encode_image(const PixelWindow& window);
/// Throws undecodable-image.
PixelWindow decode_image(std::string_view image_b64);

/// HTTP status used for an error code on the wire.
int http_status_for(ErrorCode code);

} // namespace urba::wire
