// SPDX-License-Identifier: Apache-2.0
#include "urba/wire.hpp"

#include "urba/codecs.hpp"
#include "urba/error.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <array>
#include <cmath>

namespace urba::wire {

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

using Json = nlohmann::json;

Json parse_body(std::string_view body) {
    try {
        auto j = Json::parse(body);
        if (!j.is_object()) throw Error(ErrorCode::schema_violation, "body is not a JSON object");
        return j;
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::schema_violation, fmt::format("body is not JSON: {}", e.what()));
    }
}

const Json& require(const Json& j, const char* key) {
    if (!j.contains(key)) throw Error(ErrorCode::schema_violation, fmt::format("missing field '{}'", key));
    return j.at(key);
}

std::string text_field(const Json& j, const char* key) {
    const auto& v = require(j, key);
    if (!v.is_string()) throw Error(ErrorCode::schema_violation, fmt::format("field '{}' must be a string", key));
    return v.get<std::string>();
}

} // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (std::uint32_t{bytes[i]} << 16) | (std::uint32_t{bytes[i + 1]} << 8) | bytes[i + 2];
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += kAlphabet[v & 63];
    }
    if (i < bytes.size()) {
        std::uint32_t v = std::uint32_t{bytes[i]} << 16;
        if (i + 1 < bytes.size()) v |= std::uint32_t{bytes[i + 1]} << 8;
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += (i + 1 < bytes.size()) ? kAlphabet[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    static const auto table = [] {
        std::array<int, 256> t{};
        t.fill(-1);
        for (int i = 0; i < 64; ++i) t[static_cast<unsigned char>(kAlphabet[i])] = i;
        return t;
    }();
    if (text.size() % 4 != 0) throw Error(ErrorCode::undecodable_image, "base64 length is not a multiple of 4");
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int v[4];
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = text[i + k];
            if (c == '=' && i + 4 == text.size() && k >= 2) {
                v[k] = 0;
                ++pad;
            } else if (pad > 0 || (v[k] = table[static_cast<unsigned char>(c)]) < 0) {
                throw Error(ErrorCode::undecodable_image, "invalid base64 data");
            }
        }
        const std::uint32_t word = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
        out.push_back(static_cast<std::uint8_t>(word >> 16));
        if (pad < 2) out.push_back(static_cast<std::uint8_t>(word >> 8));
        if (pad < 1) out.push_back(static_cast<std::uint8_t>(word));
    }
    return out;
}

std::string encode(const ChatRequest& r) {
    Json messages = Json::array();
    for (const auto& m : r.messages) messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    return Json{{"messages", messages}}.dump();
}
std::string encode(const CaptionRequest& r) { return Json{{"image_b64", r.image_b64}}.dump(); }
std::string encode(const VlmRequest& r) { return Json{{"image_b64", r.image_b64}, {"prompt", r.prompt}}.dump(); }
std::string encode(const GroundRequest& r) { return Json{{"image_b64", r.image_b64}, {"keyword", r.keyword}}.dump(); }
std::string encode(const EmbedRequest& r) { return Json{{"texts", r.texts}}.dump(); }
std::string encode(const TextResponse& r) { return Json{{"text", r.text}}.dump(); }
std::string encode(const GroundResponse& r) {
    Json boxes = Json::array();
    for (const auto& b : r.boxes) {
        boxes.push_back({{"bbox", {b.bbox.x0, b.bbox.y0, b.bbox.x1, b.bbox.y1}}, {"score", b.score}, {"label", b.label}});
    }
    return Json{{"boxes", boxes}}.dump();
}
std::string encode(const EmbedResponse& r) { return Json{{"vectors", r.vectors}, {"dim", r.dim}}.dump(); }
std::string encode(const ErrorResponse& r) { return Json{{"code", r.code}, {"message", r.message}}.dump(); }

ChatRequest decode_chat_request(std::string_view body) {
    const auto j = parse_body(body);
    const auto& messages = require(j, "messages");
    if (!messages.is_array()) throw Error(ErrorCode::schema_violation, "'messages' must be an array");
    ChatRequest r;
    for (const auto& m : messages) {
        if (!m.is_object()) throw Error(ErrorCode::schema_violation, "message must be an object");
        r.messages.push_back({parse_role(text_field(m, "role")), text_field(m, "content")});
    }
    return r;
}

CaptionRequest decode_caption_request(std::string_view body) {
    return {text_field(parse_body(body), "image_b64")};
}

VlmRequest decode_vlm_request(std::string_view body) {
    const auto j = parse_body(body);
    return {text_field(j, "image_b64"), text_field(j, "prompt")};
}

GroundRequest decode_ground_request(std::string_view body) {
    const auto j = parse_body(body);
    return {text_field(j, "image_b64"), text_field(j, "keyword")};
}

EmbedRequest decode_embed_request(std::string_view body) {
    const auto j = parse_body(body);
    const auto& texts = require(j, "texts");
    if (!texts.is_array()) throw Error(ErrorCode::schema_violation, "'texts' must be an array");
    EmbedRequest r;
    for (const auto& t : texts) {
        if (!t.is_string()) throw Error(ErrorCode::schema_violation, "texts must be strings");
        r.texts.push_back(t.get<std::string>());
    }
    return r;
}

TextResponse decode_text_response(std::string_view body) { return {text_field(parse_body(body), "text")}; }

GroundResponse decode_ground_response(std::string_view body) {
    const auto j = parse_body(body);
    const auto& boxes = require(j, "boxes");
    if (!boxes.is_array()) throw Error(ErrorCode::schema_violation, "'boxes' must be an array");
    GroundResponse r;
    for (const auto& b : boxes) {
        const auto& bb = require(b, "bbox");
        if (!bb.is_array() || bb.size() != 4) throw Error(ErrorCode::schema_violation, "bbox must hold 4 integers");
        for (const auto& v : bb)
            if (!v.is_number_integer()) throw Error(ErrorCode::schema_violation, "bbox must hold 4 integers");
        const auto& score = require(b, "score");
        if (!score.is_number()) throw Error(ErrorCode::schema_violation, "score must be a number");
        r.boxes.push_back({BBox{bb[0].get<std::int64_t>(), bb[1].get<std::int64_t>(), bb[2].get<std::int64_t>(),
                                bb[3].get<std::int64_t>()},
                           score.get<double>(), text_field(b, "label")});
    }
    return r;
}

EmbedResponse decode_embed_response(std::string_view body) {
    const auto j = parse_body(body);
    const auto& vectors = require(j, "vectors");
    const auto& dim = require(j, "dim");
    if (!vectors.is_array() || !dim.is_number_unsigned()) {
        throw Error(ErrorCode::schema_violation, "'vectors' must be an array and 'dim' a non-negative integer");
    }
    EmbedResponse r;
    r.dim = dim.get<std::size_t>();
    for (const auto& v : vectors) {
        if (!v.is_array()) throw Error(ErrorCode::schema_violation, "vector must be an array");
        std::vector<double> values;
        values.reserve(v.size());
        for (const auto& x : v) {
            if (!x.is_number()) throw Error(ErrorCode::schema_violation, "vector components must be numbers");
            values.push_back(x.get<double>());
        }
        r.vectors.push_back(std::move(values));
    }
    return r;
}

ErrorResponse decode_error_response(std::string_view body) {
    const auto j = parse_body(body);
    return {text_field(j, "code"), text_field(j, "message")};
}

std::string encode_image(const PixelWindow& window) { return base64_encode(codecs::encode_png(window)); }

PixelWindow decode_image(std::string_view image_b64) {
    const auto bytes = base64_decode(image_b64);
    try {
        return codecs::decode_png(bytes);
    } catch (const Error& e) {
        throw Error(ErrorCode::undecodable_image, e.what());
    }
}

int http_status_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::payload_too_large: return 413;
    case ErrorCode::undecodable_image:
    case ErrorCode::schema_violation:
    case ErrorCode::invalid_argument: return 400;
    case ErrorCode::script_exhausted: return 409;
    case ErrorCode::backend_unavailable: return 503;
    default: return 500;
    }
}

} // namespace urba::wire
