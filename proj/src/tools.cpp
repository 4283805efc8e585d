// SPDX-License-Identifier: Apache-2.0
#include "urba/tools.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace urba {

using Json = nlohmann::json;

std::string to_string(ArgType type) {
    switch (type) {
    case ArgType::string: return "string";
    case ArgType::integer: return "integer";
    case ArgType::number: return "number";
    case ArgType::bbox: return "[x0,y0,x1,y1] integers";
    case ArgType::image_handle: return "image handle";
    case ArgType::index_ref: return "index handle or index file path";
    }
    return "string";
}

std::string to_string(ResultKind kind) {
    switch (kind) {
    case ResultKind::text: return "text";
    case ResultKind::image_handle: return "image handle";
    case ResultKind::index_handle: return "index handle";
    case ResultKind::bbox_list: return "bbox list";
    }
    return "text";
}

const ArgSpec* ToolSpec::arg(std::string_view arg_name) const noexcept {
    for (const auto& a : args)
        if (a.name == arg_name) return &a;
    return nullptr;
}

std::vector<ToolSpec> make_tool_registry(int default_chunk_number, int default_topk) {
    const ArgSpec image{"image", ArgType::image_handle, true, nullptr, 0.0, "image handle, e.g. img_0"};
    auto factor = [](const char* name, const char* what) {
        return ArgSpec{name, ArgType::number, false, 1.0, 0.0, fmt::format("{} factor, 1.0 leaves it unchanged", what)};
    };
    return {
        {"semantic_abstraction",
         "Split an image into a grid of chunks and caption each one, producing a searchable caption index.",
         {image,
          {"chunk_number", ArgType::integer, false, default_chunk_number, 1.0, "approximate number of chunks"}},
         ResultKind::index_handle},
        {"semantic_retrieval",
         "Find the chunk captions most relevant to a query and report their regions.",
         {{"json", ArgType::index_ref, true, nullptr, 0.0, "index handle from semantic_abstraction, e.g. idx_0"},
          {"query", ArgType::string, true, nullptr, 0.0, "what to look for"},
          {"topk", ArgType::integer, false, default_topk, 1.0, "number of captions to return"}},
         ResultKind::text},
        {"vlm",
         "Ask a vision-language model a question about an image.",
         {image, {"prompt", ArgType::string, true, nullptr, 0.0, "question or instruction"}},
         ResultKind::text},
        {"crop",
         "Cut a rectangle out of an image, producing a new image handle.",
         {image, {"bbox", ArgType::bbox, true, nullptr, 0.0, "pixel rectangle in the image's coordinates"}},
         ResultKind::image_handle},
        {"ground",
         "Locate objects matching a keyword and return their bounding boxes with scores.",
         {image, {"keyword", ArgType::string, true, nullptr, 0.0, "object description"}},
         ResultKind::bbox_list},
        {"enhance",
         "Adjust brightness, contrast, sharpness and color of an image, producing a new image handle.",
         {image, factor("brightness", "brightness"), factor("contrast", "contrast"),
          factor("sharpness", "sharpness"), factor("color", "color saturation")},
         ResultKind::image_handle},
    };
}

const std::vector<ToolSpec>& tool_registry() {
    static const std::vector<ToolSpec> registry = make_tool_registry();
    return registry;
}

const ToolSpec* find_tool(std::string_view name) {
    for (const auto& t : tool_registry())
        if (t.name == name) return &t;
    return nullptr;
}

namespace {

std::string tool_list() {
    std::string out;
    for (auto n : kToolNames) {
        if (!out.empty()) out += ", ";
        out += n;
    }
    return out;
}

bool is_int_value(const Json& v) { return v.is_number_integer(); }

void check_arg(const std::string& tool, const ArgSpec& spec, const Json& v) {
    auto bad = [&](const std::string& why) {
        return Error(ErrorCode::bad_args, fmt::format("{}: argument '{}' {}", tool, spec.name, why));
    };
    switch (spec.type) {
    case ArgType::string:
    case ArgType::image_handle:
    case ArgType::index_ref:
        if (!v.is_string()) throw bad("must be a string");
        if (v.get_ref<const std::string&>().empty()) throw bad("must not be empty");
        break;
    case ArgType::integer:
        if (!is_int_value(v)) throw bad("must be an integer");
        if (static_cast<double>(v.get<std::int64_t>()) < spec.min_value) {
            throw bad(fmt::format("must be >= {}", spec.min_value));
        }
        break;
    case ArgType::number:
        if (!v.is_number()) throw bad("must be a number");
        if (!std::isfinite(v.get<double>()) || v.get<double>() < spec.min_value) {
            throw bad(fmt::format("must be a finite number >= {}", spec.min_value));
        }
        break;
    case ArgType::bbox:
        if (!v.is_array() || v.size() != 4 || !std::all_of(v.begin(), v.end(), is_int_value)) {
            throw bad("must be [x0,y0,x1,y1] integers");
        }
        if (v[0].get<std::int64_t>() < 0 || v[1].get<std::int64_t>() < 0 ||
            v[2].get<std::int64_t>() <= v[0].get<std::int64_t>() || v[3].get<std::int64_t>() <= v[1].get<std::int64_t>()) {
            throw bad("needs 0 <= x0 < x1 and 0 <= y0 < y1");
        }
        break;
    }
}

std::string handle_dims(const ImageHandle& h) {
    return fmt::format("{} ({}×{})", h.id, h.view.width(), h.view.height());
}

} // namespace

void validate_call(const ToolCall& call) {
    const ToolSpec* spec = find_tool(call.tool);
    if (spec == nullptr) {
        throw Error(ErrorCode::unknown_tool,
                    fmt::format("unknown tool '{}'; valid tools are: {}", call.tool, tool_list()));
    }
    if (!call.args.is_object()) throw Error(ErrorCode::bad_args, fmt::format("{}: 'args' must be an object", call.tool));
    for (const auto& [key, value] : call.args.items()) {
        const ArgSpec* a = spec->arg(key);
        if (a == nullptr) throw Error(ErrorCode::bad_args, fmt::format("{}: unknown argument '{}'", call.tool, key));
        check_arg(call.tool, *a, value);
    }
    for (const auto& a : spec->args) {
        if (a.required && !call.args.contains(a.name)) {
            throw Error(ErrorCode::bad_args, fmt::format("{}: missing required argument '{}'", call.tool, a.name));
        }
    }
}

ParseOutcome scan_tool_calls(std::string_view text) {
    static constexpr std::string_view kOpen = "```tool";
    ParseOutcome out;
    std::size_t pos = 0;
    while ((pos = text.find(kOpen, pos)) != std::string_view::npos) {
        std::size_t cursor = pos + kOpen.size();
        while (cursor < text.size() && (text[cursor] == ' ' || text[cursor] == '\t' || text[cursor] == '\r')) ++cursor;
        if (cursor < text.size() && text[cursor] != '\n') {
            pos = cursor;  // e.g. ```tools: a different tag
            continue;
        }
        ++out.blocks;
        const std::size_t body_start = std::min(cursor + 1, text.size());
        const std::size_t close = text.find("```", body_start);
        const std::string_view body =
            text.substr(body_start, close == std::string_view::npos ? std::string_view::npos : close - body_start);
        pos = close == std::string_view::npos ? text.size() : close + 3;

        if (out.call) {
            ++out.ignored_blocks;
            continue;
        }
        auto note = [&](ErrorCode code, std::string message) {
            if (!out.error) out.error = ToolError{code, std::move(message)};
        };
        if (close == std::string_view::npos) {
            note(ErrorCode::malformed_call, "unterminated ```tool block");
            continue;
        }
        Json j;
        try {
            j = Json::parse(body);
        } catch (const Json::exception& e) {
            note(ErrorCode::malformed_call, fmt::format("tool block is not valid JSON: {}", e.what()));
            continue;
        }
        if (!j.is_object() || !j.contains("tool") || !j["tool"].is_string() || !j.contains("args")) {
            note(ErrorCode::malformed_call, R"(tool block must be {"tool": <name>, "args": {...}})");
            continue;
        }
        ToolCall call{j["tool"].get<std::string>(), j["args"]};
        try {
            validate_call(call);
        } catch (const Error& e) {
            note(e.code(), e.what());
            continue;
        }
        out.call = std::move(call);
    }
    if (out.call) out.error.reset();
    return out;
}

std::optional<ToolCall> parse_tool_call(std::string_view text) {
    auto outcome = scan_tool_calls(text);
    if (outcome.call) return outcome.call;
    if (outcome.error) throw Error(outcome.error->code, outcome.error->message);
    return std::nullopt;
}

std::string render_call(const ToolCall& call) {
    Json j = {{"tool", call.tool}, {"args", call.args}};
    // Backticks only occur inside JSON strings; escaping them keeps a "```"
    // in an argument from closing the fence.
    std::string body;
    for (char ch : j.dump()) {
        if (ch == '`') body += "\\u0060";
        else body += ch;
    }
    return fmt::format("```tool\n{}\n```", body);
}

ToolResult ToolResult::success(std::string payload, std::vector<std::string> handles) {
    ToolResult r;
    r.ok = true;
    r.payload = std::move(payload);
    r.new_handles = std::move(handles);
    return r;
}

ToolResult ToolResult::failure(ErrorCode code, std::string message) {
    ToolResult r;
    r.ok = false;
    r.error = ToolError{code, std::move(message)};
    return r;
}

std::string render_result(const ToolResult& result, std::int64_t cap_tokens) {
    if (!result.ok && result.error) {
        return fmt::format("ERROR[{}]: {}", to_string(result.error->code),
                           truncate_to_tokens(result.error->message, cap_tokens, count_tokens, kResultTruncationMarker));
    }
    return "OK: " + truncate_to_tokens(result.payload, cap_tokens, count_tokens, kResultTruncationMarker);
}

ToolCounts empty_tool_counts() {
    ToolCounts counts;
    for (auto n : kToolNames) counts[std::string(n)] = 0;
    return counts;
}

ToolContext::ToolContext(ImageRef source, Backends backends, ToolConfig config)
    : backends_(std::move(backends)), config_(std::move(config)), counts_(empty_tool_counts()) {
    images_.push_back({"img_0", ImageView(std::move(source)), "source image"});
}

const ImageHandle* ToolContext::image(std::string_view id) const noexcept {
    for (const auto& h : images_)
        if (h.id == id) return &h;
    return nullptr;
}

const IndexHandle* ToolContext::index(std::string_view id) const noexcept {
    for (const auto& h : indexes_)
        if (h.id == id) return &h;
    return nullptr;
}

ToolResult ToolContext::dispatch(const ToolCall& call) {
    ++dispatched_;
    if (auto it = counts_.find(call.tool); it != counts_.end()) ++it->second;
    try {
        validate_call(call);
        return run(call);
    } catch (const Error& e) {
        return ToolResult::failure(e.code(), e.what());
    } catch (const std::exception& e) {
        return ToolResult::failure(ErrorCode::backend_unavailable, e.what());
    }
}

ToolResult ToolContext::run(const ToolCall& call) {
    if (call.tool == "semantic_abstraction") return do_abstraction(call.args);
    if (call.tool == "semantic_retrieval") return do_retrieval(call.args);
    if (call.tool == "vlm") return do_vlm(call.args);
    if (call.tool == "crop") return do_crop(call.args);
    if (call.tool == "ground") return do_ground(call.args);
    return do_enhance(call.args);
}

const ImageHandle& ToolContext::require_image(const Json& args) {
    const auto& id = args.at("image").get_ref<const std::string&>();
    const ImageHandle* h = image(id);
    if (h == nullptr) {
        throw Error(ErrorCode::bad_args, fmt::format("unknown image handle {}; available: img_0..img_{}", id,
                                                     images_.size() - 1));
    }
    return *h;
}

std::string ToolContext::add_image(ImageView view, std::string provenance) {
    std::string id = fmt::format("img_{}", images_.size());
    images_.push_back({id, std::move(view), std::move(provenance)});
    return id;
}

ToolResult ToolContext::do_abstraction(const Json& args) {
    const auto& h = require_image(args);
    const int n = args.value("chunk_number", config_.default_chunk_number);
    if (!backends_.caption) throw Error(ErrorCode::backend_unavailable, "no caption backend configured");
    if (!backends_.embed) throw Error(ErrorCode::backend_unavailable, "no embedding backend configured");
    auto built = std::make_shared<const AbstractionIndex>(
        abstract_view(h.view, h.id, n, *backends_.caption, config_.abstraction_budget, config_.abstraction));
    auto embedded = std::make_shared<const EmbeddedIndex>(embed_corpus(built, *backends_.embed));
    std::string id = fmt::format("idx_{}", indexes_.size());
    indexes_.push_back({id, h.id, embedded});
    const auto failed = std::count_if(built->chunks.begin(), built->chunks.end(), [](const Chunk& c) { return c.failed; });
    std::string payload = fmt::format("created {} from {}: {} chunks in a {}×{} grid, {} caption tokens", id,
                                      handle_dims(h), built->chunks.size(), built->grid.rows, built->grid.cols,
                                      built->total_caption_tokens());
    if (failed > 0) payload += fmt::format(", {} chunk(s) without caption", failed);
    return ToolResult::success(std::move(payload), {id});
}

ToolResult ToolContext::do_retrieval(const Json& args) {
    const auto& ref = args.at("json").get_ref<const std::string&>();
    const auto query = args.at("query").get<std::string>();
    const int k = args.value("topk", config_.default_topk);
    if (!backends_.embed) throw Error(ErrorCode::backend_unavailable, "no embedding backend configured");

    std::shared_ptr<const EmbeddedIndex> eidx;
    std::string source;
    if (const IndexHandle* h = index(ref)) {
        eidx = h->index;
        source = fmt::format("{} (regions in {} coordinates)", h->id, h->image);
    } else if (ref.rfind("idx_", 0) == 0 || !std::filesystem::exists(ref)) {
        if (indexes_.empty()) {
            throw Error(ErrorCode::no_index, fmt::format("no index '{}'; call semantic_abstraction first", ref));
        }
        throw Error(ErrorCode::no_index, fmt::format("unknown index handle {}; available: idx_0..idx_{}", ref,
                                                     indexes_.size() - 1));
    } else {
        auto& cached = loaded_paths_[ref];
        if (!cached) {
            auto loaded = std::make_shared<const AbstractionIndex>(load_index(ref));
            cached = std::make_shared<const EmbeddedIndex>(embed_corpus(loaded, *backends_.embed));
        }
        eidx = cached;
        source = ref;
    }
    const auto results = retrieve(*eidx, query, k, *backends_.embed);
    std::string payload =
        fmt::format("top {} of {} chunks for \"{}\" in {}:\n", results.size(), eidx->base->chunks.size(), query, source);
    payload += render_results(results);
    const auto regions = aggregate_regions(results);
    if (regions.enclosing) {
        std::string list;
        for (const auto& r : regions.regions) list += (list.empty() ? "" : ", ") + r.to_string();
        payload += fmt::format("union of regions: {}; enclosing {}", list, regions.enclosing->to_string());
    } else {
        payload += "no chunks matched";
    }
    return ToolResult::success(std::move(payload));
}

ToolResult ToolContext::do_vlm(const Json& args) {
    const auto& h = require_image(args);
    if (!backends_.vlm) throw Error(ErrorCode::backend_unavailable, "no vlm backend configured");
    const PixelWindow input = h.view.downsample(config_.vlm_input);
    return ToolResult::success(backends_.vlm->answer(input, args.at("prompt").get<std::string>()));
}

ToolResult ToolContext::do_crop(const Json& args) {
    const auto& h = require_image(args);
    const auto& b = args.at("bbox");
    const BBox box{b[0].get<std::int64_t>(), b[1].get<std::int64_t>(), b[2].get<std::int64_t>(),
                   b[3].get<std::int64_t>()};
    if (box.x1 <= box.x0 || box.y1 <= box.y0) {
        throw Error(ErrorCode::bad_args, fmt::format("degenerate bbox {} (need x0<x1 and y0<y1)", box.to_string()));
    }
    if (box.x0 < 0 || box.y0 < 0 || box.x1 > h.view.width() || box.y1 > h.view.height()) {
        throw Error(ErrorCode::bad_args, fmt::format("bbox out of bounds for {}", handle_dims(h)));
    }
    const std::string parent = h.id;
    auto view = h.view.crop(box);
    const auto w = view.width(), ht = view.height();
    auto id = add_image(std::move(view), fmt::format("crop of {} bbox {}", parent, box.to_string()));
    return ToolResult::success(fmt::format("created {} ({}×{}) from {} bbox {}", id, w, ht, parent, box.to_string()),
                               {id});
}

ToolResult ToolContext::do_ground(const Json& args) {
    const auto& h = require_image(args);
    if (!backends_.ground) throw Error(ErrorCode::backend_unavailable, "no grounding backend configured");
    const auto keyword = args.at("keyword").get<std::string>();
    const PixelWindow input = h.view.downsample(config_.ground_input);
    const auto W = h.view.width(), H = h.view.height();
    const auto w = input.width(), ht = input.height();
    auto boxes = backends_.ground->ground(input, keyword);
    Json list = Json::array();
    for (auto& gb : boxes) {
        BBox b = gb.bbox;
        if (w != W || ht != H) {
            b = BBox{b.x0 * W / w, b.y0 * H / ht, (b.x1 * W + w - 1) / w, (b.y1 * H + ht - 1) / ht};
        }
        b.x0 = std::clamp<std::int64_t>(b.x0, 0, W);
        b.y0 = std::clamp<std::int64_t>(b.y0, 0, H);
        b.x1 = std::clamp<std::int64_t>(b.x1, 0, W);
        b.y1 = std::clamp<std::int64_t>(b.y1, 0, H);
        list.push_back({{"bbox", {b.x0, b.y0, b.x1, b.y1}}, {"score", gb.score}, {"label", gb.label}});
    }
    return ToolResult::success(
        fmt::format("{} box(es) for \"{}\" in {}: {}", list.size(), keyword, handle_dims(h), list.dump()));
}

ToolResult ToolContext::do_enhance(const Json& args) {
    const auto& h = require_image(args);
    EnhanceParams p;
    p.brightness = args.value("brightness", 1.0);
    p.contrast = args.value("contrast", 1.0);
    p.sharpness = args.value("sharpness", 1.0);
    p.color = args.value("color", 1.0);
    if (h.view.width() * h.view.height() > config_.max_enhance_pixels) {
        throw Error(ErrorCode::bad_args,
                    fmt::format("{} is too large to enhance (limit {} pixels); crop it first", handle_dims(h),
                                config_.max_enhance_pixels));
    }
    const std::string parent = h.id;
    PixelWindow out = enhance(h.view.read_all(), p);
    out.origin = BBox{0, 0, out.width(), out.height()};
    const auto w = out.width(), ht = out.height();
    const auto summary = fmt::format("brightness={} contrast={} sharpness={} color={}", p.brightness, p.contrast,
                                     p.sharpness, p.color);
    auto id = add_image(ImageView(std::move(out)), fmt::format("enhance of {} {}", parent, summary));
    return ToolResult::success(fmt::format("created {} ({}×{}) from {} with {}", id, w, ht, parent, summary), {id});
}

} // namespace urba
