// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "urba/abstraction.hpp"
#include "urba/backends.hpp"
#include "urba/error.hpp"
#include "urba/image_store.hpp"
#include "urba/retrieval.hpp"

#include <json.hpp>

#include <array>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace urba {

inline constexpr std::array<std::string_view, 6> kToolNames = {
    "semantic_abstraction", "semantic_retrieval", "vlm", "crop", "ground", "enhance"};

enum class ArgType { string, integer, number, bbox, image_handle, index_ref };
enum class ResultKind { text, image_handle, index_handle, bbox_list };

std::string to_string(ArgType type);
std::string to_string(ResultKind kind);

struct ArgSpec {
    std::string name;
    ArgType type = ArgType::string;
    bool required = true;
    nlohmann::json default_value;  // null when required
    double min_value = 0.0;        // integer and number arguments only
    std::string description;
};

struct ToolSpec {
    std::string name;
    std::string purpose;
    std::vector<ArgSpec> args;
    ResultKind result = ResultKind::text;

    const ArgSpec* arg(std::string_view name) const noexcept;
};

/// The six tools, in kToolNames order. Defaults for chunk_number and topk
/// come from `default_chunk_number` and `default_topk`.
std::vector<ToolSpec> make_tool_registry(int default_chunk_number = 10, int default_topk = 5);
const std::vector<ToolSpec>& tool_registry();
const ToolSpec* find_tool(std::string_view name);

struct ToolCall {
    std::string tool;
    nlohmann::json args = nlohmann::json::object();
    friend bool operator==(const ToolCall&, const ToolCall&) = default;
};

struct ToolError {
    ErrorCode code = ErrorCode::bad_args;
    std::string message;
};

/// Throws unknown-tool or bad-args.
void validate_call(const ToolCall& call);

struct ParseOutcome {
    std::optional<ToolCall> call;
    std::optional<ToolError> error;  // set only when no block was valid
    int blocks = 0;
    int ignored_blocks = 0;          // blocks after the accepted one
};

/// Scans for ```tool fenced blocks; the first block that parses and
/// validates wins. With blocks present but none valid, `error` carries the
/// first block's problem.
ParseOutcome scan_tool_calls(std::string_view text);

/// The accepted call, nullopt when the text has no tool block; throws
/// malformed-call, unknown-tool or bad-args otherwise.
std::optional<ToolCall> parse_tool_call(std::string_view text);

/// ```tool\n{"tool":...,"args":{...}}\n```
std::string render_call(const ToolCall& call);

struct ToolResult {
    bool ok = true;
    std::string payload;
    std::vector<std::string> new_handles;
    std::optional<ToolError> error;

    static ToolResult success(std::string payload, std::vector<std::string> handles = {});
    static ToolResult failure(ErrorCode code, std::string message);
};

inline constexpr std::string_view kResultTruncationMarker = "…[truncated]";

/// "OK: <payload>" or "ERROR[<code>]: <message>", capped at `cap_tokens`.
std::string render_result(const ToolResult& result, std::int64_t cap_tokens = 4096);

struct ToolConfig {
    TokenBudget abstraction_budget{256, 28};  // T_max per caption
    AbstractionOptions abstraction;
    TokenBudget vlm_input{4096, 28};
    TokenBudget ground_input{4096, 28};
    int default_chunk_number = 10;
    int default_topk = 5;
    std::int64_t result_cap_tokens = 4096;
    std::int64_t max_enhance_pixels = 4096LL * 4096LL;
};

struct ImageHandle {
    std::string id;
    ImageView view;
    std::string provenance;
};

struct IndexHandle {
    std::string id;
    std::string image;  // handle or path the index was built from
    std::shared_ptr<const EmbeddedIndex> index;
};

/// Per-tool call counts, keyed by every registered tool name.
using ToolCounts = std::map<std::string, int>;
ToolCounts empty_tool_counts();

/// The handles and backends of one episode. Calls run one at a time.
class ToolContext {
public:
    ToolContext(ImageRef source, Backends backends, ToolConfig config = {});

    /// Never throws; failures come back as error results. Counts every call.
    ToolResult dispatch(const ToolCall& call);

    const ToolCounts& counts() const noexcept { return counts_; }
    int dispatched() const noexcept { return dispatched_; }
    const ImageHandle* image(std::string_view id) const noexcept;
    const IndexHandle* index(std::string_view id) const noexcept;
    const std::deque<ImageHandle>& images() const noexcept { return images_; }
    const ToolConfig& config() const noexcept { return config_; }

private:
    ToolResult run(const ToolCall& call);
    const ImageHandle& require_image(const nlohmann::json& args);
    std::string add_image(ImageView view, std::string provenance);

    ToolResult do_abstraction(const nlohmann::json& args);
    ToolResult do_retrieval(const nlohmann::json& args);
    ToolResult do_vlm(const nlohmann::json& args);
    ToolResult do_crop(const nlohmann::json& args);
    ToolResult do_ground(const nlohmann::json& args);
    ToolResult do_enhance(const nlohmann::json& args);

    Backends backends_;
    ToolConfig config_;
    std::deque<ImageHandle> images_;
    std::deque<IndexHandle> indexes_;
    std::map<std::string, std::shared_ptr<const EmbeddedIndex>> loaded_paths_;
    ToolCounts counts_;
    int dispatched_ = 0;
};

} // namespace urba
