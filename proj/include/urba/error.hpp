// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace urba {

enum class ErrorCode {
    invalid_argument,
    bounds,
    io,
    unsupported_format,
    corrupt_header,
    abstraction_failed,
    backend_unavailable,
    version_mismatch,
    malformed_file,
    index_corrupt,
    embed_inconsistent,
    dim_mismatch,
    zero_norm,
    malformed_call,
    unknown_tool,
    bad_args,
    no_index,
    script_exhausted,
    payload_too_large,
    undecodable_image,
    invalid_spec,
    schema_violation,
};

/// Stable kebab-case name, used in tool transcripts and wire errors.
std::string_view to_string(ErrorCode code);
std::optional<ErrorCode> parse_error_code(std::string_view name);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace urba
