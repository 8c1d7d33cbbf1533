#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace teachloop {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

/// Digest of the canonical serialization (sorted keys, compact separators).
std::string json_digest(const nlohmann::json& value);

/// Content-addressed handle for opaque media, e.g. "sha256:ab12...".
std::string content_handle(std::string_view bytes);

/// First 64 bits of SHA-256(text); used to derive independent seeds.
std::uint64_t seed_from(std::string_view text);

/// Uniform value in [0, 1) derived from SHA-256(text).
double unit_from(std::string_view text);

}  // namespace teachloop
