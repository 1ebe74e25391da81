#pragma once

#include <string>
#include <string_view>

namespace agents {

// ISO-8601 UTC with millisecond precision, e.g. 2024-05-01T12:00:00.123Z
std::string utc_now_iso();

std::string sha256_hex(std::string_view data);

// Lowercase hex from a non-deterministic source.
std::string random_token(size_t bytes = 6);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace agents
