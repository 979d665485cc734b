#pragma once

#include <string>

namespace daf::io {

// Whole file as bytes; ConfigError when the file cannot be opened or read.
[[nodiscard]] std::string read_file(const std::string& path);

// Writes to a sibling temp file and renames it over the target, so a
// partially written artifact is never observable under the final name.
// ConfigError when the write or rename fails.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace daf::io
