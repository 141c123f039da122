#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

namespace activead::io {

// Writes `content` to a sibling temp file and renames it over `path`, so a
// failed write never leaves a partial artifact behind.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

// Calls `fn(line_number, line)` for every non-blank line (1-based numbering).
void for_each_line(const std::filesystem::path& path,
                   const std::function<void(std::size_t, std::string_view)>& fn);

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace activead::io
