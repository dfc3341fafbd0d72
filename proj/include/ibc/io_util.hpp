#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace ibc::io {

/// Write-temp-then-rename so partially written outputs are never observed.
void atomic_write_file(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

/// Shortest decimal form that round-trips a 64-bit real exactly.
std::string format_double(double v);

/// Fixed-precision form for report files.
std::string format_fixed(double v, int precision);

}  // namespace ibc::io
