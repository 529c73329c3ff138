#pragma once

#include "xmhash/common.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace xmh::io {

namespace fs = std::filesystem;

// raw-f32 layout: "XMSH", u32 rows, u32 cols, u32 reserved, then rows*cols
// little-endian float32 values in row-major order.
void write_raw_f32(const fs::path& path, const Matrix& m);
Matrix read_raw_f32(const fs::path& path);

// Same 16-byte header with magic "XMSD" and float64 payload. Used for cached
// intermediates whose precision matters downstream.
void write_raw_f64(const fs::path& path, const Matrix& m);
Matrix read_raw_f64(const fs::path& path);

/// Comma-separated values, no header, one row per line. Rejects ragged rows
/// and non-finite entries ("non-finite value at (r,c)").
Matrix read_csv(const fs::path& path);
void write_csv(const fs::path& path, const Matrix& m);

using LabelSets = std::vector<std::vector<int>>;

/// One row per instance, integer labels separated by ';'. Empty lines are
/// instances without labels.
LabelSets read_labels(const fs::path& path);
void write_labels(const fs::path& path, const LabelSets& labels);

/// Codes text: one line per instance, '1' for +1 and '0' for -1.
void write_codes(const fs::path& path, const CodeMatrix& codes);
CodeMatrix read_codes(const fs::path& path);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

}  // namespace xmh::io
