#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace provtrace {

// FNV-1a 64-bit; used for manifest input fingerprints and determinism
// checks. Not cryptographic.
std::uint64_t fnv1a64(const std::string& bytes);
std::uint64_t fnv1a64_file(const std::string& path);
std::string hex64(std::uint64_t v);

std::string read_text_file(const std::string& path);  // throws IoError

// Writes to "<path>.tmp" then renames, so readers never see a half file.
void write_text_atomic(const std::string& path, const std::string& content);

// Resolves a relative output path under $PROVTRACE_OUT_ROOT when set.
std::string resolve_output_path(const std::string& path);

void ensure_parent_dir(const std::string& path);

}  // namespace provtrace
