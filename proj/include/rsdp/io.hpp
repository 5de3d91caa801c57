#pragma once
#include <string>
#include <vector>

#include "rsdp/types.hpp"

namespace rsdp {

inline constexpr const char* kLibraryVersion = "0.1.0";

// Shortest round-trip decimal formatting; every number written to CSV/JSON
// goes through this so outputs are byte-stable.
std::string fmt17(double v);

uint64_t fnv1a64_bytes(const std::string& s);

// Creates the directory (and parents) if needed; throws Config on failure.
void ensure_dir(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace rsdp
