#pragma once

#include <string>

namespace fdareg {

// Hex-encoded SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

}  // namespace fdareg
