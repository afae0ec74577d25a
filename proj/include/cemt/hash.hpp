#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

namespace cemt {

// SHA-256 of a byte buffer, as a lowercase hex string. Used for dataset
// manifest integrity checks; verified against the published test vectors.
std::string sha256_hex(const unsigned char* data, std::size_t len);
std::string sha256_hex(const std::string& bytes);

// SHA-256 of a file's contents. Throws IoError if the file cannot be read.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace cemt
