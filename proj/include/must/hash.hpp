#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace must {

// Lower-case hex SHA-1 of `bytes`.
std::string sha1_hex(std::span<const unsigned char> bytes);

// Git blob object id: sha1("blob <size>\0" + bytes).
std::string git_blob_hash(std::span<const unsigned char> bytes);
std::string git_blob_hash(std::string_view text);

// Blob hash of a file, or for a directory a hash over the sorted
// "<relative path> <blob hash>" lines of every regular file beneath it.
std::string content_hash(const std::filesystem::path& path);

}  // namespace must
