#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace painforge {

std::string sha256_hex(std::string_view bytes);

/// Content hash in the form git uses for blobs: sha1("blob <size>\0" + bytes).
std::string git_blob_hash(std::string_view bytes);

std::string git_blob_hash_file(const std::filesystem::path& path);

}  // namespace painforge
