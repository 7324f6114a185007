#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace moco {

/// SHA-1 of a byte buffer, lowercase hex. Used for artifact manifests, not
/// for any security purpose.
std::string sha1_hex(const void* data, std::size_t len);

/// Git-style blob hash of a file's content: sha1("blob <len>\0" + content).
/// Throws std::invalid_argument when the file cannot be read.
std::string git_blob_hash(const std::string& path);

}  // namespace moco
