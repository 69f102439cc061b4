#pragma once

#include <filesystem>

#include "vloc/volume.hpp"

namespace vloc {

inline constexpr int kVolumeFormatVersion = 1;

/// Writes `<stem>.svh` (text header) and the sibling `<stem>.raw` payload of
/// little-endian float32 samples. `header_path` must end in `.svh`.
void write_volume(const Volume3D& vol, const std::filesystem::path& header_path);

/// Reads a `.svh` header and its payload. Throws IoError with kind
/// MalformedHeader, SizeMismatch or UnreadablePayload.
Volume3D read_volume(const std::filesystem::path& header_path);

} // namespace vloc
