#pragma once

#include <filesystem>

#include "boltpipe/point_cloud.hpp"

namespace boltpipe {

enum class PlyFormat { ascii, binary_little_endian };

/// Reads the `vertex` element of a PLY 1.0 file (ascii, binary little or big endian).
///
/// Recognized vertex properties: x/y/z (float or double, required), `label`
/// (any integer type, values must be 0 or 1), red/green/blue (uchar) and any
/// other float/double property, which becomes a channel. Other properties and
/// other elements are skipped with a warning.
///
/// Throws FormatError (with line number) on a malformed header or truncated
/// body, ValidationError on bad labels or non-finite coordinates, IoError if
/// the file cannot be opened.
PointCloud load_ply(const std::filesystem::path& path);

/// Writes positions as double, labels as uchar, channels as float and colors
/// as uchar. ASCII output prints positions with 17 significant digits so the
/// round trip is exact.
void save_ply(const PointCloud& cloud, const std::filesystem::path& path,
              PlyFormat format = PlyFormat::binary_little_endian);

} // namespace boltpipe
