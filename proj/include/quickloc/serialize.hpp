#pragma once

// Model persistence: a JSON manifest (magic "QLOC", format version 1) listing
// layers, exits and per-block byte offsets into a companion little-endian
// fp32 blob. Block order in the blob equals manifest order.

#include <string>

#include "quickloc/model.hpp"

namespace quickloc {

inline constexpr int kModelFormatVersion = 1;

// Writes `<path>` (manifest, JSON) and a companion blob whose name is the
// manifest stem plus ".bin", recorded in the manifest.
void save_model(const MultiExitModel& m, const std::string& manifest_path);

MultiExitModel load_model(const std::string& manifest_path);

// FNV-1a 64-bit over the file bytes, hex-encoded; used to stamp artifacts
// with their source data.
std::string file_digest_hex(const std::string& path);

}  // namespace quickloc
