#pragma once

#include "maelab/binio.hpp"
#include "maelab/tensor.hpp"

#include <filesystem>

namespace maelab {

/// Tensor container format: magic "MTEN", u8 version (1), u8 rank,
/// little-endian u64 extents, little-endian f64 payload. Also used as the
/// per-tensor block inside checkpoint and model files.

void encode_tensor(ByteWriter& out, const Tensor& t);
Tensor decode_tensor(ByteReader& in);

/// Standalone tensor files append a little-endian CRC32 of the block so
/// corruption is detected; blocks embedded in container files are covered by
/// the container's own trailing checksum instead.
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

} // namespace maelab
