#pragma once

#include <cstddef>
#include <cstdint>

namespace maelab {

/// Incremental CRC-32 (IEEE, reflected, poly 0xEDB88320), same parameters
/// as zlib's crc32. Start from crc32_init(), feed bytes, finish with
/// crc32_final().
uint32_t crc32_update(uint32_t crc, const void* data, size_t len);

inline uint32_t crc32_init() { return 0xffffffffu; }
inline uint32_t crc32_final(uint32_t crc) { return crc ^ 0xffffffffu; }

/// One-shot CRC-32 of a buffer.
inline uint32_t crc32(const void* data, size_t len) {
    return crc32_final(crc32_update(crc32_init(), data, len));
}

} // namespace maelab
