#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace maelab {

/// Little-endian byte-buffer serialization. File formats are built by
/// encoding into a ByteWriter and writing the buffer in one shot, which makes
/// whole-file checksums trivial on both ends.
class ByteWriter {
public:
    void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32le(uint32_t v);
    void u64le(uint64_t v);
    void f64le(double v);
    void bytes(const void* data, size_t n);
    void str(std::string_view s) { bytes(s.data(), s.size()); }

    const std::string& buffer() const { return buf_; }

private:
    std::string buf_;
};

/// Bounds-checked reader over an in-memory buffer; throws IoError naming the
/// source on any overrun.
class ByteReader {
public:
    ByteReader(std::string_view data, std::string source)
        : data_(data), source_(std::move(source)) {}

    uint8_t u8();
    uint32_t u32le();
    uint64_t u64le();
    double f64le();
    std::string bytes(size_t n);

    size_t pos() const { return pos_; }
    size_t remaining() const { return data_.size() - pos_; }
    const std::string& source() const { return source_; }

private:
    const unsigned char* need(size_t n);

    std::string_view data_;
    std::string source_;
    size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);

/// Writes via a temp file + rename so a crash never leaves a half-written
/// file at `path`.
void write_file(const std::filesystem::path& path, std::string_view contents);

} // namespace maelab
