#include "maelab/binio.hpp"

#include "maelab/error.hpp"

#include <cstring>
#include <fstream>

namespace maelab {

void ByteWriter::u32le(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void ByteWriter::u64le(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void ByteWriter::f64le(double v) {
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    u64le(bits);
}

void ByteWriter::bytes(const void* data, size_t n) {
    buf_.append(static_cast<const char*>(data), n);
}

const unsigned char* ByteReader::need(size_t n) {
    if (remaining() < n) {
        throw IoError(source_ + ": truncated (needed " + std::to_string(n) + " bytes at offset " +
                      std::to_string(pos_) + ", " + std::to_string(remaining()) + " left)");
    }
    const unsigned char* p = reinterpret_cast<const unsigned char*>(data_.data()) + pos_;
    pos_ += n;
    return p;
}

uint8_t ByteReader::u8() { return *need(1); }

uint32_t ByteReader::u32le() {
    const unsigned char* p = need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
    return v;
}

uint64_t ByteReader::u64le() {
    const unsigned char* p = need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
}

double ByteReader::f64le() {
    const uint64_t bits = u64le();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

std::string ByteReader::bytes(size_t n) {
    const unsigned char* p = need(n);
    return std::string(reinterpret_cast<const char*>(p), n);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed for " + path.string());
    return contents;
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot create " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move " + tmp.string() + " to " + path.string());
    }
}

} // namespace maelab
