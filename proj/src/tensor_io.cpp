#include "maelab/tensor_io.hpp"

#include "maelab/crc32.hpp"
#include "maelab/error.hpp"

#include <cmath>
#include <cstdio>

namespace maelab {

namespace {
constexpr char kMagic[4] = {'M', 'T', 'E', 'N'};
constexpr uint8_t kVersion = 1;
constexpr int kMaxRank = 8;
} // namespace

void encode_tensor(ByteWriter& out, const Tensor& t) {
    if (!t.defined()) throw ValueError("encode_tensor: undefined tensor");
    check_finite(t, "encode_tensor");
    out.bytes(kMagic, sizeof(kMagic));
    out.u8(kVersion);
    out.u8(static_cast<uint8_t>(t.rank()));
    for (int64_t d : t.shape()) out.u64le(static_cast<uint64_t>(d));
    for (double v : t.data()) out.f64le(v);
}

Tensor decode_tensor(ByteReader& in) {
    const std::string magic = in.bytes(4);
    if (magic != std::string(kMagic, sizeof(kMagic))) {
        throw IoError(in.source() + ": bad tensor magic (not an MTEN block)");
    }
    const uint8_t version = in.u8();
    if (version != kVersion) {
        throw IoError(in.source() + ": unsupported tensor version " + std::to_string(version));
    }
    const uint8_t rank = in.u8();
    if (rank > kMaxRank) {
        throw IoError(in.source() + ": tensor rank " + std::to_string(rank) + " exceeds limit " +
                      std::to_string(kMaxRank));
    }
    Shape shape(rank);
    int64_t numel = 1;
    for (int r = 0; r < rank; ++r) {
        const uint64_t d = in.u64le();
        if (d == 0 || d > (1ull << 32)) {
            throw IoError(in.source() + ": invalid tensor extent " + std::to_string(d));
        }
        shape[static_cast<size_t>(r)] = static_cast<int64_t>(d);
        if (numel > (int64_t{1} << 40) / static_cast<int64_t>(d)) {
            throw IoError(in.source() + ": tensor too large");
        }
        numel *= static_cast<int64_t>(d);
    }
    std::vector<double> data(static_cast<size_t>(numel));
    for (double& v : data) {
        v = in.f64le();
        if (!std::isfinite(v)) {
            throw IoError(in.source() + ": non-finite value in tensor payload");
        }
    }
    return Tensor::from_data(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    ByteWriter out;
    encode_tensor(out, t);
    out.u32le(crc32(out.buffer().data(), out.buffer().size()));
    write_file(path, out.buffer());
}

Tensor load_tensor(const std::filesystem::path& path) {
    const std::string raw = read_file(path);
    const std::string name = path.string();
    if (raw.size() < 4) throw IoError(name + ": not a tensor file (too short)");
    ByteReader tail(std::string_view(raw).substr(raw.size() - 4), name);
    const uint32_t stored = tail.u32le();
    const uint32_t computed = crc32(raw.data(), raw.size() - 4);
    if (stored != computed) {
        char msg[160];
        std::snprintf(msg, sizeof(msg), "%s: tensor file checksum mismatch (stored %08x, computed %08x)",
                      name.c_str(), stored, computed);
        throw IoError(msg);
    }
    ByteReader in(std::string_view(raw).substr(0, raw.size() - 4), name);
    Tensor t = decode_tensor(in);
    if (in.remaining() != 0) {
        throw IoError(name + ": " + std::to_string(in.remaining()) +
                      " trailing bytes after tensor payload");
    }
    return t;
}

} // namespace maelab
