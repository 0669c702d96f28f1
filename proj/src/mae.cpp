#include "maelab/mae.hpp"

#include "maelab/binio.hpp"
#include "maelab/crc32.hpp"
#include "maelab/error.hpp"
#include "maelab/masking.hpp"
#include "maelab/ops.hpp"
#include "maelab/optim.hpp"
#include "maelab/rng.hpp"
#include "maelab/tensor_io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace maelab {

using namespace ops;

namespace {

constexpr double kLeakySlope = 0.1;
constexpr int64_t kKernelPx = 3;
constexpr int64_t kStride = 2;
constexpr int64_t kPad = 1;
constexpr char kCheckpointMagic[] = "MAEC";
constexpr uint8_t kCheckpointVersion = 1;

void validate_model(const MaeModel& m, const char* who) {
    if (m.depth < 1 || m.in_channels < 1 || m.feature_channels < 1 ||
        static_cast<int64_t>(m.enc_kernels.size()) != m.depth ||
        static_cast<int64_t>(m.dec_kernels.size()) != m.depth) {
        throw ValueError(std::string(who) + ": model is not initialized");
    }
}

void validate_input(const MaeModel& m, const Tensor& x, const char* who) {
    if (!x.defined() || x.rank() != 4) {
        throw ShapeError(std::string(who) + ": input must be a [N,C,H,W] tensor");
    }
    if (x.dim(1) != m.in_channels) {
        char msg[128];
        std::snprintf(msg, sizeof(msg), "%s: input has %lld channels but the model expects %lld",
                      who, static_cast<long long>(x.dim(1)),
                      static_cast<long long>(m.in_channels));
        throw ShapeError(msg);
    }
}

Tensor kaiming_kernel(int64_t co, int64_t ci, uint64_t seed) {
    const int64_t fan_in = ci * kKernelPx * kKernelPx;
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    Rng rng(seed);
    Tensor k = Tensor::zeros({co, ci, kKernelPx, kKernelPx});
    for (double& v : k.mutable_data()) v = stddev * rng.next_normal();
    return k;
}

struct EncoderTrace {
    Tensor features;
    std::vector<std::pair<int64_t, int64_t>> layer_hw; // input size of each layer
};

EncoderTrace run_encoder(Tape* tape, const MaeModel& m, const Tensor& x) {
    EncoderTrace trace;
    Tensor h = x;
    for (int64_t i = 0; i < m.depth; ++i) {
        trace.layer_hw.emplace_back(h.dim(2), h.dim(3));
        h = conv2d(tape, h, m.enc_kernels[static_cast<size_t>(i)], kStride, kPad);
        h = bias_add(tape, h, m.enc_biases[static_cast<size_t>(i)]);
        h = leaky_relu(tape, h, kLeakySlope);
    }
    trace.features = h;
    return trace;
}

} // namespace

std::vector<int64_t> MaeModel::widths() const {
    std::vector<int64_t> w(static_cast<size_t>(depth));
    for (int64_t i = 0; i < depth; ++i) w[static_cast<size_t>(i)] = 16ll << i;
    if (depth >= 1) w[static_cast<size_t>(depth - 1)] = feature_channels;
    return w;
}

std::vector<Tensor> MaeModel::parameters() const {
    std::vector<Tensor> params;
    for (int64_t i = 0; i < depth; ++i) {
        params.push_back(enc_kernels[static_cast<size_t>(i)]);
        params.push_back(enc_biases[static_cast<size_t>(i)]);
    }
    for (int64_t i = 0; i < depth; ++i) {
        params.push_back(dec_kernels[static_cast<size_t>(i)]);
        params.push_back(dec_biases[static_cast<size_t>(i)]);
    }
    return params;
}

MaeModel init_mae(int64_t in_channels, int64_t feature_channels, int64_t depth, uint64_t seed) {
    if (in_channels < 1 || feature_channels < 1 || depth < 1) {
        char msg[160];
        std::snprintf(msg, sizeof(msg),
                      "init_mae: in_channels (%lld), feature_channels (%lld) and depth (%lld) "
                      "must all be >= 1",
                      static_cast<long long>(in_channels), static_cast<long long>(feature_channels),
                      static_cast<long long>(depth));
        throw ValueError(msg);
    }

    MaeModel m;
    m.in_channels = in_channels;
    m.feature_channels = feature_channels;
    m.depth = depth;
    m.seed = seed;

    const std::vector<int64_t> w = m.widths();
    uint64_t param_index = 0;
    for (int64_t i = 0; i < depth; ++i) {
        const int64_t ci = (i == 0) ? in_channels : w[static_cast<size_t>(i - 1)];
        const int64_t co = w[static_cast<size_t>(i)];
        m.enc_kernels.push_back(
            kaiming_kernel(co, ci, Rng::derive(seed, {rng_stream::init, param_index++})));
        m.enc_biases.push_back(Tensor::zeros({co}));
    }
    // decoder layer j mirrors encoder layer depth-1-j: transpose-conv kernels
    // keep the forward layout [CO, CI, kh, kw] with CO on the input side
    for (int64_t j = 0; j < depth; ++j) {
        const int64_t level = depth - 1 - j;
        const int64_t c_in = w[static_cast<size_t>(level)];
        const int64_t c_out = (level == 0) ? in_channels : w[static_cast<size_t>(level - 1)];
        m.dec_kernels.push_back(
            kaiming_kernel(c_in, c_out, Rng::derive(seed, {rng_stream::init, param_index++})));
        m.dec_biases.push_back(Tensor::zeros({c_out}));
    }
    return m;
}

void set_trainable(MaeModel& model, bool trainable) {
    for (Tensor& t : model.enc_kernels) t.set_requires_grad(trainable);
    for (Tensor& t : model.enc_biases) t.set_requires_grad(trainable);
    for (Tensor& t : model.dec_kernels) t.set_requires_grad(trainable);
    for (Tensor& t : model.dec_biases) t.set_requires_grad(trainable);
}

uint32_t weight_checksum(const MaeModel& model) {
    validate_model(model, "weight_checksum");
    ByteWriter w;
    for (const Tensor& p : model.parameters()) {
        for (double v : p.data()) w.f64le(v);
    }
    return crc32(w.buffer().data(), w.buffer().size());
}

Tensor encode(Tape* tape, const MaeModel& model, const Tensor& x) {
    validate_model(model, "encode");
    validate_input(model, x, "encode");
    return run_encoder(tape, model, x).features;
}

Tensor reconstruct(Tape* tape, const MaeModel& model, const Tensor& x) {
    validate_model(model, "reconstruct");
    validate_input(model, x, "reconstruct");
    EncoderTrace trace = run_encoder(tape, model, x);
    Tensor h = trace.features;
    for (int64_t j = 0; j < model.depth; ++j) {
        const auto [oh, ow] = trace.layer_hw[static_cast<size_t>(model.depth - 1 - j)];
        h = conv2d_transpose(tape, h, model.dec_kernels[static_cast<size_t>(j)], kStride, kPad,
                             oh, ow);
        h = bias_add(tape, h, model.dec_biases[static_cast<size_t>(j)]);
        if (j + 1 < model.depth) h = leaky_relu(tape, h, kLeakySlope);
    }
    return h;
}

std::vector<double> pretrain(MaeModel& model, const std::vector<Tensor>& dataset,
                             const PretrainConfig& cfg) {
    validate_model(model, "pretrain");
    if (dataset.empty()) throw ValueError("pretrain: dataset is empty");
    if (cfg.steps < 1) throw ValueError("pretrain: steps must be >= 1");
    if (cfg.batch_size < 1) throw ValueError("pretrain: batch size must be >= 1");
    for (size_t i = 0; i < dataset.size(); ++i) {
        const Tensor& img = dataset[i];
        if (!img.defined() || img.rank() != 4 || img.dim(0) != 1) {
            throw ShapeError("pretrain: dataset image " + std::to_string(i) +
                             " must be a [1,C,H,W] tensor");
        }
        if (img.dim(1) != model.in_channels) {
            throw ShapeError("pretrain: dataset image " + std::to_string(i) + " has " +
                             std::to_string(img.dim(1)) + " channels but the model expects " +
                             std::to_string(model.in_channels));
        }
        build_grid(img.dim(2), img.dim(3), cfg.patch_px); // throws on indivisible sizes
    }

    set_trainable(model, true);
    std::vector<Tensor> params = model.parameters();
    std::optional<Adam> adam;
    std::optional<Sgd> sgd;
    if (cfg.optimizer == OptimizerKind::adam) {
        AdamConfig ac;
        ac.lr = cfg.lr;
        adam.emplace(params, ac);
    } else {
        sgd.emplace(params, cfg.lr);
    }

    std::vector<double> curve;
    curve.reserve(static_cast<size_t>(cfg.steps));
    for (int64_t step = 0; step < cfg.steps; ++step) {
        Rng batch_rng(Rng::derive(cfg.seed, {rng_stream::batch, static_cast<uint64_t>(step)}));
        Tape tape;
        Tensor total;
        for (int64_t b = 0; b < cfg.batch_size; ++b) {
            const int64_t idx = batch_rng.next_below(static_cast<int64_t>(dataset.size()));
            const Tensor& img = dataset[static_cast<size_t>(idx)];
            const uint64_t mask_seed = Rng::derive(
                cfg.seed,
                {rng_stream::masking, static_cast<uint64_t>(step), static_cast<uint64_t>(idx)});
            const MaskSpec spec =
                make_mask_spec(img.dim(2), img.dim(3), cfg.patch_px, cfg.mask_ratio, mask_seed);
            auto [masked, mask01] = apply_mask(img, spec, cfg.mask_value);
            Tensor rec = reconstruct(&tape, model, masked);
            Tensor loss = cfg.loss_region == LossRegion::masked_only
                              ? masked_l2_loss(&tape, rec, img, mask01)
                              : l2_loss(&tape, rec, img);
            total = total.defined() ? add(&tape, total, loss) : loss;
        }
        Tensor loss = mul_scalar(&tape, total, 1.0 / static_cast<double>(cfg.batch_size));
        const double value = loss.item();
        if (!std::isfinite(value)) {
            throw ValueError("pretrain: non-finite loss at step " + std::to_string(step));
        }
        curve.push_back(value);

        if (adam) adam->zero_grad();
        if (sgd) sgd->zero_grad();
        tape.backward(loss);
        try {
            if (adam) adam->step();
            if (sgd) sgd->step();
        } catch (const ValueError& e) {
            throw ValueError(std::string(e.what()) + " (pretrain step " + std::to_string(step) +
                             ")");
        }
    }

    model.pretrain_patch_px = cfg.patch_px;
    model.pretrain_mask_ratio = cfg.mask_ratio;
    return curve;
}

// ---------------------------------------------------------------------------
// Checkpoint file: "MAEC", u8 version, u32le header length, key=value text
// header, one tensor block per parameter in a fixed order, trailing CRC32
// over everything before it.
// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const MaeModel& model) {
    validate_model(model, "save_checkpoint");
    char header[512];
    std::snprintf(header, sizeof(header),
                  "in_channels=%lld\n"
                  "feature_channels=%lld\n"
                  "depth=%lld\n"
                  "seed=%llu\n"
                  "pretrain_patch_px=%lld\n"
                  "pretrain_mask_ratio=%.17g\n",
                  static_cast<long long>(model.in_channels),
                  static_cast<long long>(model.feature_channels),
                  static_cast<long long>(model.depth),
                  static_cast<unsigned long long>(model.seed),
                  static_cast<long long>(model.pretrain_patch_px), model.pretrain_mask_ratio);

    ByteWriter w;
    w.str(kCheckpointMagic);
    w.u8(kCheckpointVersion);
    const std::string_view header_view(header);
    w.u32le(static_cast<uint32_t>(header_view.size()));
    w.str(header_view);
    for (const Tensor& p : model.parameters()) encode_tensor(w, p);
    w.u32le(crc32(w.buffer().data(), w.buffer().size()));
    write_file(path, w.buffer());
}

namespace {

int64_t header_int(const std::map<std::string, std::string>& kv, const std::string& key,
                   const std::string& source) {
    auto it = kv.find(key);
    if (it == kv.end()) throw IoError(source + ": checkpoint header is missing '" + key + "'");
    char* end = nullptr;
    const long long v = std::strtoll(it->second.c_str(), &end, 10);
    if (end == it->second.c_str() || *end != '\0') {
        throw IoError(source + ": checkpoint header value '" + key + "=" + it->second +
                      "' is not an integer");
    }
    return static_cast<int64_t>(v);
}

double header_double(const std::map<std::string, std::string>& kv, const std::string& key,
                     const std::string& source) {
    auto it = kv.find(key);
    if (it == kv.end()) throw IoError(source + ": checkpoint header is missing '" + key + "'");
    char* end = nullptr;
    const double v = std::strtod(it->second.c_str(), &end);
    if (end == it->second.c_str() || *end != '\0') {
        throw IoError(source + ": checkpoint header value '" + key + "=" + it->second +
                      "' is not a number");
    }
    return v;
}

} // namespace

MaeModel load_checkpoint(const std::filesystem::path& path, int64_t expected_in_channels) {
    const std::string blob = read_file(path);
    const std::string name = path.string();
    if (blob.size() < 4) throw IoError(name + ": not a checkpoint file (too short)");
    ByteReader tail(std::string_view(blob).substr(blob.size() - 4), name);
    const uint32_t expect = tail.u32le();
    const uint32_t actual = crc32(blob.data(), blob.size() - 4);
    if (expect != actual) {
        char msg[160];
        std::snprintf(msg, sizeof(msg),
                      "%s: checkpoint checksum mismatch (stored %08x, computed %08x)",
                      name.c_str(), expect, actual);
        throw IoError(msg);
    }

    ByteReader r(std::string_view(blob).substr(0, blob.size() - 4), name);
    if (r.bytes(4) != kCheckpointMagic) {
        throw IoError(name + ": bad magic, not a checkpoint file");
    }
    const uint8_t version = r.u8();
    if (version != kCheckpointVersion) {
        throw IoError(name + ": unsupported checkpoint version " + std::to_string(version));
    }

    const uint32_t header_len = r.u32le();
    const std::string header = r.bytes(header_len);
    std::map<std::string, std::string> kv;
    size_t pos = 0;
    while (pos < header.size()) {
        size_t eol = header.find('\n', pos);
        if (eol == std::string::npos) eol = header.size();
        const std::string line = header.substr(pos, eol - pos);
        pos = eol + 1;
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw IoError(name + ": malformed checkpoint header line '" + line + "'");
        }
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }

    const int64_t in_channels = header_int(kv, "in_channels", name);
    const int64_t feature_channels = header_int(kv, "feature_channels", name);
    const int64_t depth = header_int(kv, "depth", name);
    auto seed_it = kv.find("seed");
    if (seed_it == kv.end()) throw IoError(name + ": checkpoint header is missing 'seed'");
    char* seed_end = nullptr;
    const uint64_t seed = std::strtoull(seed_it->second.c_str(), &seed_end, 10);
    if (seed_end == seed_it->second.c_str() || *seed_end != '\0') {
        throw IoError(name + ": checkpoint header value 'seed=" + seed_it->second +
                      "' is not an integer");
    }
    const int64_t patch_px = header_int(kv, "pretrain_patch_px", name);
    const double mask_ratio = header_double(kv, "pretrain_mask_ratio", name);
    if (in_channels < 1 || feature_channels < 1 || depth < 1) {
        throw IoError(name + ": checkpoint header declares invalid architecture");
    }
    if (expected_in_channels >= 0 && in_channels != expected_in_channels) {
        char msg[160];
        std::snprintf(msg, sizeof(msg),
                      "%s: checkpoint declares in_channels=%lld but the consumer expects %lld",
                      name.c_str(), static_cast<long long>(in_channels),
                      static_cast<long long>(expected_in_channels));
        throw IoError(msg);
    }

    MaeModel model = init_mae(in_channels, feature_channels, depth, seed);
    model.pretrain_patch_px = patch_px;
    model.pretrain_mask_ratio = mask_ratio;

    auto load_into = [&](Tensor& dst) {
        Tensor t = decode_tensor(r);
        if (t.shape() != dst.shape()) {
            throw IoError(name + ": checkpoint tensor has shape " + shape_str(t.shape()) +
                          " where the declared architecture requires " + shape_str(dst.shape()));
        }
        dst = t;
    };
    for (int64_t i = 0; i < depth; ++i) {
        load_into(model.enc_kernels[static_cast<size_t>(i)]);
        load_into(model.enc_biases[static_cast<size_t>(i)]);
    }
    for (int64_t i = 0; i < depth; ++i) {
        load_into(model.dec_kernels[static_cast<size_t>(i)]);
        load_into(model.dec_biases[static_cast<size_t>(i)]);
    }
    if (r.remaining() != 0) {
        throw IoError(name + ": trailing bytes after checkpoint payload");
    }
    set_trainable(model, false);
    return model;
}

} // namespace maelab
