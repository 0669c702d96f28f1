#include "maelab/restore.hpp"

#include "maelab/binio.hpp"
#include "maelab/crc32.hpp"
#include "maelab/data.hpp"
#include "maelab/error.hpp"
#include "maelab/image_io.hpp"
#include "maelab/metrics.hpp"
#include "maelab/ops.hpp"
#include "maelab/optim.hpp"
#include "maelab/rng.hpp"
#include "maelab/tensor_io.hpp"

#include <algorithm>
#include <chrono>
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
constexpr char kModelMagic[] = "RMDL";
constexpr uint8_t kModelVersion = 1;

const char* const kSupportedMetrics[] = {"PSNR", "SSIM", "SAM", "ERGAS", "NIQE"};

void validate_image_arg(const Tensor& img, const char* who) {
    if (!img.defined() || img.rank() != 4 || img.dim(0) != 1) {
        throw ShapeError(std::string(who) + ": image must be a [1,C,H,W] tensor");
    }
}

void validate_spec(const DegradationSpec& spec, const char* who) {
    switch (spec.kind) {
        case DegradationKind::gaussian_noise:
        case DegradationKind::video_noise:
            if (!std::isfinite(spec.sigma) || spec.sigma < 0.0 || spec.sigma > 1.0) {
                throw ValueError(std::string(who) + ": sigma must be in [0, 1]");
            }
            if (spec.kind == DegradationKind::video_noise && spec.frame_channels < 1) {
                throw ValueError(std::string(who) + ": frame_channels must be >= 1");
            }
            break;
        case DegradationKind::down_up:
            if (spec.scale != 2 && spec.scale != 4) {
                throw ValueError(std::string(who) + ": down_up scale must be 2 or 4");
            }
            break;
        case DegradationKind::gamma_darken:
            if (!std::isfinite(spec.gamma) || spec.gamma < 1.0) {
                throw ValueError(std::string(who) + ": gamma must be finite and >= 1");
            }
            if (!std::isfinite(spec.gain) || spec.gain <= 0.0 || spec.gain > 1.0) {
                throw ValueError(std::string(who) + ": gain must be in (0, 1]");
            }
            break;
    }
}

void add_clamped_noise(double* values, int64_t count, double sigma, Rng& rng) {
    for (int64_t i = 0; i < count; ++i) {
        values[i] = std::clamp(values[i] + sigma * rng.next_normal(), 0.0, 1.0);
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

void validate_model(const RestorationModel& m, const char* who) {
    if (m.num_layers < 1 || m.in_channels < 1 || m.hidden_channels < 1 ||
        static_cast<int64_t>(m.kernels.size()) != m.num_layers ||
        static_cast<int64_t>(m.biases.size()) != m.num_layers) {
        throw ValueError(std::string(who) + ": model is not initialized");
    }
}

/// Copy with every value clamped into [0,1]; restored images are scored and
/// written in display range.
Tensor clamp_unit(const Tensor& t) {
    Tensor out = Tensor::zeros(t.shape());
    const auto src = t.data();
    auto dst = out.mutable_data();
    for (size_t i = 0; i < src.size(); ++i) dst[i] = std::clamp(src[i], 0.0, 1.0);
    return out;
}

bool is_supported_metric(const std::string& name) {
    for (const char* m : kSupportedMetrics) {
        if (name == m) return true;
    }
    return false;
}

std::string supported_metric_list() {
    std::string s;
    for (const char* m : kSupportedMetrics) {
        if (!s.empty()) s += ", ";
        s += m;
    }
    return s;
}

double compute_metric(const std::string& name, const Tensor& pred, const Tensor& clean,
                      const DegradationSpec& spec, const NiqeModel* niqe) {
    if (name == "PSNR") return psnr(pred, clean, 1.0);
    if (name == "SSIM") return ssim(pred, clean, 1.0);
    if (name == "SAM") return sam(pred, clean);
    if (name == "ERGAS") {
        const double ratio =
            spec.kind == DegradationKind::down_up ? 1.0 / static_cast<double>(spec.scale) : 1.0;
        return ergas(pred, clean, ratio).value;
    }
    if (name == "NIQE") {
        if (!niqe) throw ConfigError("metric NIQE requested but no NIQE model was provided");
        return niqe_score(from_tensor(pred), *niqe);
    }
    throw ConfigError("unknown metric '" + name + "' (supported: " + supported_metric_list() +
                      ")");
}

void write_restored(const std::filesystem::path& dir, int64_t index, const Tensor& pred,
                    int64_t frames_per_clip) {
    char name[64];
    if (frames_per_clip > 1) {
        const FrameStack fs = unstack_frames(pred, frames_per_clip);
        for (int64_t f = 0; f < fs.count(); ++f) {
            const ImageBuffer& frame = fs.frames[static_cast<size_t>(f)];
            std::snprintf(name, sizeof(name), "%04lld_f%02lld.%s", static_cast<long long>(index),
                          static_cast<long long>(f), frame.channels == 1 ? "pgm" : "ppm");
            write_pnm(dir / name, frame);
        }
        return;
    }
    const ImageBuffer img = from_tensor(pred);
    std::snprintf(name, sizeof(name), "%04lld.%s", static_cast<long long>(index),
                  img.channels == 1 ? "pgm" : "ppm");
    write_pnm(dir / name, img);
}

} // namespace

// ---------------------------------------------------------------------------
// Degradations
// ---------------------------------------------------------------------------

Tensor degrade(const Tensor& img, const DegradationSpec& spec, int64_t image_index) {
    validate_image_arg(img, "degrade");
    validate_spec(spec, "degrade");
    if (image_index < 0) throw ValueError("degrade: image_index must be >= 0");

    const int64_t c = img.dim(1);
    const int64_t h = img.dim(2);
    const int64_t w = img.dim(3);
    Tensor out = Tensor::zeros(img.shape());
    std::copy(img.data().begin(), img.data().end(), out.mutable_data().begin());
    double* values = out.mutable_data().data();

    switch (spec.kind) {
        case DegradationKind::gaussian_noise: {
            if (spec.sigma == 0.0) return out;
            Rng rng(Rng::derive(spec.seed,
                                {rng_stream::data_noise, static_cast<uint64_t>(image_index)}));
            add_clamped_noise(values, c * h * w, spec.sigma, rng);
            return out;
        }
        case DegradationKind::video_noise: {
            if (c % spec.frame_channels != 0) {
                throw ShapeError("degrade: clip has " + std::to_string(c) +
                                 " channels, not a multiple of frame_channels " +
                                 std::to_string(spec.frame_channels));
            }
            if (spec.sigma == 0.0) return out;
            const int64_t frames = c / spec.frame_channels;
            const int64_t per_frame = spec.frame_channels * h * w;
            for (int64_t f = 0; f < frames; ++f) {
                Rng rng(Rng::derive(spec.seed,
                                    {rng_stream::data_noise, static_cast<uint64_t>(image_index),
                                     static_cast<uint64_t>(f)}));
                add_clamped_noise(values + f * per_frame, per_frame, spec.sigma, rng);
            }
            return out;
        }
        case DegradationKind::down_up: {
            if (h < 4 * spec.scale || w < 4 * spec.scale) {
                throw ValueError("degrade: " + std::to_string(h) + "x" + std::to_string(w) +
                                 " image is smaller than 4*scale = " +
                                 std::to_string(4 * spec.scale) + " pixels per side");
            }
            const int64_t low_h = h / spec.scale;
            const int64_t low_w = w / spec.scale;
            std::vector<double> plane(static_cast<size_t>(h * w));
            for (int64_t ch = 0; ch < c; ++ch) {
                double* p = values + ch * h * w;
                std::copy(p, p + h * w, plane.begin());
                const std::vector<double> low = resize_plane_bicubic(plane, h, w, low_h, low_w);
                const std::vector<double> up = resize_plane_bicubic(low, low_h, low_w, h, w);
                for (int64_t i = 0; i < h * w; ++i) p[i] = std::clamp(up[static_cast<size_t>(i)], 0.0, 1.0);
            }
            return out;
        }
        case DegradationKind::gamma_darken: {
            for (int64_t i = 0; i < c * h * w; ++i) {
                values[i] = spec.gain * std::pow(values[i], spec.gamma);
            }
            return out;
        }
    }
    throw ValueError("degrade: unknown degradation kind");
}

// ---------------------------------------------------------------------------
// Residual restoration model
// ---------------------------------------------------------------------------

std::vector<Tensor> RestorationModel::parameters() const {
    std::vector<Tensor> params;
    for (size_t i = 0; i < kernels.size(); ++i) {
        params.push_back(kernels[i]);
        params.push_back(biases[i]);
    }
    return params;
}

RestorationModel init_restoration_model(int64_t in_channels, int64_t hidden_channels,
                                        int64_t num_layers, uint64_t seed) {
    if (in_channels < 1 || hidden_channels < 1 || num_layers < 1) {
        throw ValueError("init_restoration_model: in_channels, hidden_channels and num_layers "
                         "must all be >= 1");
    }
    RestorationModel m;
    m.in_channels = in_channels;
    m.hidden_channels = hidden_channels;
    m.num_layers = num_layers;
    m.seed = seed;
    uint64_t param_index = 0;
    for (int64_t l = 0; l < num_layers; ++l) {
        const int64_t ci = (l == 0) ? in_channels : hidden_channels;
        const int64_t co = (l == num_layers - 1) ? in_channels : hidden_channels;
        if (l == num_layers - 1) {
            // zero final layer: the residual branch starts at zero, so the
            // freshly initialized model is the identity map
            m.kernels.push_back(Tensor::zeros({co, ci, kKernelPx, kKernelPx}));
        } else {
            m.kernels.push_back(
                kaiming_kernel(co, ci, Rng::derive(seed, {rng_stream::init, param_index})));
        }
        ++param_index;
        m.biases.push_back(Tensor::zeros({co}));
    }
    return m;
}

Tensor restore_forward(Tape* tape, const RestorationModel& model, const Tensor& x) {
    validate_model(model, "restore_forward");
    if (!x.defined() || x.rank() != 4) {
        throw ShapeError("restore_forward: input must be a [N,C,H,W] tensor");
    }
    if (x.dim(1) != model.in_channels) {
        throw ShapeError("restore_forward: input has " + std::to_string(x.dim(1)) +
                         " channels but the model expects " + std::to_string(model.in_channels));
    }
    Tensor h = x;
    for (int64_t l = 0; l < model.num_layers; ++l) {
        h = conv2d(tape, h, model.kernels[static_cast<size_t>(l)], 1, 1);
        h = bias_add(tape, h, model.biases[static_cast<size_t>(l)]);
        if (l != model.num_layers - 1) h = leaky_relu(tape, h, kLeakySlope);
    }
    return add(tape, x, h);
}

void set_trainable(RestorationModel& model, bool trainable) {
    for (Tensor& t : model.kernels) t.set_requires_grad(trainable);
    for (Tensor& t : model.biases) t.set_requires_grad(trainable);
}

uint32_t weight_checksum(const RestorationModel& model) {
    validate_model(model, "weight_checksum");
    ByteWriter w;
    for (const Tensor& p : model.parameters()) {
        for (double v : p.data()) w.f64le(v);
    }
    return crc32(w.buffer().data(), w.buffer().size());
}

void save_restoration_model(const std::filesystem::path& path, const RestorationModel& model) {
    validate_model(model, "save_restoration_model");
    char header[256];
    std::snprintf(header, sizeof(header),
                  "in_channels=%lld\n"
                  "hidden_channels=%lld\n"
                  "num_layers=%lld\n"
                  "seed=%llu\n",
                  static_cast<long long>(model.in_channels),
                  static_cast<long long>(model.hidden_channels),
                  static_cast<long long>(model.num_layers),
                  static_cast<unsigned long long>(model.seed));
    ByteWriter w;
    w.str(kModelMagic);
    w.u8(kModelVersion);
    const std::string_view header_view(header);
    w.u32le(static_cast<uint32_t>(header_view.size()));
    w.str(header_view);
    for (const Tensor& p : model.parameters()) encode_tensor(w, p);
    w.u32le(crc32(w.buffer().data(), w.buffer().size()));
    write_file(path, w.buffer());
}

RestorationModel load_restoration_model(const std::filesystem::path& path) {
    const std::string blob = read_file(path);
    const std::string name = path.string();
    if (blob.size() < 4) throw IoError(name + ": not a restoration model file (too short)");
    ByteReader tail(std::string_view(blob).substr(blob.size() - 4), name);
    const uint32_t expect = tail.u32le();
    const uint32_t actual = crc32(blob.data(), blob.size() - 4);
    if (expect != actual) {
        char msg[160];
        std::snprintf(msg, sizeof(msg), "%s: model checksum mismatch (stored %08x, computed %08x)",
                      name.c_str(), expect, actual);
        throw IoError(msg);
    }

    ByteReader r(std::string_view(blob).substr(0, blob.size() - 4), name);
    if (r.bytes(4) != kModelMagic) {
        throw IoError(name + ": bad magic, not a restoration model file");
    }
    const uint8_t version = r.u8();
    if (version != kModelVersion) {
        throw IoError(name + ": unsupported model version " + std::to_string(version));
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
            throw IoError(name + ": malformed model header line '" + line + "'");
        }
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto header_u64 = [&](const char* key) -> uint64_t {
        auto it = kv.find(key);
        if (it == kv.end()) throw IoError(name + ": model header is missing '" + std::string(key) + "'");
        char* end = nullptr;
        const unsigned long long v = std::strtoull(it->second.c_str(), &end, 10);
        if (end == it->second.c_str() || *end != '\0') {
            throw IoError(name + ": model header value '" + key + "=" + it->second +
                          "' is not an integer");
        }
        return v;
    };

    const int64_t in_channels = static_cast<int64_t>(header_u64("in_channels"));
    const int64_t hidden_channels = static_cast<int64_t>(header_u64("hidden_channels"));
    const int64_t num_layers = static_cast<int64_t>(header_u64("num_layers"));
    const uint64_t seed = header_u64("seed");
    if (in_channels < 1 || hidden_channels < 1 || num_layers < 1) {
        throw IoError(name + ": model header declares an invalid architecture");
    }

    RestorationModel model = init_restoration_model(in_channels, hidden_channels, num_layers, seed);
    for (int64_t l = 0; l < num_layers; ++l) {
        Tensor k = decode_tensor(r);
        if (k.shape() != model.kernels[static_cast<size_t>(l)].shape()) {
            throw IoError(name + ": model tensor has shape " + shape_str(k.shape()) +
                          " where the declared architecture requires " +
                          shape_str(model.kernels[static_cast<size_t>(l)].shape()));
        }
        model.kernels[static_cast<size_t>(l)] = k;
        Tensor b = decode_tensor(r);
        if (b.shape() != model.biases[static_cast<size_t>(l)].shape()) {
            throw IoError(name + ": model tensor has shape " + shape_str(b.shape()) +
                          " where the declared architecture requires " +
                          shape_str(model.biases[static_cast<size_t>(l)].shape()));
        }
        model.biases[static_cast<size_t>(l)] = b;
    }
    if (r.remaining() != 0) {
        throw IoError(name + ": trailing bytes after model payload");
    }
    return model;
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

const char* task_name(TaskKind task) {
    switch (task) {
        case TaskKind::denoise: return "denoise";
        case TaskKind::super_resolution: return "super_resolution";
        case TaskKind::enhance: return "enhance";
        case TaskKind::video_denoise: return "video_denoise";
    }
    return "unknown";
}

const char* configuration_name(RunConfiguration c) {
    switch (c) {
        case RunConfiguration::original: return "Original";
        case RunConfiguration::ccmae: return "+CCMAE";
        case RunConfiguration::p_ccmae: return "+P_CCMAE";
    }
    return "unknown";
}

ExperimentConfig resolve_experiment_config(const ExperimentConfig& raw) {
    ExperimentConfig cfg = raw;
    if (cfg.train_path.empty()) throw ConfigError("experiment: train_path is empty");
    if (cfg.val_path.empty()) throw ConfigError("experiment: val_path is empty");
    if (cfg.steps < 1) throw ConfigError("experiment: steps must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("experiment: batch must be >= 1");
    if (!std::isfinite(cfg.lr) || cfg.lr <= 0.0) {
        throw ConfigError("experiment: lr must be finite and > 0");
    }
    if (cfg.channels < 1) throw ConfigError("experiment: channels must be >= 1");
    if (cfg.frames < 1) throw ConfigError("experiment: frames must be >= 1");
    if (cfg.hidden_channels < 1 || cfg.model_layers < 1) {
        throw ConfigError("experiment: hidden_channels and model_layers must be >= 1");
    }
    if (!std::isfinite(cfg.loss.lambda) || cfg.loss.lambda < 0.0) {
        throw ConfigError("experiment: lambda must be finite and >= 0");
    }
    if (cfg.metrics.empty()) throw ConfigError("experiment: the metric list is empty");
    for (const std::string& m : cfg.metrics) {
        if (!is_supported_metric(m)) {
            throw ConfigError("experiment: unknown metric '" + m + "' (supported: " +
                              supported_metric_list() + ")");
        }
    }

    const bool video = cfg.task == TaskKind::video_denoise;
    const bool wants_niqe =
        std::find(cfg.metrics.begin(), cfg.metrics.end(), "NIQE") != cfg.metrics.end();
    const bool wants_sam =
        std::find(cfg.metrics.begin(), cfg.metrics.end(), "SAM") != cfg.metrics.end();
    if (wants_niqe && cfg.niqe_model.empty()) {
        throw ConfigError("experiment: metric NIQE requires a niqe_model file");
    }
    if (wants_niqe && video) {
        throw ConfigError("experiment: metric NIQE is not defined for frame-stacked clips");
    }
    if (wants_sam && !video && cfg.channels < 2) {
        throw ConfigError("experiment: metric SAM needs at least 2 channels");
    }

    // task parameter sanity, via the degradation validator
    validate_spec(degradation_for(cfg, false), "experiment");

    if (cfg.configuration == RunConfiguration::original) {
        cfg.loss.lambda = 0.0; // Original ignores the feature term by definition
        cfg.loss.patch_variant.reset();
    } else if (cfg.mae_checkpoint.empty()) {
        throw ConfigError(std::string("experiment: configuration ") +
                          configuration_name(cfg.configuration) +
                          " requires an mae_checkpoint");
    }
    if (cfg.configuration == RunConfiguration::p_ccmae) {
        if (cfg.crop_px < 1) throw ConfigError("experiment: crop_px must be >= 1");
        if (cfg.crops_per_step < 1) throw ConfigError("experiment: crops_per_step must be >= 1");
        PatchVariant pv;
        pv.crop_px = cfg.crop_px;
        pv.crops_per_step = cfg.crops_per_step;
        pv.seed = 0; // re-keyed per (step, batch slot) by the training loop
        cfg.loss.patch_variant = pv;
    } else if (cfg.configuration == RunConfiguration::ccmae) {
        cfg.loss.patch_variant.reset();
    }
    return cfg;
}

DegradationSpec degradation_for(const ExperimentConfig& cfg, bool val_split) {
    DegradationSpec spec;
    spec.seed = val_split ? Rng::derive(cfg.seed, {rng_stream::val_noise}) : cfg.seed;
    switch (cfg.task) {
        case TaskKind::denoise:
            spec.kind = DegradationKind::gaussian_noise;
            spec.sigma = cfg.sigma;
            break;
        case TaskKind::super_resolution:
            spec.kind = DegradationKind::down_up;
            spec.scale = cfg.sr_scale;
            break;
        case TaskKind::enhance:
            spec.kind = DegradationKind::gamma_darken;
            spec.gamma = cfg.gamma;
            spec.gain = cfg.gain;
            break;
        case TaskKind::video_denoise:
            spec.kind = DegradationKind::video_noise;
            spec.sigma = cfg.sigma;
            spec.frame_channels = cfg.channels;
            break;
    }
    return spec;
}

// ---------------------------------------------------------------------------
// Training and evaluation
// ---------------------------------------------------------------------------

EvalTable evaluate(const RestorationModel& model, const std::vector<Tensor>& val_clean,
                   const DegradationSpec& spec, const std::vector<std::string>& metric_names,
                   const NiqeModel* niqe, const std::filesystem::path& restored_dir,
                   int64_t frames_per_clip) {
    validate_model(model, "evaluate");
    if (val_clean.empty()) throw ValueError("evaluate: the validation set is empty");
    if (metric_names.empty()) throw ValueError("evaluate: the metric list is empty");
    for (const std::string& m : metric_names) {
        if (!is_supported_metric(m)) {
            throw ConfigError("evaluate: unknown metric '" + m + "' (supported: " +
                              supported_metric_list() + ")");
        }
    }
    if (!restored_dir.empty()) std::filesystem::create_directories(restored_dir);

    EvalTable table;
    table.metric_names = metric_names;
    table.aggregate.assign(metric_names.size(), 0.0);
    for (size_t i = 0; i < val_clean.size(); ++i) {
        const Tensor& clean = val_clean[i];
        const Tensor degraded = degrade(clean, spec, static_cast<int64_t>(i));
        const Tensor pred = clamp_unit(restore_forward(nullptr, model, degraded));
        std::vector<double> row;
        row.reserve(metric_names.size());
        for (size_t m = 0; m < metric_names.size(); ++m) {
            const double v = compute_metric(metric_names[m], pred, clean, spec, niqe);
            row.push_back(v);
            table.aggregate[m] += v;
        }
        table.per_image.push_back(std::move(row));
        if (!restored_dir.empty()) {
            write_restored(restored_dir, static_cast<int64_t>(i), pred, frames_per_clip);
        }
    }
    for (double& v : table.aggregate) v /= static_cast<double>(val_clean.size());
    return table;
}

TrainResult train_restoration(const ExperimentConfig& raw,
                              const std::filesystem::path& restored_dir) {
    const auto t_start = std::chrono::steady_clock::now();
    ExperimentConfig cfg = resolve_experiment_config(raw);
    const bool video = cfg.task == TaskKind::video_denoise;

    std::vector<Tensor> train_set;
    std::vector<Tensor> val_set;
    int64_t frames = 1;
    if (video) {
        int64_t val_frames = 1;
        train_set = load_video_dataset(cfg.train_path, cfg.channels, &frames);
        val_set = load_video_dataset(cfg.val_path, cfg.channels, &val_frames);
        if (frames != val_frames) {
            throw ConfigError("experiment: train clips have " + std::to_string(frames) +
                              " frames but val clips have " + std::to_string(val_frames));
        }
        cfg.frames = frames; // echo what the data actually holds
    } else {
        train_set = load_image_dataset(cfg.train_path, cfg.channels);
        val_set = load_image_dataset(cfg.val_path, cfg.channels);
    }
    const int64_t model_channels = video ? cfg.channels * frames : cfg.channels;

    // the frozen feature encoder; Original gets a placeholder that the
    // lambda == 0 objective short-circuits past without ever evaluating
    MaeModel encoder;
    if (cfg.configuration != RunConfiguration::original) {
        encoder = load_checkpoint(cfg.mae_checkpoint, model_channels);
    } else {
        encoder = init_mae(model_channels, 8, 1, 0);
        set_trainable(encoder, false);
    }
    const uint32_t encoder_before =
        cfg.configuration != RunConfiguration::original ? weight_checksum(encoder) : 0;

    RestorationModel model = init_restoration_model(model_channels, cfg.hidden_channels,
                                                    cfg.model_layers, cfg.seed);
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

    const DegradationSpec train_spec = degradation_for(cfg, false);
    FeatureCache cache;
    std::vector<StepLog> train_log;
    train_log.reserve(static_cast<size_t>(cfg.steps));

    for (int64_t step = 0; step < cfg.steps; ++step) {
        Rng batch_rng(Rng::derive(cfg.seed, {rng_stream::batch, static_cast<uint64_t>(step)}));
        Tape tape;
        Tensor total;
        double base_sum = 0.0;
        double feature_sum = 0.0;
        for (int64_t b = 0; b < cfg.batch_size; ++b) {
            const int64_t idx = batch_rng.next_below(static_cast<int64_t>(train_set.size()));
            const Tensor& clean = train_set[static_cast<size_t>(idx)];
            const Tensor degraded = degrade(clean, train_spec, idx);
            Tensor pred = restore_forward(&tape, model, degraded);
            LossTerms terms;
            if (cfg.configuration == RunConfiguration::p_ccmae) {
                LossConfig lc = cfg.loss;
                lc.patch_variant->seed = Rng::derive(
                    cfg.seed,
                    {rng_stream::crops, static_cast<uint64_t>(step), static_cast<uint64_t>(b)});
                terms = total_loss_patch_terms(&tape, pred, clean, encoder, lc);
            } else {
                terms = total_loss_terms(&tape, pred, clean, encoder, cfg.loss, &cache);
            }
            total = total.defined() ? add(&tape, total, terms.total) : terms.total;
            base_sum += terms.base;
            feature_sum += terms.feature;
        }
        Tensor loss = mul_scalar(&tape, total, 1.0 / static_cast<double>(cfg.batch_size));

        StepLog entry;
        entry.base = base_sum / static_cast<double>(cfg.batch_size);
        entry.feature = feature_sum / static_cast<double>(cfg.batch_size);
        entry.total = loss.item();
        if (!std::isfinite(entry.total)) {
            char msg[200];
            std::snprintf(msg, sizeof(msg),
                          "train_restoration: non-finite loss at step %lld (base=%g, feature=%g)",
                          static_cast<long long>(step), entry.base, entry.feature);
            throw ValueError(msg);
        }
        train_log.push_back(entry);

        if (adam) adam->zero_grad();
        if (sgd) sgd->zero_grad();
        tape.backward(loss);
        try {
            if (adam) adam->step();
            if (sgd) sgd->step();
        } catch (const ValueError& e) {
            throw ValueError(std::string(e.what()) + " (train_restoration step " +
                             std::to_string(step) + ")");
        }
    }

    if (cfg.configuration != RunConfiguration::original) {
        const uint32_t encoder_after = weight_checksum(encoder);
        if (encoder_after != encoder_before) {
            throw ValueError("train_restoration: the frozen encoder changed during training "
                             "(weight checksum mismatch)");
        }
    }

    NiqeModel niqe;
    const NiqeModel* niqe_ptr = nullptr;
    if (std::find(cfg.metrics.begin(), cfg.metrics.end(), "NIQE") != cfg.metrics.end()) {
        niqe = load_niqe_model(cfg.niqe_model);
        niqe_ptr = &niqe;
    }
    const DegradationSpec val_spec = degradation_for(cfg, true);
    EvalTable eval = evaluate(model, val_set, val_spec, cfg.metrics, niqe_ptr, restored_dir,
                              video ? frames : 1);

    TrainResult result;
    result.report.config = cfg;
    result.report.train_log = std::move(train_log);
    result.report.eval = std::move(eval);
    result.report.seed = cfg.seed;
    result.report.weight_checksum = weight_checksum(model);
    result.report.encoder_checksum = encoder_before;
    result.report.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    result.model = std::move(model);
    return result;
}

} // namespace maelab
