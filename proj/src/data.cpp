#include "maelab/data.hpp"

#include "maelab/error.hpp"
#include "maelab/image_io.hpp"
#include "maelab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

namespace maelab {

namespace {

constexpr double kTau = 6.283185307179586;

void validate_dims(int64_t channels, int64_t h, int64_t w, const char* who) {
    if (channels < 1 || h < 1 || w < 1) {
        throw ValueError(std::string(who) + ": channels, height and width must all be >= 1");
    }
}

// One gray plane: three sinusoid gradients plus 3x3-smoothed noise. The
// phase shift (dy, dx) slides the pattern for video frames.
void fill_plane(double* out, int64_t h, int64_t w, Rng& rng, double dy, double dx) {
    const double f1 = 2.0 + 4.0 * rng.next_unit();
    const double f2 = 3.0 + 5.0 * rng.next_unit();
    const double f3 = 5.0 + 6.0 * rng.next_unit();
    const double p1 = kTau * rng.next_unit();
    const double p2 = kTau * rng.next_unit();
    const double p3 = kTau * rng.next_unit();

    std::vector<double> noise(static_cast<size_t>(h * w));
    for (double& v : noise) v = rng.next_normal();

    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            const double u = (static_cast<double>(x) + dx) / static_cast<double>(w);
            const double v = (static_cast<double>(y) + dy) / static_cast<double>(h);
            double g = 0.5;
            g += 0.12 * std::sin(kTau * f1 * u + p1);
            g += 0.10 * std::sin(kTau * f2 * v + p2);
            g += 0.08 * std::sin(kTau * f3 * (u + v) + p3);
            double acc = 0.0;
            for (int ny = -1; ny <= 1; ++ny)
                for (int nx = -1; nx <= 1; ++nx) {
                    const int64_t yy = std::clamp<int64_t>(y + ny, 0, h - 1);
                    const int64_t xx = std::clamp<int64_t>(x + nx, 0, w - 1);
                    acc += noise[static_cast<size_t>(yy * w + xx)];
                }
            g += 0.03 * (acc / 9.0);
            out[y * w + x] = std::clamp(g, 0.0, 1.0);
        }
    }
}

} // namespace

Tensor synthetic_texture(uint64_t seed, int64_t channels, int64_t h, int64_t w) {
    validate_dims(channels, h, w, "synthetic_texture");
    Tensor t = Tensor::zeros({1, channels, h, w});
    double* data = t.mutable_data().data();
    for (int64_t c = 0; c < channels; ++c) {
        Rng rng(Rng::derive(seed, {rng_stream::synth, static_cast<uint64_t>(c)}));
        fill_plane(data + c * h * w, h, w, rng, 0.0, 0.0);
    }
    return t;
}

std::vector<Tensor> synthetic_dataset(uint64_t seed, int64_t count, int64_t channels, int64_t h,
                                      int64_t w) {
    if (count < 1) throw ValueError("synthetic_dataset: count must be >= 1");
    std::vector<Tensor> out;
    out.reserve(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) {
        out.push_back(synthetic_texture(Rng::derive(seed, {rng_stream::synth, 1000,
                                                           static_cast<uint64_t>(i)}),
                                        channels, h, w));
    }
    return out;
}

namespace {

// "synthetic:10x32x32:seed=7" -> dims {10,32,32}, seed 7. Returns false when
// `source` does not start with the scheme prefix.
bool parse_synthetic_scheme(const std::string& source, const std::string& prefix, size_t dim_count,
                            std::vector<int64_t>& dims, uint64_t& seed) {
    if (source.rfind(prefix, 0) != 0) return false;
    dims.clear();
    seed = 1;
    std::string rest = source.substr(prefix.size());
    std::vector<std::string> parts;
    size_t pos = 0;
    while (pos <= rest.size()) {
        const size_t colon = rest.find(':', pos);
        parts.push_back(rest.substr(pos, colon == std::string::npos ? std::string::npos
                                                                    : colon - pos));
        if (colon == std::string::npos) break;
        pos = colon + 1;
    }
    if (parts.empty() || parts.size() > 2) {
        throw ConfigError("dataset scheme '" + source + "' is malformed; expected " + prefix +
                          "DIMS[:seed=N]");
    }

    std::string spec = parts[0];
    size_t start = 0;
    while (start <= spec.size()) {
        const size_t x = spec.find('x', start);
        const std::string tok = spec.substr(start, x == std::string::npos ? std::string::npos
                                                                          : x - start);
        char* end = nullptr;
        const long long v = std::strtoll(tok.c_str(), &end, 10);
        if (tok.empty() || end == tok.c_str() || *end != '\0' || v < 1) {
            throw ConfigError("dataset scheme '" + source + "' has a bad dimension '" + tok + "'");
        }
        dims.push_back(static_cast<int64_t>(v));
        if (x == std::string::npos) break;
        start = x + 1;
    }
    if (dims.size() != dim_count) {
        throw ConfigError("dataset scheme '" + source + "' needs " + std::to_string(dim_count) +
                          " dimensions, got " + std::to_string(dims.size()));
    }

    if (parts.size() == 2) {
        const std::string& opt = parts[1];
        if (opt.rfind("seed=", 0) != 0) {
            throw ConfigError("dataset scheme '" + source + "' has unknown option '" + opt + "'");
        }
        const std::string num = opt.substr(5);
        char* end = nullptr;
        const unsigned long long v = std::strtoull(num.c_str(), &end, 10);
        if (num.empty() || end == num.c_str() || *end != '\0') {
            throw ConfigError("dataset scheme '" + source + "' has a bad seed '" + num + "'");
        }
        seed = v;
    }
    return true;
}

std::vector<std::filesystem::path> sorted_pnm_files(const std::filesystem::path& dir,
                                                    const std::string& source) {
    if (!std::filesystem::is_directory(dir)) {
        throw IoError("dataset path '" + source + "' is not a directory");
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw IoError("dataset directory '" + source + "' contains no .pgm/.ppm/.pnm files");
    }
    return files;
}

Tensor load_image_checked(const std::filesystem::path& file, int64_t channels) {
    const ImageBuffer img = read_pnm(file);
    if (img.channels != channels) {
        throw IoError(file.string() + ": image has " + std::to_string(img.channels) +
                      " channels but the dataset is configured for " + std::to_string(channels));
    }
    return to_tensor(img);
}

} // namespace

std::vector<Tensor> load_image_dataset(const std::string& source, int64_t channels) {
    if (channels < 1) throw ValueError("load_image_dataset: channels must be >= 1");
    std::vector<int64_t> dims;
    uint64_t seed = 1;
    if (parse_synthetic_scheme(source, "synthetic:", 3, dims, seed)) {
        return synthetic_dataset(seed, dims[0], channels, dims[1], dims[2]);
    }
    std::vector<Tensor> out;
    for (const auto& file : sorted_pnm_files(source, source)) {
        out.push_back(load_image_checked(file, channels));
    }
    return out;
}

std::vector<Tensor> load_video_dataset(const std::string& source, int64_t channels_per_frame,
                                       int64_t* frames_out) {
    if (channels_per_frame < 1) {
        throw ValueError("load_video_dataset: channels_per_frame must be >= 1");
    }
    std::vector<int64_t> dims;
    uint64_t seed = 1;
    if (parse_synthetic_scheme(source, "synthetic-video:", 4, dims, seed)) {
        std::vector<Tensor> out;
        out.reserve(static_cast<size_t>(dims[0]));
        for (int64_t i = 0; i < dims[0]; ++i) {
            out.push_back(synthetic_clip(Rng::derive(seed, {rng_stream::synth, 2000,
                                                            static_cast<uint64_t>(i)}),
                                         dims[1], channels_per_frame, dims[2], dims[3]));
        }
        if (frames_out) *frames_out = dims[1];
        return out;
    }

    if (!std::filesystem::is_directory(source)) {
        throw IoError("dataset path '" + source + "' is not a directory");
    }
    std::vector<std::filesystem::path> clip_dirs;
    for (const auto& entry : std::filesystem::directory_iterator(source)) {
        if (entry.is_directory()) clip_dirs.push_back(entry.path());
    }
    std::sort(clip_dirs.begin(), clip_dirs.end());
    if (clip_dirs.empty()) {
        throw IoError("video dataset '" + source + "' contains no clip subdirectories");
    }

    std::vector<Tensor> out;
    int64_t frames = -1;
    for (const auto& clip_dir : clip_dirs) {
        FrameStack fs;
        for (const auto& file : sorted_pnm_files(clip_dir, clip_dir.string())) {
            const ImageBuffer img = read_pnm(file);
            if (img.channels != channels_per_frame) {
                throw IoError(file.string() + ": frame has " + std::to_string(img.channels) +
                              " channels but the dataset is configured for " +
                              std::to_string(channels_per_frame));
            }
            fs.frames.push_back(img);
        }
        if (frames < 0) {
            frames = fs.count();
        } else if (fs.count() != frames) {
            throw IoError("video dataset '" + source + "': clip '" + clip_dir.string() + "' has " +
                          std::to_string(fs.count()) + " frames where earlier clips have " +
                          std::to_string(frames));
        }
        out.push_back(stack_frames(fs));
    }
    if (frames_out) *frames_out = frames;
    return out;
}

Tensor synthetic_clip(uint64_t seed, int64_t frames, int64_t channels, int64_t h, int64_t w) {
    validate_dims(channels, h, w, "synthetic_clip");
    if (frames < 1) throw ValueError("synthetic_clip: frames must be >= 1");
    Tensor t = Tensor::zeros({1, channels * frames, h, w});
    double* data = t.mutable_data().data();
    for (int64_t f = 0; f < frames; ++f) {
        const double drift = 0.02 * static_cast<double>(f);
        for (int64_t c = 0; c < channels; ++c) {
            // same per-channel stream every frame: the pattern is shared and
            // only the phase slides, which is what makes it look like motion
            Rng rng(Rng::derive(seed, {rng_stream::synth, static_cast<uint64_t>(c)}));
            double* plane = data + (f * channels + c) * h * w;
            fill_plane(plane, h, w, rng, static_cast<double>(f), static_cast<double>(f));
            for (int64_t i = 0; i < h * w; ++i) plane[i] = std::clamp(plane[i] + drift, 0.0, 1.0);
        }
    }
    return t;
}

} // namespace maelab
