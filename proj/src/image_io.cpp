#include "maelab/image_io.hpp"

#include "maelab/binio.hpp"
#include "maelab/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

namespace maelab {

ImageBuffer ImageBuffer::create(int64_t height, int64_t width, int64_t channels, double fill) {
    if (height < 1 || width < 1) {
        throw ValueError("image dimensions must be positive, got " + std::to_string(height) +
                         "x" + std::to_string(width));
    }
    if (channels != 1 && channels != 3) {
        throw ValueError("image channels must be 1 or 3, got " + std::to_string(channels));
    }
    if (fill < 0.0 || fill > 1.0 || !std::isfinite(fill)) {
        throw ValueError("image fill value must lie in [0,1]");
    }
    ImageBuffer img;
    img.height = height;
    img.width = width;
    img.channels = channels;
    img.pixels.assign(static_cast<size_t>(height * width * channels), fill);
    return img;
}

void ImageBuffer::validate() const {
    if (height < 1 || width < 1) throw ValueError("image has non-positive dimensions");
    if (channels != 1 && channels != 3) {
        throw ValueError("image channels must be 1 or 3, got " + std::to_string(channels));
    }
    if (pixels.size() != static_cast<size_t>(height * width * channels)) {
        throw ValueError("image pixel buffer size " + std::to_string(pixels.size()) +
                         " does not match " + std::to_string(height) + "x" +
                         std::to_string(width) + "x" + std::to_string(channels));
    }
    for (double v : pixels) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw ValueError("image pixel value " + std::to_string(v) + " outside [0,1]");
        }
    }
}

void FrameStack::validate() const {
    if (frames.empty()) throw ValueError("frame stack is empty");
    frames.front().validate();
    for (size_t i = 1; i < frames.size(); ++i) {
        frames[i].validate();
        if (frames[i].height != frames.front().height ||
            frames[i].width != frames.front().width ||
            frames[i].channels != frames.front().channels) {
            throw ShapeError("frame " + std::to_string(i) + " shape differs from frame 0");
        }
    }
}

namespace {

// Reads one whitespace-separated header token, skipping '#' comments.
std::string next_header_token(ByteReader& in) {
    std::string tok;
    for (;;) {
        if (in.remaining() == 0) {
            throw IoError(in.source() + ": unexpected end of file in PNM header");
        }
        const char c = static_cast<char>(in.u8());
        if (c == '#') {
            while (in.remaining() > 0 && static_cast<char>(in.u8()) != '\n') {
            }
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(c);
        if (in.remaining() == 0) return tok;
    }
}

int64_t parse_header_int(const std::string& tok, const std::string& source, const char* what) {
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) {
        throw IoError(source + ": malformed PNM " + what + " '" + tok + "'");
    }
    if (tok.size() > 9) throw IoError(source + ": PNM " + what + " out of range");
    return std::stoll(tok);
}

} // namespace

ImageBuffer read_pnm(const std::filesystem::path& path) {
    const std::string raw = read_file(path);
    ByteReader in(raw, path.string());

    const std::string magic = next_header_token(in);
    int64_t channels = 0;
    if (magic == "P5") {
        channels = 1;
    } else if (magic == "P6") {
        channels = 3;
    } else {
        throw IoError(path.string() + ": unsupported PNM magic '" + magic +
                      "' (only binary P5/P6)");
    }
    const int64_t width = parse_header_int(next_header_token(in), path.string(), "width");
    const int64_t height = parse_header_int(next_header_token(in), path.string(), "height");
    const int64_t maxval = parse_header_int(next_header_token(in), path.string(), "maxval");
    if (width < 1 || height < 1) throw IoError(path.string() + ": non-positive PNM dimensions");
    if (maxval != 255) {
        throw IoError(path.string() + ": unsupported PNM maxval " + std::to_string(maxval) +
                      " (only 255)");
    }
    // exactly one whitespace byte separates the header from the payload, and
    // next_header_token has already consumed it

    const size_t count = static_cast<size_t>(width * height * channels);
    if (in.remaining() < count) {
        throw IoError(path.string() + ": unexpected end of file in PNM payload (need " +
                      std::to_string(count) + " bytes, have " + std::to_string(in.remaining()) +
                      ")");
    }
    const std::string payload = in.bytes(count);

    ImageBuffer img = ImageBuffer::create(height, width, channels);
    for (size_t i = 0; i < count; ++i) {
        img.pixels[i] = static_cast<unsigned char>(payload[i]) / 255.0;
    }
    return img;
}

void write_pnm(const std::filesystem::path& path, const ImageBuffer& img) {
    img.validate();
    ByteWriter out;
    char header[64];
    std::snprintf(header, sizeof(header), "%s\n%lld %lld\n255\n",
                  img.channels == 1 ? "P5" : "P6", static_cast<long long>(img.width),
                  static_cast<long long>(img.height));
    out.str(header);
    for (double v : img.pixels) {
        out.u8(static_cast<uint8_t>(std::lround(v * 255.0)));
    }
    write_file(path, out.buffer());
}

Tensor to_tensor(const ImageBuffer& img) {
    img.validate();
    Tensor t = Tensor::zeros({1, img.channels, img.height, img.width});
    auto tp = t.mutable_data();
    const int64_t hw = img.height * img.width;
    for (int64_t y = 0; y < img.height; ++y) {
        for (int64_t x = 0; x < img.width; ++x) {
            for (int64_t c = 0; c < img.channels; ++c) {
                tp[static_cast<size_t>(c * hw + y * img.width + x)] = img.at(y, x, c);
            }
        }
    }
    return t;
}

ImageBuffer from_tensor(const Tensor& t) {
    if (!t.defined() || t.rank() != 4 || t.dim(0) != 1) {
        throw ShapeError("from_tensor: expected a [1,C,H,W] tensor, got " +
                         (t.defined() ? shape_str(t.shape()) : std::string("undefined")));
    }
    const int64_t c = t.dim(1), h = t.dim(2), w = t.dim(3);
    if (c != 1 && c != 3) {
        throw ShapeError("from_tensor: channel count must be 1 or 3, got " + std::to_string(c));
    }
    ImageBuffer img = ImageBuffer::create(h, w, c);
    auto tp = t.data();
    const int64_t hw = h * w;
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            for (int64_t ci = 0; ci < c; ++ci) {
                img.at(y, x, ci) =
                    std::clamp(tp[static_cast<size_t>(ci * hw + y * w + x)], 0.0, 1.0);
            }
        }
    }
    return img;
}

Tensor stack_frames(const FrameStack& fs) {
    fs.validate();
    const ImageBuffer& f0 = fs.frames.front();
    Tensor t = Tensor::zeros({1, f0.channels * fs.count(), f0.height, f0.width});
    auto tp = t.mutable_data();
    const int64_t hw = f0.height * f0.width;
    for (int64_t k = 0; k < fs.count(); ++k) {
        const ImageBuffer& f = fs.frames[static_cast<size_t>(k)];
        for (int64_t y = 0; y < f.height; ++y) {
            for (int64_t x = 0; x < f.width; ++x) {
                for (int64_t c = 0; c < f.channels; ++c) {
                    tp[static_cast<size_t>((k * f.channels + c) * hw + y * f.width + x)] =
                        f.at(y, x, c);
                }
            }
        }
    }
    return t;
}

FrameStack unstack_frames(const Tensor& t, int64_t frame_count) {
    if (!t.defined() || t.rank() != 4 || t.dim(0) != 1) {
        throw ShapeError("unstack_frames: expected a [1,C*T,H,W] tensor");
    }
    if (frame_count < 1 || t.dim(1) % frame_count != 0) {
        throw ShapeError("unstack_frames: channel count " + std::to_string(t.dim(1)) +
                         " is not a multiple of frame count " + std::to_string(frame_count));
    }
    const int64_t c = t.dim(1) / frame_count, h = t.dim(2), w = t.dim(3);
    if (c != 1 && c != 3) {
        throw ShapeError("unstack_frames: per-frame channel count must be 1 or 3, got " +
                         std::to_string(c));
    }
    FrameStack fs;
    auto tp = t.data();
    const int64_t hw = h * w;
    for (int64_t k = 0; k < frame_count; ++k) {
        ImageBuffer f = ImageBuffer::create(h, w, c);
        for (int64_t y = 0; y < h; ++y) {
            for (int64_t x = 0; x < w; ++x) {
                for (int64_t ci = 0; ci < c; ++ci) {
                    f.at(y, x, ci) = std::clamp(
                        tp[static_cast<size_t>((k * c + ci) * hw + y * w + x)], 0.0, 1.0);
                }
            }
        }
        fs.frames.push_back(std::move(f));
    }
    return fs;
}

namespace {

// Keys cubic kernel, a = -0.5 (Catmull-Rom). Partition of unity over the
// four unit-spaced taps, so constants resample to themselves.
double cubic_weight(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return (((t - 5.0) * t + 8.0) * t - 4.0) * a;
    return 0.0;
}

} // namespace

std::vector<double> resize_plane_bicubic(const std::vector<double>& src, int64_t h, int64_t w,
                                         int64_t new_h, int64_t new_w) {
    if (h < 1 || w < 1 || new_h < 1 || new_w < 1) {
        throw ValueError("resize: dimensions must be positive");
    }
    if (src.size() != static_cast<size_t>(h * w)) {
        throw ShapeError("resize: plane size mismatch");
    }

    auto resample_axis = [](const std::vector<double>& in, int64_t rows, int64_t cols,
                            int64_t new_cols) {
        // resample each row from `cols` to `new_cols`
        std::vector<double> out(static_cast<size_t>(rows * new_cols));
        const double scale = static_cast<double>(cols) / static_cast<double>(new_cols);
        for (int64_t x = 0; x < new_cols; ++x) {
            const double sx = (static_cast<double>(x) + 0.5) * scale - 0.5;
            const int64_t x0 = static_cast<int64_t>(std::floor(sx));
            double wts[4];
            int64_t idx[4];
            for (int k = 0; k < 4; ++k) {
                const int64_t xi = x0 - 1 + k;
                wts[k] = cubic_weight(sx - static_cast<double>(xi));
                idx[k] = std::clamp<int64_t>(xi, 0, cols - 1);
            }
            for (int64_t r = 0; r < rows; ++r) {
                const double* row = in.data() + r * cols;
                out[static_cast<size_t>(r * new_cols + x)] =
                    wts[0] * row[idx[0]] + wts[1] * row[idx[1]] + wts[2] * row[idx[2]] +
                    wts[3] * row[idx[3]];
            }
        }
        return out;
    };

    // horizontal pass: h rows of w -> new_w
    std::vector<double> horiz = resample_axis(src, h, w, new_w);
    // vertical pass: operate on the transpose
    std::vector<double> horiz_t(static_cast<size_t>(new_w * h));
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < new_w; ++x)
            horiz_t[static_cast<size_t>(x * h + y)] = horiz[static_cast<size_t>(y * new_w + x)];
    std::vector<double> vert_t = resample_axis(horiz_t, new_w, h, new_h);
    std::vector<double> out(static_cast<size_t>(new_h * new_w));
    for (int64_t x = 0; x < new_w; ++x)
        for (int64_t y = 0; y < new_h; ++y)
            out[static_cast<size_t>(y * new_w + x)] = vert_t[static_cast<size_t>(x * new_h + y)];
    return out;
}

ImageBuffer resize_bicubic(const ImageBuffer& img, int64_t new_h, int64_t new_w) {
    img.validate();
    ImageBuffer out = ImageBuffer::create(new_h, new_w, img.channels);
    const int64_t hw = img.height * img.width;
    std::vector<double> plane(static_cast<size_t>(hw));
    for (int64_t c = 0; c < img.channels; ++c) {
        for (int64_t y = 0; y < img.height; ++y)
            for (int64_t x = 0; x < img.width; ++x)
                plane[static_cast<size_t>(y * img.width + x)] = img.at(y, x, c);
        std::vector<double> resized =
            resize_plane_bicubic(plane, img.height, img.width, new_h, new_w);
        for (int64_t y = 0; y < new_h; ++y)
            for (int64_t x = 0; x < new_w; ++x)
                out.at(y, x, c) = std::clamp(resized[static_cast<size_t>(y * new_w + x)], 0.0, 1.0);
    }
    return out;
}

} // namespace maelab
