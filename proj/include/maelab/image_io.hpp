#pragma once

#include "maelab/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace maelab {

/// Interleaved (row-major, HWC) float image with values in [0,1].
/// channels is 1 (gray) or 3 (RGB).
struct ImageBuffer {
    int64_t height = 0;
    int64_t width = 0;
    int64_t channels = 0;
    std::vector<double> pixels;

    static ImageBuffer create(int64_t height, int64_t width, int64_t channels,
                              double fill = 0.0);

    double at(int64_t y, int64_t x, int64_t c) const {
        return pixels[static_cast<size_t>((y * width + x) * channels + c)];
    }
    double& at(int64_t y, int64_t x, int64_t c) {
        return pixels[static_cast<size_t>((y * width + x) * channels + c)];
    }

    /// Throws if dimensions, buffer size, or value range are inconsistent.
    void validate() const;
};

/// Frames of identical shape, temporal order preserved.
struct FrameStack {
    std::vector<ImageBuffer> frames;

    int64_t count() const { return static_cast<int64_t>(frames.size()); }
    void validate() const;
};

/// Binary PGM (P5) / PPM (P6), maxval 255, the only image format supported.
ImageBuffer read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const ImageBuffer& img);

/// Planar [1,C,H,W] tensor with the exact float values of the buffer.
Tensor to_tensor(const ImageBuffer& img);
/// Inverse of to_tensor; out-of-range values are clamped into [0,1].
ImageBuffer from_tensor(const Tensor& t);

/// Channel-stacks T frames of C channels into [1, C*T, H, W]; frame k
/// occupies channels [k*C, (k+1)*C).
Tensor stack_frames(const FrameStack& fs);
FrameStack unstack_frames(const Tensor& t, int64_t frame_count);

/// Catmull-Rom bicubic resampling (Keys kernel, a = -0.5), center-aligned
/// sampling with clamped borders. Preserves constant images exactly.
ImageBuffer resize_bicubic(const ImageBuffer& img, int64_t new_h, int64_t new_w);
std::vector<double> resize_plane_bicubic(const std::vector<double>& src, int64_t h, int64_t w,
                                         int64_t new_h, int64_t new_w);

} // namespace maelab
