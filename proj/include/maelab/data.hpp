#pragma once

#include "maelab/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace maelab {

/// Seeded multi-frequency texture in [0,1]: sinusoidal gradients plus
/// box-smoothed noise, distinct per channel. Shape [1, channels, h, w].
Tensor synthetic_texture(uint64_t seed, int64_t channels, int64_t h, int64_t w);

/// `count` textures with per-image seeds derived from `seed`.
std::vector<Tensor> synthetic_dataset(uint64_t seed, int64_t count, int64_t channels, int64_t h,
                                      int64_t w);

/// Seeded multi-frame clip: a base texture translated by one pixel per frame
/// with mild per-frame brightness drift. Shape [1, channels*frames, h, w]
/// (frame-major channel stacking).
Tensor synthetic_clip(uint64_t seed, int64_t frames, int64_t channels, int64_t h, int64_t w);

/// Loads an image dataset as [1,C,H,W] tensors, sorted by filename. The
/// source is either a directory of binary PGM/PPM files or a scheme
/// "synthetic:COUNTxHxW[:seed=N]" (default seed 1). Every image must have
/// exactly `channels` channels.
std::vector<Tensor> load_image_dataset(const std::string& source, int64_t channels);

/// Loads a video dataset as channel-stacked clips [1, C*T, H, W]. The source
/// is either a directory whose subdirectories each hold one clip's frames
/// (sorted by name) or "synthetic-video:CLIPSxFRAMESxHxW[:seed=N]". All clips
/// must share the same frame count, which is written to *frames_out.
std::vector<Tensor> load_video_dataset(const std::string& source, int64_t channels_per_frame,
                                       int64_t* frames_out);

} // namespace maelab
