#pragma once

#include "maelab/tensor.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace maelab {

/// A seeded grid partition of an image (or channel-stacked frame stack) with
/// a sampled visible-patch subset. Images use gt == 1 and patch_frames == 1;
/// a spacetime spec covers patch_frames consecutive frames per cell.
struct MaskSpec {
    int64_t gt = 1;        // grid cells along time
    int64_t gh = 0;        // grid cells along height
    int64_t gw = 0;        // grid cells along width
    int64_t patch_px = 0;  // spatial patch edge in pixels
    int64_t patch_frames = 1;
    double mask_ratio = 0.0;
    uint64_t seed = 0;
    std::vector<int64_t> visible; // sorted unique cell indices, < gt*gh*gw

    int64_t total_patches() const { return gt * gh * gw; }
};

/// gh = h / patch_px, gw = w / patch_px; exact divisibility required.
std::pair<int64_t, int64_t> build_grid(int64_t h, int64_t w, int64_t patch_px);

/// (gt, gh, gw) with gt = t / patch_frames; exact divisibility on all axes.
struct SpacetimeGrid {
    int64_t gt, gh, gw;
};
SpacetimeGrid build_spacetime_grid(int64_t t, int64_t h, int64_t w, int64_t patch_px,
                                   int64_t patch_frames);

/// Uniform without-replacement sample of round((1-ratio)*total) indices
/// (at least 1), sorted. Fully determined by the seed.
std::vector<int64_t> sample_visible(int64_t total_patches, double mask_ratio, uint64_t seed);

MaskSpec make_mask_spec(int64_t h, int64_t w, int64_t patch_px, double mask_ratio,
                        uint64_t seed);
MaskSpec make_spacetime_mask_spec(int64_t t, int64_t h, int64_t w, int64_t patch_px,
                                  int64_t patch_frames, double mask_ratio, uint64_t seed);

/// Masks x = [1,C,H,W] by the spec: (masked, mask01) with
/// masked = x*(1-mask01) + mask_value*mask01 and mask01 = 1 on masked pixels.
/// For an image spec, mask01 is one [1,1,H,W] plane shared by all channels;
/// for a spacetime spec (x = [1, C*T, H, W] with channels_per_frame per
/// frame) mask01 has the full input shape since frames differ.
std::pair<Tensor, Tensor> apply_mask(const Tensor& x, const MaskSpec& spec, double mask_value);
std::pair<Tensor, Tensor> apply_spacetime_mask(const Tensor& x, int64_t channels_per_frame,
                                               const MaskSpec& spec, double mask_value);

} // namespace maelab
