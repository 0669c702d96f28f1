#include "maelab/masking.hpp"

#include "maelab/error.hpp"
#include "maelab/rng.hpp"

#include <algorithm>
#include <cmath>

namespace maelab {

namespace {

int64_t checked_div(int64_t value, int64_t divisor, const char* axis) {
    if (divisor < 1) {
        throw ValueError(std::string("mask grid: patch size along ") + axis +
                         " must be positive, got " + std::to_string(divisor));
    }
    if (value < 1 || value % divisor != 0) {
        throw ValueError(std::string("mask grid: extent ") + std::to_string(value) + " along " +
                         axis + " is not divisible by patch size " + std::to_string(divisor));
    }
    return value / divisor;
}

} // namespace

std::pair<int64_t, int64_t> build_grid(int64_t h, int64_t w, int64_t patch_px) {
    return {checked_div(h, patch_px, "height"), checked_div(w, patch_px, "width")};
}

SpacetimeGrid build_spacetime_grid(int64_t t, int64_t h, int64_t w, int64_t patch_px,
                                   int64_t patch_frames) {
    SpacetimeGrid g{};
    g.gt = checked_div(t, patch_frames, "time");
    g.gh = checked_div(h, patch_px, "height");
    g.gw = checked_div(w, patch_px, "width");
    return g;
}

std::vector<int64_t> sample_visible(int64_t total_patches, double mask_ratio, uint64_t seed) {
    if (total_patches < 1) throw ValueError("sample_visible: no patches to sample from");
    if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) {
        throw ValueError("sample_visible: mask_ratio must lie in (0,1), got " +
                         std::to_string(mask_ratio));
    }
    int64_t n_visible =
        std::llround((1.0 - mask_ratio) * static_cast<double>(total_patches));
    n_visible = std::clamp<int64_t>(n_visible, 1, total_patches);
    Rng rng(seed);
    std::vector<int64_t> visible = sample_without_replacement(rng, total_patches, n_visible);
    std::sort(visible.begin(), visible.end());
    return visible;
}

MaskSpec make_mask_spec(int64_t h, int64_t w, int64_t patch_px, double mask_ratio,
                        uint64_t seed) {
    MaskSpec spec;
    std::tie(spec.gh, spec.gw) = build_grid(h, w, patch_px);
    spec.patch_px = patch_px;
    spec.mask_ratio = mask_ratio;
    spec.seed = seed;
    spec.visible = sample_visible(spec.total_patches(), mask_ratio, seed);
    return spec;
}

MaskSpec make_spacetime_mask_spec(int64_t t, int64_t h, int64_t w, int64_t patch_px,
                                  int64_t patch_frames, double mask_ratio, uint64_t seed) {
    MaskSpec spec;
    const SpacetimeGrid g = build_spacetime_grid(t, h, w, patch_px, patch_frames);
    spec.gt = g.gt;
    spec.gh = g.gh;
    spec.gw = g.gw;
    spec.patch_px = patch_px;
    spec.patch_frames = patch_frames;
    spec.mask_ratio = mask_ratio;
    spec.seed = seed;
    spec.visible = sample_visible(spec.total_patches(), mask_ratio, seed);
    return spec;
}

namespace {

void check_input(const Tensor& x, const MaskSpec& spec, const char* op) {
    if (!x.defined() || x.rank() != 4 || x.dim(0) != 1) {
        throw ShapeError(std::string(op) + ": expected a [1,C,H,W] tensor, got " +
                         (x.defined() ? shape_str(x.shape()) : std::string("undefined")));
    }
    if (x.dim(2) != spec.gh * spec.patch_px || x.dim(3) != spec.gw * spec.patch_px) {
        throw ShapeError(std::string(op) + ": input " + shape_str(x.shape()) +
                         " does not match the " + std::to_string(spec.gh) + "x" +
                         std::to_string(spec.gw) + " grid of " + std::to_string(spec.patch_px) +
                         "px patches");
    }
}

std::vector<char> masked_cells(const MaskSpec& spec) {
    std::vector<char> masked(static_cast<size_t>(spec.total_patches()), 1);
    for (int64_t v : spec.visible) {
        if (v < 0 || v >= spec.total_patches()) {
            throw ValueError("mask spec: visible index " + std::to_string(v) + " out of range");
        }
        masked[static_cast<size_t>(v)] = 0;
    }
    return masked;
}

} // namespace

std::pair<Tensor, Tensor> apply_mask(const Tensor& x, const MaskSpec& spec, double mask_value) {
    check_input(x, spec, "apply_mask");
    if (spec.gt != 1 || spec.patch_frames != 1) {
        throw ValueError("apply_mask: got a spacetime spec; use apply_spacetime_mask");
    }
    if (!std::isfinite(mask_value)) throw ValueError("apply_mask: non-finite mask value");

    const int64_t c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::vector<char> masked_cell = masked_cells(spec);

    Tensor mask01 = Tensor::zeros({1, 1, h, w});
    auto mp = mask01.mutable_data();
    for (int64_t gy = 0; gy < spec.gh; ++gy) {
        for (int64_t gx = 0; gx < spec.gw; ++gx) {
            if (!masked_cell[static_cast<size_t>(gy * spec.gw + gx)]) continue;
            for (int64_t py = 0; py < spec.patch_px; ++py) {
                double* row = mp.data() + (gy * spec.patch_px + py) * w + gx * spec.patch_px;
                for (int64_t px = 0; px < spec.patch_px; ++px) row[px] = 1.0;
            }
        }
    }

    Tensor masked = Tensor::zeros(x.shape());
    auto xp = x.data();
    auto out = masked.mutable_data();
    const int64_t hw = h * w;
    for (int64_t ci = 0; ci < c; ++ci) {
        for (int64_t i = 0; i < hw; ++i) {
            const double m = mp[static_cast<size_t>(i)];
            out[static_cast<size_t>(ci * hw + i)] =
                xp[static_cast<size_t>(ci * hw + i)] * (1.0 - m) + mask_value * m;
        }
    }
    return {masked, mask01};
}

std::pair<Tensor, Tensor> apply_spacetime_mask(const Tensor& x, int64_t channels_per_frame,
                                               const MaskSpec& spec, double mask_value) {
    check_input(x, spec, "apply_spacetime_mask");
    if (!std::isfinite(mask_value)) {
        throw ValueError("apply_spacetime_mask: non-finite mask value");
    }
    if (channels_per_frame < 1 || x.dim(1) % channels_per_frame != 0) {
        throw ShapeError("apply_spacetime_mask: channel count " + std::to_string(x.dim(1)) +
                         " is not a multiple of channels_per_frame " +
                         std::to_string(channels_per_frame));
    }
    const int64_t frames = x.dim(1) / channels_per_frame;
    if (frames != spec.gt * spec.patch_frames) {
        throw ShapeError("apply_spacetime_mask: " + std::to_string(frames) +
                         " frames do not match the grid of " + std::to_string(spec.gt) +
                         " cells of " + std::to_string(spec.patch_frames) + " frames");
    }

    const int64_t h = x.dim(2), w = x.dim(3), hw = h * w;
    const std::vector<char> masked_cell = masked_cells(spec);

    Tensor mask01 = Tensor::zeros(x.shape());
    auto mp = mask01.mutable_data();
    for (int64_t gt = 0; gt < spec.gt; ++gt) {
        for (int64_t gy = 0; gy < spec.gh; ++gy) {
            for (int64_t gx = 0; gx < spec.gw; ++gx) {
                const int64_t cell = (gt * spec.gh + gy) * spec.gw + gx;
                if (!masked_cell[static_cast<size_t>(cell)]) continue;
                for (int64_t f = gt * spec.patch_frames; f < (gt + 1) * spec.patch_frames; ++f) {
                    for (int64_t ci = 0; ci < channels_per_frame; ++ci) {
                        const int64_t ch = f * channels_per_frame + ci;
                        for (int64_t py = 0; py < spec.patch_px; ++py) {
                            double* row = mp.data() + ch * hw +
                                          (gy * spec.patch_px + py) * w + gx * spec.patch_px;
                            for (int64_t px = 0; px < spec.patch_px; ++px) row[px] = 1.0;
                        }
                    }
                }
            }
        }
    }

    Tensor masked = Tensor::zeros(x.shape());
    auto xp = x.data();
    auto out = masked.mutable_data();
    for (size_t i = 0; i < xp.size(); ++i) {
        const double m = mp[i];
        out[i] = xp[i] * (1.0 - m) + mask_value * m;
    }
    return {masked, mask01};
}

} // namespace maelab
