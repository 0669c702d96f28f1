#pragma once

#include "maelab/tensor.hpp"

#include <vector>

namespace maelab {

/// Full-reference image quality metrics over [N,C,H,W] tensors in [0,1]
/// domain (values outside are accepted and enter the arithmetic as-is).
/// All are pure functions of their inputs.

double mse(const Tensor& pred, const Tensor& gt);

/// 10*log10(peak^2 / MSE); identical inputs return the documented 99.0 cap.
double psnr(const Tensor& pred, const Tensor& gt, double peak = 1.0);

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), C1=(0.01*peak)^2,
/// C2=(0.03*peak)^2, mean over valid window positions, then over channels.
/// Needs H and W >= 11.
double ssim(const Tensor& pred, const Tensor& gt, double peak = 1.0);

/// Spectral angle mapper: mean over pixels of the angle (radians) between
/// the C-dimensional spectra. Zero-norm pixels contribute 0. Needs C >= 2.
double sam(const Tensor& pred, const Tensor& gt);

struct ErgasResult {
    double value = 0.0;
    std::vector<int64_t> excluded_bands; // |mean| < 1e-8, skipped
};

/// 100*scale_ratio*sqrt(mean_b (RMSE_b / mean_b)^2) over usable bands.
ErgasResult ergas(const Tensor& pred, const Tensor& gt, double scale_ratio);

} // namespace maelab
