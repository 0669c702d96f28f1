#pragma once

#include "maelab/image_io.hpp"
#include "maelab/tensor.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace maelab {

/// Natural-scene-statistics quality model: a multivariate Gaussian fitted to
/// per-patch MSCN features of a pristine corpus. Immutable after fit.
struct NiqeModel {
    int64_t patch_size = 96;
    double sharpness_fraction = 0.75;
    Tensor mu;     // [36]
    Tensor sigma;  // [36, 36]
};

/// Generalized Gaussian fit of zero-mean data by moment matching.
struct GgdFit {
    double alpha = 0.0;     // shape
    double sigma_sq = 0.0;  // E[x^2]
};

/// Asymmetric generalized Gaussian fit (used on pairwise MSCN products).
struct AggdFit {
    double alpha = 0.0;
    double mean = 0.0;
    double left_sigma_sq = 0.0;
    double right_sigma_sq = 0.0;
};

GgdFit fit_ggd(std::span<const double> x);
AggdFit fit_aggd(std::span<const double> x);

/// 18 NSS features per scale (GGD on MSCN + AGGD on 4 pairwise products),
/// two scales (the second from a bicubic half-resolution image), one row of
/// 36 per patch. Exposed for tests and diagnostics.
std::vector<std::vector<double>> niqe_patch_features(const ImageBuffer& image,
                                                     int64_t patch_size);

/// Fits the pristine model: per-image, patches below the sharpness cut
/// (top `sharpness_fraction` by mean local deviation are kept) are dropped,
/// then mu/sigma are estimated over all kept patches.
NiqeModel niqe_fit(const std::vector<ImageBuffer>& corpus, int64_t patch_size = 96,
                   double sharpness_fraction = 0.75);

/// Mahalanobis-style distance between the image's feature Gaussian and the
/// pristine model; lower is better. Uses all patches of the image.
double niqe_score(const ImageBuffer& image, const NiqeModel& model);

void save_niqe_model(const std::filesystem::path& path, const NiqeModel& model);
NiqeModel load_niqe_model(const std::filesystem::path& path);

} // namespace maelab
