#pragma once

#include "maelab/mae.hpp"
#include "maelab/tensor.hpp"

#include <cstdint>
#include <optional>
#include <unordered_map>

namespace maelab {

enum class DistanceKind { l1, l2 };

/// Feature term computed on aligned random crops instead of the full image.
struct PatchVariant {
    int64_t crop_px = 0;
    int64_t crops_per_step = 1;
    uint64_t seed = 0;
};

/// Training objective: base(pred, gt) + lambda * feat(E(pred), E(gt)) with a
/// frozen encoder E. Defaults: L1 base, L2 feature distance, lambda 1.
struct LossConfig {
    DistanceKind base_kind = DistanceKind::l1;
    double lambda = 1.0;
    DistanceKind feature_kind = DistanceKind::l2;
    std::optional<PatchVariant> patch_variant;
};

/// Mean-reduced L1 or L2 distance over all elements of two same-shape tensors.
Tensor feature_distance(Tape* tape, const Tensor& a, const Tensor& b, DistanceKind kind);

/// Memoizes encoder features of ground-truth tensors (keyed by tensor id);
/// ground truth is constant, so caching is exact. The cache re-validates the
/// encoder checksum on every lookup and drops all entries when it changes.
class FeatureCache {
public:
    Tensor gt_features(const MaeModel& encoder, const Tensor& gt);
    void invalidate() { by_id_.clear(); }
    size_t size() const { return by_id_.size(); }

private:
    bool has_checksum_ = false;
    uint32_t encoder_checksum_ = 0;
    std::unordered_map<uint64_t, Tensor> by_id_;
};

/// The scalar objective plus its two components as plain values for logging.
/// `feature` is the unweighted feature distance (0 when lambda == 0, in which
/// case the encoder is never evaluated and `total` is bit-equal to the base
/// loss alone).
struct LossTerms {
    Tensor total;
    double base = 0.0;
    double feature = 0.0;
};

LossTerms total_loss_terms(Tape* tape, const Tensor& pred, const Tensor& gt,
                           const MaeModel& encoder, const LossConfig& cfg,
                           FeatureCache* cache = nullptr);

Tensor total_loss(Tape* tape, const Tensor& pred, const Tensor& gt, const MaeModel& encoder,
                  const LossConfig& cfg, FeatureCache* cache = nullptr);

/// Patch variant: the base term still covers the full image; the feature term
/// averages over cfg.patch_variant->crops_per_step seeded crops, the same
/// coordinates applied to pred and gt. Requires cfg.patch_variant.
LossTerms total_loss_patch_terms(Tape* tape, const Tensor& pred, const Tensor& gt,
                                 const MaeModel& encoder, const LossConfig& cfg);

Tensor total_loss_patch(Tape* tape, const Tensor& pred, const Tensor& gt,
                        const MaeModel& encoder, const LossConfig& cfg);

} // namespace maelab
