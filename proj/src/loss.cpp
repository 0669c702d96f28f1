#include "maelab/loss.hpp"

#include "maelab/error.hpp"
#include "maelab/ops.hpp"
#include "maelab/rng.hpp"

#include <cmath>
#include <string>

namespace maelab {

using namespace ops;

namespace {

void validate_config(const LossConfig& cfg, const char* who) {
    if (!std::isfinite(cfg.lambda) || cfg.lambda < 0.0) {
        throw ValueError(std::string(who) + ": lambda must be finite and >= 0");
    }
}

void validate_pair(const Tensor& pred, const Tensor& gt, const char* who) {
    if (!pred.defined() || !gt.defined() || pred.rank() != 4 || gt.rank() != 4) {
        throw ShapeError(std::string(who) + ": pred and gt must be [N,C,H,W] tensors");
    }
    if (pred.shape() != gt.shape()) {
        throw ShapeError(std::string(who) + ": pred " + shape_str(pred.shape()) +
                         " and gt " + shape_str(gt.shape()) + " differ in shape");
    }
}

void require_frozen(const MaeModel& encoder, const char* who) {
    for (const Tensor& k : encoder.enc_kernels) {
        if (k.requires_grad()) {
            throw ValueError(std::string(who) +
                             ": the encoder must be frozen (set_trainable(model, false)) before "
                             "it can serve as a loss");
        }
    }
    for (const Tensor& b : encoder.enc_biases) {
        if (b.requires_grad()) {
            throw ValueError(std::string(who) +
                             ": the encoder must be frozen (set_trainable(model, false)) before "
                             "it can serve as a loss");
        }
    }
}

} // namespace

Tensor feature_distance(Tape* tape, const Tensor& a, const Tensor& b, DistanceKind kind) {
    return kind == DistanceKind::l1 ? l1_loss(tape, a, b) : l2_loss(tape, a, b);
}

Tensor FeatureCache::gt_features(const MaeModel& encoder, const Tensor& gt) {
    const uint32_t checksum = weight_checksum(encoder);
    if (!has_checksum_ || checksum != encoder_checksum_) {
        by_id_.clear();
        encoder_checksum_ = checksum;
        has_checksum_ = true;
    }
    auto it = by_id_.find(gt.id());
    if (it != by_id_.end()) return it->second;
    Tensor feats = encode(nullptr, encoder, gt);
    by_id_.emplace(gt.id(), feats);
    return feats;
}

LossTerms total_loss_terms(Tape* tape, const Tensor& pred, const Tensor& gt,
                           const MaeModel& encoder, const LossConfig& cfg, FeatureCache* cache) {
    validate_config(cfg, "total_loss");
    validate_pair(pred, gt, "total_loss");
    require_frozen(encoder, "total_loss");

    LossTerms terms;
    Tensor base = feature_distance(tape, pred, gt, cfg.base_kind);
    terms.base = base.item();
    if (cfg.lambda == 0.0) {
        // skip the encoder entirely so the objective is bit-equal to the base
        // loss and training trajectories match a no-feature-term run exactly
        terms.total = base;
        return terms;
    }

    Tensor pred_feats = encode(tape, encoder, pred);
    Tensor gt_feats = cache ? cache->gt_features(encoder, gt) : encode(nullptr, encoder, gt);
    Tensor feat = feature_distance(tape, pred_feats, gt_feats, cfg.feature_kind);
    terms.feature = feat.item();
    terms.total = add(tape, base, mul_scalar(tape, feat, cfg.lambda));
    return terms;
}

Tensor total_loss(Tape* tape, const Tensor& pred, const Tensor& gt, const MaeModel& encoder,
                  const LossConfig& cfg, FeatureCache* cache) {
    return total_loss_terms(tape, pred, gt, encoder, cfg, cache).total;
}

LossTerms total_loss_patch_terms(Tape* tape, const Tensor& pred, const Tensor& gt,
                                 const MaeModel& encoder, const LossConfig& cfg) {
    validate_config(cfg, "total_loss_patch");
    validate_pair(pred, gt, "total_loss_patch");
    require_frozen(encoder, "total_loss_patch");
    if (!cfg.patch_variant.has_value()) {
        throw ValueError("total_loss_patch: config has no patch_variant");
    }
    const PatchVariant& pv = *cfg.patch_variant;
    const int64_t h = pred.dim(2);
    const int64_t w = pred.dim(3);
    if (pv.crop_px < 1 || pv.crop_px > h || pv.crop_px > w) {
        throw ValueError("total_loss_patch: crop_px " + std::to_string(pv.crop_px) +
                         " does not fit a " + std::to_string(h) + "x" + std::to_string(w) +
                         " image");
    }
    if (pv.crops_per_step < 1) {
        throw ValueError("total_loss_patch: crops_per_step must be >= 1");
    }

    LossTerms terms;
    Tensor base = feature_distance(tape, pred, gt, cfg.base_kind);
    terms.base = base.item();
    if (cfg.lambda == 0.0) {
        terms.total = base;
        return terms;
    }

    Rng crop_rng(Rng::derive(pv.seed, {rng_stream::crops}));
    Tensor feat_sum;
    for (int64_t i = 0; i < pv.crops_per_step; ++i) {
        const int64_t y0 = crop_rng.next_below(h - pv.crop_px + 1);
        const int64_t x0 = crop_rng.next_below(w - pv.crop_px + 1);
        Tensor pred_crop = crop(tape, pred, y0, x0, pv.crop_px, pv.crop_px);
        Tensor gt_crop = crop(nullptr, gt, y0, x0, pv.crop_px, pv.crop_px);
        Tensor pred_feats = encode(tape, encoder, pred_crop);
        Tensor gt_feats = encode(nullptr, encoder, gt_crop);
        Tensor d = feature_distance(tape, pred_feats, gt_feats, cfg.feature_kind);
        feat_sum = feat_sum.defined() ? add(tape, feat_sum, d) : d;
    }
    Tensor feat = mul_scalar(tape, feat_sum, 1.0 / static_cast<double>(pv.crops_per_step));
    terms.feature = feat.item();
    terms.total = add(tape, base, mul_scalar(tape, feat, cfg.lambda));
    return terms;
}

Tensor total_loss_patch(Tape* tape, const Tensor& pred, const Tensor& gt,
                        const MaeModel& encoder, const LossConfig& cfg) {
    return total_loss_patch_terms(tape, pred, gt, encoder, cfg).total;
}

} // namespace maelab
