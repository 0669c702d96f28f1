#pragma once

#include "maelab/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace maelab {

/// Convolutional masked autoencoder: a stride-2 conv encoder (leaky-relu
/// after every layer) and a mirrored conv-transpose decoder with no output
/// activation. Encoder widths are 16, 32, ... doubling, with the final layer
/// forced to feature_channels.
struct MaeModel {
    int64_t in_channels = 0;
    int64_t feature_channels = 0;
    int64_t depth = 0;
    uint64_t seed = 0;

    std::vector<Tensor> enc_kernels; // [w_i, w_{i-1}, 3, 3]
    std::vector<Tensor> enc_biases;  // [w_i]
    std::vector<Tensor> dec_kernels; // mirror shapes of enc_kernels, reversed order
    std::vector<Tensor> dec_biases;  // [w_{i-1}]

    /// Pretraining provenance, recorded in the checkpoint header
    /// (0 / 0.0 until pretrain has run).
    int64_t pretrain_patch_px = 0;
    double pretrain_mask_ratio = 0.0;

    std::vector<int64_t> widths() const;
    std::vector<Tensor> parameters() const;
};

enum class OptimizerKind { sgd, adam };
enum class LossRegion { masked_only, all_pixels };

struct PretrainConfig {
    double mask_ratio = 0.75;
    int64_t patch_px = 16;
    double mask_value = 0.0;
    int64_t steps = 1;
    int64_t batch_size = 4;
    OptimizerKind optimizer = OptimizerKind::adam;
    double lr = 1e-3;
    LossRegion loss_region = LossRegion::masked_only;
    uint64_t seed = 0;
};

MaeModel init_mae(int64_t in_channels, int64_t feature_channels, int64_t depth, uint64_t seed);

/// Flips requires_grad on every parameter: true before optimizing the model
/// itself, false when it serves as a frozen feature extractor.
void set_trainable(MaeModel& model, bool trainable);

/// CRC of all parameter values in a fixed order; changes iff a weight changes.
uint32_t weight_checksum(const MaeModel& model);

/// Final feature map of the encoder. Differentiable when `tape` is given and
/// the relevant tensors require grad.
Tensor encode(Tape* tape, const MaeModel& model, const Tensor& x);

/// Full encoder->decoder pass; output shape equals input shape.
Tensor reconstruct(Tape* tape, const MaeModel& model, const Tensor& x);

/// Self-supervised masked-reconstruction training. Mutates `model` in place
/// and returns the per-step training loss (length = cfg.steps). Each step
/// draws a batch, samples a fresh mask per image (seeded by run seed, step,
/// and dataset index), and minimizes reconstruction error over the masked
/// region (or the whole image under LossRegion::all_pixels).
std::vector<double> pretrain(MaeModel& model, const std::vector<Tensor>& dataset,
                             const PretrainConfig& cfg);

/// Checkpoint: magic, version, text header with the architecture and
/// provenance, tensor blocks, trailing CRC32.
void save_checkpoint(const std::filesystem::path& path, const MaeModel& model);

/// `expected_in_channels >= 0` asserts the consumer's channel count up front.
MaeModel load_checkpoint(const std::filesystem::path& path, int64_t expected_in_channels = -1);

} // namespace maelab
