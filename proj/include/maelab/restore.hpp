#pragma once

#include "maelab/loss.hpp"
#include "maelab/mae.hpp"
#include "maelab/niqe.hpp"
#include "maelab/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace maelab {

// ---------------------------------------------------------------------------
// Degradations
// ---------------------------------------------------------------------------

enum class DegradationKind {
    gaussian_noise, // additive N(0, sigma^2), clamped to [0,1]
    down_up,        // bicubic down by `scale`, bicubic back up (pre-upsampled SR)
    gamma_darken,   // v -> gain * v^gamma (gamma >= 1, 0 < gain <= 1)
    video_noise,    // gaussian noise per frame of a channel-stacked clip
};

struct DegradationSpec {
    DegradationKind kind = DegradationKind::gaussian_noise;
    double sigma = 0.0;          // gaussian_noise / video_noise, in [0,1] units
    int64_t scale = 2;           // down_up: 2 or 4
    double gamma = 1.0;          // gamma_darken
    double gain = 1.0;           // gamma_darken
    int64_t frame_channels = 3;  // video_noise: channels per stacked frame
    uint64_t seed = 0;
};

/// Applies the degradation to a [1,C,H,W] tensor in [0,1]. Pure function of
/// (img, spec, image_index): the noise stream is keyed by (spec.seed,
/// image_index), so the clean/degraded pairing is stable across epochs and
/// runs. sigma == 0 (and gamma == 1, gain == 1) reproduce the input
/// bit-exactly.
Tensor degrade(const Tensor& img, const DegradationSpec& spec, int64_t image_index);

// ---------------------------------------------------------------------------
// Residual restoration model
// ---------------------------------------------------------------------------

/// Shape-preserving residual conv net: (num_layers - 1) 3x3 conv + leaky-relu
/// blocks, a final 3x3 conv, and a global input skip y = x + net(x). The
/// final layer is zero-initialized so a freshly initialized model is the
/// identity map.
struct RestorationModel {
    int64_t in_channels = 0;
    int64_t hidden_channels = 0;
    int64_t num_layers = 0;
    uint64_t seed = 0;
    std::vector<Tensor> kernels;
    std::vector<Tensor> biases;

    std::vector<Tensor> parameters() const;
};

RestorationModel init_restoration_model(int64_t in_channels, int64_t hidden_channels,
                                        int64_t num_layers, uint64_t seed);

Tensor restore_forward(Tape* tape, const RestorationModel& model, const Tensor& x);

void set_trainable(RestorationModel& model, bool trainable);
uint32_t weight_checksum(const RestorationModel& model);

/// Model file: magic "RMDL", u8 version, key=value text header, MTEN blocks
/// in parameters() order, trailing CRC32 over everything before it.
void save_restoration_model(const std::filesystem::path& path, const RestorationModel& model);
RestorationModel load_restoration_model(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

enum class TaskKind { denoise, super_resolution, enhance, video_denoise };
enum class RunConfiguration { original, ccmae, p_ccmae };

const char* task_name(TaskKind task);
const char* configuration_name(RunConfiguration c);

/// Fully describes one training run; every field lands in the RunReport echo
/// so a run can be reproduced from its report alone.
struct ExperimentConfig {
    TaskKind task = TaskKind::denoise;
    std::string train_path; // directory of PNM files or a synthetic: scheme
    std::string val_path;
    RunConfiguration configuration = RunConfiguration::original;
    LossConfig loss;             // lambda is forced to 0 when configuration == original
    std::string mae_checkpoint;  // required unless configuration == original
    std::string niqe_model;      // required when the metric list contains NIQE
    OptimizerKind optimizer = OptimizerKind::adam;
    double lr = 1e-3;
    int64_t steps = 500;
    int64_t batch_size = 2;
    std::vector<std::string> metrics = {"PSNR", "SSIM"};
    uint64_t seed = 0;

    // task parameters
    double sigma = 0.1;   // denoise / video_denoise
    int64_t sr_scale = 2; // super_resolution
    double gamma = 2.0;   // enhance
    double gain = 0.8;    // enhance

    // data parameters
    int64_t channels = 3; // per frame for video tasks
    int64_t frames = 4;   // video tasks: frames per stacked clip

    // model parameters
    int64_t hidden_channels = 32;
    int64_t model_layers = 3;

    // patch-variant parameters (configuration == p_ccmae)
    int64_t crop_px = 16;
    int64_t crops_per_step = 1;
};

/// Validates every field and returns the resolved config (original => lambda
/// 0, patch variant materialized for p_ccmae, metric names checked). Throws
/// ConfigError on contradictions.
ExperimentConfig resolve_experiment_config(const ExperimentConfig& cfg);

/// The degradation implied by the task, keyed for the train or val split.
DegradationSpec degradation_for(const ExperimentConfig& cfg, bool val_split);

// ---------------------------------------------------------------------------
// Run report
// ---------------------------------------------------------------------------

struct StepLog {
    double base = 0.0;    // pixel-loss term
    double feature = 0.0; // encoder feature-distance term (0 when lambda == 0)
    double total = 0.0;   // the optimized scalar == base + lambda * feature
};

struct EvalTable {
    std::vector<std::string> metric_names;
    std::vector<std::vector<double>> per_image; // [image][metric]
    std::vector<double> aggregate;              // mean over images, per metric
};

inline constexpr char kReportFormatVersion[] = "RRPT1";

struct RunReport {
    std::string format_version = kReportFormatVersion;
    ExperimentConfig config; // resolved echo
    std::vector<StepLog> train_log;
    EvalTable eval;
    double wall_time_seconds = 0.0; // excluded from determinism comparisons
    uint64_t seed = 0;
    uint32_t weight_checksum = 0;  // restoration model, after training
    uint32_t encoder_checksum = 0; // frozen MAE encoder (0 for original)
};

// ---------------------------------------------------------------------------
// Training and evaluation
// ---------------------------------------------------------------------------

struct TrainResult {
    RestorationModel model;
    RunReport report;
};

/// Runs the full training loop: degrade on the fly with per-image seeds,
/// forward through the residual model, the configured objective, backward,
/// optimizer step; then evaluates on the val split. Deterministic given the
/// config. If `restored_dir` is non-empty the restored val images are
/// written there.
TrainResult train_restoration(const ExperimentConfig& cfg,
                              const std::filesystem::path& restored_dir = {});

/// Restores each degraded val image and scores it against its clean
/// counterpart with every requested metric; images are processed in index
/// order, the aggregate row is the per-metric mean. `niqe` may be null when
/// the metric list does not contain NIQE. If `restored_dir` is non-empty the
/// clamped outputs are written there as PNM files.
EvalTable evaluate(const RestorationModel& model, const std::vector<Tensor>& val_clean,
                   const DegradationSpec& spec, const std::vector<std::string>& metric_names,
                   const NiqeModel* niqe = nullptr,
                   const std::filesystem::path& restored_dir = {},
                   int64_t frames_per_clip = 1);

} // namespace maelab
