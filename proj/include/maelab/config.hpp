#pragma once

#include "maelab/mae.hpp"
#include "maelab/restore.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace maelab {

// ---------------------------------------------------------------------------
// Sectioned key = value files
// ---------------------------------------------------------------------------

/// One "key = value" line under a "[section]" heading.
struct KvEntry {
    std::string section;
    std::string key;
    std::string value;
    int line = 0; // 1-based line in the source; 0 for flag overrides
};

struct KvFile {
    std::string source; // name used in error messages
    std::vector<KvEntry> entries;

    const KvEntry* find(const std::string& section, const std::string& key) const;
};

/// Parses "[section]" headings and "key = value" lines. Blank lines and lines
/// starting with '#' are skipped. Keys before the first section, lines
/// without '=', and duplicate (section, key) pairs are errors, reported with
/// their line number.
KvFile parse_kv_text(const std::string& text, const std::string& source);
KvFile parse_kv_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Lossless value formatting (shared by config echoes and reports)
// ---------------------------------------------------------------------------

/// Shortest decimal string that parses back to exactly the same double.
std::string format_double(double v);
double parse_double_strict(const std::string& text, const std::string& context);
int64_t parse_int_strict(const std::string& text, const std::string& context);
uint64_t parse_u64_strict(const std::string& text, const std::string& context);

/// Levenshtein distance; used for did-you-mean suggestions on unknown keys.
int edit_distance(const std::string& a, const std::string& b);

// ---------------------------------------------------------------------------
// Typed configurations
// ---------------------------------------------------------------------------
// Each parse_* validates every entry against its schema (unknown keys are
// hard errors with an edit-distance suggestion), applies flag overrides of
// the form "key=value" or "section.key=value", fills defaults, and checks
// required keys. The *_text functions write the canonical echo: every key,
// defaults materialized, fixed order; parsing an echo reproduces the struct
// bit-exactly.

ExperimentConfig parse_experiment_config(const KvFile& kv,
                                         const std::vector<std::string>& overrides = {});
std::string experiment_config_text(const ExperimentConfig& cfg);

struct PretrainInvocation {
    std::string train_path;
    int64_t channels = 3;
    int64_t feature_channels = 32;
    int64_t depth = 3;
    PretrainConfig pretrain;
};

PretrainInvocation parse_pretrain_config(const KvFile& kv,
                                         const std::vector<std::string>& overrides = {});
std::string pretrain_config_text(const PretrainInvocation& inv);

struct FitNiqeInvocation {
    std::string corpus_path;
    int64_t channels = 3;
    int64_t patch_size = 96;
    double sharpness_fraction = 0.75;
};

FitNiqeInvocation parse_fit_niqe_config(const KvFile& kv,
                                        const std::vector<std::string>& overrides = {});
std::string fit_niqe_config_text(const FitNiqeInvocation& inv);

} // namespace maelab
