#include "maelab/config.hpp"

#include "maelab/binio.hpp"
#include "maelab/error.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <string>
#include <vector>

namespace maelab {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    size_t pos = 0;
    while (pos <= s.size()) {
        const size_t next = s.find(sep, pos);
        parts.push_back(s.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    return parts;
}

// -------------------------------------------------------------------------
// Schemas
// -------------------------------------------------------------------------

struct SchemaKey {
    const char* section;
    const char* key;
    bool required;
};

const SchemaKey kExperimentSchema[] = {
    {"experiment", "task", true},
    {"experiment", "configuration", false},
    {"experiment", "steps", false},
    {"experiment", "batch", false},
    {"experiment", "optimizer", false},
    {"experiment", "lr", false},
    {"experiment", "seed", false},
    {"experiment", "metrics", false},
    {"data", "train", true},
    {"data", "val", true},
    {"data", "channels", false},
    {"data", "frames", false},
    {"task", "sigma", false},
    {"task", "scale", false},
    {"task", "gamma", false},
    {"task", "gain", false},
    {"model", "hidden_channels", false},
    {"model", "layers", false},
    {"loss", "base", false},
    {"loss", "lambda", false},
    {"loss", "feature", false},
    {"loss", "crop_px", false},
    {"loss", "crops_per_step", false},
    {"mae", "checkpoint", false},
    {"niqe", "model", false},
};

const SchemaKey kPretrainSchema[] = {
    {"data", "train", true},
    {"data", "channels", false},
    {"mae", "feature_channels", false},
    {"mae", "depth", false},
    {"pretrain", "mask_ratio", false},
    {"pretrain", "patch_px", false},
    {"pretrain", "mask_value", false},
    {"pretrain", "steps", false},
    {"pretrain", "batch", false},
    {"pretrain", "optimizer", false},
    {"pretrain", "lr", false},
    {"pretrain", "loss_region", false},
    {"pretrain", "seed", false},
};

const SchemaKey kFitNiqeSchema[] = {
    {"niqe", "corpus", true},
    {"niqe", "channels", false},
    {"niqe", "patch_size", false},
    {"niqe", "fraction", false},
};

template <size_t N>
std::string suggest(const std::string& key, const SchemaKey (&schema)[N]) {
    int best = 3; // only suggest within edit distance 2
    const char* match = nullptr;
    for (const SchemaKey& s : schema) {
        const int d = edit_distance(key, s.key);
        if (d < best) {
            best = d;
            match = s.key;
        }
    }
    return match ? std::string(" (did you mean '") + match + "'?)" : "";
}

template <size_t N>
void validate_keys(const KvFile& kv, const SchemaKey (&schema)[N]) {
    for (const KvEntry& e : kv.entries) {
        bool known = false;
        for (const SchemaKey& s : schema) {
            if (e.section == s.section && e.key == s.key) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw ConfigError(kv.source + ":" + std::to_string(e.line) + ": unknown key '" +
                              e.key + "' in section [" + e.section + "]" +
                              suggest(e.key, schema));
        }
    }
}

template <size_t N>
void check_required(const KvFile& kv, const SchemaKey (&schema)[N]) {
    for (const SchemaKey& s : schema) {
        if (s.required && !kv.find(s.section, s.key)) {
            throw ConfigError(kv.source + ": missing required key '" + s.key + "' in section [" +
                              s.section + "]");
        }
    }
}

/// Applies "key=value" / "section.key=value" overrides onto a parsed file,
/// resolving bare keys through the schema.
template <size_t N>
KvFile apply_overrides(const KvFile& base, const std::vector<std::string>& overrides,
                       const SchemaKey (&schema)[N]) {
    KvFile kv = base;
    for (const std::string& ov : overrides) {
        const size_t eq = ov.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError("override '" + ov + "' is not of the form key=value");
        }
        std::string name = trim(ov.substr(0, eq));
        const std::string value = trim(ov.substr(eq + 1));
        std::string section;
        const size_t dot = name.find('.');
        if (dot != std::string::npos) {
            section = name.substr(0, dot);
            name = name.substr(dot + 1);
            bool known = false;
            for (const SchemaKey& s : schema) {
                if (section == s.section && name == s.key) known = true;
            }
            if (!known) {
                throw ConfigError("override: unknown key '" + name + "' in section [" + section +
                                  "]" + suggest(name, schema));
            }
        } else {
            int matches = 0;
            for (const SchemaKey& s : schema) {
                if (name == s.key) {
                    section = s.section;
                    ++matches;
                }
            }
            if (matches == 0) {
                throw ConfigError("override: unknown key '" + name + "'" + suggest(name, schema));
            }
            if (matches > 1) {
                throw ConfigError("override: key '" + name +
                                  "' is ambiguous; qualify it as section.key");
            }
        }
        bool replaced = false;
        for (KvEntry& e : kv.entries) {
            if (e.section == section && e.key == name) {
                e.value = value;
                replaced = true;
                break;
            }
        }
        if (!replaced) {
            kv.entries.push_back(KvEntry{section, name, value, 0});
        }
    }
    return kv;
}

// -------------------------------------------------------------------------
// Typed getters
// -------------------------------------------------------------------------

std::string where(const KvFile& kv, const KvEntry& e) {
    if (e.line == 0) return kv.source + " (override)";
    return kv.source + ":" + std::to_string(e.line);
}

std::string get_string(const KvFile& kv, const std::string& section, const std::string& key,
                       const std::string& fallback) {
    const KvEntry* e = kv.find(section, key);
    return e ? e->value : fallback;
}

int64_t get_int(const KvFile& kv, const std::string& section, const std::string& key,
                int64_t fallback) {
    const KvEntry* e = kv.find(section, key);
    if (!e) return fallback;
    return parse_int_strict(e->value, where(kv, *e) + ": value for '" + key + "'");
}

uint64_t get_u64(const KvFile& kv, const std::string& section, const std::string& key,
                 uint64_t fallback) {
    const KvEntry* e = kv.find(section, key);
    if (!e) return fallback;
    return parse_u64_strict(e->value, where(kv, *e) + ": value for '" + key + "'");
}

double get_double(const KvFile& kv, const std::string& section, const std::string& key,
                  double fallback) {
    const KvEntry* e = kv.find(section, key);
    if (!e) return fallback;
    return parse_double_strict(e->value, where(kv, *e) + ": value for '" + key + "'");
}

/// Enum-ish string: value must be one of `choices`.
std::string get_choice(const KvFile& kv, const std::string& section, const std::string& key,
                       const std::string& fallback, const std::vector<std::string>& choices) {
    const KvEntry* e = kv.find(section, key);
    const std::string v = e ? e->value : fallback;
    if (std::find(choices.begin(), choices.end(), v) == choices.end()) {
        std::string all;
        for (const std::string& c : choices) {
            if (!all.empty()) all += ", ";
            all += c;
        }
        const std::string at = e ? where(kv, *e) : kv.source;
        throw ConfigError(at + ": '" + key + "' must be one of {" + all + "}, got '" + v + "'");
    }
    return v;
}

} // namespace

// -------------------------------------------------------------------------
// KvFile
// -------------------------------------------------------------------------

const KvEntry* KvFile::find(const std::string& section, const std::string& key) const {
    for (const KvEntry& e : entries) {
        if (e.section == section && e.key == key) return &e;
    }
    return nullptr;
}

KvFile parse_kv_text(const std::string& text, const std::string& source) {
    KvFile kv;
    kv.source = source;
    std::string section;
    bool have_section = false;
    int line_no = 0;
    for (const std::string& raw_line : split(text, '\n')) {
        ++line_no;
        const std::string line = trim(raw_line);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                throw ConfigError(source + ":" + std::to_string(line_no) +
                                  ": malformed section heading '" + line + "'");
            }
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) {
                throw ConfigError(source + ":" + std::to_string(line_no) +
                                  ": empty section heading");
            }
            have_section = true;
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(line_no) +
                              ": expected 'key = value' or '[section]', got '" + line + "'");
        }
        if (!have_section) {
            throw ConfigError(source + ":" + std::to_string(line_no) +
                              ": key before the first [section] heading");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
        }
        if (kv.find(section, key)) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": duplicate key '" + key +
                              "' in section [" + section + "]");
        }
        kv.entries.push_back(KvEntry{section, key, value, line_no});
    }
    return kv;
}

KvFile parse_kv_file(const std::filesystem::path& path) {
    return parse_kv_text(read_file(path), path.string());
}

// -------------------------------------------------------------------------
// Value formatting and parsing
// -------------------------------------------------------------------------

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double_strict(const std::string& text, const std::string& context) {
    if (text.empty()) throw ConfigError(context + " is empty, expected a number");
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (end != text.c_str() + text.size()) {
        throw ConfigError(context + " is not a number: '" + text + "'");
    }
    return v;
}

int64_t parse_int_strict(const std::string& text, const std::string& context) {
    if (text.empty()) throw ConfigError(context + " is empty, expected an integer");
    char* end = nullptr;
    const long long v = std::strtoll(text.c_str(), &end, 10);
    if (end != text.c_str() + text.size()) {
        throw ConfigError(context + " is not an integer: '" + text + "'");
    }
    return static_cast<int64_t>(v);
}

uint64_t parse_u64_strict(const std::string& text, const std::string& context) {
    if (text.empty()) throw ConfigError(context + " is empty, expected an unsigned integer");
    if (text[0] == '-') {
        throw ConfigError(context + " must be non-negative: '" + text + "'");
    }
    char* end = nullptr;
    const unsigned long long v = std::strtoull(text.c_str(), &end, 10);
    if (end != text.c_str() + text.size()) {
        throw ConfigError(context + " is not an unsigned integer: '" + text + "'");
    }
    return v;
}

int edit_distance(const std::string& a, const std::string& b) {
    const size_t n = a.size();
    const size_t m = b.size();
    std::vector<int> prev(m + 1);
    std::vector<int> cur(m + 1);
    for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
    for (size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<int>(i);
        for (size_t j = 1; j <= m; ++j) {
            const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

// -------------------------------------------------------------------------
// Experiment config
// -------------------------------------------------------------------------

ExperimentConfig parse_experiment_config(const KvFile& base,
                                         const std::vector<std::string>& overrides) {
    const KvFile kv = apply_overrides(base, overrides, kExperimentSchema);
    validate_keys(kv, kExperimentSchema);
    check_required(kv, kExperimentSchema);

    ExperimentConfig cfg;
    const std::string task = get_choice(kv, "experiment", "task", "denoise",
                                        {"denoise", "super_resolution", "enhance",
                                         "video_denoise"});
    if (task == "denoise") cfg.task = TaskKind::denoise;
    else if (task == "super_resolution") cfg.task = TaskKind::super_resolution;
    else if (task == "enhance") cfg.task = TaskKind::enhance;
    else cfg.task = TaskKind::video_denoise;

    const std::string conf = get_choice(kv, "experiment", "configuration", "Original",
                                        {"Original", "+CCMAE", "+P_CCMAE"});
    if (conf == "Original") cfg.configuration = RunConfiguration::original;
    else if (conf == "+CCMAE") cfg.configuration = RunConfiguration::ccmae;
    else cfg.configuration = RunConfiguration::p_ccmae;

    cfg.steps = get_int(kv, "experiment", "steps", cfg.steps);
    cfg.batch_size = get_int(kv, "experiment", "batch", cfg.batch_size);
    cfg.optimizer = get_choice(kv, "experiment", "optimizer", "adam", {"adam", "sgd"}) == "adam"
                        ? OptimizerKind::adam
                        : OptimizerKind::sgd;
    cfg.lr = get_double(kv, "experiment", "lr", cfg.lr);
    cfg.seed = get_u64(kv, "experiment", "seed", cfg.seed);

    const KvEntry* metrics_entry = kv.find("experiment", "metrics");
    if (metrics_entry) {
        cfg.metrics.clear();
        for (const std::string& part : split(metrics_entry->value, ',')) {
            const std::string name = trim(part);
            if (name.empty()) {
                throw ConfigError(where(kv, *metrics_entry) +
                                  ": empty metric name in the metrics list");
            }
            cfg.metrics.push_back(name);
        }
    }

    cfg.train_path = get_string(kv, "data", "train", "");
    cfg.val_path = get_string(kv, "data", "val", "");
    cfg.channels = get_int(kv, "data", "channels", cfg.channels);
    cfg.frames = get_int(kv, "data", "frames", cfg.frames);

    cfg.sigma = get_double(kv, "task", "sigma", cfg.sigma);
    cfg.sr_scale = get_int(kv, "task", "scale", cfg.sr_scale);
    cfg.gamma = get_double(kv, "task", "gamma", cfg.gamma);
    cfg.gain = get_double(kv, "task", "gain", cfg.gain);

    cfg.hidden_channels = get_int(kv, "model", "hidden_channels", cfg.hidden_channels);
    cfg.model_layers = get_int(kv, "model", "layers", cfg.model_layers);

    cfg.loss.base_kind =
        get_choice(kv, "loss", "base", "l1", {"l1", "l2"}) == "l1" ? DistanceKind::l1
                                                                   : DistanceKind::l2;
    cfg.loss.lambda = get_double(kv, "loss", "lambda", cfg.loss.lambda);
    cfg.loss.feature_kind =
        get_choice(kv, "loss", "feature", "l2", {"l1", "l2"}) == "l1" ? DistanceKind::l1
                                                                      : DistanceKind::l2;
    cfg.crop_px = get_int(kv, "loss", "crop_px", cfg.crop_px);
    cfg.crops_per_step = get_int(kv, "loss", "crops_per_step", cfg.crops_per_step);

    cfg.mae_checkpoint = get_string(kv, "mae", "checkpoint", "");
    cfg.niqe_model = get_string(kv, "niqe", "model", "");
    return cfg;
}

std::string experiment_config_text(const ExperimentConfig& cfg) {
    std::string s;
    s += "[experiment]\n";
    s += std::string("task = ") + task_name(cfg.task) + "\n";
    s += std::string("configuration = ") + configuration_name(cfg.configuration) + "\n";
    s += "steps = " + std::to_string(cfg.steps) + "\n";
    s += "batch = " + std::to_string(cfg.batch_size) + "\n";
    s += std::string("optimizer = ") + (cfg.optimizer == OptimizerKind::adam ? "adam" : "sgd") +
         "\n";
    s += "lr = " + format_double(cfg.lr) + "\n";
    s += "seed = " + std::to_string(cfg.seed) + "\n";
    std::string metrics;
    for (const std::string& m : cfg.metrics) {
        if (!metrics.empty()) metrics += ",";
        metrics += m;
    }
    s += "metrics = " + metrics + "\n";
    s += "[data]\n";
    s += "train = " + cfg.train_path + "\n";
    s += "val = " + cfg.val_path + "\n";
    s += "channels = " + std::to_string(cfg.channels) + "\n";
    s += "frames = " + std::to_string(cfg.frames) + "\n";
    s += "[task]\n";
    s += "sigma = " + format_double(cfg.sigma) + "\n";
    s += "scale = " + std::to_string(cfg.sr_scale) + "\n";
    s += "gamma = " + format_double(cfg.gamma) + "\n";
    s += "gain = " + format_double(cfg.gain) + "\n";
    s += "[model]\n";
    s += "hidden_channels = " + std::to_string(cfg.hidden_channels) + "\n";
    s += "layers = " + std::to_string(cfg.model_layers) + "\n";
    s += "[loss]\n";
    s += std::string("base = ") + (cfg.loss.base_kind == DistanceKind::l1 ? "l1" : "l2") + "\n";
    s += "lambda = " + format_double(cfg.loss.lambda) + "\n";
    s += std::string("feature = ") + (cfg.loss.feature_kind == DistanceKind::l1 ? "l1" : "l2") +
         "\n";
    s += "crop_px = " + std::to_string(cfg.crop_px) + "\n";
    s += "crops_per_step = " + std::to_string(cfg.crops_per_step) + "\n";
    s += "[mae]\n";
    s += "checkpoint = " + cfg.mae_checkpoint + "\n";
    s += "[niqe]\n";
    s += "model = " + cfg.niqe_model + "\n";
    return s;
}

// -------------------------------------------------------------------------
// Pretrain config
// -------------------------------------------------------------------------

PretrainInvocation parse_pretrain_config(const KvFile& base,
                                         const std::vector<std::string>& overrides) {
    const KvFile kv = apply_overrides(base, overrides, kPretrainSchema);
    validate_keys(kv, kPretrainSchema);
    check_required(kv, kPretrainSchema);

    PretrainInvocation inv;
    inv.train_path = get_string(kv, "data", "train", "");
    inv.channels = get_int(kv, "data", "channels", inv.channels);
    inv.feature_channels = get_int(kv, "mae", "feature_channels", inv.feature_channels);
    inv.depth = get_int(kv, "mae", "depth", inv.depth);
    inv.pretrain.mask_ratio = get_double(kv, "pretrain", "mask_ratio", inv.pretrain.mask_ratio);
    inv.pretrain.patch_px = get_int(kv, "pretrain", "patch_px", inv.pretrain.patch_px);
    inv.pretrain.mask_value = get_double(kv, "pretrain", "mask_value", inv.pretrain.mask_value);
    inv.pretrain.steps = get_int(kv, "pretrain", "steps", inv.pretrain.steps);
    inv.pretrain.batch_size = get_int(kv, "pretrain", "batch", inv.pretrain.batch_size);
    inv.pretrain.optimizer =
        get_choice(kv, "pretrain", "optimizer", "adam", {"adam", "sgd"}) == "adam"
            ? OptimizerKind::adam
            : OptimizerKind::sgd;
    inv.pretrain.lr = get_double(kv, "pretrain", "lr", inv.pretrain.lr);
    inv.pretrain.loss_region =
        get_choice(kv, "pretrain", "loss_region", "masked", {"masked", "all"}) == "masked"
            ? LossRegion::masked_only
            : LossRegion::all_pixels;
    inv.pretrain.seed = get_u64(kv, "pretrain", "seed", inv.pretrain.seed);
    return inv;
}

std::string pretrain_config_text(const PretrainInvocation& inv) {
    std::string s;
    s += "[data]\n";
    s += "train = " + inv.train_path + "\n";
    s += "channels = " + std::to_string(inv.channels) + "\n";
    s += "[mae]\n";
    s += "feature_channels = " + std::to_string(inv.feature_channels) + "\n";
    s += "depth = " + std::to_string(inv.depth) + "\n";
    s += "[pretrain]\n";
    s += "mask_ratio = " + format_double(inv.pretrain.mask_ratio) + "\n";
    s += "patch_px = " + std::to_string(inv.pretrain.patch_px) + "\n";
    s += "mask_value = " + format_double(inv.pretrain.mask_value) + "\n";
    s += "steps = " + std::to_string(inv.pretrain.steps) + "\n";
    s += "batch = " + std::to_string(inv.pretrain.batch_size) + "\n";
    s += std::string("optimizer = ") +
         (inv.pretrain.optimizer == OptimizerKind::adam ? "adam" : "sgd") + "\n";
    s += "lr = " + format_double(inv.pretrain.lr) + "\n";
    s += std::string("loss_region = ") +
         (inv.pretrain.loss_region == LossRegion::masked_only ? "masked" : "all") + "\n";
    s += "seed = " + std::to_string(inv.pretrain.seed) + "\n";
    return s;
}

// -------------------------------------------------------------------------
// NIQE fit config
// -------------------------------------------------------------------------

FitNiqeInvocation parse_fit_niqe_config(const KvFile& base,
                                        const std::vector<std::string>& overrides) {
    const KvFile kv = apply_overrides(base, overrides, kFitNiqeSchema);
    validate_keys(kv, kFitNiqeSchema);
    check_required(kv, kFitNiqeSchema);

    FitNiqeInvocation inv;
    inv.corpus_path = get_string(kv, "niqe", "corpus", "");
    inv.channels = get_int(kv, "niqe", "channels", inv.channels);
    inv.patch_size = get_int(kv, "niqe", "patch_size", inv.patch_size);
    inv.sharpness_fraction = get_double(kv, "niqe", "fraction", inv.sharpness_fraction);
    return inv;
}

std::string fit_niqe_config_text(const FitNiqeInvocation& inv) {
    std::string s;
    s += "[niqe]\n";
    s += "corpus = " + inv.corpus_path + "\n";
    s += "channels = " + std::to_string(inv.channels) + "\n";
    s += "patch_size = " + std::to_string(inv.patch_size) + "\n";
    s += "fraction = " + format_double(inv.sharpness_fraction) + "\n";
    return s;
}

} // namespace maelab
