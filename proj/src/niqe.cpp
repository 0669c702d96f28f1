#include "maelab/niqe.hpp"

#include "maelab/binio.hpp"
#include "maelab/crc32.hpp"
#include "maelab/error.hpp"
#include "maelab/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <vector>

namespace maelab {

namespace {

constexpr int64_t kFeatureDim = 36;
constexpr double kRidge = 1e-6;
constexpr char kMagic[] = "NIQE";
constexpr uint8_t kVersion = 1;

// ---------------------------------------------------------------------------
// Shape-parameter lookup: r(gamma) = G(1/g)G(3/g)/G(2/g)^2 tabulated over
// gamma in [0.2, 10] step 1e-3, inverted by nearest entry. r is strictly
// decreasing on this range, so a binary search suffices.
// ---------------------------------------------------------------------------

struct RTable {
    std::vector<double> gamma;
    std::vector<double> r; // descending
};

const RTable& r_table() {
    static const RTable table = [] {
        RTable t;
        const int64_t kEntries = 9801; // 0.2 .. 10.0 inclusive
        t.gamma.resize(kEntries);
        t.r.resize(kEntries);
        for (int64_t i = 0; i < kEntries; ++i) {
            const double g = 0.2 + 1e-3 * static_cast<double>(i);
            t.gamma[static_cast<size_t>(i)] = g;
            t.r[static_cast<size_t>(i)] =
                std::tgamma(1.0 / g) * std::tgamma(3.0 / g) /
                (std::tgamma(2.0 / g) * std::tgamma(2.0 / g));
        }
        return t;
    }();
    return table;
}

double gamma_from_ratio(double target) {
    const RTable& t = r_table();
    if (!(target > 0.0) || !std::isfinite(target)) {
        // Degenerate moment ratio (constant data); clamp to the heavy-tail end.
        return t.gamma.front();
    }
    // r is descending: find the first entry <= target.
    auto it = std::lower_bound(t.r.begin(), t.r.end(), target, std::greater<double>());
    if (it == t.r.begin()) return t.gamma.front();
    if (it == t.r.end()) return t.gamma.back();
    const size_t hi = static_cast<size_t>(it - t.r.begin());
    const size_t lo = hi - 1;
    // nearest of the two bracketing entries
    return (t.r[lo] - target <= target - t.r[hi]) ? t.gamma[lo] : t.gamma[hi];
}

// ---------------------------------------------------------------------------
// MSCN field: (I - mu) / (sigma + 1) with a 7x7 Gaussian (sigma = 7/6),
// replicate borders, computed on the 0..255 gray plane.
// ---------------------------------------------------------------------------

struct Plane {
    int64_t h = 0;
    int64_t w = 0;
    std::vector<double> v;

    double at(int64_t y, int64_t x) const { return v[static_cast<size_t>(y * w + x)]; }
};

std::array<double, 7> gaussian7() {
    std::array<double, 7> k{};
    const double sigma = 7.0 / 6.0;
    double sum = 0.0;
    for (int i = 0; i < 7; ++i) {
        const double d = static_cast<double>(i - 3);
        k[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += k[static_cast<size_t>(i)];
    }
    for (double& x : k) x /= sum;
    return k;
}

Plane blur7(const Plane& in) {
    static const std::array<double, 7> k = gaussian7();
    Plane tmp{in.h, in.w, std::vector<double>(in.v.size())};
    for (int64_t y = 0; y < in.h; ++y) {
        for (int64_t x = 0; x < in.w; ++x) {
            double acc = 0.0;
            for (int d = -3; d <= 3; ++d) {
                const int64_t xx = std::clamp<int64_t>(x + d, 0, in.w - 1);
                acc += k[static_cast<size_t>(d + 3)] * in.at(y, xx);
            }
            tmp.v[static_cast<size_t>(y * in.w + x)] = acc;
        }
    }
    Plane out{in.h, in.w, std::vector<double>(in.v.size())};
    for (int64_t y = 0; y < in.h; ++y) {
        for (int64_t x = 0; x < in.w; ++x) {
            double acc = 0.0;
            for (int d = -3; d <= 3; ++d) {
                const int64_t yy = std::clamp<int64_t>(y + d, 0, in.h - 1);
                acc += k[static_cast<size_t>(d + 3)] * tmp.at(yy, x);
            }
            out.v[static_cast<size_t>(y * in.w + x)] = acc;
        }
    }
    return out;
}

struct MscnField {
    Plane mscn;
    Plane deviation; // local sigma, reused as the sharpness signal
};

MscnField compute_mscn(const Plane& im) {
    Plane sq{im.h, im.w, std::vector<double>(im.v.size())};
    for (size_t i = 0; i < im.v.size(); ++i) sq.v[i] = im.v[i] * im.v[i];
    const Plane mu = blur7(im);
    const Plane musq = blur7(sq);

    MscnField f;
    f.mscn = Plane{im.h, im.w, std::vector<double>(im.v.size())};
    f.deviation = Plane{im.h, im.w, std::vector<double>(im.v.size())};
    for (size_t i = 0; i < im.v.size(); ++i) {
        const double var = std::max(0.0, musq.v[i] - mu.v[i] * mu.v[i]);
        const double dev = std::sqrt(var);
        f.deviation.v[i] = dev;
        f.mscn.v[i] = (im.v[i] - mu.v[i]) / (dev + 1.0);
    }
    return f;
}

Plane to_gray255(const ImageBuffer& img) {
    Plane p{img.height, img.width, std::vector<double>(static_cast<size_t>(img.height * img.width))};
    for (int64_t y = 0; y < img.height; ++y) {
        for (int64_t x = 0; x < img.width; ++x) {
            double g;
            if (img.channels == 1) {
                g = img.at(y, x, 0);
            } else {
                g = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
            }
            p.v[static_cast<size_t>(y * img.width + x)] = 255.0 * g;
        }
    }
    return p;
}

Plane half_scale(const Plane& p) {
    const int64_t nh = p.h / 2;
    const int64_t nw = p.w / 2;
    Plane out{nh, nw, resize_plane_bicubic(p.v, p.h, p.w, nh, nw)};
    return out;
}

// ---------------------------------------------------------------------------
// Per-patch features: GGD(alpha, sigma^2) on MSCN, AGGD(alpha, mean,
// sigma_l^2, sigma_r^2) on the 4 pairwise neighbor products, both scales.
// ---------------------------------------------------------------------------

void block_features(const MscnField& f, int64_t y0, int64_t x0, int64_t p, double* out18) {
    std::vector<double> vals;
    vals.reserve(static_cast<size_t>(p * p));
    for (int64_t y = y0; y < y0 + p; ++y)
        for (int64_t x = x0; x < x0 + p; ++x) vals.push_back(f.mscn.at(y, x));

    const GgdFit g = fit_ggd(vals);
    out18[0] = g.alpha;
    out18[1] = g.sigma_sq;

    // shift offsets: horizontal, vertical, main diagonal, anti-diagonal
    const int64_t dys[4] = {0, 1, 1, 1};
    const int64_t dxs[4] = {1, 0, 1, -1};
    std::vector<double> prod;
    for (int k = 0; k < 4; ++k) {
        prod.clear();
        for (int64_t y = y0; y < y0 + p; ++y) {
            for (int64_t x = x0; x < x0 + p; ++x) {
                const int64_t yy = y + dys[k];
                const int64_t xx = x + dxs[k];
                if (yy < y0 || yy >= y0 + p || xx < x0 || xx >= x0 + p) continue;
                prod.push_back(f.mscn.at(y, x) * f.mscn.at(yy, xx));
            }
        }
        const AggdFit a = fit_aggd(prod);
        out18[2 + 4 * k + 0] = a.alpha;
        out18[2 + 4 * k + 1] = a.mean;
        out18[2 + 4 * k + 2] = a.left_sigma_sq;
        out18[2 + 4 * k + 3] = a.right_sigma_sq;
    }
}

double block_sharpness(const MscnField& f, int64_t y0, int64_t x0, int64_t p) {
    double acc = 0.0;
    for (int64_t y = y0; y < y0 + p; ++y)
        for (int64_t x = x0; x < x0 + p; ++x) acc += f.deviation.at(y, x);
    return acc / static_cast<double>(p * p);
}

struct ImageFeatures {
    std::vector<std::vector<double>> rows; // one row of 36 per patch
    std::vector<double> sharpness;         // per patch, base scale
};

void validate_patch_size(int64_t patch_size) {
    if (patch_size < 8 || patch_size % 2 != 0) {
        throw ValueError("niqe: patch size must be an even number >= 8, got " +
                         std::to_string(patch_size));
    }
}

ImageFeatures extract_features(const ImageBuffer& image, int64_t patch_size) {
    image.validate();
    validate_patch_size(patch_size);
    if (image.height < patch_size || image.width < patch_size) {
        char msg[160];
        std::snprintf(msg, sizeof(msg),
                      "niqe: image %lldx%lld is smaller than one %lldx%lld patch",
                      static_cast<long long>(image.height), static_cast<long long>(image.width),
                      static_cast<long long>(patch_size), static_cast<long long>(patch_size));
        throw ValueError(msg);
    }

    const Plane gray = to_gray255(image);
    const MscnField base = compute_mscn(gray);
    const MscnField half = compute_mscn(half_scale(gray));

    const int64_t nby = image.height / patch_size;
    const int64_t nbx = image.width / patch_size;
    const int64_t hp = patch_size / 2;

    ImageFeatures out;
    for (int64_t by = 0; by < nby; ++by) {
        for (int64_t bx = 0; bx < nbx; ++bx) {
            std::vector<double> row(static_cast<size_t>(kFeatureDim));
            block_features(base, by * patch_size, bx * patch_size, patch_size, row.data());
            block_features(half, by * hp, bx * hp, hp, row.data() + 18);
            out.rows.push_back(std::move(row));
            out.sharpness.push_back(block_sharpness(base, by * patch_size, bx * patch_size, patch_size));
        }
    }
    return out;
}

// mean and covariance (n-1 divisor; zero matrix for a single row)
void mean_cov(const std::vector<std::vector<double>>& rows, std::vector<double>& mu,
              std::vector<double>& cov) {
    const size_t n = rows.size();
    const size_t d = static_cast<size_t>(kFeatureDim);
    mu.assign(d, 0.0);
    cov.assign(d * d, 0.0);
    for (const auto& r : rows)
        for (size_t j = 0; j < d; ++j) mu[j] += r[j];
    for (size_t j = 0; j < d; ++j) mu[j] /= static_cast<double>(n);
    if (n < 2) return;
    for (const auto& r : rows) {
        for (size_t i = 0; i < d; ++i) {
            const double di = r[i] - mu[i];
            for (size_t j = i; j < d; ++j) {
                cov[i * d + j] += di * (r[j] - mu[j]);
            }
        }
    }
    for (size_t i = 0; i < d; ++i) {
        for (size_t j = i; j < d; ++j) {
            const double v = cov[i * d + j] / static_cast<double>(n - 1);
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
}

// Cholesky solve of the symmetric positive-definite system A x = b.
std::vector<double> solve_spd(std::vector<double> a, std::vector<double> b, size_t d) {
    // decompose A = L L^T in place (lower triangle)
    for (size_t i = 0; i < d; ++i) {
        for (size_t j = 0; j <= i; ++j) {
            double s = a[i * d + j];
            for (size_t k = 0; k < j; ++k) s -= a[i * d + k] * a[j * d + k];
            if (i == j) {
                if (s <= 0.0) {
                    throw ValueError("niqe: covariance system is not positive definite");
                }
                a[i * d + i] = std::sqrt(s);
            } else {
                a[i * d + j] = s / a[j * d + j];
            }
        }
    }
    // forward substitution L y = b
    for (size_t i = 0; i < d; ++i) {
        double s = b[i];
        for (size_t k = 0; k < i; ++k) s -= a[i * d + k] * b[k];
        b[i] = s / a[i * d + i];
    }
    // back substitution L^T x = y
    for (size_t ii = d; ii-- > 0;) {
        double s = b[ii];
        for (size_t k = ii + 1; k < d; ++k) s -= a[k * d + ii] * b[k];
        b[ii] = s / a[ii * d + ii];
    }
    return b;
}

} // namespace

GgdFit fit_ggd(std::span<const double> x) {
    if (x.empty()) throw ValueError("fit_ggd: empty sample");
    double abs_sum = 0.0, sq_sum = 0.0;
    for (double v : x) {
        abs_sum += std::abs(v);
        sq_sum += v * v;
    }
    const double n = static_cast<double>(x.size());
    const double mean_abs = abs_sum / n;
    const double mean_sq = sq_sum / n;
    GgdFit fit;
    fit.sigma_sq = mean_sq;
    const double ratio = (mean_abs > 0.0) ? mean_sq / (mean_abs * mean_abs)
                                          : std::numeric_limits<double>::infinity();
    fit.alpha = gamma_from_ratio(ratio);
    return fit;
}

AggdFit fit_aggd(std::span<const double> x) {
    if (x.empty()) throw ValueError("fit_aggd: empty sample");
    double neg_sq = 0.0, pos_sq = 0.0, abs_sum = 0.0;
    int64_t neg_n = 0, pos_n = 0;
    for (double v : x) {
        if (v < 0.0) {
            neg_sq += v * v;
            ++neg_n;
        } else if (v > 0.0) {
            pos_sq += v * v;
            ++pos_n;
        }
        abs_sum += std::abs(v);
    }
    const double n = static_cast<double>(x.size());
    const double l_sigma = neg_n > 0 ? std::sqrt(neg_sq / static_cast<double>(neg_n)) : 0.0;
    const double r_sigma = pos_n > 0 ? std::sqrt(pos_sq / static_cast<double>(pos_n)) : 0.0;

    AggdFit fit;
    fit.left_sigma_sq = l_sigma * l_sigma;
    fit.right_sigma_sq = r_sigma * r_sigma;

    const double total_sq = neg_sq + pos_sq;
    if (total_sq == 0.0) {
        // constant-zero products: pick the table edge deterministically
        fit.alpha = gamma_from_ratio(std::numeric_limits<double>::infinity());
        fit.mean = 0.0;
        return fit;
    }

    const double rhat = (abs_sum / n) * (abs_sum / n) / (total_sq / n);
    double shape_term = 1.0; // limit of the gammahat polynomial when one side is empty
    if (l_sigma > 0.0 && r_sigma > 0.0) {
        const double g = l_sigma / r_sigma;
        shape_term = (g * g * g + 1.0) * (g + 1.0) / ((g * g + 1.0) * (g * g + 1.0));
    }
    const double rhat_norm = rhat * shape_term;
    // rhat_norm estimates 1/r(alpha); invert through the shared r table
    fit.alpha = gamma_from_ratio(1.0 / rhat_norm);

    const double a = fit.alpha;
    const double scale = std::sqrt(std::tgamma(1.0 / a) / std::tgamma(3.0 / a));
    fit.mean = (r_sigma - l_sigma) * (std::tgamma(2.0 / a) / std::tgamma(1.0 / a)) * scale;
    return fit;
}

std::vector<std::vector<double>> niqe_patch_features(const ImageBuffer& image,
                                                     int64_t patch_size) {
    return extract_features(image, patch_size).rows;
}

NiqeModel niqe_fit(const std::vector<ImageBuffer>& corpus, int64_t patch_size,
                   double sharpness_fraction) {
    validate_patch_size(patch_size);
    if (corpus.size() < 10) {
        throw ValueError("niqe_fit: corpus has " + std::to_string(corpus.size()) +
                         " images; at least 10 are required");
    }
    if (!(sharpness_fraction > 0.0) || sharpness_fraction > 1.0) {
        throw ValueError("niqe_fit: sharpness fraction must be in (0, 1]");
    }
    for (size_t i = 0; i < corpus.size(); ++i) {
        if (corpus[i].height < 2 * patch_size || corpus[i].width < 2 * patch_size) {
            char msg[160];
            std::snprintf(msg, sizeof(msg),
                          "niqe_fit: corpus image %zu is %lldx%lld; fitting needs at least "
                          "2x the %lld patch size per side",
                          i, static_cast<long long>(corpus[i].height),
                          static_cast<long long>(corpus[i].width),
                          static_cast<long long>(patch_size));
            throw ValueError(msg);
        }
    }

    std::vector<std::vector<double>> kept;
    for (const ImageBuffer& img : corpus) {
        ImageFeatures feats = extract_features(img, patch_size);
        const int64_t total = static_cast<int64_t>(feats.rows.size());
        const int64_t keep = std::max<int64_t>(
            1, std::llround(sharpness_fraction * static_cast<double>(total)));
        std::vector<int64_t> order(static_cast<size_t>(total));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
            return feats.sharpness[static_cast<size_t>(a)] >
                   feats.sharpness[static_cast<size_t>(b)];
        });
        for (int64_t i = 0; i < keep; ++i) {
            kept.push_back(std::move(feats.rows[static_cast<size_t>(order[static_cast<size_t>(i)])]));
        }
    }

    std::vector<double> mu, cov;
    mean_cov(kept, mu, cov);

    NiqeModel model;
    model.patch_size = patch_size;
    model.sharpness_fraction = sharpness_fraction;
    model.mu = Tensor::from_data({kFeatureDim}, std::move(mu));
    model.sigma = Tensor::from_data({kFeatureDim, kFeatureDim}, std::move(cov));
    return model;
}

double niqe_score(const ImageBuffer& image, const NiqeModel& model) {
    if (!model.mu.defined() || !model.sigma.defined()) {
        throw ValueError("niqe_score: model has no fitted parameters");
    }
    ImageFeatures feats = extract_features(image, model.patch_size);

    std::vector<double> nu, cov_img;
    mean_cov(feats.rows, nu, cov_img);

    const size_t d = static_cast<size_t>(kFeatureDim);
    auto mu = model.mu.data();
    auto cov_model = model.sigma.data();

    std::vector<double> diff(d);
    for (size_t i = 0; i < d; ++i) diff[i] = nu[i] - mu[i];
    std::vector<double> a(d * d);
    for (size_t i = 0; i < d * d; ++i) a[i] = 0.5 * (cov_model[i] + cov_img[i]);
    for (size_t i = 0; i < d; ++i) a[i * d + i] += kRidge;

    const std::vector<double> x = solve_spd(std::move(a), diff, d);
    double q = 0.0;
    for (size_t i = 0; i < d; ++i) q += diff[i] * x[i];
    return std::sqrt(std::max(0.0, q));
}

void save_niqe_model(const std::filesystem::path& path, const NiqeModel& model) {
    if (!model.mu.defined() || !model.sigma.defined()) {
        throw ValueError("save_niqe_model: model has no fitted parameters");
    }
    ByteWriter w;
    w.str(kMagic);
    w.u8(kVersion);
    w.u64le(static_cast<uint64_t>(model.patch_size));
    w.f64le(model.sharpness_fraction);
    encode_tensor(w, model.mu);
    encode_tensor(w, model.sigma);
    const uint32_t crc = crc32(w.buffer().data(), w.buffer().size());
    w.u32le(crc);
    write_file(path, w.buffer());
}

NiqeModel load_niqe_model(const std::filesystem::path& path) {
    const std::string blob = read_file(path);
    const std::string name = path.string();
    if (blob.size() < 4) throw IoError(name + ": not a quality-model file (too short)");
    ByteReader tail(std::string_view(blob).substr(blob.size() - 4), name);
    const uint32_t expect = tail.u32le();
    const uint32_t actual = crc32(blob.data(), blob.size() - 4);
    if (expect != actual) {
        char msg[128];
        std::snprintf(msg, sizeof(msg), "%s: checksum mismatch (stored %08x, computed %08x)",
                      name.c_str(), expect, actual);
        throw IoError(msg);
    }

    ByteReader r(std::string_view(blob).substr(0, blob.size() - 4), name);
    if (r.bytes(4) != kMagic) throw IoError(name + ": bad magic, not a quality-model file");
    const uint8_t version = r.u8();
    if (version != kVersion) {
        throw IoError(name + ": unsupported quality-model version " + std::to_string(version));
    }
    NiqeModel model;
    model.patch_size = static_cast<int64_t>(r.u64le());
    model.sharpness_fraction = r.f64le();
    validate_patch_size(model.patch_size);
    if (!(model.sharpness_fraction > 0.0) || model.sharpness_fraction > 1.0) {
        throw IoError(name + ": sharpness fraction out of range");
    }
    model.mu = decode_tensor(r);
    model.sigma = decode_tensor(r);
    if (r.remaining() != 0) {
        throw IoError(name + ": trailing bytes after quality-model payload");
    }
    const Shape mu_shape{kFeatureDim};
    const Shape sigma_shape{kFeatureDim, kFeatureDim};
    if (model.mu.shape() != mu_shape || model.sigma.shape() != sigma_shape) {
        throw IoError(name + ": unexpected parameter shapes " + shape_str(model.mu.shape()) +
                      " / " + shape_str(model.sigma.shape()));
    }
    return model;
}

} // namespace maelab
