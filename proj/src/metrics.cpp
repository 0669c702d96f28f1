#include "maelab/metrics.hpp"

#include "maelab/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace maelab {

namespace {

void check_pair(const Tensor& pred, const Tensor& gt, const char* op) {
    if (!pred.defined() || !gt.defined()) {
        throw ValueError(std::string(op) + ": undefined input tensor");
    }
    if (pred.rank() != 4 || gt.rank() != 4) {
        throw ShapeError(std::string(op) + ": expected [N,C,H,W] tensors, got " +
                         shape_str(pred.shape()) + " and " + shape_str(gt.shape()));
    }
    if (pred.shape() != gt.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(pred.shape()) +
                         " vs " + shape_str(gt.shape()));
    }
    check_finite(pred, op);
    check_finite(gt, op);
}

} // namespace

double mse(const Tensor& pred, const Tensor& gt) {
    check_pair(pred, gt, "mse");
    double acc = 0.0;
    auto pp = pred.data();
    auto gp = gt.data();
    for (size_t i = 0; i < pp.size(); ++i) {
        const double d = pp[i] - gp[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pp.size());
}

double psnr(const Tensor& pred, const Tensor& gt, double peak) {
    if (!(peak > 0.0) || !std::isfinite(peak)) throw ValueError("psnr: peak must be positive");
    const double err = mse(pred, gt);
    if (err == 0.0) return 99.0;
    return 10.0 * std::log10(peak * peak / err);
}

namespace {

constexpr int kSsimWindow = 11;

std::array<double, kSsimWindow> ssim_gaussian() {
    std::array<double, kSsimWindow> g{};
    const double sigma = 1.5;
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = static_cast<double>(i) - (kSsimWindow - 1) / 2.0;
        g[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += g[static_cast<size_t>(i)];
    }
    for (double& v : g) v /= sum;
    return g;
}

// Valid-region separable Gaussian filter: rows then columns. Output is
// (h-10) x (w-10).
std::vector<double> gaussian_valid(const std::vector<double>& plane, int64_t h, int64_t w,
                                   const std::array<double, kSsimWindow>& g) {
    const int64_t ow = w - kSsimWindow + 1;
    const int64_t oh = h - kSsimWindow + 1;
    std::vector<double> rows(static_cast<size_t>(h * ow));
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kSsimWindow; ++k) {
                acc += g[static_cast<size_t>(k)] * plane[static_cast<size_t>(y * w + x + k)];
            }
            rows[static_cast<size_t>(y * ow + x)] = acc;
        }
    }
    std::vector<double> out(static_cast<size_t>(oh * ow));
    for (int64_t y = 0; y < oh; ++y) {
        for (int64_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kSsimWindow; ++k) {
                acc += g[static_cast<size_t>(k)] * rows[static_cast<size_t>((y + k) * ow + x)];
            }
            out[static_cast<size_t>(y * ow + x)] = acc;
        }
    }
    return out;
}

} // namespace

double ssim(const Tensor& pred, const Tensor& gt, double peak) {
    check_pair(pred, gt, "ssim");
    if (!(peak > 0.0) || !std::isfinite(peak)) throw ValueError("ssim: peak must be positive");
    const int64_t n = pred.dim(0), c = pred.dim(1), h = pred.dim(2), w = pred.dim(3);
    if (h < kSsimWindow || w < kSsimWindow) {
        throw ShapeError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                         " is smaller than the 11x11 window");
    }
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    const auto g = ssim_gaussian();

    auto pp = pred.data();
    auto gp = gt.data();
    const int64_t hw = h * w;
    double channel_sum = 0.0;
    for (int64_t plane_idx = 0; plane_idx < n * c; ++plane_idx) {
        std::vector<double> x(static_cast<size_t>(hw)), y(static_cast<size_t>(hw)),
            xx(static_cast<size_t>(hw)), yy(static_cast<size_t>(hw)),
            xy(static_cast<size_t>(hw));
        for (int64_t i = 0; i < hw; ++i) {
            const double a = pp[static_cast<size_t>(plane_idx * hw + i)];
            const double b = gp[static_cast<size_t>(plane_idx * hw + i)];
            x[static_cast<size_t>(i)] = a;
            y[static_cast<size_t>(i)] = b;
            xx[static_cast<size_t>(i)] = a * a;
            yy[static_cast<size_t>(i)] = b * b;
            xy[static_cast<size_t>(i)] = a * b;
        }
        const auto mu_x = gaussian_valid(x, h, w, g);
        const auto mu_y = gaussian_valid(y, h, w, g);
        const auto m_xx = gaussian_valid(xx, h, w, g);
        const auto m_yy = gaussian_valid(yy, h, w, g);
        const auto m_xy = gaussian_valid(xy, h, w, g);

        double acc = 0.0;
        for (size_t i = 0; i < mu_x.size(); ++i) {
            const double mx = mu_x[i], my = mu_y[i];
            const double vx = m_xx[i] - mx * mx;
            const double vy = m_yy[i] - my * my;
            const double cov = m_xy[i] - mx * my;
            acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
                   ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
        channel_sum += acc / static_cast<double>(mu_x.size());
    }
    return channel_sum / static_cast<double>(n * c);
}

double sam(const Tensor& pred, const Tensor& gt) {
    check_pair(pred, gt, "sam");
    const int64_t n = pred.dim(0), c = pred.dim(1), h = pred.dim(2), w = pred.dim(3);
    if (c < 2) {
        throw ShapeError("sam: needs at least 2 channels, got " + std::to_string(c));
    }
    auto pp = pred.data();
    auto gp = gt.data();
    const int64_t hw = h * w;
    double acc = 0.0;
    for (int64_t ni = 0; ni < n; ++ni) {
        for (int64_t i = 0; i < hw; ++i) {
            double dot = 0.0, na = 0.0, nb = 0.0;
            for (int64_t ci = 0; ci < c; ++ci) {
                const double a = pp[static_cast<size_t>((ni * c + ci) * hw + i)];
                const double b = gp[static_cast<size_t>((ni * c + ci) * hw + i)];
                dot += a * b;
                na += a * a;
                nb += b * b;
            }
            if (na == 0.0 || nb == 0.0) continue; // zero-norm spectra contribute angle 0
            const double ratio = std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
            acc += std::acos(ratio);
        }
    }
    return acc / static_cast<double>(n * hw);
}

ErgasResult ergas(const Tensor& pred, const Tensor& gt, double scale_ratio) {
    check_pair(pred, gt, "ergas");
    if (!(scale_ratio > 0.0) || !std::isfinite(scale_ratio)) {
        throw ValueError("ergas: scale_ratio must be positive");
    }
    const int64_t n = pred.dim(0), c = pred.dim(1), hw = pred.dim(2) * pred.dim(3);
    auto pp = pred.data();
    auto gp = gt.data();

    ErgasResult result;
    double acc = 0.0;
    int64_t used = 0;
    for (int64_t band = 0; band < c; ++band) {
        double mean_gt = 0.0, sq = 0.0;
        for (int64_t ni = 0; ni < n; ++ni) {
            const int64_t base = (ni * c + band) * hw;
            for (int64_t i = 0; i < hw; ++i) {
                const double g = gp[static_cast<size_t>(base + i)];
                const double d = pp[static_cast<size_t>(base + i)] - g;
                mean_gt += g;
                sq += d * d;
            }
        }
        const double count = static_cast<double>(n * hw);
        mean_gt /= count;
        if (std::abs(mean_gt) < 1e-8) {
            result.excluded_bands.push_back(band);
            continue;
        }
        const double rmse = std::sqrt(sq / count);
        const double r = rmse / mean_gt;
        acc += r * r;
        ++used;
    }
    if (used == 0) {
        throw ValueError("ergas: every band has near-zero reference mean; nothing to score");
    }
    result.value = 100.0 * scale_ratio * std::sqrt(acc / static_cast<double>(used));
    return result;
}

} // namespace maelab
