#include "maelab/optim.hpp"

#include "maelab/error.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace maelab {

namespace {

void validate_params(const std::vector<Tensor>& params, const char* who) {
    for (const Tensor& p : params) {
        if (!p.defined()) throw ValueError(std::string(who) + ": undefined parameter tensor");
    }
}

// Throws before any parameter has been modified if a gradient is unusable.
void require_finite_grads(const std::vector<Tensor>& params, const char* who) {
    for (size_t i = 0; i < params.size(); ++i) {
        const Tensor& p = params[i];
        if (!p.has_grad()) continue;
        for (double g : p.grad()) {
            if (!std::isfinite(g)) {
                throw ValueError(std::string(who) + ": non-finite gradient in parameter " +
                                 std::to_string(i) + " (shape " + shape_str(p.shape()) +
                                 "); step aborted");
            }
        }
    }
}

} // namespace

Sgd::Sgd(std::vector<Tensor> params, double lr) : params_(std::move(params)), lr_(lr) {
    validate_params(params_, "sgd");
    if (!std::isfinite(lr_) || lr_ <= 0.0) throw ValueError("sgd: lr must be positive and finite");
}

void Sgd::step() {
    require_finite_grads(params_, "sgd");
    for (Tensor& p : params_) {
        if (!p.has_grad()) continue;
        auto values = p.mutable_data();
        auto grads = p.grad();
        for (size_t i = 0; i < values.size(); ++i) values[i] -= lr_ * grads[i];
    }
}

void Sgd::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
    validate_params(params_, "adam");
    if (!std::isfinite(config_.lr) || config_.lr <= 0.0) {
        throw ValueError("adam: lr must be positive and finite");
    }
    if (config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 ||
        config_.beta2 >= 1.0) {
        throw ValueError("adam: betas must lie in [0, 1)");
    }
    if (!std::isfinite(config_.eps) || config_.eps <= 0.0) {
        throw ValueError("adam: eps must be positive and finite");
    }
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor& p : params_) {
        m_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
        v_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    }
}

void Adam::step() {
    require_finite_grads(params_, "adam");
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        Tensor& p = params_[pi];
        auto values = p.mutable_data();
        std::vector<double>& m = m_[pi];
        std::vector<double>& v = v_[pi];
        const bool has_grad = p.has_grad();
        auto grads = has_grad ? p.grad() : std::span<const double>{};
        for (size_t i = 0; i < values.size(); ++i) {
            const double g = has_grad ? grads[i] : 0.0;
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            values[i] -= config_.lr * m_hat / std::sqrt(v_hat + config_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

} // namespace maelab
