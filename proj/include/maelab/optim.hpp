#pragma once

#include "maelab/tensor.hpp"

#include <cstdint>
#include <vector>

namespace maelab {

/// Gradient-descent updates over a fixed parameter list. step() validates
/// every gradient first and throws ValueError on any non-finite value before
/// touching any parameter, so a failed step leaves the model unchanged.
/// Parameters without a gradient buffer are treated as having zero gradient.
class Sgd {
public:
    Sgd(std::vector<Tensor> params, double lr);

    void step();
    void zero_grad();

private:
    std::vector<Tensor> params_;
    double lr_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction; the epsilon sits inside the square root:
/// p -= lr * m_hat / sqrt(v_hat + eps).
class Adam {
public:
    Adam(std::vector<Tensor> params, AdamConfig config);

    void step();
    void zero_grad();
    int64_t steps_taken() const { return t_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    AdamConfig config_;
    int64_t t_ = 0;
};

} // namespace maelab
