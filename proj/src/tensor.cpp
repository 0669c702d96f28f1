#include "maelab/tensor.hpp"

#include "maelab/error.hpp"

#include <atomic>
#include <cmath>

namespace maelab {

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace {

int64_t checked_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t e : shape) {
        if (e <= 0)
            throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
        n *= e;
    }
    return n;
}

uint64_t next_id() {
    static std::atomic<uint64_t> counter{1};
    return counter.fetch_add(1);
}

} // namespace

struct Tensor::Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad; // empty == absent
    bool requires_grad = false;
    uint64_t id = next_id();
};

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const int64_t n = checked_numel(shape);
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data.assign(static_cast<size_t>(n), 0.0);
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    if (!std::isfinite(value))
        throw ValueError("Tensor::full: non-finite fill value");
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& v : t.impl_->data) v = value;
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    const int64_t n = checked_numel(shape);
    if (n != static_cast<int64_t>(data.size()))
        throw ShapeError("Tensor::from_data: shape " + shape_str(shape) + " needs " +
                         std::to_string(n) + " values, got " + std::to_string(data.size()));
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(data);
    t.impl_->requires_grad = requires_grad;
    check_finite(t, "Tensor::from_data");
    return t;
}

Tensor Tensor::scalar(double value) {
    return from_data({1}, {value});
}

const Shape& Tensor::shape() const {
    if (!impl_) throw ValueError("use of undefined tensor");
    return impl_->shape;
}

int64_t Tensor::numel() const {
    return static_cast<int64_t>(impl_ ? impl_->data.size() : 0);
}

std::span<const double> Tensor::data() const {
    if (!impl_) throw ValueError("use of undefined tensor");
    return impl_->data;
}

std::span<double> Tensor::mutable_data() {
    if (!impl_) throw ValueError("use of undefined tensor");
    return impl_->data;
}

double Tensor::item() const {
    if (numel() != 1)
        throw ShapeError("item(): tensor has " + std::to_string(numel()) + " elements, expected 1");
    return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
    if (!impl_) throw ValueError("use of undefined tensor");
    impl_->requires_grad = value;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw ValueError("tensor has no gradient buffer");
    return impl_->grad;
}

std::span<double> Tensor::grad_accum() {
    if (!impl_) throw ValueError("use of undefined tensor");
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (impl_) impl_->grad.clear();
}

uint64_t Tensor::id() const {
    if (!impl_) throw ValueError("use of undefined tensor");
    return impl_->id;
}

Tensor Tensor::clone() const {
    if (!impl_) return {};
    return from_data(impl_->shape, impl_->data, impl_->requires_grad);
}

void check_finite(const Tensor& t, const char* context) {
    for (double v : t.data()) {
        if (!std::isfinite(v))
            throw ValueError(std::string(context) + ": tensor " + shape_str(t.shape()) +
                             " contains a non-finite value");
    }
}

void Tape::record(const Tensor& output, std::function<void()> backward) {
    outputs_.insert(output.id());
    nodes_.push_back(Node{output, std::move(backward)});
}

void Tape::backward(const Tensor& root) {
    if (root.numel() != 1)
        throw ValueError("backward: root must be scalar, got shape " + shape_str(root.shape()));
    if (!contains(root.id()))
        throw ValueError("backward: root tensor is not recorded on this tape (detached)");
    Tensor seed = root;
    seed.grad_accum()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->output.has_grad()) it->backward();
    }
}

void Tape::clear() {
    nodes_.clear();
    outputs_.clear();
}

} // namespace maelab
