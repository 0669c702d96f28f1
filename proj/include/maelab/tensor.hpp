#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace maelab {

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& shape);

/// Dense N-dimensional array of 64-bit floats, row-major, shared-value
/// semantics (copies alias the same buffer). Values are immutable once the
/// tensor has been recorded on a tape; mutable_data() is for initialization
/// and optimizer updates between tapes.
///
/// Stored values must be finite; construction and op boundaries reject
/// NaN/Inf.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    int rank() const { return static_cast<int>(shape().size()); }
    int64_t dim(int axis) const { return shape().at(static_cast<size_t>(axis)); }
    int64_t numel() const;

    std::span<const double> data() const;
    std::span<double> mutable_data();
    double item() const; // value of a one-element tensor

    bool requires_grad() const;
    void set_requires_grad(bool value);

    bool has_grad() const;
    std::span<const double> grad() const;
    /// Gradient buffer for accumulation, allocated zero-filled on first use.
    std::span<double> grad_accum();
    void zero_grad();

    /// Identity of the underlying buffer (stable across copies of the handle).
    uint64_t id() const;

    /// Deep copy of values only (no grad, requires_grad preserved).
    Tensor clone() const;

private:
    struct Impl;
    std::shared_ptr<Impl> impl_;
};

/// Throws ValueError naming `context` if any value is non-finite.
void check_finite(const Tensor& t, const char* context);

/// Reverse-mode tape. Ops append nodes in execution order, which is a
/// topological order by construction; backward() walks the list once in
/// reverse, accumulating gradients with +=. Single-threaded.
class Tape {
public:
    void record(const Tensor& output, std::function<void()> backward);

    /// Seeds d(root)/d(root) = 1 and propagates. `root` must be a scalar
    /// produced by an op recorded on this tape.
    void backward(const Tensor& root);

    bool contains(uint64_t tensor_id) const { return outputs_.contains(tensor_id); }
    size_t size() const { return nodes_.size(); }
    void clear();

private:
    struct Node {
        Tensor output;
        std::function<void()> backward;
    };
    std::vector<Node> nodes_;
    std::unordered_set<uint64_t> outputs_;
};

} // namespace maelab
