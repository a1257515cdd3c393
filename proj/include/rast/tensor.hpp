#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rast {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

namespace detail {

struct TensorImpl;

/// Gradient buffers handed to a node's backward closure. `in[i]` is null when
/// input i does not participate in differentiation.
struct Backprop {
    std::span<const double> out;
    std::vector<double*> in;
};

struct GradNode {
    const char* op = "";
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::function<void(const Backprop&)> backward;
};

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::shared_ptr<GradNode> grad_fn;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

} // namespace detail

/// Dense row-major double tensor with reverse-mode differentiation.
///
/// A Tensor is a shared handle: copies alias the same storage. Values are
/// treated as immutable once an op has consumed them; only optimizers write
/// through mutable_data(), and only between forward passes.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const noexcept { return static_cast<bool>(impl_); }

    const Shape& shape() const;
    std::size_t dim() const { return shape().size(); }
    /// Extent of `axis`; negative axes count from the back.
    std::size_t size(int axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    std::span<double> mutable_data();
    std::vector<double> to_vector() const;

    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool is_leaf() const;

    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    /// Same values, detached from the graph (copied storage).
    Tensor detach() const;

    /// Reverse sweep from this scalar. Gradients accumulate into every
    /// reachable tensor that requires grad.
    void backward() const;

    const detail::TensorImpl* impl() const noexcept { return impl_.get(); }

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorImpl> impl_;

    friend Tensor make_op_result(Shape, std::vector<double>, const char*, std::initializer_list<Tensor>,
                                 std::function<void(const detail::Backprop&)>);
    friend Tensor make_op_result(Shape, std::vector<double>, const char*, const std::vector<Tensor>&,
                                 std::function<void(const detail::Backprop&)>);
    friend std::vector<const detail::GradNode*> topological_order(const Tensor& root);
};

/// Builds an op output. Records a graph node only when grad mode is on and at
/// least one input requires grad.
Tensor make_op_result(Shape shape, std::vector<double> values, const char* op, std::initializer_list<Tensor> inputs,
                      std::function<void(const detail::Backprop&)> backward);
Tensor make_op_result(Shape shape, std::vector<double> values, const char* op, const std::vector<Tensor>& inputs,
                      std::function<void(const detail::Backprop&)> backward);

/// The recorded tape reachable from `root`, in replay (reverse topological) order.
std::vector<const detail::GradNode*> topological_order(const Tensor& root);

bool grad_enabled() noexcept;

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

} // namespace rast
