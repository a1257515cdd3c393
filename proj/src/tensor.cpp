#include "rast/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "rast/errors.hpp"

namespace rast {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto extent : shape) n *= extent;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    for (auto extent : shape) {
        if (extent == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("shape " + shape_str(shape) + " does not match " + std::to_string(values.size()) +
                         " values");
    }
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

const Shape& Tensor::shape() const {
    if (!impl_) throw ContractError("use of undefined tensor");
    return impl_->shape;
}

std::size_t Tensor::size(int axis) const {
    const auto& s = shape();
    const int rank = static_cast<int>(s.size());
    const int a = axis < 0 ? axis + rank : axis;
    if (a < 0 || a >= rank) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    return s[static_cast<std::size_t>(a)];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::data() const {
    shape();
    return impl_->data;
}

std::span<double> Tensor::mutable_data() {
    shape();
    return impl_->data;
}

std::vector<double> Tensor::to_vector() const {
    auto d = data();
    return {d.begin(), d.end()};
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw ContractError("tensor has no gradient");
    return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
    shape();
    impl_->ensure_grad();
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (impl_) impl_->grad.clear();
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
    shape();
    if (!flag && impl_->grad_fn) throw ContractError("cannot clear requires_grad on a non-leaf tensor");
    impl_->requires_grad = flag;
}

bool Tensor::is_leaf() const { return impl_ && !impl_->grad_fn; }

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    const auto& s = shape();
    if (index.size() != s.size()) throw ShapeError("index rank mismatch for " + shape_str(s));
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= s[axis]) throw ShapeError("index out of range for " + shape_str(s));
        flat = flat * s[axis] + i;
        ++axis;
    }
    return impl_->data[flat];
}

Tensor Tensor::detach() const { return from(shape(), impl_->data, false); }

namespace {

// Post-order over graph nodes reachable from `root`; reversed, it is the replay order.
std::vector<detail::TensorImpl*> post_order(detail::TensorImpl* root) {
    std::vector<detail::TensorImpl*> post;
    std::unordered_set<const detail::TensorImpl*> seen;
    std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        const auto& fn = node->grad_fn;
        if (fn && next < fn->inputs.size()) {
            auto* child = fn->inputs[next++].get();
            if (child->grad_fn && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            post.push_back(node);
            stack.pop_back();
        }
    }
    return post;
}

} // namespace

Tensor make_op_result(Shape shape, std::vector<double> values, const char* op, const std::vector<Tensor>& inputs,
                      std::function<void(const detail::Backprop&)> backward) {
    auto result = Tensor::from(std::move(shape), std::move(values));
    if (!g_grad_enabled) return result;
    bool needs_grad = false;
    for (const auto& input : inputs) needs_grad = needs_grad || input.requires_grad();
    if (!needs_grad) return result;

    auto node = std::make_shared<detail::GradNode>();
    node->op = op;
    node->inputs.reserve(inputs.size());
    for (const auto& input : inputs) node->inputs.push_back(input.impl_);
    node->backward = std::move(backward);
    result.impl_->requires_grad = true;
    result.impl_->grad_fn = std::move(node);
    return result;
}

Tensor make_op_result(Shape shape, std::vector<double> values, const char* op, std::initializer_list<Tensor> inputs,
                      std::function<void(const detail::Backprop&)> backward) {
    return make_op_result(std::move(shape), std::move(values), op, std::vector<Tensor>(inputs), std::move(backward));
}

std::vector<const detail::GradNode*> topological_order(const Tensor& root) {
    std::vector<const detail::GradNode*> tape;
    if (!root.impl_ || !root.impl_->grad_fn) return tape;
    auto post = post_order(root.impl_.get());
    tape.reserve(post.size());
    for (auto it = post.rbegin(); it != post.rend(); ++it) tape.push_back((*it)->grad_fn.get());
    return tape;
}

void Tensor::backward() const {
    if (!impl_) throw ContractError("backward() on undefined tensor");
    if (numel() != 1) throw ContractError("backward() requires a scalar, got shape " + shape_str(shape()));
    if (!impl_->requires_grad) throw ContractError("backward() on a tensor that is not on the tape");

    auto post = post_order(impl_.get());
    impl_->ensure_grad();
    impl_->grad[0] += 1.0;
    for (auto it = post.rbegin(); it != post.rend(); ++it) {
        auto* node = *it;
        if (!node->grad_fn || node->grad.empty()) continue;
        detail::Backprop bp;
        bp.out = node->grad;
        bp.in.reserve(node->grad_fn->inputs.size());
        for (auto& input : node->grad_fn->inputs) {
            if (input->requires_grad) {
                input->ensure_grad();
                bp.in.push_back(input->grad.data());
            } else {
                bp.in.push_back(nullptr);
            }
        }
        node->grad_fn->backward(bp);
    }
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

} // namespace rast
