#ifndef LBGAT_TENSOR_HPP
#define LBGAT_TENSOR_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lbgat {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
    // Interior nodes only: inputs and the adjoint propagation rule.
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;
    std::string op;
    std::uint64_t seq = 0;

    bool tracked() const noexcept { return requires_grad || static_cast<bool>(backward); }
};

}  // namespace detail

/// Dense row-major array of doubles with an optional reverse-mode record.
///
/// A Tensor is a cheap handle; copies share storage and graph position.
/// Leaves created with `requires_grad` accumulate gradients across
/// `backward` calls until `zero_grad` is called. Results of differentiable
/// ops on tracked inputs keep a link to their inputs so that `backward`
/// can replay the chain rule. Use `detach` to obtain an independent value.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from(Shape shape, std::vector<double> values);
    static Tensor scalar(double value);

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> values() const;
    // Writable view; only leaves may be written in place.
    std::span<double> mutable_values();
    double item() const;
    double operator[](std::size_t flat) const { return values()[flat]; }
    double at(std::size_t row, std::size_t col) const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on = true);
    bool tracked() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();

    // Independent leaf holding a copy of the values, with no gradient record.
    Tensor detach() const;
    // Same values viewed under a new shape (differentiable).
    Tensor reshape(Shape shape) const;

    std::string op_name() const;

    // Internal; used by ops and backward.
    const std::shared_ptr<detail::Node>& node() const noexcept { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

/// Reverse topological listing of the graph reachable from a scalar loss.
class GradTape {
public:
    explicit GradTape(const Tensor& loss);

    // Nodes in the order the backward pass visits them (loss first).
    const std::vector<detail::Node*>& order() const noexcept { return order_; }
    std::size_t size() const noexcept { return order_.size(); }

    // Seeds d(loss)/d(loss) = 1 and propagates adjoints; each node visited once.
    void replay();

private:
    std::vector<std::shared_ptr<detail::Node>> keep_;
    std::vector<detail::Node*> order_;
};

// Populates gradients of every tracked leaf reachable from `loss`.
// Throws std::invalid_argument for a non-scalar or untracked loss.
void backward(const Tensor& loss);

// Elementwise arithmetic. Operands must share a shape, or one of them must
// hold a single element (scalar-with-tensor).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor square(const Tensor& a);

// Adds a length-k vector to every row of an [n, k] matrix.
Tensor add_rowwise(const Tensor& matrix, const Tensor& row);
// [n, k] x [k, m] -> [n, m].
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
// Natural logarithm; inputs must be positive.
Tensor log(const Tensor& a);
// Gradient passes where lo <= a <= hi.
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Row maxima of an [n, k] matrix -> [n]; ties resolve to the lowest column.
Tensor max_axis(const Tensor& a);
// Row-wise pick: out[i] = a[i, index[i]].
Tensor gather(const Tensor& a, std::span<const std::size_t> index);

// Valid (unpadded) 2-D convolution. x: [n, c, h, w], weight: [o, c, k, k],
// bias: [o]. Output: [n, o, (h - k) / stride + 1, (w - k) / stride + 1].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride);

// Row-wise over the class axis of an [n, k] matrix, max-subtracted.
Tensor softmax(const Tensor& logits);
Tensor log_softmax(const Tensor& logits);

}  // namespace lbgat

#endif  // LBGAT_TENSOR_HPP
