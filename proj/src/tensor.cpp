#include "lbgat/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "lbgat/error.hpp"

namespace lbgat {

namespace {

std::atomic<std::uint64_t> g_sequence{0};

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> values) {
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->seq = g_sequence.fetch_add(1, std::memory_order_relaxed);
    return node;
}

// Creates an op result; the backward rule is attached only when some input is tracked.
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::initializer_list<Tensor> inputs, std::function<void(detail::Node&)> rule) {
    auto node = make_leaf(std::move(shape), std::move(values));
    node->op = op;
    const bool any_tracked =
        std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.tracked(); });
    if (any_tracked) {
        for (const auto& t : inputs) node->parents.push_back(t.node());
        node->backward = std::move(rule);
    }
    return Tensor(std::move(node));
}

const Tensor& require(const Tensor& t, const char* op) {
    if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined tensor");
    return t;
}

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                     shape_str(b));
}

void require_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw ShapeError(std::string(op) + ": expected a matrix, got shape " +
                         shape_str(t.shape()));
    }
}

// Gradient sink for parent `i` of `self`, or nullptr when that parent is constant.
double* sink(detail::Node& self, std::size_t i) {
    auto& parent = *self.parents[i];
    return parent.tracked() ? parent.grad.data() : nullptr;
}

enum class Broadcast { same, left_scalar, right_scalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return Broadcast::same;
    if (a.numel() == 1) return Broadcast::left_scalar;
    if (b.numel() == 1) return Broadcast::right_scalar;
    shape_mismatch(op, a.shape(), b.shape());
}

template <class Fwd, class DA, class DB>
Tensor binary_op(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, DA da, DB db) {
    require(a, op);
    require(b, op);
    const auto kind = broadcast_kind(a, b, op);
    const Shape shape = kind == Broadcast::left_scalar ? b.shape() : a.shape();
    const std::size_t n = shape_numel(shape);
    const auto av = a.values();
    const auto bv = b.values();
    const std::size_t as = kind == Broadcast::left_scalar ? 0 : 1;
    const std::size_t bs = kind == Broadcast::right_scalar ? 0 : 1;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i * as], bv[i * bs]);
    return make_result(op, shape, std::move(out), {a, b}, [n, as, bs, da, db](detail::Node& self) {
        const auto& x = self.parents[0]->values;
        const auto& y = self.parents[1]->values;
        double* ga = sink(self, 0);
        double* gb = sink(self, 1);
        for (std::size_t i = 0; i < n; ++i) {
            const double g = self.grad[i];
            if (ga) ga[i * as] += da(g, x[i * as], y[i * bs]);
            if (gb) gb[i * bs] += db(g, x[i * as], y[i * bs]);
        }
    });
}

template <class Fwd, class Deriv>
Tensor unary_op(const char* op, const Tensor& a, Fwd fwd, Deriv deriv) {
    require(a, op);
    const auto av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
    return make_result(op, a.shape(), std::move(out), {a}, [deriv](detail::Node& self) {
        double* ga = sink(self, 0);
        if (!ga) return;
        const auto& x = self.parents[0]->values;
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] += deriv(self.grad[i], x[i], self.values[i]);
    });
}

}  // namespace

std::size_t shape_numel(const Shape& shape) noexcept {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
    os << ']';
    return os.str();
}

// ---------------------------------------------------------------- Tensor

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
    const auto n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value)));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
    return Tensor(make_leaf(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

const Shape& Tensor::shape() const { return require(*this, "shape").node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw ShapeError("dim: axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return require(*this, "numel").node_->values.size(); }

std::span<const double> Tensor::values() const { return require(*this, "values").node_->values; }

std::span<double> Tensor::mutable_values() {
    require(*this, "mutable_values");
    if (node_->backward) throw std::logic_error("mutable_values: tensor is an op result");
    return node_->values;
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item: tensor has shape " + shape_str(shape()));
    return node_->values[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
    if (rank() != 2) throw ShapeError("at: expected a matrix, got " + shape_str(shape()));
    return node_->values[row * node_->shape[1] + col];
}

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    require(*this, "set_requires_grad");
    if (node_->backward) throw std::logic_error("set_requires_grad: only leaves can be marked");
    node_->requires_grad = on;
    return *this;
}

bool Tensor::tracked() const { return defined() && node_->tracked(); }

bool Tensor::has_grad() const { return defined() && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return require(*this, "grad").node_->grad; }

void Tensor::zero_grad() {
    require(*this, "zero_grad");
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
    require(*this, "detach");
    return Tensor(make_leaf(node_->shape, node_->values));
}

Tensor Tensor::reshape(Shape new_shape) const {
    require(*this, "reshape");
    if (shape_numel(new_shape) != numel()) shape_mismatch("reshape", shape(), new_shape);
    return make_result("reshape", std::move(new_shape), node_->values, {*this},
                       [](detail::Node& self) {
                           double* ga = sink(self, 0);
                           if (!ga) return;
                           for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
                       });
}

std::string Tensor::op_name() const {
    return defined() ? (node_->op.empty() ? std::string("leaf") : node_->op) : "undefined";
}

// ---------------------------------------------------------------- GradTape

GradTape::GradTape(const Tensor& loss) {
    if (!loss.defined()) throw std::invalid_argument("backward: undefined loss");
    if (loss.numel() != 1) {
        throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                    shape_str(loss.shape()));
    }
    if (!loss.tracked()) throw std::invalid_argument("backward: loss has no recorded operations");

    std::unordered_set<const detail::Node*> seen;
    std::vector<detail::Node*> stack{loss.node().get()};
    keep_.push_back(loss.node());
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto* node = stack.back();
        stack.pop_back();
        order_.push_back(node);
        for (const auto& parent : node->parents) {
            if (parent->tracked() && seen.insert(parent.get()).second) {
                keep_.push_back(parent);
                stack.push_back(parent.get());
            }
        }
    }
    // Inputs are always created before the ops that consume them.
    std::sort(order_.begin(), order_.end(),
              [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });
}

void GradTape::replay() {
    for (auto* node : order_) {
        if (node->backward) {
            node->grad.assign(node->values.size(), 0.0);
        } else if (node->grad.size() != node->values.size()) {
            node->grad.assign(node->values.size(), 0.0);
        }
    }
    order_.front()->grad[0] += 1.0;
    for (auto* node : order_) {
        if (node->backward) node->backward(*node);
    }
}

void backward(const Tensor& loss) { GradTape(loss).replay(); }

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double g, double, double) { return g; }, [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double g, double, double) { return g; }, [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double g, double, double y) { return g * y; },
        [](double g, double x, double) { return g * x; });
}

Tensor scale(const Tensor& a, double factor) {
    return unary_op(
        "scale", a, [factor](double x) { return x * factor; },
        [factor](double g, double, double) { return g * factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
    return unary_op(
        "add_scalar", a, [offset](double x) { return x + offset; },
        [](double g, double, double) { return g; });
}

Tensor square(const Tensor& a) {
    return unary_op(
        "square", a, [](double x) { return x * x; },
        [](double g, double x, double) { return 2.0 * x * g; });
}

Tensor relu(const Tensor& a) {
    return unary_op(
        "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double g, double x, double) { return x > 0.0 ? g : 0.0; });
}

Tensor exp(const Tensor& a) {
    return unary_op(
        "exp", a, [](double x) { return std::exp(x); },
        [](double g, double, double y) { return g * y; });
}

Tensor log(const Tensor& a) {
    return unary_op(
        "log", a, [](double x) { return std::log(x); },
        [](double g, double x, double) { return g / x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must not exceed hi");
    return unary_op(
        "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
        [lo, hi](double g, double x, double) { return (x >= lo && x <= hi) ? g : 0.0; });
}

// ---------------------------------------------------------------- reductions

Tensor sum(const Tensor& a) {
    require(a, "sum");
    double total = 0.0;
    for (double v : a.values()) total += v;
    return make_result("sum", {}, {total}, {a}, [](detail::Node& self) {
        double* ga = sink(self, 0);
        if (!ga) return;
        const double g = self.grad[0];
        for (std::size_t i = 0; i < self.parents[0]->values.size(); ++i) ga[i] += g;
    });
}

Tensor mean(const Tensor& a) {
    require(a, "mean");
    if (a.numel() == 0) throw ShapeError("mean: empty tensor");
    const auto n = static_cast<double>(a.numel());
    double total = 0.0;
    for (double v : a.values()) total += v;
    return make_result("mean", {}, {total / n}, {a}, [n](detail::Node& self) {
        double* ga = sink(self, 0);
        if (!ga) return;
        const double g = self.grad[0] / n;
        for (std::size_t i = 0; i < self.parents[0]->values.size(); ++i) ga[i] += g;
    });
}

Tensor max_axis(const Tensor& a) {
    require(a, "max_axis");
    require_matrix(a, "max_axis");
    const std::size_t rows = a.dim(0);
    const std::size_t cols = a.dim(1);
    if (cols == 0) throw ShapeError("max_axis: empty class axis");
    const auto av = a.values();
    std::vector<double> out(rows);
    std::vector<std::size_t> arg(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < cols; ++j) {
            if (av[i * cols + j] > av[i * cols + best]) best = j;
        }
        arg[i] = best;
        out[i] = av[i * cols + best];
    }
    return make_result("max_axis", {rows}, std::move(out), {a},
                       [cols, arg = std::move(arg)](detail::Node& self) {
                           double* ga = sink(self, 0);
                           if (!ga) return;
                           for (std::size_t i = 0; i < arg.size(); ++i) {
                               ga[i * cols + arg[i]] += self.grad[i];
                           }
                       });
}

Tensor gather(const Tensor& a, std::span<const std::size_t> index) {
    require(a, "gather");
    require_matrix(a, "gather");
    const std::size_t rows = a.dim(0);
    const std::size_t cols = a.dim(1);
    if (index.size() != rows) {
        throw ShapeError("gather: " + std::to_string(index.size()) + " indices for shape " +
                         shape_str(a.shape()));
    }
    std::vector<std::size_t> idx(index.begin(), index.end());
    std::vector<double> out(rows);
    const auto av = a.values();
    for (std::size_t i = 0; i < rows; ++i) {
        if (idx[i] >= cols) {
            throw std::out_of_range("gather: index " + std::to_string(idx[i]) +
                                    " out of range for " + std::to_string(cols) + " columns");
        }
        out[i] = av[i * cols + idx[i]];
    }
    return make_result("gather", {rows}, std::move(out), {a},
                       [cols, idx = std::move(idx)](detail::Node& self) {
                           double* ga = sink(self, 0);
                           if (!ga) return;
                           for (std::size_t i = 0; i < idx.size(); ++i) {
                               ga[i * cols + idx[i]] += self.grad[i];
                           }
                       });
}

// ---------------------------------------------------------------- linear algebra

Tensor add_rowwise(const Tensor& matrix, const Tensor& row) {
    require(matrix, "add_rowwise");
    require(row, "add_rowwise");
    require_matrix(matrix, "add_rowwise");
    const std::size_t rows = matrix.dim(0);
    const std::size_t cols = matrix.dim(1);
    if (row.numel() != cols || row.rank() != 1) {
        shape_mismatch("add_rowwise", matrix.shape(), row.shape());
    }
    const auto mv = matrix.values();
    const auto rv = row.values();
    std::vector<double> out(mv.size());
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = mv[i * cols + j] + rv[j];
    }
    return make_result("add_rowwise", matrix.shape(), std::move(out), {matrix, row},
                       [rows, cols](detail::Node& self) {
                           double* gm = sink(self, 0);
                           double* gr = sink(self, 1);
                           for (std::size_t i = 0; i < rows; ++i) {
                               for (std::size_t j = 0; j < cols; ++j) {
                                   const double g = self.grad[i * cols + j];
                                   if (gm) gm[i * cols + j] += g;
                                   if (gr) gr[j] += g;
                               }
                           }
                       });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a, "matmul");
    require(b, "matmul");
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        shape_mismatch("matmul", a.shape(), b.shape());
    }
    const std::size_t n = a.dim(0);
    const std::size_t k = a.dim(1);
    const std::size_t m = b.dim(1);
    const auto av = a.values();
    const auto bv = b.values();
    std::vector<double> out(n * m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double* row = out.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            const double* brow = bv.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) row[j] += aip * brow[j];
        }
    }
    return make_result("matmul", {n, m}, std::move(out), {a, b}, [n, k, m](detail::Node& self) {
        const auto& av = self.parents[0]->values;
        const auto& bv = self.parents[1]->values;
        const auto& g = self.grad;
        if (double* ga = sink(self, 0)) {
            // dA = dC * B^T
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < m; ++j) acc += g[i * m + j] * bv[p * m + j];
                    ga[i * k + p] += acc;
                }
            }
        }
        if (double* gb = sink(self, 1)) {
            // dB = A^T * dC
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = av[i * k + p];
                    for (std::size_t j = 0; j < m; ++j) gb[p * m + j] += aip * g[i * m + j];
                }
            }
        }
    });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride) {
    require(x, "conv2d");
    require(weight, "conv2d");
    require(bias, "conv2d");
    if (x.rank() != 4 || weight.rank() != 4 || weight.dim(1) != x.dim(1) ||
        weight.dim(2) != weight.dim(3)) {
        shape_mismatch("conv2d", x.shape(), weight.shape());
    }
    if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) {
        shape_mismatch("conv2d", weight.shape(), bias.shape());
    }
    if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t o = weight.dim(0), k = weight.dim(2);
    if (k == 0 || k > h || k > w) shape_mismatch("conv2d", x.shape(), weight.shape());
    const std::size_t oh = (h - k) / stride + 1;
    const std::size_t ow = (w - k) / stride + 1;

    const auto xv = x.values();
    const auto wv = weight.values();
    const auto bv = bias.values();
    std::vector<double> out(n * o * oh * ow);
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t f = 0; f < o; ++f) {
            for (std::size_t r = 0; r < oh; ++r) {
                for (std::size_t s = 0; s < ow; ++s) {
                    double acc = bv[f];
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        for (std::size_t u = 0; u < k; ++u) {
                            const double* xrow =
                                xv.data() + ((b * c + ch) * h + r * stride + u) * w + s * stride;
                            const double* wrow = wv.data() + ((f * c + ch) * k + u) * k;
                            for (std::size_t v = 0; v < k; ++v) acc += xrow[v] * wrow[v];
                        }
                    }
                    out[((b * o + f) * oh + r) * ow + s] = acc;
                }
            }
        }
    }
    return make_result(
        "conv2d", {n, o, oh, ow}, std::move(out), {x, weight, bias},
        [n, c, h, w, o, k, oh, ow, stride](detail::Node& self) {
            const auto& xv = self.parents[0]->values;
            const auto& wv = self.parents[1]->values;
            double* gx = sink(self, 0);
            double* gw = sink(self, 1);
            double* gb = sink(self, 2);
            for (std::size_t b = 0; b < n; ++b) {
                for (std::size_t f = 0; f < o; ++f) {
                    for (std::size_t r = 0; r < oh; ++r) {
                        for (std::size_t s = 0; s < ow; ++s) {
                            const double g = self.grad[((b * o + f) * oh + r) * ow + s];
                            if (g == 0.0) continue;
                            if (gb) gb[f] += g;
                            for (std::size_t ch = 0; ch < c; ++ch) {
                                for (std::size_t u = 0; u < k; ++u) {
                                    const std::size_t xo =
                                        ((b * c + ch) * h + r * stride + u) * w + s * stride;
                                    const std::size_t wo = ((f * c + ch) * k + u) * k;
                                    for (std::size_t v = 0; v < k; ++v) {
                                        if (gw) gw[wo + v] += g * xv[xo + v];
                                        if (gx) gx[xo + v] += g * wv[wo + v];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
}

// ---------------------------------------------------------------- softmax family

Tensor softmax(const Tensor& logits) {
    require(logits, "softmax");
    require_matrix(logits, "softmax");
    const std::size_t rows = logits.dim(0);
    const std::size_t cols = logits.dim(1);
    if (cols < 2) throw ShapeError("softmax: class axis needs at least 2 entries");
    const auto zv = logits.values();
    std::vector<double> out(zv.size());
    for (std::size_t i = 0; i < rows; ++i) {
        const double* z = zv.data() + i * cols;
        double* p = out.data() + i * cols;
        const double top = *std::max_element(z, z + cols);
        double total = 0.0;
        for (std::size_t j = 0; j < cols; ++j) total += (p[j] = std::exp(z[j] - top));
        for (std::size_t j = 0; j < cols; ++j) p[j] /= total;
    }
    return make_result("softmax", logits.shape(), std::move(out), {logits},
                       [rows, cols](detail::Node& self) {
                           double* gz = sink(self, 0);
                           if (!gz) return;
                           for (std::size_t i = 0; i < rows; ++i) {
                               const double* p = self.values.data() + i * cols;
                               const double* g = self.grad.data() + i * cols;
                               double dot = 0.0;
                               for (std::size_t j = 0; j < cols; ++j) dot += g[j] * p[j];
                               for (std::size_t j = 0; j < cols; ++j) {
                                   gz[i * cols + j] += p[j] * (g[j] - dot);
                               }
                           }
                       });
}

Tensor log_softmax(const Tensor& logits) {
    require(logits, "log_softmax");
    require_matrix(logits, "log_softmax");
    const std::size_t rows = logits.dim(0);
    const std::size_t cols = logits.dim(1);
    if (cols < 2) throw ShapeError("log_softmax: class axis needs at least 2 entries");
    const auto zv = logits.values();
    std::vector<double> out(zv.size());
    for (std::size_t i = 0; i < rows; ++i) {
        const double* z = zv.data() + i * cols;
        const double top = *std::max_element(z, z + cols);
        double total = 0.0;
        for (std::size_t j = 0; j < cols; ++j) total += std::exp(z[j] - top);
        const double lse = top + std::log(total);
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = z[j] - lse;
    }
    return make_result("log_softmax", logits.shape(), std::move(out), {logits},
                       [rows, cols](detail::Node& self) {
                           double* gz = sink(self, 0);
                           if (!gz) return;
                           for (std::size_t i = 0; i < rows; ++i) {
                               const double* lp = self.values.data() + i * cols;
                               const double* g = self.grad.data() + i * cols;
                               double total = 0.0;
                               for (std::size_t j = 0; j < cols; ++j) total += g[j];
                               for (std::size_t j = 0; j < cols; ++j) {
                                   gz[i * cols + j] += g[j] - std::exp(lp[j]) * total;
                               }
                           }
                       });
}

}  // namespace lbgat
