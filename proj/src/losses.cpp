#include "lbgat/losses.hpp"

#include <limits>
#include <stdexcept>
#include <string>

#include "lbgat/error.hpp"

namespace lbgat {

namespace {

void check_labels(const Tensor& logits, std::span<const std::size_t> y, const char* op) {
    if (logits.rank() != 2) {
        throw ShapeError(std::string(op) + ": expected [batch, classes] logits, got " +
                         shape_str(logits.shape()));
    }
    if (y.size() != logits.dim(0)) {
        throw ShapeError(std::string(op) + ": " + std::to_string(y.size()) + " labels for logits " +
                         shape_str(logits.shape()));
    }
    for (auto label : y) {
        if (label >= logits.dim(1)) {
            throw std::out_of_range(std::string(op) + ": label " + std::to_string(label) +
                                    " out of range for " + std::to_string(logits.dim(1)) +
                                    " classes");
        }
    }
}

void check_same(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
    }
}

}  // namespace

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> y) {
    check_labels(logits, y, "cross_entropy");
    return scale(mean(gather(log_softmax(logits), y)), -1.0);
}

Tensor mse_logits(const Tensor& a, const Tensor& b) {
    check_same(a, b, "mse_logits");
    return mean(square(sub(a, b)));
}

Tensor kl_div(const Tensor& p_logits, const Tensor& q_logits) {
    check_same(p_logits, q_logits, "kl_div");
    if (p_logits.rank() != 2) {
        throw ShapeError("kl_div: expected [batch, classes] logits, got " +
                         shape_str(p_logits.shape()));
    }
    const auto rows = static_cast<double>(p_logits.dim(0));
    const Tensor log_p = log_softmax(p_logits);
    const Tensor terms = mul(softmax(p_logits), sub(log_p, log_softmax(q_logits)));
    return scale(sum(terms), 1.0 / rows);
}

Tensor cw_margin(const Tensor& logits, std::span<const std::size_t> y) {
    check_labels(logits, y, "cw_margin");
    const std::size_t classes = logits.dim(1);
    if (classes < 2) throw ShapeError("cw_margin: needs at least 2 classes");
    std::vector<double> mask(logits.numel(), 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) {
        mask[i * classes + y[i]] = -std::numeric_limits<double>::infinity();
    }
    const Tensor others = max_axis(add(logits, Tensor::from(logits.shape(), std::move(mask))));
    return mean(sub(others, gather(logits, y)));
}

}  // namespace lbgat
