#ifndef LBGAT_LOSSES_HPP
#define LBGAT_LOSSES_HPP

#include <cstddef>
#include <span>

#include "lbgat/tensor.hpp"

namespace lbgat {

// Mean over the batch of -log softmax(logits)[y]. Throws std::out_of_range
// for a label outside [0, classes).
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> y);

// Mean over every element of (a - b)^2.
Tensor mse_logits(const Tensor& a, const Tensor& b);

// Mean over the batch of sum_k p_k (log p_k - log q_k), p = softmax(p_logits),
// q = softmax(q_logits); natural log.
Tensor kl_div(const Tensor& p_logits, const Tensor& q_logits);

// Mean over the batch of max_{j != y} z_j - z_y.
Tensor cw_margin(const Tensor& logits, std::span<const std::size_t> y);

}  // namespace lbgat

#endif  // LBGAT_LOSSES_HPP
