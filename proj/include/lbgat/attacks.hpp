#ifndef LBGAT_ATTACKS_HPP
#define LBGAT_ATTACKS_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "lbgat/model.hpp"
#include "lbgat/tensor.hpp"

namespace lbgat {

enum class AttackFamily { fgsm, pgd, cw_pgd, kl_pgd };

std::string_view attack_family_name(AttackFamily family) noexcept;
AttackFamily parse_attack_family(std::string_view name);

/// l-infinity threat model and search schedule.
struct AttackSpec {
    AttackFamily family = AttackFamily::pgd;
    double epsilon = 0.031;
    double step_size = 0.007;
    std::size_t iterations = 10;
    bool random_start = true;
    std::uint64_t seed = 0;

    // Throws ConfigError when epsilon < 0, step_size <= 0 with iterations > 0,
    // or any value is non-finite.
    void validate() const;
};

struct AdversarialBatch {
    Tensor x_adv;
    Tensor origin;
    AttackSpec spec;
};

// Single signed-gradient step of size epsilon on the cross-entropy loss.
AdversarialBatch fgsm(const Model& model, const Tensor& x, std::span<const std::size_t> y,
                      double epsilon);

/// Noisy BIM: optional uniform start in the epsilon box, then
/// `iterations` signed-gradient ascent steps on cross-entropy, each
/// followed by projection onto the box around x and clamping to [0, 1].
/// Random-start noise for batch row i is drawn from a stream keyed by
/// (spec.seed, row_offset + i), so results do not depend on how a dataset
/// is split into batches.
AdversarialBatch pgd(const Model& model, const Tensor& x, std::span<const std::size_t> y,
                     const AttackSpec& spec, std::size_t row_offset = 0);

// Same loop maximizing the logit margin max_{j != y} z_j - z_y.
AdversarialBatch cw_pgd(const Model& model, const Tensor& x, std::span<const std::size_t> y,
                        const AttackSpec& spec, std::size_t row_offset = 0);

// Same loop maximizing KL(softmax(f(x_adv)) || softmax(f(x))) with f(x) held fixed.
AdversarialBatch kl_pgd(const Model& model, const Tensor& x, const AttackSpec& spec,
                        std::size_t row_offset = 0);

// Dispatches on spec.family (fgsm uses spec.epsilon only).
AdversarialBatch run_attack(const Model& model, const Tensor& x, std::span<const std::size_t> y,
                            const AttackSpec& spec, std::size_t row_offset = 0);

/// Crafts x_adv against `source` with `spec` and returns the accuracy of
/// `target` on it. Models must agree on input layout and class count.
double transfer_attack(const Model& source, const Model& target, const Tensor& x,
                       std::span<const std::size_t> y, const AttackSpec& spec,
                       std::size_t row_offset = 0);

// Largest elementwise |a - b|.
double linf_distance(const Tensor& a, const Tensor& b);

}  // namespace lbgat

#endif  // LBGAT_ATTACKS_HPP
