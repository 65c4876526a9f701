#ifndef LBGAT_OBJECTIVES_HPP
#define LBGAT_OBJECTIVES_HPP

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>

#include "lbgat/attacks.hpp"
#include "lbgat/losses.hpp"
#include "lbgat/model.hpp"

namespace lbgat {

enum class ObjectiveKind {
    natural,
    vanilla_at,
    alp,
    trades,
    bgat,
    lbgat,
    bgat_alp,
    lbgat_alp,
    bgat_trades,
    lbgat_trades,
};

inline constexpr ObjectiveKind kAllObjectiveKinds[] = {
    ObjectiveKind::natural,  ObjectiveKind::vanilla_at,  ObjectiveKind::alp,
    ObjectiveKind::trades,   ObjectiveKind::bgat,        ObjectiveKind::lbgat,
    ObjectiveKind::bgat_alp, ObjectiveKind::lbgat_alp,   ObjectiveKind::bgat_trades,
    ObjectiveKind::lbgat_trades,
};

std::string_view objective_name(ObjectiveKind kind) noexcept;
ObjectiveKind parse_objective(std::string_view name);

bool requires_teacher(ObjectiveKind kind) noexcept;
// lbgat* kinds: the teacher is co-trained through the pairing loss.
bool trains_teacher(ObjectiveKind kind) noexcept;
bool uses_kl_attack(ObjectiveKind kind) noexcept;
bool uses_attack(ObjectiveKind kind) noexcept;

struct ObjectiveSpec {
    ObjectiveKind kind = ObjectiveKind::lbgat;
    double alpha = 1.0;  // weight of the ALP / TRADES regularizer
    double beta = 1.0;   // weight of the teacher's cross-entropy (lbgat*)
    bool robust_ce = false;  // ablation: add CE(softmax(R(x_adv)), y)
    AttackSpec inner_attack{AttackFamily::pgd, 0.031, 0.007, 10, true, 0};

    void validate() const;
};

// Component names used in LossBreakdown.
namespace component {
inline constexpr std::string_view ce_natural = "ce_natural";
inline constexpr std::string_view ce_robust = "ce_robust";
inline constexpr std::string_view pairing_mse = "pairing_mse";
inline constexpr std::string_view alp_mse = "alp_mse";
inline constexpr std::string_view trades_kl = "trades_kl";
}  // namespace component

/// Unweighted loss terms and their weighted total.
///
/// ce_natural is CE on clean inputs: of the teacher for lbgat*, of the
/// robust model for natural and trades. ce_robust is CE of the robust
/// model on x_adv. Only components that enter the objective are present.
struct LossBreakdown {
    double total = 0.0;
    std::map<std::string, double, std::less<>> components;
    std::map<std::string, double, std::less<>> weights;

    double reconstruct() const;
};

struct ObjectiveResult {
    LossBreakdown breakdown;
    Tensor loss;   // scalar with the backward record for every trainable term
    Tensor x_adv;  // undefined for the natural kind
};

// Per-component weights for `spec`, e.g. {pairing_mse: 1, ce_natural: beta} for lbgat.
std::map<std::string, double, std::less<>> component_weights(const ObjectiveSpec& spec);

/// Inner maximization for `spec`: kl_pgd for *-trades kinds, CE-PGD otherwise,
/// run against the robust model with spec.inner_attack's radius and schedule.
Tensor generate_adversarial(const ObjectiveSpec& spec, const Model& robust, const Tensor& x,
                            std::span<const std::size_t> y, std::uint64_t seed,
                            std::size_t row_offset = 0);

/// Outer objective with a fixed x_adv. The robust model's parameters are
/// always tracked; the teacher's are tracked only for lbgat* kinds.
/// `teacher` may hold several members for bgat* (mean of logits) but
/// exactly one for lbgat*.
ObjectiveResult evaluate_objective(const ObjectiveSpec& spec, const Model& robust,
                                   std::span<const Model> teacher, const Tensor& x,
                                   std::span<const std::size_t> y, const Tensor& x_adv);

// generate_adversarial (seeded from spec.inner_attack.seed) followed by evaluate_objective.
ObjectiveResult compute_objective(const ObjectiveSpec& spec, const Model& robust,
                                  std::span<const Model> teacher, const Tensor& x,
                                  std::span<const std::size_t> y);

}  // namespace lbgat

#endif  // LBGAT_OBJECTIVES_HPP
