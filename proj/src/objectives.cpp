#include "lbgat/objectives.hpp"

#include <cmath>
#include <optional>
#include <vector>

#include "lbgat/error.hpp"

namespace lbgat {

namespace {

bool is_trades(ObjectiveKind k) {
    return k == ObjectiveKind::trades || k == ObjectiveKind::bgat_trades ||
           k == ObjectiveKind::lbgat_trades;
}

bool is_alp(ObjectiveKind k) {
    return k == ObjectiveKind::alp || k == ObjectiveKind::bgat_alp || k == ObjectiveKind::lbgat_alp;
}

bool is_guided(ObjectiveKind k) { return requires_teacher(k); }

}  // namespace

std::string_view objective_name(ObjectiveKind kind) noexcept {
    switch (kind) {
        case ObjectiveKind::natural: return "natural";
        case ObjectiveKind::vanilla_at: return "vanilla-at";
        case ObjectiveKind::alp: return "alp";
        case ObjectiveKind::trades: return "trades";
        case ObjectiveKind::bgat: return "bgat";
        case ObjectiveKind::lbgat: return "lbgat";
        case ObjectiveKind::bgat_alp: return "bgat-alp";
        case ObjectiveKind::lbgat_alp: return "lbgat-alp";
        case ObjectiveKind::bgat_trades: return "bgat-trades";
        case ObjectiveKind::lbgat_trades: return "lbgat-trades";
    }
    return "unknown";
}

ObjectiveKind parse_objective(std::string_view name) {
    for (auto k : kAllObjectiveKinds) {
        if (objective_name(k) == name) return k;
    }
    throw ConfigError("unknown objective kind '" + std::string(name) + "'", "objective.kind");
}

bool requires_teacher(ObjectiveKind k) noexcept {
    switch (k) {
        case ObjectiveKind::bgat:
        case ObjectiveKind::lbgat:
        case ObjectiveKind::bgat_alp:
        case ObjectiveKind::lbgat_alp:
        case ObjectiveKind::bgat_trades:
        case ObjectiveKind::lbgat_trades: return true;
        default: return false;
    }
}

bool trains_teacher(ObjectiveKind k) noexcept {
    return k == ObjectiveKind::lbgat || k == ObjectiveKind::lbgat_alp ||
           k == ObjectiveKind::lbgat_trades;
}

bool uses_kl_attack(ObjectiveKind k) noexcept { return is_trades(k); }

bool uses_attack(ObjectiveKind k) noexcept { return k != ObjectiveKind::natural; }

void ObjectiveSpec::validate() const {
    if (!std::isfinite(alpha) || alpha < 0.0) throw ConfigError("must be finite and >= 0", "objective.alpha");
    if (!std::isfinite(beta) || beta < 0.0) throw ConfigError("must be finite and >= 0", "objective.beta");
    if (robust_ce && kind == ObjectiveKind::natural) {
        throw ConfigError("robust_ce needs an adversarial objective", "objective.robust_ce");
    }
    try {
        inner_attack.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(e.what(), "objective.attack");
    }
}

double LossBreakdown::reconstruct() const {
    double total_ = 0.0;
    for (const auto& [name, value] : components) {
        const auto w = weights.find(name);
        total_ += (w == weights.end() ? 0.0 : w->second) * value;
    }
    return total_;
}

std::map<std::string, double, std::less<>> component_weights(const ObjectiveSpec& spec) {
    std::map<std::string, double, std::less<>> w;
    const auto k = spec.kind;
    if (k == ObjectiveKind::natural || k == ObjectiveKind::trades) {
        w[std::string(component::ce_natural)] = 1.0;
    }
    if (k == ObjectiveKind::vanilla_at || k == ObjectiveKind::alp) {
        w[std::string(component::ce_robust)] = 1.0;
    }
    if (is_guided(k)) w[std::string(component::pairing_mse)] = 1.0;
    if (trains_teacher(k)) w[std::string(component::ce_natural)] = spec.beta;
    if (is_alp(k)) w[std::string(component::alp_mse)] = spec.alpha;
    if (is_trades(k)) w[std::string(component::trades_kl)] = spec.alpha;
    if (spec.robust_ce) w[std::string(component::ce_robust)] += 1.0;
    return w;
}

Tensor generate_adversarial(const ObjectiveSpec& spec, const Model& robust, const Tensor& x,
                            std::span<const std::size_t> y, std::uint64_t seed,
                            std::size_t row_offset) {
    if (!uses_attack(spec.kind)) return x;
    AttackSpec attack = spec.inner_attack;
    attack.seed = seed;
    if (uses_kl_attack(spec.kind)) {
        attack.family = AttackFamily::kl_pgd;
        return kl_pgd(robust, x, attack, row_offset).x_adv;
    }
    attack.family = AttackFamily::pgd;
    return pgd(robust, x, y, attack, row_offset).x_adv;
}

ObjectiveResult evaluate_objective(const ObjectiveSpec& spec, const Model& robust,
                                   std::span<const Model> teacher, const Tensor& x,
                                   std::span<const std::size_t> y, const Tensor& x_adv) {
    spec.validate();
    const auto k = spec.kind;
    if (requires_teacher(k) && teacher.empty()) {
        throw ConfigError("objective " + std::string(objective_name(k)) + " needs a teacher model",
                          "teacher");
    }
    if (!requires_teacher(k) && !teacher.empty()) {
        throw ConfigError("objective " + std::string(objective_name(k)) + " takes no teacher",
                          "teacher");
    }
    if (trains_teacher(k) && teacher.size() != 1) {
        throw ConfigError("co-trained teacher must be a single model", "teacher");
    }
    if (uses_attack(k) && (!x_adv.defined() || x_adv.shape() != x.shape())) {
        throw ShapeError("objective: x_adv must match the shape of x");
    }

    const auto weights = component_weights(spec);
    std::vector<std::pair<std::string_view, Tensor>> terms;

    std::optional<Tensor> robust_clean;
    std::optional<Tensor> robust_adv;
    auto clean = [&]() -> const Tensor& {
        if (!robust_clean) robust_clean = robust.forward(x);
        return *robust_clean;
    };
    auto adv = [&]() -> const Tensor& {
        if (!robust_adv) robust_adv = robust.forward(x_adv);
        return *robust_adv;
    };

    if (is_guided(k)) {
        const Tensor teacher_logits = ensemble_logits(teacher, x, trains_teacher(k));
        terms.emplace_back(component::pairing_mse, mse_logits(adv(), teacher_logits));
        if (trains_teacher(k)) {
            terms.emplace_back(component::ce_natural, cross_entropy(teacher_logits, y));
        }
    }
    if (k == ObjectiveKind::natural || k == ObjectiveKind::trades) {
        terms.emplace_back(component::ce_natural, cross_entropy(clean(), y));
    }
    if (k == ObjectiveKind::vanilla_at || k == ObjectiveKind::alp || spec.robust_ce) {
        terms.emplace_back(component::ce_robust, cross_entropy(adv(), y));
    }
    if (is_alp(k)) terms.emplace_back(component::alp_mse, mse_logits(adv(), clean()));
    if (is_trades(k)) terms.emplace_back(component::trades_kl, kl_div(adv(), clean()));

    ObjectiveResult result;
    for (const auto& [name, term] : terms) {
        const double w = weights.find(name)->second;
        const Tensor weighted = w == 1.0 ? term : scale(term, w);
        result.loss = result.loss.defined() ? add(result.loss, weighted) : weighted;
        result.breakdown.components[std::string(name)] = term.item();
    }
    result.breakdown.weights = weights;
    result.breakdown.total = result.loss.item();
    if (uses_attack(k)) result.x_adv = x_adv;
    return result;
}

ObjectiveResult compute_objective(const ObjectiveSpec& spec, const Model& robust,
                                  std::span<const Model> teacher, const Tensor& x,
                                  std::span<const std::size_t> y) {
    spec.validate();
    const Tensor x_adv = generate_adversarial(spec, robust, x, y, spec.inner_attack.seed);
    return evaluate_objective(spec, robust, teacher, x, y, x_adv);
}

}  // namespace lbgat
