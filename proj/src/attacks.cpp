#include "lbgat/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "lbgat/error.hpp"
#include "lbgat/losses.hpp"
#include "lbgat/rng.hpp"

namespace lbgat {

namespace {

using LossFn = std::function<Tensor(const Tensor& logits)>;

double sign(double g) { return g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0); }

void check_batch(const Model& model, const Tensor& x, std::size_t labels, bool has_labels) {
    if (!x.defined() || x.rank() != 2 || x.dim(1) != model.input().features()) {
        throw ShapeError("attack: input " + (x.defined() ? shape_str(x.shape()) : "undefined") +
                         " does not match model input " + model.input().str());
    }
    if (has_labels && labels != x.dim(0)) {
        throw ShapeError("attack: " + std::to_string(labels) + " labels for a batch of " +
                         std::to_string(x.dim(0)));
    }
}

// Gradient of loss(model(point)) with respect to point; model parameters stay untouched.
std::vector<double> input_gradient(const Model& model, const Tensor& point, const LossFn& loss) {
    Tensor probe = point.detach();
    probe.set_requires_grad();
    backward(loss(model.forward(probe, false)));
    return {probe.grad().begin(), probe.grad().end()};
}

Tensor signed_ascent(const Model& model, const Tensor& x, const AttackSpec& spec,
                     std::size_t row_offset, const LossFn& loss) {
    const auto origin = x.values();
    const std::size_t rows = x.dim(0);
    const std::size_t cols = x.dim(1);
    const double eps = spec.epsilon;

    std::vector<double> lo(origin.size()), hi(origin.size());
    for (std::size_t i = 0; i < origin.size(); ++i) {
        lo[i] = origin[i] - eps;
        hi[i] = origin[i] + eps;
    }

    std::vector<double> current(origin.begin(), origin.end());
    if (spec.random_start && eps > 0.0) {
        for (std::size_t r = 0; r < rows; ++r) {
            Rng rng(mix_seed(spec.seed, row_offset + r));
            for (std::size_t c = 0; c < cols; ++c) {
                auto& v = current[r * cols + c];
                v = std::clamp(v + rng.uniform(-eps, eps), 0.0, 1.0);
            }
        }
    }

    for (std::size_t k = 0; k < spec.iterations; ++k) {
        const auto grad = input_gradient(model, Tensor::from(x.shape(), current), loss);
        for (std::size_t i = 0; i < current.size(); ++i) {
            const double stepped = current[i] + spec.step_size * sign(grad[i]);
            current[i] = std::clamp(std::min(std::max(stepped, lo[i]), hi[i]), 0.0, 1.0);
        }
    }
    return Tensor::from(x.shape(), std::move(current));
}

}  // namespace

std::string_view attack_family_name(AttackFamily family) noexcept {
    switch (family) {
        case AttackFamily::fgsm: return "fgsm";
        case AttackFamily::pgd: return "pgd";
        case AttackFamily::cw_pgd: return "cw-pgd";
        case AttackFamily::kl_pgd: return "kl-pgd";
    }
    return "unknown";
}

AttackFamily parse_attack_family(std::string_view name) {
    for (auto f : {AttackFamily::fgsm, AttackFamily::pgd, AttackFamily::cw_pgd, AttackFamily::kl_pgd}) {
        if (attack_family_name(f) == name) return f;
    }
    throw ConfigError("unknown attack family '" + std::string(name) + "'", "family");
}

void AttackSpec::validate() const {
    if (!std::isfinite(epsilon) || epsilon < 0.0) {
        throw ConfigError("must be finite and >= 0", "epsilon");
    }
    if (!std::isfinite(step_size) || (iterations > 0 && step_size <= 0.0)) {
        throw ConfigError("must be finite and > 0 when iterations > 0", "step_size");
    }
}

AdversarialBatch fgsm(const Model& model, const Tensor& x, std::span<const std::size_t> y,
                      double epsilon) {
    check_batch(model, x, y.size(), true);
    AttackSpec spec{AttackFamily::fgsm, epsilon, epsilon > 0.0 ? epsilon : 1.0, 1, false, 0};
    spec.validate();
    const auto grad =
        input_gradient(model, x, [y](const Tensor& logits) { return cross_entropy(logits, y); });
    const auto origin = x.values();
    std::vector<double> out(origin.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::clamp(origin[i] + epsilon * sign(grad[i]), 0.0, 1.0);
    }
    spec.step_size = epsilon;
    return {Tensor::from(x.shape(), std::move(out)), x, spec};
}

AdversarialBatch pgd(const Model& model, const Tensor& x, std::span<const std::size_t> y,
                     const AttackSpec& spec, std::size_t row_offset) {
    spec.validate();
    check_batch(model, x, y.size(), true);
    auto x_adv = signed_ascent(model, x, spec, row_offset,
                               [y](const Tensor& logits) { return cross_entropy(logits, y); });
    return {std::move(x_adv), x, spec};
}

AdversarialBatch cw_pgd(const Model& model, const Tensor& x, std::span<const std::size_t> y,
                        const AttackSpec& spec, std::size_t row_offset) {
    spec.validate();
    check_batch(model, x, y.size(), true);
    auto x_adv = signed_ascent(model, x, spec, row_offset,
                               [y](const Tensor& logits) { return cw_margin(logits, y); });
    return {std::move(x_adv), x, spec};
}

AdversarialBatch kl_pgd(const Model& model, const Tensor& x, const AttackSpec& spec,
                        std::size_t row_offset) {
    spec.validate();
    check_batch(model, x, 0, false);
    const Tensor reference = model.forward(x, false).detach();
    auto x_adv = signed_ascent(model, x, spec, row_offset, [&reference](const Tensor& logits) {
        return kl_div(logits, reference);
    });
    return {std::move(x_adv), x, spec};
}

AdversarialBatch run_attack(const Model& model, const Tensor& x, std::span<const std::size_t> y,
                            const AttackSpec& spec, std::size_t row_offset) {
    switch (spec.family) {
        case AttackFamily::fgsm: {
            auto out = fgsm(model, x, y, spec.epsilon);
            out.spec = spec;
            return out;
        }
        case AttackFamily::pgd: return pgd(model, x, y, spec, row_offset);
        case AttackFamily::cw_pgd: return cw_pgd(model, x, y, spec, row_offset);
        case AttackFamily::kl_pgd: return kl_pgd(model, x, spec, row_offset);
    }
    throw std::logic_error("run_attack: unknown family");
}

double transfer_attack(const Model& source, const Model& target, const Tensor& x,
                       std::span<const std::size_t> y, const AttackSpec& spec,
                       std::size_t row_offset) {
    if (source.input() != target.input() || source.classes() != target.classes()) {
        throw ConfigError("source and target models disagree on input layout or class count",
                          "source");
    }
    const auto adv = pgd(source, x, y, spec, row_offset);
    const auto predicted = argmax_rows(target.forward(adv.x_adv, false));
    if (predicted.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == y[i];
    return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

double linf_distance(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("linf_distance: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

}  // namespace lbgat
