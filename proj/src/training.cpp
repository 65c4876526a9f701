#include "lbgat/training.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "lbgat/error.hpp"
#include "lbgat/eval.hpp"
#include "lbgat/rng.hpp"

namespace lbgat {

namespace {

void check_feasible(const Tensor& x, const Tensor& x_adv, double eps) {
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double v = x_adv[i];
        if (!(v >= 0.0 && v <= 1.0) || std::abs(v - x[i]) > eps + 1e-9) {
            throw std::logic_error("training attack produced an infeasible input");
        }
    }
}

std::vector<Tensor> handles(Model& model) {
    std::vector<Tensor> out;
    for (const auto& p : model.parameters()) out.push_back(p.second);
    return out;
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size == 0) throw ConfigError("must be >= 1", "train.batch_size");
    if (!std::isfinite(base_lr) || base_lr < 0.0) throw ConfigError("must be finite and >= 0", "train.lr");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("must lie in [0, 1)", "train.momentum");
    if (!std::isfinite(weight_decay) || weight_decay < 0.0) {
        throw ConfigError("must be finite and >= 0", "train.weight_decay");
    }
    if (!std::isfinite(decay_factor) || decay_factor < 0.0) {
        throw ConfigError("must be finite and >= 0", "train.decay_factor");
    }
    for (std::size_t i = 0; i < transition_epochs.size(); ++i) {
        if (transition_epochs[i] >= epochs) {
            throw ConfigError("every transition epoch must be < epochs", "train.transition_epochs");
        }
        if (i > 0 && transition_epochs[i] <= transition_epochs[i - 1]) {
            throw ConfigError("must be strictly increasing", "train.transition_epochs");
        }
    }
    objective.validate();
}

double lr_at(const TrainConfig& config, std::size_t epoch) {
    if (epoch >= config.epochs) {
        throw std::out_of_range("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                                std::to_string(config.epochs) + ")");
    }
    double lr = config.base_lr;
    for (auto t : config.transition_epochs) {
        if (epoch >= t) lr *= config.decay_factor;
    }
    return lr;
}

void sgd_step(std::span<Tensor> params, OptimizerState& state, const SgdSettings& s) {
    if (state.velocity.empty()) {
        for (const auto& p : params) state.velocity.emplace_back(p.numel(), 0.0);
    }
    if (state.velocity.size() != params.size()) {
        throw ShapeError("sgd_step: optimizer state holds " + std::to_string(state.velocity.size()) +
                         " buffers for " + std::to_string(params.size()) + " parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& v = state.velocity[i];
        auto values = params[i].mutable_values();
        if (v.size() != values.size()) {
            throw ShapeError("sgd_step: velocity/parameter size mismatch for parameter " +
                             std::to_string(i));
        }
        const auto grad = params[i].grad();
        const bool has_grad = !grad.empty();
        if (has_grad && grad.size() != values.size()) {
            throw ShapeError("sgd_step: gradient/parameter size mismatch");
        }
        for (std::size_t j = 0; j < values.size(); ++j) {
            const double g = (has_grad ? grad[j] : 0.0) + s.weight_decay * values[j];
            v[j] = s.momentum * v[j] + g;
            values[j] -= s.lr * v[j];
        }
    }
}

void sgd_step(Model& model, OptimizerState& state, const SgdSettings& settings) {
    auto params = handles(model);
    sgd_step(params, state, settings);
}

TrainResult train(Model& robust, std::vector<Model>& teacher, const Dataset& data,
                  const TrainConfig& config, const TrainHooks& hooks) {
    config.validate();
    const auto& spec = config.objective;
    if (requires_teacher(spec.kind) && teacher.empty()) {
        throw ConfigError("objective " + std::string(objective_name(spec.kind)) +
                              " needs a teacher model",
                          "teacher");
    }
    if (!requires_teacher(spec.kind) && !teacher.empty()) {
        throw ConfigError("objective " + std::string(objective_name(spec.kind)) +
                              " takes no teacher",
                          "teacher");
    }
    TrainResult result;
    if (config.epochs == 0) return result;
    if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
    if (data.input != robust.input()) throw ShapeError("train: dataset does not match model input");

    const bool co_train = trains_teacher(spec.kind);
    const bool augmenting = data.input.is_image() && config.augmentation.active();
    OptimizerState robust_state, teacher_state;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        const SgdSettings sgd{lr_at(config, epoch), config.momentum, config.weight_decay};
        const auto epoch_seed = mix_seed(config.seed, epoch);
        std::map<std::string, double> loss_sums;
        std::size_t seen = 0;

        const auto all = batches(data, config.batch_size, epoch_seed);
        for (std::size_t bi = 0; bi < all.size(); ++bi) {
            const auto& batch = all[bi];
            const std::size_t row_offset = bi * config.batch_size;
            Tensor x = batch.x;
            if (augmenting) {
                AugmentationSpec aug = config.augmentation;
                aug.seed = mix_seed(config.augmentation.seed ^ config.seed, epoch);
                x = augment(x, data.input, aug, row_offset);
            }

            const auto attack_seed = mix_seed(mix_seed(spec.inner_attack.seed, config.seed), epoch);
            const Tensor x_adv = generate_adversarial(spec, robust, x, batch.y, attack_seed, row_offset);
            if (uses_attack(spec.kind)) check_feasible(x, x_adv, spec.inner_attack.epsilon);

            robust.zero_grad();
            for (auto& t : teacher) t.zero_grad();
            const auto outcome = evaluate_objective(spec, robust, teacher, x, batch.y, x_adv);
            for (const auto& [name, value] : outcome.breakdown.components) {
                if (!std::isfinite(value)) {
                    throw NumericError("non-finite loss component " + name + " at epoch " +
                                       std::to_string(epoch) + ", batch " + std::to_string(bi));
                }
            }
            if (!std::isfinite(outcome.breakdown.total)) {
                throw NumericError("non-finite total loss at epoch " + std::to_string(epoch));
            }
            backward(outcome.loss);
            sgd_step(robust, robust_state, sgd);
            if (co_train) sgd_step(teacher.front(), teacher_state, sgd);

            const auto m = static_cast<double>(batch.y.size());
            for (const auto& [name, value] : outcome.breakdown.components) loss_sums[name] += value * m;
            loss_sums["total"] += outcome.breakdown.total * m;
            seen += batch.y.size();
        }

        MetricsRecord record;
        record.run_id = config.run_id;
        record.epoch = epoch;
        record.objective = std::string(objective_name(spec.kind));
        record.alpha = spec.alpha;
        record.beta = spec.beta;
        record.seed = config.seed;
        record.acc_natural = natural_accuracy(robust, data);
        for (const auto& [name, total] : loss_sums) record.losses[name] = total / static_cast<double>(seen);
        if (uses_attack(spec.kind)) {
            record.eps = spec.inner_attack.epsilon;
            record.steps = spec.inner_attack.iterations;
            record.step_size = spec.inner_attack.step_size;
        }
        if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, robust, teacher, record);
        if (config.record_wall_clock) {
            record.seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        }
        result.epochs.push_back(std::move(record));
    }
    return result;
}

}  // namespace lbgat
