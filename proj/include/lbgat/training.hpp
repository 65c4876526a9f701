#ifndef LBGAT_TRAINING_HPP
#define LBGAT_TRAINING_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lbgat/data.hpp"
#include "lbgat/metrics.hpp"
#include "lbgat/model.hpp"
#include "lbgat/objectives.hpp"

namespace lbgat {

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 128;
    double base_lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 2e-4;
    std::vector<std::size_t> transition_epochs{75, 90};
    double decay_factor = 0.1;
    std::uint64_t seed = 0;
    ObjectiveSpec objective;
    AugmentationSpec augmentation;  // ignored unless the data is image-shaped and active()
    std::string run_id = "run";
    bool record_wall_clock = false;  // false keeps metrics byte-reproducible

    void validate() const;
};

// base_lr * decay_factor^(number of transition epochs <= epoch).
double lr_at(const TrainConfig& config, std::size_t epoch);

struct SgdSettings {
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 2e-4;
};

struct OptimizerState {
    std::vector<std::vector<double>> velocity;  // one buffer per parameter, created lazily
};

/// v <- momentum * v + (grad + weight_decay * param); param <- param - lr * v.
/// Gradients are read from each parameter's accumulated grad (zero if absent).
void sgd_step(std::span<Tensor> params, OptimizerState& state, const SgdSettings& settings);
void sgd_step(Model& model, OptimizerState& state, const SgdSettings& settings);

struct TrainHooks {
    // Called after each epoch's record is built; may add evaluation results to it.
    std::function<void(std::size_t epoch, const Model& robust, std::span<const Model> teacher,
                       MetricsRecord& record)>
        on_epoch_end;
};

struct TrainResult {
    std::vector<MetricsRecord> epochs;
};

/// Mini-batch adversarial training of `robust` (and of the single teacher
/// for lbgat* objectives). Each batch: augment (images only), craft x_adv
/// against the current robust model, evaluate the objective, backpropagate,
/// and apply one SGD step per trained model. Each model keeps its own
/// velocity; both share the learning-rate schedule. Throws NumericError
/// naming the first non-finite loss component.
TrainResult train(Model& robust, std::vector<Model>& teacher, const Dataset& data,
                  const TrainConfig& config, const TrainHooks& hooks = {});

}  // namespace lbgat

#endif  // LBGAT_TRAINING_HPP
