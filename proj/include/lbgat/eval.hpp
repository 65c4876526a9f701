#ifndef LBGAT_EVAL_HPP
#define LBGAT_EVAL_HPP

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lbgat/attacks.hpp"
#include "lbgat/data.hpp"
#include "lbgat/metrics.hpp"
#include "lbgat/model.hpp"

namespace lbgat {

inline constexpr std::size_t kEvalBatch = 500;

// Fraction of rows whose argmax logit equals the label (ties to the lowest class).
double natural_accuracy(const Model& model, const Dataset& data, std::size_t batch = kEvalBatch);

// Accuracy on attack outputs; throws std::logic_error if an attacked input
// leaves the epsilon box or [0, 1].
double robust_accuracy(const Model& model, const Dataset& data, const AttackSpec& spec,
                       std::size_t batch = kEvalBatch);

// Transfer attack from `source` (PGD with `spec`) onto `target`.
double blackbox_eval(const Model& target, const Model& source, const Dataset& data,
                     const AttackSpec& spec, std::size_t batch = kEvalBatch);
// Loads the source checkpoint, evaluates, and when `record` is given stores
// the accuracy under "blackbox" together with the source path.
double blackbox_eval(const Model& target, const std::filesystem::path& source_checkpoint,
                     const Dataset& data, const AttackSpec& spec, MetricsRecord* record = nullptr,
                     std::size_t batch = kEvalBatch);

struct NamedAttack {
    std::string name;  // metrics column suffix: pgd, fgsm or cw
    AttackSpec spec;
};

/// Evaluation attacks, configured independently of the training attack.
struct EvalProtocol {
    std::vector<NamedAttack> attacks;
    std::optional<std::filesystem::path> blackbox_source;
    std::size_t batch_size = kEvalBatch;

    // PGD-20 / FGSM / CW-PGD-20 sharing one radius and step:
    // 0.031 / 0.003 for images, 0.1 / 0.01 for 2-D data.
    static EvalProtocol defaults(bool image_data, std::uint64_t seed = 0);
    void validate() const;
};

/// Natural accuracy plus one robust accuracy per configured attack (and the
/// black-box source when set). Attack settings of the first attack are
/// echoed into eps / steps / step_size. The model is never modified.
MetricsRecord evaluate(const Model& model, const Dataset& data, const EvalProtocol& protocol);

}  // namespace lbgat

#endif  // LBGAT_EVAL_HPP
