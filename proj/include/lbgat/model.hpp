#ifndef LBGAT_MODEL_HPP
#define LBGAT_MODEL_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lbgat/tensor.hpp"

namespace lbgat {

enum class Arch { mlp, small_conv };

std::string_view arch_tag(Arch arch) noexcept;
// Accepts "mlp" and "small-conv"; throws ConfigError otherwise.
Arch parse_arch(std::string_view tag);

/// Per-example input layout: either a flat feature vector {n} or an image {c, h, w}.
struct InputSpec {
    std::vector<std::size_t> dims;

    static InputSpec flat(std::size_t features) { return {{features}}; }
    static InputSpec image(std::size_t channels, std::size_t height, std::size_t width) {
        return {{channels, height, width}};
    }

    bool is_image() const noexcept { return dims.size() == 3; }
    std::size_t features() const noexcept;
    std::string str() const;

    friend bool operator==(const InputSpec&, const InputSpec&) = default;
};

/// Parameterized classifier producing logits of shape [batch, classes].
///
/// Parameters are leaf tensors with gradient tracking enabled. Copying a
/// Model copies its parameters, so copies never share state.
class Model {
public:
    using Parameter = std::pair<std::string, Tensor>;

    Model(Arch arch, InputSpec input, std::size_t classes, std::size_t hidden,
          std::vector<Parameter> parameters);

    Model(const Model& other);
    Model& operator=(const Model& other);
    Model(Model&&) noexcept = default;
    Model& operator=(Model&&) noexcept = default;
    ~Model() = default;

    Arch arch() const noexcept { return arch_; }
    const InputSpec& input() const noexcept { return input_; }
    std::size_t classes() const noexcept { return classes_; }
    std::size_t hidden() const noexcept { return hidden_; }

    const std::vector<Parameter>& parameters() const noexcept { return params_; }
    // Throws std::out_of_range for an unknown name.
    const Tensor& parameter(std::string_view name) const;
    Tensor& parameter(std::string_view name);
    std::size_t parameter_count() const;

    void zero_grad();

    /// Logits for a batch x of shape [m, input().features()].
    /// With track_parameters = false the parameters enter the graph as
    /// constants: gradients still reach x but never the model.
    Tensor forward(const Tensor& x, bool track_parameters = true) const;

private:
    Arch arch_;
    InputSpec input_;
    std::size_t classes_;
    std::size_t hidden_;
    std::vector<Parameter> params_;
};

inline constexpr std::size_t kDefaultHidden = 64;

/// Seeded construction: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases.
/// mlp: features -> hidden -> hidden -> classes with ReLU.
/// small-conv: two 3x3 stride-2 conv+ReLU blocks (8 and 16 filters) and a dense head;
/// images must be at least 7x7.
Model build_model(Arch arch, const InputSpec& input, std::size_t classes, std::uint64_t seed,
                  std::size_t hidden = kDefaultHidden);

// Argmax per row; ties resolve to the lowest class index.
std::vector<std::size_t> argmax_rows(const Tensor& logits);

// Mean of member logits; members must agree on classes and input layout.
Tensor ensemble_logits(std::span<const Model> models, const Tensor& x,
                       bool track_parameters = false);

// FNV-1a over parameter bytes; used to confirm evaluation leaves models untouched.
std::uint64_t parameter_checksum(const Model& model);

// --- checkpoints ---------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::string_view kCheckpointMagic = "LBGATCKPT";

std::vector<std::uint8_t> save_checkpoint(const Model& model);
// Rejects version mismatch, truncation, manifest/payload disagreement and,
// when `expected` is given, an architecture tag mismatch.
Model load_checkpoint(std::span<const std::uint8_t> bytes,
                      std::optional<Arch> expected = std::nullopt);

void save_checkpoint_file(const Model& model, const std::filesystem::path& path);
Model load_checkpoint_file(const std::filesystem::path& path,
                           std::optional<Arch> expected = std::nullopt);

}  // namespace lbgat

#endif  // LBGAT_MODEL_HPP
