#ifndef LBGAT_DATA_HPP
#define LBGAT_DATA_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "lbgat/model.hpp"
#include "lbgat/tensor.hpp"

namespace lbgat {

enum class Split { train, test };

std::string_view split_name(Split split) noexcept;

/// Labeled inputs with every value in [0, 1]. inputs has shape [N, features].
struct Dataset {
    Tensor inputs;
    std::vector<std::size_t> labels;
    Split split = Split::train;
    std::size_t classes = 2;
    InputSpec input;

    std::size_t size() const noexcept { return labels.size(); }
    // Throws FormatError if a label or value is out of range or shapes disagree.
    void validate() const;
    // Rows [first, first + count) as a new dataset.
    Dataset slice(std::size_t first, std::size_t count) const;
};

/// Two interleaving half circles with Gaussian jitter of std `noise`,
/// mapped into the unit square by a fixed affine map and clamped.
/// Classes alternate so that |count0 - count1| <= 1.
Dataset make_moons(std::size_t n, double noise, std::uint64_t seed, Split split = Split::train);

/// Two isotropic Gaussian blobs centred at (0.3, 0.3) and (0.7, 0.7) with
/// std `noise`, clamped to the unit square.
Dataset make_gaussians(std::size_t n, double noise, std::uint64_t seed, Split split = Split::train);

// Synthetic 2-D export/import with header `x0,x1,label`.
void write_csv(const Dataset& data, const std::filesystem::path& path);
Dataset read_csv(const std::filesystem::path& path, Split split = Split::train);

// --- IDX (MNIST-style) files ---------------------------------------------

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct IdxImages {
    Tensor pixels;  // [N, H * W], bytes scaled by 1/255
    std::size_t height = 0;
    std::size_t width = 0;
};

IdxImages load_idx_images(const std::filesystem::path& path);
std::vector<std::size_t> load_idx_labels(const std::filesystem::path& path);
// Pairs an image file with a label file; classes = max label + 1 (at least 2).
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 Split split = Split::train);

// --- augmentation ----------------------------------------------------------

struct AugmentationSpec {
    std::size_t padding = 0;
    bool horizontal_flip = false;
    std::uint64_t seed = 0;

    bool active() const noexcept { return padding > 0 || horizontal_flip; }
};

// Explicit per-example transform: crop origin inside the padded canvas and flip flag.
struct CropDecision {
    std::size_t top = 0;
    std::size_t left = 0;
    bool flip = false;
};

/// Zero-pads each image by `padding`, takes a uniformly random crop of the
/// original size, then flips horizontally with probability 0.5. Decisions
/// for row i are drawn from a stream keyed by (spec.seed, row_offset + i).
Tensor augment(const Tensor& batch, const InputSpec& input, const AugmentationSpec& spec,
               std::size_t row_offset = 0);

// Deterministic core of `augment`; decisions.size() must equal the batch size.
Tensor augment_with(const Tensor& batch, const InputSpec& input, std::size_t padding,
                    std::span<const CropDecision> decisions);

// --- batching --------------------------------------------------------------

struct Batch {
    Tensor x;
    std::vector<std::size_t> y;
    std::vector<std::size_t> indices;  // dataset rows, in batch order
};

// Seeded permutation cut into contiguous slices of `m` (the last may be shorter).
std::vector<Batch> batches(const Dataset& data, std::size_t m, std::uint64_t epoch_seed);

// Rows in dataset order, no shuffling.
std::vector<Batch> sequential_batches(const Dataset& data, std::size_t m);

}  // namespace lbgat

#endif  // LBGAT_DATA_HPP
