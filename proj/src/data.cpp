#include "lbgat/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>

#include "lbgat/error.hpp"
#include "lbgat/rng.hpp"

namespace lbgat {

namespace {

// Raw moons live in roughly [-1, 2] x [-0.5, 1]; one shared scale keeps the
// l-infinity geometry isotropic after mapping into the unit square.
constexpr double kMoonsSpan = 3.5;
constexpr double kMoonsLeft = -1.25;
constexpr double kMoonsBottom = 0.25 - kMoonsSpan / 2.0;

Dataset two_d_dataset(std::vector<double> xs, std::vector<std::size_t> labels, Split split) {
    const std::size_t n = labels.size();
    Dataset d;
    d.inputs = Tensor::from({n, 2}, std::move(xs));
    d.labels = std::move(labels);
    d.split = split;
    d.classes = 2;
    d.input = InputSpec::flat(2);
    return d;
}

void check_size(std::size_t n) {
    if (n < 2) throw ConfigError("need at least one example per class (n >= 2)", "dataset.size");
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(std::span<const std::uint8_t> bytes, std::size_t at) {
    return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
           (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
}

// Validates an IDX header and returns its dimensions.
std::vector<std::size_t> idx_header(std::span<const std::uint8_t> bytes, std::uint32_t magic,
                                    const std::filesystem::path& path) {
    const std::size_t rank = magic & 0xff;
    if (bytes.size() < 4 || be32(bytes, 0) != magic) {
        throw FormatError(path.string() + ": bad IDX magic (expected 0x" +
                          [&] {
                              std::ostringstream os;
                              os << std::hex << std::setw(8) << std::setfill('0') << magic;
                              return os.str();
                          }() +
                          ")");
    }
    if (bytes.size() < 4 + 4 * rank) throw FormatError(path.string() + ": truncated IDX header");
    std::vector<std::size_t> dims(rank);
    std::size_t total = 1;
    for (std::size_t i = 0; i < rank; ++i) {
        dims[i] = be32(bytes, 4 + 4 * i);
        if (dims[i] != 0 && total > std::numeric_limits<std::size_t>::max() / dims[i]) {
            throw FormatError(path.string() + ": IDX dimensions overflow");
        }
        total *= dims[i];
    }
    const std::size_t payload = bytes.size() - (4 + 4 * rank);
    if (payload < total) {
        throw FormatError(path.string() + ": truncated IDX payload (" + std::to_string(payload) +
                          " of " + std::to_string(total) + " bytes)");
    }
    if (payload > total) {
        throw FormatError(path.string() + ": IDX payload has " + std::to_string(payload - total) +
                          " trailing bytes");
    }
    return dims;
}

}  // namespace

std::string_view split_name(Split split) noexcept { return split == Split::train ? "train" : "test"; }

void Dataset::validate() const {
    if (!inputs.defined() || inputs.rank() != 2 || inputs.dim(0) != labels.size() ||
        inputs.dim(1) != input.features()) {
        throw FormatError("dataset: inputs, labels and input layout disagree");
    }
    for (auto l : labels) {
        if (l >= classes) throw FormatError("dataset: label " + std::to_string(l) + " >= class count");
    }
    for (double v : inputs.values()) {
        if (!(v >= 0.0 && v <= 1.0)) throw FormatError("dataset: input value outside [0, 1]");
    }
}

Dataset Dataset::slice(std::size_t first, std::size_t count) const {
    if (first + count > size()) throw std::out_of_range("dataset slice out of range");
    const std::size_t f = input.features();
    const auto v = inputs.values();
    Dataset out;
    out.inputs = Tensor::from({count, f}, std::vector<double>(v.begin() + first * f,
                                                              v.begin() + (first + count) * f));
    out.labels.assign(labels.begin() + first, labels.begin() + first + count);
    out.split = split;
    out.classes = classes;
    out.input = input;
    return out;
}

Dataset make_moons(std::size_t n, double noise, std::uint64_t seed, Split split) {
    check_size(n);
    if (!(noise >= 0.0)) throw ConfigError("must be >= 0", "dataset.noise");
    Rng rng(mix_seed(seed, 0x6d6f6f6e73ULL));
    std::vector<double> xs(2 * n);
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = i % 2;
        const double t = std::numbers::pi * rng.uniform();
        double a = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
        double b = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
        a += noise * rng.normal();
        b += noise * rng.normal();
        xs[2 * i] = std::clamp((a - kMoonsLeft) / kMoonsSpan, 0.0, 1.0);
        xs[2 * i + 1] = std::clamp((b - kMoonsBottom) / kMoonsSpan, 0.0, 1.0);
        labels[i] = label;
    }
    return two_d_dataset(std::move(xs), std::move(labels), split);
}

Dataset make_gaussians(std::size_t n, double noise, std::uint64_t seed, Split split) {
    check_size(n);
    if (!(noise >= 0.0)) throw ConfigError("must be >= 0", "dataset.noise");
    Rng rng(mix_seed(seed, 0x6761757373ULL));
    std::vector<double> xs(2 * n);
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = i % 2;
        const double centre = label == 0 ? 0.3 : 0.7;
        xs[2 * i] = std::clamp(centre + noise * rng.normal(), 0.0, 1.0);
        xs[2 * i + 1] = std::clamp(centre + noise * rng.normal(), 0.0, 1.0);
        labels[i] = label;
    }
    return two_d_dataset(std::move(xs), std::move(labels), split);
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
    if (data.input.features() != 2) throw ConfigError("CSV export supports 2-D inputs only", "dataset");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "x0,x1,label\n" << std::setprecision(17);
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << data.inputs.at(i, 0) << ',' << data.inputs.at(i, 1) << ',' << data.labels[i] << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

Dataset read_csv(const std::filesystem::path& path, Split split) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "x0,x1,label") {
        throw FormatError(path.string() + ": expected header x0,x1,label");
    }
    std::vector<double> xs;
    std::vector<std::size_t> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        double a = 0, b = 0;
        long long label = -1;
        char c1 = 0, c2 = 0;
        if (!(fields >> a >> c1 >> b >> c2 >> label) || c1 != ',' || c2 != ',' || label < 0) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": malformed row");
        }
        xs.push_back(a);
        xs.push_back(b);
        labels.push_back(static_cast<std::size_t>(label));
    }
    auto d = two_d_dataset(std::move(xs), std::move(labels), split);
    for (auto l : d.labels) d.classes = std::max(d.classes, l + 1);
    d.validate();
    return d;
}

IdxImages load_idx_images(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    const auto dims = idx_header(bytes, kIdxImageMagic, path);
    const std::size_t n = dims[0], h = dims[1], w = dims[2];
    const std::size_t offset = 16;
    std::vector<double> pixels(n * h * w);
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = bytes[offset + i] / 255.0;
    return {Tensor::from({n, h * w}, std::move(pixels)), h, w};
}

std::vector<std::size_t> load_idx_labels(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    const auto dims = idx_header(bytes, kIdxLabelMagic, path);
    std::vector<std::size_t> labels(dims[0]);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = bytes[8 + i];
    return labels;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 Split split) {
    auto img = load_idx_images(images);
    auto lab = load_idx_labels(labels);
    if (img.pixels.dim(0) != lab.size()) {
        throw FormatError("IDX image count " + std::to_string(img.pixels.dim(0)) +
                          " differs from label count " + std::to_string(lab.size()));
    }
    Dataset d;
    d.inputs = std::move(img.pixels);
    d.labels = std::move(lab);
    d.split = split;
    d.classes = 2;
    for (auto l : d.labels) d.classes = std::max(d.classes, l + 1);
    d.input = InputSpec::image(1, img.height, img.width);
    return d;
}

Tensor augment_with(const Tensor& batch, const InputSpec& input, std::size_t padding,
                    std::span<const CropDecision> decisions) {
    if (!input.is_image()) throw ConfigError("augmentation needs image-shaped data", "dataset.augmentation");
    if (batch.rank() != 2 || batch.dim(1) != input.features()) {
        throw ShapeError("augment: batch " + shape_str(batch.shape()) + " does not match input " +
                         input.str());
    }
    const std::size_t m = batch.dim(0);
    if (decisions.size() != m) throw ShapeError("augment: one decision per example required");
    const std::size_t c = input.dims[0], h = input.dims[1], w = input.dims[2];
    const auto src = batch.values();
    std::vector<double> out(src.size(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const auto& d = decisions[i];
        if (d.top > 2 * padding || d.left > 2 * padding) {
            throw std::out_of_range("augment: crop origin outside the padded canvas");
        }
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t r = 0; r < h; ++r) {
                // Output pixel (r, col) reads padded-canvas pixel (r + top, col + left).
                const auto sr = static_cast<std::ptrdiff_t>(r + d.top) - static_cast<std::ptrdiff_t>(padding);
                if (sr < 0 || sr >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t col = 0; col < w; ++col) {
                    const auto sc = static_cast<std::ptrdiff_t>(col + d.left) -
                                    static_cast<std::ptrdiff_t>(padding);
                    if (sc < 0 || sc >= static_cast<std::ptrdiff_t>(w)) continue;
                    const std::size_t dst_col = d.flip ? w - 1 - col : col;
                    out[((i * c + ch) * h + r) * w + dst_col] =
                        src[((i * c + ch) * h + static_cast<std::size_t>(sr)) * w +
                            static_cast<std::size_t>(sc)];
                }
            }
        }
    }
    return Tensor::from(batch.shape(), std::move(out));
}

Tensor augment(const Tensor& batch, const InputSpec& input, const AugmentationSpec& spec,
               std::size_t row_offset) {
    if (!input.is_image()) throw ConfigError("augmentation needs image-shaped data", "dataset.augmentation");
    if (batch.rank() != 2) throw ShapeError("augment: expected a [m, features] batch");
    std::vector<CropDecision> decisions(batch.dim(0));
    for (std::size_t i = 0; i < decisions.size(); ++i) {
        Rng rng(mix_seed(spec.seed, row_offset + i));
        decisions[i].top = static_cast<std::size_t>(rng.below(2 * spec.padding + 1));
        decisions[i].left = static_cast<std::size_t>(rng.below(2 * spec.padding + 1));
        decisions[i].flip = spec.horizontal_flip && rng.coin();
    }
    return augment_with(batch, input, spec.padding, decisions);
}

std::vector<Batch> batches(const Dataset& data, std::size_t m, std::uint64_t epoch_seed) {
    if (data.size() == 0) throw std::invalid_argument("batches: empty dataset");
    if (m == 0) throw ConfigError("must be >= 1", "train.batch_size");
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(epoch_seed, 0x62617463ULL));
    rng.shuffle(order.begin(), order.end());

    const std::size_t f = data.input.features();
    const auto v = data.inputs.values();
    std::vector<Batch> out;
    for (std::size_t start = 0; start < order.size(); start += m) {
        const std::size_t count = std::min(m, order.size() - start);
        Batch b;
        std::vector<double> xs(count * f);
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t row = order[start + i];
            std::copy_n(v.begin() + row * f, f, xs.begin() + i * f);
            b.y.push_back(data.labels[row]);
            b.indices.push_back(row);
        }
        b.x = Tensor::from({count, f}, std::move(xs));
        out.push_back(std::move(b));
    }
    return out;
}

std::vector<Batch> sequential_batches(const Dataset& data, std::size_t m) {
    if (m == 0) throw std::invalid_argument("sequential_batches: batch size must be >= 1");
    std::vector<Batch> out;
    for (std::size_t start = 0; start < data.size(); start += m) {
        const std::size_t count = std::min(m, data.size() - start);
        Batch b;
        Dataset part = data.slice(start, count);
        b.x = part.inputs;
        b.y = std::move(part.labels);
        for (std::size_t i = 0; i < count; ++i) b.indices.push_back(start + i);
        out.push_back(std::move(b));
    }
    return out;
}

}  // namespace lbgat
