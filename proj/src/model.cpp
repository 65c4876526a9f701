#include "lbgat/model.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

#include "lbgat/error.hpp"
#include "lbgat/rng.hpp"

namespace lbgat {

namespace {

constexpr std::size_t kConv1Filters = 8;
constexpr std::size_t kConv2Filters = 16;
constexpr std::size_t kKernel = 3;
constexpr std::size_t kStride = 2;

std::size_t conv_out(std::size_t extent) { return (extent - kKernel) / kStride + 1; }

Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = rng.uniform(-bound, bound);
    Tensor t = Tensor::from(std::move(shape), std::move(values));
    t.set_requires_grad();
    return t;
}

Tensor zero_param(Shape shape) {
    Tensor t = Tensor::zeros(std::move(shape));
    t.set_requires_grad();
    return t;
}

std::size_t parse_size(std::string_view text, const char* what) {
    std::size_t value = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        throw FormatError(std::string("checkpoint: bad ") + what + " '" + std::string(text) + "'");
    }
    return value;
}

std::vector<std::size_t> parse_dims(std::string_view text) {
    std::vector<std::size_t> dims;
    if (text == "-") return dims;  // rank-0
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto cut = text.find('x', start);
        const auto piece = text.substr(start, cut == std::string_view::npos ? text.npos : cut - start);
        dims.push_back(parse_size(piece, "dimension"));
        if (cut == std::string_view::npos) break;
        start = cut + 1;
    }
    return dims;
}

std::string dims_text(const std::vector<std::size_t>& dims) {
    if (dims.empty()) return "-";
    std::string out;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) out += 'x';
        out += std::to_string(dims[i]);
    }
    return out;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(std::string("checkpoint: truncated stream while reading ") + what);
        }
        auto out = bytes_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    std::uint64_t uint(std::size_t width, const char* what) {
        const auto raw = take(width, what);
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(raw[i]) << (8 * i);
        return v;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string_view arch_tag(Arch arch) noexcept {
    switch (arch) {
        case Arch::mlp: return "mlp";
        case Arch::small_conv: return "small-conv";
    }
    return "unknown";
}

Arch parse_arch(std::string_view tag) {
    if (tag == "mlp") return Arch::mlp;
    if (tag == "small-conv") return Arch::small_conv;
    throw ConfigError("unknown architecture tag '" + std::string(tag) + "'");
}

std::size_t InputSpec::features() const noexcept { return dims.empty() ? 0 : shape_numel(dims); }

std::string InputSpec::str() const { return dims_text(dims); }

// ---------------------------------------------------------------- Model

Model::Model(Arch arch, InputSpec input, std::size_t classes, std::size_t hidden,
             std::vector<Parameter> parameters)
    : arch_(arch),
      input_(std::move(input)),
      classes_(classes),
      hidden_(hidden),
      params_(std::move(parameters)) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (params_[i].first == params_[j].first) {
                throw std::invalid_argument("model: duplicate parameter name " + params_[i].first);
            }
        }
    }
}

Model::Model(const Model& other)
    : arch_(other.arch_), input_(other.input_), classes_(other.classes_), hidden_(other.hidden_) {
    params_.reserve(other.params_.size());
    for (const auto& [name, t] : other.params_) {
        Tensor copy = t.detach();
        copy.set_requires_grad(t.requires_grad());
        params_.emplace_back(name, std::move(copy));
    }
}

Model& Model::operator=(const Model& other) {
    if (this != &other) *this = Model(other);
    return *this;
}

const Tensor& Model::parameter(std::string_view name) const {
    for (const auto& [n, t] : params_) {
        if (n == name) return t;
    }
    throw std::out_of_range("model: no parameter named " + std::string(name));
}

Tensor& Model::parameter(std::string_view name) {
    return const_cast<Tensor&>(std::as_const(*this).parameter(name));
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.second.numel();
    return n;
}

void Model::zero_grad() {
    for (auto& p : params_) p.second.zero_grad();
}

Tensor Model::forward(const Tensor& x, bool track_parameters) const {
    if (!x.defined() || x.rank() != 2 || x.dim(1) != input_.features()) {
        throw ShapeError("forward: expected input [m, " + std::to_string(input_.features()) +
                         "], got " + (x.defined() ? shape_str(x.shape()) : "undefined"));
    }
    auto p = [&](std::size_t i) {
        return track_parameters ? params_[i].second : params_[i].second.detach();
    };
    const std::size_t m = x.dim(0);
    switch (arch_) {
        case Arch::mlp: {
            Tensor h = relu(add_rowwise(matmul(x, p(0)), p(1)));
            h = relu(add_rowwise(matmul(h, p(2)), p(3)));
            return add_rowwise(matmul(h, p(4)), p(5));
        }
        case Arch::small_conv: {
            const auto& d = input_.dims;
            Tensor h = x.reshape({m, d[0], d[1], d[2]});
            h = relu(conv2d(h, p(0), p(1), kStride));
            h = relu(conv2d(h, p(2), p(3), kStride));
            h = h.reshape({m, h.numel() / m});
            return add_rowwise(matmul(h, p(4)), p(5));
        }
    }
    throw std::logic_error("forward: unknown architecture");
}

Model build_model(Arch arch, const InputSpec& input, std::size_t classes, std::uint64_t seed,
                  std::size_t hidden) {
    if (classes < 2) throw ConfigError("a classifier needs at least 2 classes", "classes");
    if (input.features() == 0) throw ConfigError("input has no features", "input");
    Rng rng(mix_seed(seed, 0x6d6f64656cULL));
    std::vector<Model::Parameter> params;
    switch (arch) {
        case Arch::mlp: {
            if (hidden == 0) throw ConfigError("hidden width must be positive", "hidden");
            const auto f = input.features();
            params.emplace_back("fc1.weight", init_uniform({f, hidden}, f, rng));
            params.emplace_back("fc1.bias", zero_param({hidden}));
            params.emplace_back("fc2.weight", init_uniform({hidden, hidden}, hidden, rng));
            params.emplace_back("fc2.bias", zero_param({hidden}));
            params.emplace_back("head.weight", init_uniform({hidden, classes}, hidden, rng));
            params.emplace_back("head.bias", zero_param({classes}));
            break;
        }
        case Arch::small_conv: {
            if (!input.is_image()) throw ConfigError("small-conv needs an image input", "input");
            const auto c = input.dims[0], h = input.dims[1], w = input.dims[2];
            if (h < 7 || w < 7) throw ConfigError("small-conv needs images of at least 7x7", "input");
            const auto h2 = conv_out(conv_out(h));
            const auto w2 = conv_out(conv_out(w));
            const auto flat = kConv2Filters * h2 * w2;
            params.emplace_back("conv1.weight", init_uniform({kConv1Filters, c, kKernel, kKernel},
                                                             c * kKernel * kKernel, rng));
            params.emplace_back("conv1.bias", zero_param({kConv1Filters}));
            params.emplace_back("conv2.weight",
                                init_uniform({kConv2Filters, kConv1Filters, kKernel, kKernel},
                                             kConv1Filters * kKernel * kKernel, rng));
            params.emplace_back("conv2.bias", zero_param({kConv2Filters}));
            params.emplace_back("head.weight", init_uniform({flat, classes}, flat, rng));
            params.emplace_back("head.bias", zero_param({classes}));
            hidden = 0;
            break;
        }
    }
    return Model(arch, input, classes, hidden, std::move(params));
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeError("argmax_rows: expected a matrix");
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    const auto v = logits.values();
    std::vector<std::size_t> out(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < cols; ++j) {
            if (v[i * cols + j] > v[i * cols + best]) best = j;
        }
        out[i] = best;
    }
    return out;
}

Tensor ensemble_logits(std::span<const Model> models, const Tensor& x, bool track_parameters) {
    if (models.empty()) throw std::invalid_argument("ensemble_logits: empty ensemble");
    for (const auto& m : models) {
        if (m.classes() != models[0].classes() || m.input() != models[0].input()) {
            throw ConfigError("ensemble members disagree on classes or input layout", "teacher");
        }
    }
    if (models.size() == 1) return models[0].forward(x, track_parameters);
    Tensor total = models[0].forward(x, track_parameters);
    for (std::size_t i = 1; i < models.size(); ++i) {
        total = add(total, models[i].forward(x, track_parameters));
    }
    return scale(total, 1.0 / static_cast<double>(models.size()));
}

std::uint64_t parameter_checksum(const Model& model) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, t] : model.parameters()) {
        for (char ch : name) h = (h ^ static_cast<std::uint8_t>(ch)) * 0x100000001b3ULL;
        for (double v : t.values()) {
            auto bits = std::bit_cast<std::uint64_t>(v);
            for (int i = 0; i < 8; ++i) {
                h = (h ^ ((bits >> (8 * i)) & 0xff)) * 0x100000001b3ULL;
            }
        }
    }
    return h;
}

// ---------------------------------------------------------------- checkpoints
//
// Layout (little-endian):
//   "LBGATCKPT" | u32 version | u32 manifest length | manifest (UTF-8) |
//   u64 value count | value count x f64
// Manifest lines: arch=<tag>, classes=<n>, input=<dims>, hidden=<n>, then
// one "param <name> <dims>" line per parameter in payload order.

std::vector<std::uint8_t> save_checkpoint(const Model& model) {
    std::ostringstream manifest;
    manifest << "arch=" << arch_tag(model.arch()) << '\n'
             << "classes=" << model.classes() << '\n'
             << "input=" << model.input().str() << '\n'
             << "hidden=" << model.hidden() << '\n';
    for (const auto& [name, t] : model.parameters()) {
        manifest << "param " << name << ' ' << dims_text(t.shape()) << '\n';
    }
    const std::string text = manifest.str();

    std::vector<std::uint8_t> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    put_u64(out, model.parameter_count());
    for (const auto& p : model.parameters()) {
        for (double v : p.second.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

Model load_checkpoint(std::span<const std::uint8_t> bytes, std::optional<Arch> expected) {
    Reader in(bytes);
    const auto magic = in.take(kCheckpointMagic.size(), "magic");
    if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic.begin())) {
        throw FormatError("checkpoint: bad magic bytes");
    }
    const auto version = in.uint(4, "version");
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint: unsupported format version " + std::to_string(version));
    }
    const auto manifest_len = in.uint(4, "manifest length");
    const auto raw = in.take(manifest_len, "manifest");
    const std::string text(raw.begin(), raw.end());

    std::optional<Arch> arch;
    std::size_t classes = 0, hidden = 0;
    InputSpec input;
    std::vector<std::pair<std::string, Shape>> entries;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.rfind("param ", 0) == 0) {
            std::istringstream fields(line.substr(6));
            std::string name, dims;
            if (!(fields >> name >> dims)) throw FormatError("checkpoint: bad manifest line '" + line + "'");
            entries.emplace_back(name, parse_dims(dims));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("checkpoint: bad manifest line '" + line + "'");
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "arch") {
            try {
                arch = parse_arch(value);
            } catch (const ConfigError&) {
                throw FormatError("checkpoint: unknown architecture tag '" + value + "'");
            }
        } else if (key == "classes") {
            classes = parse_size(value, "class count");
        } else if (key == "input") {
            input.dims = parse_dims(value);
        } else if (key == "hidden") {
            hidden = parse_size(value, "hidden width");
        } else {
            throw FormatError("checkpoint: unknown manifest key '" + key + "'");
        }
    }
    if (!arch) throw FormatError("checkpoint: manifest lacks an architecture tag");
    if (expected && *expected != *arch) {
        throw FormatError("checkpoint: architecture tag mismatch (expected " +
                          std::string(arch_tag(*expected)) + ", found " +
                          std::string(arch_tag(*arch)) + ")");
    }

    const auto count = in.uint(8, "value count");
    std::uint64_t declared = 0;
    for (const auto& e : entries) declared += shape_numel(e.second);
    if (declared != count) {
        throw FormatError("checkpoint: manifest declares " + std::to_string(declared) +
                          " values but payload header says " + std::to_string(count));
    }
    if (in.remaining() != count * 8) {
        throw FormatError("checkpoint: payload holds " + std::to_string(in.remaining()) +
                          " bytes, expected " + std::to_string(count * 8) +
                          (in.remaining() < count * 8 ? " (truncated stream)" : ""));
    }

    // Build a fresh model for the declared layout and check the manifest against it.
    std::optional<Model> built;
    try {
        built.emplace(build_model(*arch, input, classes, 0, hidden == 0 ? kDefaultHidden : hidden));
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint: inconsistent header: ") + e.what());
    }
    const Model& model = *built;
    if (model.parameters().size() != entries.size()) {
        throw FormatError("checkpoint: manifest lists " + std::to_string(entries.size()) +
                          " parameters, architecture has " +
                          std::to_string(model.parameters().size()));
    }
    std::vector<Model::Parameter> params;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& [name, shape] = entries[i];
        const auto& ref = model.parameters()[i];
        if (ref.first != name || ref.second.shape() != shape) {
            throw FormatError("checkpoint: parameter " + name + " " + shape_str(shape) +
                              " does not match architecture entry " + ref.first + " " +
                              shape_str(ref.second.shape()));
        }
        std::vector<double> values(shape_numel(shape));
        for (auto& v : values) v = std::bit_cast<double>(in.uint(8, "payload"));
        Tensor t = Tensor::from(shape, std::move(values));
        t.set_requires_grad();
        params.emplace_back(name, std::move(t));
    }
    return Model(*arch, model.input(), classes, model.hidden(), std::move(params));
}

void save_checkpoint_file(const Model& model, const std::filesystem::path& path) {
    const auto bytes = save_checkpoint(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

Model load_checkpoint_file(const std::filesystem::path& path, std::optional<Arch> expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return load_checkpoint(bytes, expected);
}

}  // namespace lbgat
