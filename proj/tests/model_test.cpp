#include <gtest/gtest.h>

#include <cstring>

#include "lbgat/error.hpp"
#include "lbgat/model.hpp"
#include "testing.hpp"

using namespace lbgat;
using lbgat::testing::max_relative_error;
using lbgat::testing::numeric_gradient;
using lbgat::testing::random_tensor;
using lbgat::testing::same_bits;

namespace {

std::vector<double> copy_values(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

void expect_same_parameters(const Model& a, const Model& b) {
    ASSERT_EQ(a.parameters().size(), b.parameters().size());
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
        EXPECT_EQ(a.parameters()[i].first, b.parameters()[i].first);
        EXPECT_EQ(a.parameters()[i].second.shape(), b.parameters()[i].second.shape());
        EXPECT_TRUE(same_bits(a.parameters()[i].second.values(), b.parameters()[i].second.values()));
    }
}

// Big-endian-free little-endian writer for hand-made checkpoint bytes.
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

TEST(Model, SameSeedSameParameters) {
    const Model a = build_model(Arch::mlp, InputSpec::flat(2), 2, 7, 16);
    const Model b = build_model(Arch::mlp, InputSpec::flat(2), 2, 7, 16);
    expect_same_parameters(a, b);
    EXPECT_EQ(parameter_checksum(a), parameter_checksum(b));
    const Model c = build_model(Arch::mlp, InputSpec::flat(2), 2, 8, 16);
    EXPECT_NE(parameter_checksum(a), parameter_checksum(c));
}

TEST(Model, MlpShapesAndCount) {
    const Model m = build_model(Arch::mlp, InputSpec::flat(5), 3, 1, 8);
    EXPECT_EQ(m.parameter("fc1.weight").shape(), (Shape{5, 8}));
    EXPECT_EQ(m.parameter("head.weight").shape(), (Shape{8, 3}));
    EXPECT_EQ(m.parameter_count(), 5u * 8 + 8 + 8 * 8 + 8 + 8 * 3 + 3);
    Rng rng(1);
    EXPECT_EQ(m.forward(random_tensor(rng, {4, 5}, 0, 1)).shape(), (Shape{4, 3}));
}

TEST(Model, ConvShapes) {
    const Model m = build_model(Arch::small_conv, InputSpec::image(1, 28, 28), 10, 3);
    Rng rng(2);
    EXPECT_EQ(m.forward(random_tensor(rng, {2, 784}, 0, 1)).shape(), (Shape{2, 10}));
    EXPECT_THROW(build_model(Arch::small_conv, InputSpec::image(1, 6, 6), 10, 3), ConfigError);
    EXPECT_THROW(build_model(Arch::small_conv, InputSpec::flat(4), 2, 3), ConfigError);
}

TEST(Model, InitialisationIsBounded) {
    const Model m = build_model(Arch::mlp, InputSpec::flat(4), 2, 0, 32);
    for (double v : m.parameter("fc1.weight").values()) EXPECT_LE(std::abs(v), 0.5);
    for (double v : m.parameter("fc2.weight").values()) EXPECT_LE(std::abs(v), 1.0 / std::sqrt(32.0));
    for (double v : m.parameter("fc1.bias").values()) EXPECT_EQ(v, 0.0);
}

TEST(Model, ZeroWeightsGiveHeadBias) {
    Model m = build_model(Arch::mlp, InputSpec::flat(3), 2, 0, 4);
    for (auto& [name, t] : m.parameters()) {
        auto v = const_cast<Tensor&>(t).mutable_values();
        std::fill(v.begin(), v.end(), 0.0);
    }
    auto bias = m.parameter("head.bias").mutable_values();
    bias[0] = 0.25;
    bias[1] = -1.5;
    Rng rng(3);
    const Tensor out = m.forward(random_tensor(rng, {3, 3}, 0, 1));
    for (std::size_t r = 0; r < 3; ++r) {
        EXPECT_EQ(out.at(r, 0), 0.25);
        EXPECT_EQ(out.at(r, 1), -1.5);
    }
}

TEST(Model, InputGradientMatchesFiniteDifferences) {
    for (Arch arch : {Arch::mlp, Arch::small_conv}) {
        const InputSpec in = arch == Arch::mlp ? InputSpec::flat(3) : InputSpec::image(1, 7, 7);
        const Model m = build_model(arch, in, 3, 5, 8);
        for (std::uint64_t trial = 0; trial < 5; ++trial) {
            Rng rng(trial);
            Tensor x = random_tensor(rng, {2, in.features()}, 0, 1).set_requires_grad();
            const Tensor w = random_tensor(rng, {2, 3});
            backward(sum(mul(m.forward(x, false), w)));
            const auto numeric = numeric_gradient(x, [&] { return sum(mul(m.forward(x, false), w)).item(); });
            EXPECT_LT(max_relative_error(x.grad(), numeric), 1e-4);
        }
    }
}

TEST(Model, UntrackedForwardLeavesParametersAlone) {
    const Model m = build_model(Arch::mlp, InputSpec::flat(2), 2, 0, 4);
    Tensor x = Tensor::from({1, 2}, {0.2, 0.4}).set_requires_grad();
    backward(sum(m.forward(x, false)));
    for (const auto& [name, t] : m.parameters()) EXPECT_FALSE(t.has_grad()) << name;
    EXPECT_TRUE(x.has_grad());
}

TEST(Model, CopyIsDeep) {
    Model a = build_model(Arch::mlp, InputSpec::flat(2), 2, 0, 4);
    const Model b = a;
    a.parameter("head.bias").mutable_values()[0] += 1.0;
    EXPECT_NE(a.parameter("head.bias")[0], b.parameter("head.bias")[0]);
}

TEST(Model, ForwardRejectsWrongWidth) {
    const Model m = build_model(Arch::mlp, InputSpec::flat(2), 2, 0, 4);
    EXPECT_THROW(m.forward(Tensor::zeros({1, 3})), ShapeError);
}

TEST(Model, ArgmaxRowsTiesPickLowest) {
    const auto out = argmax_rows(Tensor::from({3, 3}, {0, 1, 1, 5, 2, 5, -1, -2, -0.5}));
    EXPECT_EQ(out, (std::vector<std::size_t>{1, 0, 2}));
}

TEST(Checkpoint, RoundTripIsBitExact) {
    for (Arch arch : {Arch::mlp, Arch::small_conv}) {
        const InputSpec in = arch == Arch::mlp ? InputSpec::flat(2) : InputSpec::image(1, 8, 9);
        const Model m = build_model(arch, in, 4, 11, 6);
        const auto bytes = save_checkpoint(m);
        const Model back = load_checkpoint(bytes);
        EXPECT_EQ(back.arch(), m.arch());
        EXPECT_EQ(back.input(), m.input());
        EXPECT_EQ(back.classes(), m.classes());
        expect_same_parameters(m, back);
        EXPECT_EQ(save_checkpoint(back), bytes);
    }
}

TEST(Checkpoint, FileRoundTrip) {
    lbgat::testing::TempDir dir("ckpt");
    const Model m = build_model(Arch::mlp, InputSpec::flat(2), 2, 3, 5);
    save_checkpoint_file(m, dir / "m.ckpt");
    expect_same_parameters(m, load_checkpoint_file(dir / "m.ckpt"));
    EXPECT_THROW(load_checkpoint_file(dir / "missing.ckpt"), IoError);
}

TEST(Checkpoint, TruncatedStreamIsRejected) {
    const auto bytes = save_checkpoint(build_model(Arch::mlp, InputSpec::flat(2), 2, 0, 4));
    for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
        const std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
        EXPECT_THROW(load_checkpoint(part), FormatError) << "cut at " << cut;
    }
    auto longer = bytes;
    longer.push_back(0);
    EXPECT_THROW(load_checkpoint(longer), FormatError);
}

TEST(Checkpoint, BadMagicAndVersionAreRejected) {
    auto bytes = save_checkpoint(build_model(Arch::mlp, InputSpec::flat(2), 2, 0, 4));
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(load_checkpoint(bad), FormatError);
    bad = bytes;
    bad[kCheckpointMagic.size()] = 2;
    EXPECT_THROW(load_checkpoint(bad), FormatError);
}

TEST(Checkpoint, CrossArchitectureLoadIsRejected) {
    const auto bytes = save_checkpoint(build_model(Arch::mlp, InputSpec::flat(2), 2, 0, 4));
    EXPECT_THROW(load_checkpoint(bytes, Arch::small_conv), FormatError);
    EXPECT_NO_THROW(load_checkpoint(bytes, Arch::mlp));
}

TEST(Checkpoint, ManifestPayloadMismatchIsRejected) {
    std::vector<std::uint8_t> bytes(kCheckpointMagic.begin(), kCheckpointMagic.end());
    put_u32(bytes, kCheckpointVersion);
    const std::string manifest = "arch=mlp\nclasses=2\ninput=2\nhidden=1\nfc1.weight 2x1\n";
    put_u32(bytes, static_cast<std::uint32_t>(manifest.size()));
    bytes.insert(bytes.end(), manifest.begin(), manifest.end());
    std::uint64_t count = 2;
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(count >> (8 * i)));
    for (int i = 0; i < 16; ++i) bytes.push_back(0);
    EXPECT_THROW(load_checkpoint(bytes), FormatError);
}

TEST(Ensemble, SingleModelIsIdentity) {
    const Model m = build_model(Arch::mlp, InputSpec::flat(2), 3, 4, 5);
    Rng rng(6);
    const Tensor x = random_tensor(rng, {4, 2}, 0, 1);
    const std::vector<Model> one{m};
    EXPECT_TRUE(same_bits(ensemble_logits(one, x).values(), m.forward(x).values()));
}

TEST(Ensemble, IsMeanOfLogits) {
    const std::vector<Model> ms{build_model(Arch::mlp, InputSpec::flat(2), 3, 1, 5),
                                build_model(Arch::mlp, InputSpec::flat(2), 3, 2, 5),
                                build_model(Arch::mlp, InputSpec::flat(2), 3, 3, 5)};
    Rng rng(7);
    const Tensor x = random_tensor(rng, {4, 2}, 0, 1);
    const Tensor out = ensemble_logits(ms, x);
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const double expect = (ms[0].forward(x)[i] + ms[1].forward(x)[i] + ms[2].forward(x)[i]) / 3.0;
        EXPECT_NEAR(out[i], expect, 1e-12);
    }
    EXPECT_THROW(ensemble_logits(std::span<const Model>{}, x), std::invalid_argument);
}

TEST(Ensemble, IdenticalMembersEqualOneMember) {
    const Model m = build_model(Arch::mlp, InputSpec::flat(2), 2, 9, 5);
    const std::vector<Model> ms{m, m};
    Rng rng(8);
    const Tensor x = random_tensor(rng, {3, 2}, 0, 1);
    const Tensor a = ensemble_logits(ms, x);
    const Tensor b = m.forward(x);
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
}
