#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>

#include "lbgat/data.hpp"
#include "lbgat/error.hpp"
#include "testing.hpp"

using namespace lbgat;
using lbgat::testing::TempDir;
using lbgat::testing::same_bits;

namespace {

// Independent IDX writer: big-endian header, raw byte payload.
void write_idx(const std::filesystem::path& path, std::uint32_t magic,
               const std::vector<std::uint32_t>& dims, const std::vector<std::uint8_t>& payload) {
    std::ofstream out(path, std::ios::binary);
    auto be = [&](std::uint32_t v) {
        const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                           static_cast<char>(v >> 8), static_cast<char>(v)};
        out.write(b, 4);
    };
    be(magic);
    for (auto d : dims) be(d);
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
}

// 4 images of 3x2 pixels; image k has first pixel 60*k and last pixel 255.
std::vector<std::uint8_t> fixture_pixels() {
    std::vector<std::uint8_t> px;
    for (std::uint8_t k = 0; k < 4; ++k) {
        for (std::uint8_t p = 0; p < 6; ++p) px.push_back(p == 0 ? 60 * k : (p == 5 ? 255 : 10 * p + k));
    }
    return px;
}

// Perceptron-style logistic probe trained by plain gradient descent.
double linear_probe_accuracy(const Dataset& d) {
    double w0 = 0, w1 = 0, b = 0;
    for (int it = 0; it < 2000; ++it) {
        double g0 = 0, g1 = 0, gb = 0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            const double z = w0 * d.inputs.at(i, 0) + w1 * d.inputs.at(i, 1) + b;
            const double p = 1.0 / (1.0 + std::exp(-z));
            const double e = p - static_cast<double>(d.labels[i]);
            g0 += e * d.inputs.at(i, 0);
            g1 += e * d.inputs.at(i, 1);
            gb += e;
        }
        w0 -= g0 / d.size();
        w1 -= g1 / d.size();
        b -= gb / d.size();
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double z = w0 * d.inputs.at(i, 0) + w1 * d.inputs.at(i, 1) + b;
        hits += (z > 0) == (d.labels[i] == 1);
    }
    return static_cast<double>(hits) / d.size();
}

}  // namespace

TEST(Synthetic, SameSeedSameData) {
    for (auto make : {make_moons, make_gaussians}) {
        const Dataset a = make(101, 0.1, 5, Split::train);
        const Dataset b = make(101, 0.1, 5, Split::train);
        EXPECT_TRUE(same_bits(a.inputs.values(), b.inputs.values()));
        EXPECT_EQ(a.labels, b.labels);
        const Dataset c = make(101, 0.1, 6, Split::train);
        EXPECT_FALSE(same_bits(a.inputs.values(), c.inputs.values()));
    }
}

TEST(Synthetic, BalancedAndInUnitSquare) {
    for (auto make : {make_moons, make_gaussians}) {
        for (std::size_t n : {2u, 7u, 100u, 999u}) {
            const Dataset d = make(n, 0.3, n, Split::test);
            EXPECT_NO_THROW(d.validate());
            EXPECT_EQ(d.split, Split::test);
            const auto ones = std::count(d.labels.begin(), d.labels.end(), 1u);
            const auto zeros = static_cast<std::ptrdiff_t>(n) - ones;
            EXPECT_LE(std::abs(ones - zeros), 1);
        }
    }
    EXPECT_THROW(make_moons(1, 0.1, 0), ConfigError);
    EXPECT_THROW(make_gaussians(10, -1.0, 0), ConfigError);
}

TEST(Synthetic, NoiselessGaussiansAreLinearlySeparable) {
    EXPECT_EQ(linear_probe_accuracy(make_gaussians(200, 0.0, 1)), 1.0);
}

TEST(Synthetic, MoonsAreNotLinearlySeparable) {
    EXPECT_LT(linear_probe_accuracy(make_moons(400, 0.0, 1)), 0.95);
}

TEST(Csv, RoundTrip) {
    TempDir dir("csv");
    const Dataset d = make_moons(50, 0.1, 3);
    write_csv(d, dir / "d.csv");
    const Dataset back = read_csv(dir / "d.csv");
    EXPECT_TRUE(same_bits(d.inputs.values(), back.inputs.values()));
    EXPECT_EQ(d.labels, back.labels);
}

TEST(Csv, MalformedRowNamesLine) {
    TempDir dir("csv-bad");
    std::ofstream(dir / "bad.csv") << "x0,x1,label\n0.1,0.2,1\n0.3;0.4,0\n";
    try {
        read_csv(dir / "bad.csv");
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
    }
    EXPECT_THROW(read_csv(dir / "missing.csv"), IoError);
}

TEST(Idx, FixtureMatchesManifest) {
    TempDir dir("idx");
    write_idx(dir / "img", kIdxImageMagic, {4, 3, 2}, fixture_pixels());
    write_idx(dir / "lab", kIdxLabelMagic, {4}, {3, 1, 4, 1});
    const Dataset d = load_idx(dir / "img", dir / "lab");
    EXPECT_EQ(d.inputs.shape(), (Shape{4, 6}));
    EXPECT_EQ(d.input, InputSpec::image(1, 3, 2));
    EXPECT_EQ(d.labels, (std::vector<std::size_t>{3, 1, 4, 1}));
    EXPECT_EQ(d.classes, 5u);
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_EQ(d.inputs.at(k, 0), 60.0 * k / 255.0);
        EXPECT_EQ(d.inputs.at(k, 5), 1.0);
    }
    EXPECT_NO_THROW(d.validate());
}

TEST(Idx, AllZeroImages) {
    TempDir dir("idx-zero");
    write_idx(dir / "img", kIdxImageMagic, {2, 2, 2}, std::vector<std::uint8_t>(8, 0));
    const auto img = load_idx_images(dir / "img");
    for (double v : img.pixels.values()) EXPECT_EQ(v, 0.0);
}

TEST(Idx, MalformedFilesAreRejected) {
    TempDir dir("idx-bad");
    write_idx(dir / "magic", 0x00000802, {1, 2, 2}, std::vector<std::uint8_t>(4, 1));
    EXPECT_THROW(load_idx_images(dir / "magic"), FormatError);
    write_idx(dir / "short", kIdxImageMagic, {2, 2, 2}, std::vector<std::uint8_t>(7, 1));
    EXPECT_THROW(load_idx_images(dir / "short"), FormatError);
    write_idx(dir / "long", kIdxImageMagic, {1, 2, 2}, std::vector<std::uint8_t>(5, 1));
    EXPECT_THROW(load_idx_images(dir / "long"), FormatError);
    write_idx(dir / "header", kIdxImageMagic, {1}, {});
    EXPECT_THROW(load_idx_images(dir / "header"), FormatError);
    write_idx(dir / "huge", kIdxImageMagic, {0xffffffffu, 0xffffffffu, 0xffffffffu}, {});
    EXPECT_THROW(load_idx_images(dir / "huge"), FormatError);
    write_idx(dir / "lab", kIdxLabelMagic, {3}, {0, 1, 2});
    write_idx(dir / "img", kIdxImageMagic, {2, 1, 1}, {0, 1});
    EXPECT_THROW(load_idx(dir / "img", dir / "lab"), FormatError);
    EXPECT_THROW(load_idx_images(dir / "absent"), IoError);
}

TEST(Augment, NoPaddingNoFlipIsIdentity) {
    Rng rng(1);
    const Tensor x = lbgat::testing::random_tensor(rng, {3, 2 * 5 * 4}, 0, 1);
    const auto in = InputSpec::image(2, 5, 4);
    EXPECT_TRUE(same_bits(augment(x, in, AugmentationSpec{0, false, 7}).values(), x.values()));
}

TEST(Augment, FlipIsAnInvolution) {
    Rng rng(2);
    const Tensor x = lbgat::testing::random_tensor(rng, {2, 5 * 4}, 0, 1);
    const auto in = InputSpec::image(1, 5, 4);
    const std::vector<CropDecision> flip(2, CropDecision{0, 0, true});
    const Tensor once = augment_with(x, in, 0, flip);
    EXPECT_FALSE(same_bits(once.values(), x.values()));
    EXPECT_TRUE(same_bits(augment_with(once, in, 0, flip).values(), x.values()));
    EXPECT_EQ(once[0], x[3]);
}

TEST(Augment, MarkedPixelTranslatesWithinPadding) {
    const std::size_t h = 12, w = 12, pad = 4, mr = 6, mc = 5;
    std::vector<double> img(h * w, 0.0);
    img[mr * w + mc] = 1.0;
    const Tensor x = Tensor::from({1, h * w}, img);
    const auto in = InputSpec::image(1, h, w);
    for (std::size_t top = 0; top <= 2 * pad; ++top) {
        for (std::size_t left = 0; left <= 2 * pad; ++left) {
            const std::vector<CropDecision> d{{top, left, false}};
            const Tensor out = augment_with(x, in, pad, d);
            const auto r = static_cast<std::ptrdiff_t>(mr) + static_cast<std::ptrdiff_t>(pad) - static_cast<std::ptrdiff_t>(top);
            const auto c = static_cast<std::ptrdiff_t>(mc) + static_cast<std::ptrdiff_t>(pad) - static_cast<std::ptrdiff_t>(left);
            double total = 0.0;
            for (double v : out.values()) total += v;
            EXPECT_EQ(total, 1.0);
            EXPECT_EQ(out[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)], 1.0);
            EXPECT_LE(std::abs(r - static_cast<std::ptrdiff_t>(mr)), 4);
            EXPECT_LE(std::abs(c - static_cast<std::ptrdiff_t>(mc)), 4);
        }
    }
}

TEST(Augment, RandomCropsKeepShapeAndRange) {
    Rng rng(3);
    const Tensor x = lbgat::testing::random_tensor(rng, {8, 3 * 8 * 8}, 0, 1);
    const auto in = InputSpec::image(3, 8, 8);
    const Tensor out = augment(x, in, AugmentationSpec{4, true, 11});
    EXPECT_EQ(out.shape(), x.shape());
    for (double v : out.values()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    EXPECT_TRUE(same_bits(out.values(), augment(x, in, AugmentationSpec{4, true, 11}).values()));
}

TEST(Augment, RejectsFlatData) {
    EXPECT_THROW(augment(Tensor::zeros({1, 2}), InputSpec::flat(2), AugmentationSpec{1, false, 0}), ConfigError);
}

TEST(Batches, CoverDatasetOnce) {
    const Dataset d = make_moons(103, 0.1, 4);
    const auto bs = batches(d, 10, 99);
    ASSERT_EQ(bs.size(), 11u);
    EXPECT_EQ(bs.back().y.size(), 3u);
    std::vector<std::size_t> seen, labels;
    for (const auto& b : bs) {
        for (std::size_t i = 0; i < b.indices.size(); ++i) {
            seen.push_back(b.indices[i]);
            labels.push_back(b.y[i]);
            EXPECT_EQ(b.x.at(i, 0), d.inputs.at(b.indices[i], 0));
        }
    }
    std::sort(seen.begin(), seen.end());
    for (std::size_t i = 0; i < seen.size(); ++i) EXPECT_EQ(seen[i], i);
    std::sort(labels.begin(), labels.end());
    auto expect = d.labels;
    std::sort(expect.begin(), expect.end());
    EXPECT_EQ(labels, expect);
}

TEST(Batches, SeedDeterminesOrder) {
    const Dataset d = make_moons(50, 0.1, 4);
    EXPECT_EQ(batches(d, 7, 1)[0].indices, batches(d, 7, 1)[0].indices);
    EXPECT_NE(batches(d, 7, 1)[0].indices, batches(d, 7, 2)[0].indices);
    const auto one = batches(d, 500, 3);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0].y.size(), 50u);
    Dataset empty;
    EXPECT_THROW(batches(empty, 4, 0), std::invalid_argument);
}
