#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "lbgat/error.hpp"
#include "lbgat/tensor.hpp"
#include "oracles.hpp"

using namespace lbgat;
using lbgat::testing::max_relative_error;
using lbgat::testing::numeric_gradient;
using lbgat::testing::op_cases;
using lbgat::testing::op_gradient_error;
using lbgat::testing::random_tensor;

namespace {

std::vector<double> to_vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST(Tensor, ReluExample) {
    const Tensor out = relu(Tensor::from({3}, {-1.0, 0.0, 2.0}));
    EXPECT_EQ(to_vec(out), (std::vector<double>{0.0, 0.0, 2.0}));
}

TEST(Tensor, MatmulExample) {
    const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    const Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
    EXPECT_EQ(to_vec(matmul(a, b)), (std::vector<double>{19, 22, 43, 50}));
}

TEST(Tensor, SquareGradient) {
    Tensor x = Tensor::scalar(3.0).set_requires_grad();
    backward(mul(x, x));
    ASSERT_TRUE(x.has_grad());
    EXPECT_EQ(x.grad()[0], 6.0);
}

TEST(Tensor, SumGradientIsOnes) {
    Tensor x = Tensor::from({2, 3}, {1, -2, 3, 4, 5, -6}).set_requires_grad();
    backward(sum(x));
    for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Tensor, SoftmaxExample) {
    const Tensor p = softmax(Tensor::from({1, 3}, {1, 2, 3}));
    EXPECT_NEAR(p[0], 0.09003057317038046, 1e-12);
    EXPECT_NEAR(p[1], 0.24472847105479764, 1e-12);
    EXPECT_NEAR(p[2], 0.6652409557748219, 1e-12);
}

TEST(Tensor, SoftmaxLargeLogitsStayFinite) {
    const Tensor logits = Tensor::from({2, 3}, {1000, 999, -1000, -1e4, 0, 1e4});
    const Tensor p = softmax(logits);
    const Tensor lp = log_softmax(logits);
    for (std::size_t i = 0; i < p.numel(); ++i) {
        EXPECT_TRUE(std::isfinite(p[i]));
        EXPECT_TRUE(std::isfinite(lp[i]));
    }
    EXPECT_NEAR(p[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
    EXPECT_EQ(lp[5], 0.0);
}

TEST(Tensor, SoftmaxRowsSumToOne) {
    Rng rng(5);
    const Tensor p = softmax(random_tensor(rng, {6, 5}, -20, 20));
    for (std::size_t r = 0; r < 6; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 5; ++c) s += p.at(r, c);
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Tensor, MaxAxisTiesPickLowestIndex) {
    Tensor a = Tensor::from({1, 3}, {2.0, 2.0, 1.0}).set_requires_grad();
    backward(sum(max_axis(a)));
    EXPECT_EQ(to_vec(a.detach().reshape({3})), (std::vector<double>{2, 2, 1}));
    EXPECT_EQ(a.grad()[0], 1.0);
    EXPECT_EQ(a.grad()[1], 0.0);
}

TEST(Tensor, ConvMatchesDirectSum) {
    Rng rng(11);
    const Tensor x = random_tensor(rng, {1, 2, 5, 5});
    const Tensor w = random_tensor(rng, {3, 2, 3, 3});
    const Tensor b = random_tensor(rng, {3});
    const Tensor out = conv2d(x, w, b, 2);
    ASSERT_EQ(out.shape(), (Shape{1, 3, 2, 2}));
    for (std::size_t o = 0; o < 3; ++o) {
        for (std::size_t i = 0; i < 2; ++i) {
            for (std::size_t j = 0; j < 2; ++j) {
                double s = b[o];
                for (std::size_t c = 0; c < 2; ++c) {
                    for (std::size_t u = 0; u < 3; ++u) {
                        for (std::size_t v = 0; v < 3; ++v) {
                            s += x[(c * 5 + 2 * i + u) * 5 + 2 * j + v] * w[((o * 2 + c) * 3 + u) * 3 + v];
                        }
                    }
                }
                EXPECT_NEAR(out[(o * 2 + i) * 2 + j], s, 1e-12);
            }
        }
    }
}

// Every differentiable op against central differences at 20 random points.
TEST(Tensor, GradientsMatchFiniteDifferences) {
    for (const auto& c : op_cases()) {
        for (std::uint64_t trial = 0; trial < 20; ++trial) {
            EXPECT_LT(op_gradient_error(c, trial), 1e-4) << c.name << " trial " << trial;
        }
    }
}

TEST(Tensor, GradientsAccumulateUntilZeroed) {
    Tensor x = Tensor::from({2}, {1.0, 2.0}).set_requires_grad();
    backward(sum(square(x)));
    backward(sum(square(x)));
    EXPECT_EQ(x.grad()[0], 4.0);
    EXPECT_EQ(x.grad()[1], 8.0);
    x.zero_grad();
    backward(sum(x));
    EXPECT_EQ(x.grad()[0], 1.0);
}

TEST(Tensor, GradientAdditivityOverSharedInput) {
    Rng rng(3);
    Tensor x = random_tensor(rng, {4}).set_requires_grad();
    backward(add(sum(square(x)), sum(scale(x, 3.0))));
    const std::vector<double> joint = to_vec(Tensor::from({4}, {x.grad().begin(), x.grad().end()}));
    x.zero_grad();
    backward(sum(square(x)));
    backward(sum(scale(x, 3.0)));
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(joint[i], x.grad()[i], 1e-15);
}

TEST(Tensor, OpsDoNotMutateInputs) {
    Rng rng(8);
    Tensor a = random_tensor(rng, {3, 3});
    Tensor b = random_tensor(rng, {3, 3});
    const auto a0 = to_vec(a), b0 = to_vec(b);
    (void)matmul(a, b);
    (void)softmax(a);
    (void)clamp(b, 0, 0.1);
    (void)relu(a);
    EXPECT_EQ(to_vec(a), a0);
    EXPECT_EQ(to_vec(b), b0);
}

TEST(Tensor, DetachCutsTheGraph) {
    Tensor x = Tensor::from({2}, {1.0, 2.0}).set_requires_grad();
    const Tensor y = square(x).detach();
    EXPECT_FALSE(y.tracked());
    Tensor z = Tensor::from({2}, {1.0, 1.0}).set_requires_grad();
    backward(sum(mul(y, z)));
    EXPECT_FALSE(x.has_grad());
    EXPECT_EQ(z.grad()[1], 4.0);
}

TEST(Tensor, TapeVisitsEachNodeOnceLossFirst) {
    Tensor x = Tensor::from({2}, {1.0, 2.0}).set_requires_grad();
    const Tensor h = square(x);
    const Tensor loss = sum(add(h, h));
    GradTape tape(loss);
    ASSERT_FALSE(tape.order().empty());
    EXPECT_EQ(tape.order().front(), loss.node().get());
    std::set<detail::Node*> seen(tape.order().begin(), tape.order().end());
    EXPECT_EQ(seen.size(), tape.size());
    tape.replay();
    EXPECT_EQ(x.grad()[1], 8.0);
}

TEST(Tensor, ShapeErrors) {
    const Tensor a = Tensor::zeros({2, 3});
    EXPECT_THROW(add(a, Tensor::zeros({3, 2})), ShapeError);
    EXPECT_THROW(matmul(a, a), ShapeError);
    EXPECT_THROW(add_rowwise(a, Tensor::zeros({2})), ShapeError);
    EXPECT_THROW(a.reshape({4}), ShapeError);
    EXPECT_THROW(gather(a, std::vector<std::size_t>{0}), ShapeError);
    EXPECT_THROW(Tensor::from({2}, {1.0}), ShapeError);
}

TEST(Tensor, BackwardRejectsNonScalarAndUntracked) {
    Tensor x = Tensor::from({2}, {1.0, 2.0}).set_requires_grad();
    EXPECT_THROW(backward(square(x)), std::invalid_argument);
    EXPECT_THROW(backward(Tensor::scalar(1.0)), std::invalid_argument);
}

TEST(Tensor, LogOfNonPositiveIsNotSilent) {
    const Tensor out = log(Tensor::from({2}, {0.0, -1.0}));
    EXPECT_FALSE(std::isfinite(out[0]));
    EXPECT_TRUE(std::isnan(out[1]));
}
