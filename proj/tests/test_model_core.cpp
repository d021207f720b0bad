#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "resquant/errors.hpp"
#include "resquant/metrics.hpp"
#include "resquant/network.hpp"
#include "resquant/tensor.hpp"
#include "test_util.hpp"

using namespace resquant;

TEST_CASE("tensor construction validates shape and finiteness") {
    CHECK_NOTHROW(Tensor({2, 3}, std::vector<double>(6, 0.0)));
    CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5, 0.0)), InvalidInputError);
    CHECK_THROWS_AS(Tensor({0}, {}), InvalidInputError);
    CHECK_THROWS_AS(Tensor({1}, {std::nan("")}), InvalidInputError);
    CHECK_THROWS_AS(Tensor({1}, {1.0 / 0.0}), InvalidInputError);
}

TEST_CASE("identity dense with relu clips the negative lane") {
    Network net({DenseLayer{Tensor({2, 2}, {1, 0, 0, 1}), std::nullopt},
                 ActivationLayer{Activation::relu}},
                {2});
    const Tensor y = forward(net, Tensor({2}, {1.0, -1.0}));
    CHECK(y[0] == 1.0);
    CHECK(y[1] == 0.0);
}

TEST_CASE("empty network is the identity") {
    Network net({}, {3});
    const Tensor x({3}, {0.5, -2.0, 7.0});
    const Tensor y = forward(net, x);
    CHECK(max_abs_diff(x, y) == 0.0);
}

TEST_CASE("forward rejects a mismatched input shape") {
    Network net({DenseLayer{Tensor({2, 2}, {1, 0, 0, 1}), std::nullopt}}, {2});
    CHECK_THROWS_AS(forward(net, Tensor({3}, {1, 2, 3})), InvalidInputError);
}

TEST_CASE("random MLPs match the hand-rolled matmul oracle") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 gen(seed);
        const Network net = testutil::random_mlp({6, 9, 7, 4}, gen);
        const Tensor x = testutil::random_tensor({6}, gen);

        // Oracle path: explicit matmul + relu on raw vectors.
        std::vector<double> v = x.data();
        int dense_seen = 0;
        for (const Layer& layer : net.layers()) {
            if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
                v = testutil::matmul_oracle(dense->weights.data(), dense->weights.dim(0),
                                            dense->weights.dim(1), v,
                                            dense->bias ? dense->bias->data()
                                                        : std::vector<double>{});
                ++dense_seen;
            } else {
                for (double& e : v) e = e > 0 ? e : 0.0;
            }
        }
        REQUIRE(dense_seen == 3);

        const Tensor y = forward(net, x);
        REQUIRE(y.size() == v.size());
        for (std::size_t i = 0; i < v.size(); ++i)
            CHECK(std::fabs(y[i] - v[i]) <= 1e-12);
    }
}

TEST_CASE("forward is pure") {
    std::mt19937_64 gen(42);
    const Network net = testutil::random_mlp({5, 8, 3}, gen);
    const Tensor x = testutil::random_tensor({5}, gen);
    const Tensor a = forward(net, x);
    const Tensor b = forward(net, x);
    CHECK(max_abs_diff(a, b) == 0.0);
}

TEST_CASE("shape inference rejects non-composing layers") {
    CHECK_THROWS_AS(Network({DenseLayer{Tensor({2, 3}, std::vector<double>(6, 1.0)),
                             std::nullopt},
                             DenseLayer{Tensor({2, 3}, std::vector<double>(6, 1.0)),
                             std::nullopt}},
                            {3}),
                    StructureError);
    CHECK_THROWS_AS(Network({DenseLayer{Tensor({2, 3}, std::vector<double>(6, 1.0)),
                             Tensor({3}, {0, 0, 0})}},
                            {3}),
                    StructureError);
    // conv kernel must be square
    CHECK_THROWS_AS(Network({Conv2dLayer{Tensor({1, 1, 2, 3}, std::vector<double>(6, 1.0)),
                                         std::nullopt, 1, Padding::same}},
                            {1, 4, 4}),
                    StructureError);
}

TEST_CASE("conv2d matches a hand-computed 'valid' case") {
    // 1x1 channel, 3x3 input, 2x2 kernel of ones: outputs are window sums.
    Conv2dLayer conv{Tensor({1, 1, 2, 2}, {1, 1, 1, 1}), std::nullopt, 1, Padding::valid};
    Network net({conv}, {1, 3, 3});
    const Tensor x({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    const Tensor y = forward(net, x);
    REQUIRE(y.shape() == std::vector<std::size_t>{1, 2, 2});
    CHECK(y[0] == 12.0); // 1+2+4+5
    CHECK(y[1] == 16.0);
    CHECK(y[2] == 24.0);
    CHECK(y[3] == 28.0);
}

TEST_CASE("conv2d same padding keeps the spatial extent at stride 1") {
    std::mt19937_64 gen(7);
    Conv2dLayer conv{testutil::random_tensor({3, 2, 3, 3}, gen), std::nullopt, 1, Padding::same};
    Network net({conv}, {2, 5, 5});
    CHECK(net.output_shape() == std::vector<std::size_t>{3, 5, 5});
    // stride 2 halves it, rounding up
    Conv2dLayer strided{testutil::random_tensor({3, 2, 3, 3}, gen), std::nullopt, 2,
                        Padding::same};
    Network net2({strided}, {2, 5, 5});
    CHECK(net2.output_shape() == std::vector<std::size_t>{3, 3, 3});
}

TEST_CASE("identity batch-norm folding leaves the network unchanged") {
    DenseLayer dense{Tensor({2, 2}, {1.5, -0.5, 2.0, 0.25}), Tensor({2}, {0.1, -0.2})};
    BatchNormLayer bn{Tensor({2}, {1, 1}), Tensor({2}, {0, 0}), Tensor({2}, {0, 0}),
                      Tensor({2}, {1, 1}), 0.0};
    Network net({dense, bn}, {2});
    const Network folded = fold_batch_norm(net);
    REQUIRE(folded.layers().size() == 1);
    const auto& out = std::get<DenseLayer>(folded.layers()[0]);
    CHECK(max_abs_diff(out.weights, dense.weights) == 0.0);
    CHECK(max_abs_diff(*out.bias, *dense.bias) == 0.0);
}

TEST_CASE("batch-norm folding follows the per-channel affine arithmetic") {
    // W=[[2]], b=[0], gamma=3, beta=1, mean=0, var=1, eps=0 -> W'=[[6]], b'=[1]
    DenseLayer dense{Tensor({1, 1}, {2.0}), Tensor({1}, {0.0})};
    BatchNormLayer bn{Tensor({1}, {3.0}), Tensor({1}, {1.0}), Tensor({1}, {0.0}),
                      Tensor({1}, {1.0}), 0.0};
    Network net({dense, bn}, {1});
    const Network folded = fold_batch_norm(net);
    const auto& out = std::get<DenseLayer>(folded.layers()[0]);
    CHECK(out.weights[0] == doctest::Approx(6.0).epsilon(1e-15));
    CHECK((*out.bias)[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("folding a random conv+bn network preserves the forward pass") {
    std::mt19937_64 gen(11);
    for (int trial = 0; trial < 4; ++trial) {
        Conv2dLayer conv{testutil::random_tensor({4, 2, 3, 3}, gen),
                         testutil::random_tensor({4}, gen), 1, Padding::same};
        BatchNormLayer bn{testutil::random_tensor({4}, gen, 0.5, 2.0),
                          testutil::random_tensor({4}, gen),
                          testutil::random_tensor({4}, gen),
                          testutil::random_tensor({4}, gen, 0.1, 2.0), 1e-5};
        DenseLayer dense{testutil::random_tensor({3, 4 * 6 * 6}, gen), std::nullopt};
        Network net({conv, bn, ActivationLayer{Activation::relu}}, {2, 6, 6});
        const Network folded = fold_batch_norm(net);
        for (const Layer& layer : folded.layers())
            CHECK(!std::holds_alternative<BatchNormLayer>(layer));

        for (int i = 0; i < 20; ++i) {
            const Tensor x = testutil::random_tensor({2, 6, 6}, gen);
            const Tensor a = forward(net, x);
            const Tensor b = forward(folded, x);
            const double scale = std::max(1.0, max_abs(a));
            CHECK(max_abs_diff(a, b) / scale <= 1e-9);
        }
    }
}

TEST_CASE("batch-norm without a foldable predecessor is a structural error") {
    BatchNormLayer bn{Tensor({2}, {1, 1}), Tensor({2}, {0, 0}), Tensor({2}, {0, 0}),
                      Tensor({2}, {1, 1}), 1e-5};
    Network first({bn}, {2});
    CHECK_THROWS_AS(fold_batch_norm(first), StructureError);

    Network after_act({ActivationLayer{Activation::relu}, bn}, {2});
    CHECK_THROWS_AS(fold_batch_norm(after_act), StructureError);
}

TEST_CASE("logits_max_error basics") {
    std::mt19937_64 gen(3);
    const Network f = testutil::random_mlp({4, 6, 3}, gen);

    std::vector<Tensor> xs;
    for (int i = 0; i < 10; ++i) xs.push_back(testutil::random_tensor({4}, gen));

    CHECK(logits_max_error(f, f, xs) == 0.0);

    // Shift one output bias by +0.2: the max error is exactly 0.2.
    std::vector<Layer> layers = f.layers();
    auto& last = std::get<DenseLayer>(layers.back());
    std::vector<double> bias = last.bias->data();
    bias[1] += 0.2;
    last.bias = Tensor({bias.size()}, bias);
    const Network g(std::move(layers), f.input_shape());
    CHECK(logits_max_error(f, g, xs) == doctest::Approx(0.2).epsilon(1e-12));

    CHECK_THROWS_AS(logits_max_error(f, g, {}), InvalidInputError);
}

TEST_CASE("gelu and sigmoid evaluate to their closed forms") {
    Network net({ActivationLayer{Activation::sigmoid}}, {1});
    CHECK(forward(net, Tensor({1}, {0.0}))[0] == doctest::Approx(0.5));
    Network net2({ActivationLayer{Activation::gelu}}, {1});
    CHECK(forward(net2, Tensor({1}, {0.0}))[0] == doctest::Approx(0.0));
    // gelu(1) = 0.5 * (1 + erf(1/sqrt(2))) = 0.841344746...
    CHECK(forward(net2, Tensor({1}, {1.0}))[0] == doctest::Approx(0.8413447460685429));
}
