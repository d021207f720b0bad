#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "resquant/bounds.hpp"
#include "resquant/ensemble.hpp"
#include "resquant/errors.hpp"
#include "resquant/metrics.hpp"
#include "test_util.hpp"

using namespace resquant;

namespace {

Network positive_two_layer(std::mt19937_64& gen) {
    // Dominant-entry rows keep every residual order nonnegative at b=2, so
    // with nonnegative biases and inputs each member path stays in the
    // linear region of relu.
    DenseLayer l1{testutil::positive_dominant_tensor(6, 4, gen),
                  testutil::random_tensor({6}, gen, 0.0, 0.5)};
    DenseLayer l2{testutil::positive_dominant_tensor(3, 6, gen),
                  testutil::random_tensor({3}, gen, 0.0, 0.5)};
    return Network({l1, ActivationLayer{Activation::relu}, l2}, {4});
}

} // namespace

TEST_CASE("grouping validation") {
    CHECK_THROWS_AS(validate_grouping(Grouping{{}}, 4), InvalidInputError);
    CHECK_THROWS_AS(validate_grouping(Grouping{{2, 0, 2}}, 4), InvalidInputError);
    CHECK_THROWS_AS(validate_grouping(Grouping{{2, 3}}, 4), InvalidInputError);
    CHECK_NOTHROW(validate_grouping(Grouping{{2, 2}}, 4));
    CHECK(Grouping{{2, 2}}.cluster_range(1) == std::pair<int, int>{3, 4});
}

TEST_CASE("single-cluster grouping reproduces the expanded forward exactly") {
    std::mt19937_64 gen(21);
    const Network net = testutil::random_mlp({5, 7, 6, 3}, gen);
    const NetworkExpansion nexp = expand_network(net, QuantConfig{4, 0}, 3, 1.0, 4);
    const Network expanded = expanded_network(net, nexp);
    const EnsembleNetwork ens = build_ensemble(net, nexp, Grouping{{3}});
    REQUIRE(ens.members.size() == 1);
    for (int i = 0; i < 20; ++i) {
        const Tensor x = testutil::random_tensor({5}, gen);
        CHECK(max_abs_diff(ensemble_forward(ens, x), forward(expanded, x)) == 0.0);
    }
}

TEST_CASE("identity-activation ensembles match the expansion for any grouping") {
    std::mt19937_64 gen(22);
    const Network net = testutil::random_mlp({5, 8, 4}, gen, true, Activation::identity);
    const NetworkExpansion nexp = expand_network(net, QuantConfig{2, 0}, 4, 1.0, 5);
    const Network expanded = expanded_network(net, nexp);
    for (const auto& sizes :
         {std::vector<int>{4}, {3, 1}, {2, 2}, {1, 3}, {2, 1, 1}, {1, 1, 1, 1}}) {
        const EnsembleNetwork ens = build_ensemble(net, nexp, Grouping{sizes});
        for (int i = 0; i < 10; ++i) {
            const Tensor x = testutil::random_tensor({5}, gen);
            CHECK(max_abs_diff(ensemble_forward(ens, x), forward(expanded, x)) <= 1e-9);
        }
    }
}

TEST_CASE("all-positive relu networks split exactly") {
    std::mt19937_64 gen(23);
    const Network net = positive_two_layer(gen);
    const NetworkExpansion nexp = expand_network(net, QuantConfig{2, 0}, 2, 1.0, 3);
    const Network expanded = expanded_network(net, nexp);
    // Both residual orders are nonnegative, so no member path clips.
    for (const auto& entry : nexp.entries)
        for (const ExpansionOrder& order : entry.expansion.orders)
            for (double v : order.term.data()) REQUIRE(v >= 0.0);
    const EnsembleNetwork ens = build_ensemble(net, nexp, Grouping{{1, 1}});
    for (int i = 0; i < 50; ++i) {
        const Tensor x = testutil::random_tensor({4}, gen, 0.0, 1.0);
        CHECK(max_abs_diff(ensemble_forward(ens, x), forward(expanded, x)) <= 1e-12);
    }
}

TEST_CASE("members share the architecture and only member 1 keeps biases") {
    std::mt19937_64 gen(24);
    const Network net = testutil::random_mlp({6, 9, 4}, gen);
    const NetworkExpansion nexp = expand_network(net, QuantConfig{4, 0}, 4, 1.0, 5);
    const EnsembleNetwork ens = build_ensemble(net, nexp, Grouping{{2, 2}});
    REQUIRE(ens.members.size() == 2);
    for (const Network& member : ens.members) {
        CHECK(member.input_shape() == net.input_shape());
        CHECK(member.output_shape() == net.output_shape());
        CHECK(member.layers().size() == net.layers().size());
    }
    CHECK(std::get<DenseLayer>(ens.members[0].layers()[0]).bias.has_value());
    CHECK(!std::get<DenseLayer>(ens.members[1].layers()[0]).bias.has_value());
    CHECK(!std::get<DenseLayer>(ens.members[1].layers()[2]).bias.has_value());
}

TEST_CASE("hidden-layer weights partition the expansion across members") {
    std::mt19937_64 gen(25);
    const Network net = testutil::random_mlp({6, 9, 4}, gen);
    const NetworkExpansion nexp = expand_network(net, QuantConfig{4, 0}, 4, 1.0, 5);
    const EnsembleNetwork ens = build_ensemble(net, nexp, Grouping{{2, 2}});

    // First (hidden) weighted layer: member weights sum to the full expansion.
    Tensor member_sum = std::get<DenseLayer>(ens.members[0].layers()[0]).weights;
    member_sum = add(member_sum, std::get<DenseLayer>(ens.members[1].layers()[0]).weights);
    const Tensor full = reconstructed(nexp.entries[0].expansion, 4);
    CHECK(max_abs_diff(member_sum, full) <= 1e-12);

    // Output layer: every member carries the full expansion.
    const Tensor last_full = reconstructed(nexp.entries[1].expansion, 4);
    for (const Network& member : ens.members) {
        CHECK(max_abs_diff(std::get<DenseLayer>(member.layers()[2]).weights, last_full) ==
              0.0);
    }
}

TEST_CASE("a zero member contributes nothing") {
    std::mt19937_64 gen(26);
    const Network net = testutil::random_mlp({4, 4, 2}, gen);
    const NetworkExpansion nexp = expand_network(net, QuantConfig{8, 0}, 2, 1.0, 3);
    EnsembleNetwork ens = build_ensemble(net, nexp, Grouping{{1, 1}});

    // Zero out member 2 entirely.
    std::vector<Layer> zeroed = ens.members[1].layers();
    for (Layer& layer : zeroed) {
        if (auto* dense = std::get_if<DenseLayer>(&layer))
            dense->weights = Tensor::zeros(dense->weights.shape());
    }
    ens.members[1] = Network(std::move(zeroed), net.input_shape());

    for (int i = 0; i < 10; ++i) {
        const Tensor x = testutil::random_tensor({4}, gen);
        CHECK(max_abs_diff(ensemble_forward(ens, x), forward(ens.members[0], x)) == 0.0);
    }
}

TEST_CASE("grouping mismatch and bad activations are rejected") {
    std::mt19937_64 gen(27);
    const Network net = testutil::random_mlp({4, 4, 2}, gen);
    const NetworkExpansion nexp = expand_network(net, QuantConfig{8, 0}, 2, 1.0, 3);
    CHECK_THROWS_AS(build_ensemble(net, nexp, Grouping{{3}}), InvalidInputError);

    const Network gelu_net = testutil::random_mlp({4, 4, 2}, gen, true, Activation::gelu);
    const NetworkExpansion gelu_exp = expand_network(gelu_net, QuantConfig{8, 0}, 2, 1.0, 3);
    CHECK_THROWS_AS(build_ensemble(gelu_net, gelu_exp, Grouping{{1, 1}}), InvalidInputError);
}

TEST_CASE("measured ensemble gap stays under the certified ensemble bound") {
    for (std::uint64_t seed = 100; seed < 104; ++seed) {
        std::mt19937_64 gen(seed);
        const Network net = testutil::random_mlp({6, 12, 5}, gen);
        const NetworkExpansion nexp = expand_network(net, QuantConfig{4, 0}, 4, 1.0, 5);
        const Network expanded = expanded_network(net, nexp);
        const Grouping grouping{{2, 2}};
        const EnsembleNetwork ens = build_ensemble(net, nexp, grouping);
        const double u = ensemble_bound(net, nexp, grouping).U;

        double gap = 0.0;
        for (int i = 0; i < 200; ++i) {
            const Tensor x = testutil::unit_vector(6, gen);
            gap = std::max(gap,
                           max_abs_diff(ensemble_forward(ens, x), forward(expanded, x)));
        }
        CHECK(gap <= u);
    }
}

TEST_CASE("select_grouping prefers the balanced split once the bound is tiny") {
    std::mt19937_64 gen(28);
    const Network net = testutil::random_mlp({6, 10, 4}, gen);
    const NetworkExpansion nexp = expand_network(net, QuantConfig{8, 0}, 4, 1.0, 5);
    const std::vector<Grouping> candidates{Grouping{{4}}, Grouping{{2, 2}}};

    // At b=8 the tail residues are minuscule, so [2,2] qualifies easily.
    const double logit_norm = 10.0;
    const Grouping picked = select_grouping(net, nexp, candidates, logit_norm, 0.1);
    CHECK(picked.sizes == std::vector<int>{2, 2});

    // threshold 0 only ever accepts a zero bound: the no-split grouping.
    const Grouping strict = select_grouping(net, nexp, candidates, logit_norm, 0.0);
    CHECK(strict.sizes == std::vector<int>{4});
}

TEST_CASE("select_grouping falls back to no-split when nothing qualifies") {
    std::mt19937_64 gen(29);
    const Network net = testutil::random_mlp({6, 10, 4}, gen);
    const NetworkExpansion nexp = expand_network(net, QuantConfig{2, 0}, 4, 1.0, 5);
    // Only split candidates, and a hopelessly small logit norm.
    const std::vector<Grouping> candidates{Grouping{{2, 2}}, Grouping{{3, 1}}};
    const Grouping picked = select_grouping(net, nexp, candidates, 1e-9, 0.1);
    CHECK(picked.sizes == std::vector<int>{4});
}

TEST_CASE("logit norm estimates") {
    std::mt19937_64 gen(30);
    const Network net = testutil::random_mlp({4, 6, 3}, gen);
    CHECK(!logit_norm_from_batch_norm(net).has_value());

    // Append a trailing batch-norm: the estimate is sqrt(sum(beta^2+gamma^2)).
    std::vector<Layer> layers = net.layers();
    layers.push_back(BatchNormLayer{Tensor({3}, {1.0, 2.0, 0.5}), Tensor({3}, {0.5, 0.0, 1.0}),
                                    Tensor({3}, {0, 0, 0}), Tensor({3}, {1, 1, 1}), 1e-5});
    const Network with_bn(std::move(layers), net.input_shape());
    const auto estimate = logit_norm_from_batch_norm(with_bn);
    REQUIRE(estimate.has_value());
    CHECK(*estimate == doctest::Approx(std::sqrt(1.0 + 4.0 + 0.25 + 0.25 + 0.0 + 1.0)));

    std::vector<Tensor> xs;
    for (int i = 0; i < 8; ++i) xs.push_back(testutil::random_tensor({4}, gen));
    CHECK(mean_logit_norm(net, xs) > 0.0);
    CHECK_THROWS_AS(mean_logit_norm(net, {}), InvalidInputError);
}
