#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "resquant/errors.hpp"
#include "resquant/spectral.hpp"
#include "test_util.hpp"

using namespace resquant;

TEST_CASE("identity and diagonal matrices") {
    CHECK(spectral_norm(Tensor({2, 2}, {1, 0, 0, 1})) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(spectral_norm(Tensor({2, 2}, {3, 0, 0, 1})) == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(spectral_norm(Tensor({1, 1}, {-4.0})) == doctest::Approx(4.0).epsilon(1e-9));
    CHECK(spectral_norm(Tensor({2, 3}, std::vector<double>(6, 0.0))) == 0.0);
}

TEST_CASE("random matrices match the Jacobi SVD oracle") {
    std::mt19937_64 gen(19);
    for (int trial = 0; trial < 12; ++trial) {
        std::uniform_int_distribution<std::size_t> dim(1, 64);
        const std::size_t rows = dim(gen);
        const std::size_t cols = dim(gen);
        const Tensor w = testutil::random_tensor({rows, cols}, gen);
        const double expected = testutil::svd_largest_oracle(w.data(), rows, cols);
        const double got = spectral_norm(w, 1e-12, 5000);
        CHECK(std::fabs(got - expected) <= 1e-6 * std::max(1.0, expected));
    }
}

TEST_CASE("spectral norm of an 8x5 matrix against the SVD oracle") {
    std::mt19937_64 gen(101);
    const Tensor w = testutil::random_tensor({8, 5}, gen);
    const double expected = testutil::svd_largest_oracle(w.data(), 8, 5);
    CHECK(spectral_norm(w) == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("spectral norm dominates the gain on any probe vector") {
    std::mt19937_64 gen(23);
    const Tensor w = testutil::random_tensor({16, 12}, gen);
    const double s = spectral_norm(w);
    for (int i = 0; i < 50; ++i) {
        const Tensor v = testutil::unit_vector(12, gen);
        std::vector<double> wv = testutil::matmul_oracle(w.data(), 16, 12, v.data(), {});
        double norm = 0.0;
        for (double x : wv) norm += x * x;
        CHECK(std::sqrt(norm) <= s + 1e-9);
    }
}

TEST_CASE("non-convergence raises an error carrying the last iterate") {
    std::mt19937_64 gen(5);
    const Tensor w = testutil::random_tensor({32, 32}, gen);
    try {
        spectral_norm(w, 1e-16, 1);
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        CHECK(e.last_estimate >= 0.0);
    }
}

TEST_CASE("conv kernels flatten to [out, in*k*k]") {
    std::mt19937_64 gen(6);
    const Tensor kernel = testutil::random_tensor({4, 3, 2, 2}, gen);
    const Tensor flat = as_matrix(kernel);
    REQUIRE(flat.shape() == std::vector<std::size_t>{4, 12});
    const double expected = testutil::svd_largest_oracle(flat.data(), 4, 12);
    Layer conv = Conv2dLayer{kernel, std::nullopt, 1, Padding::same};
    CHECK(layer_spectral_norm(conv) == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("input validation") {
    CHECK_THROWS_AS(spectral_norm(Tensor({2, 2}, {1, 0, 0, 1}), 0.0), InvalidInputError);
    CHECK_THROWS_AS(spectral_norm(Tensor({4}, {1, 2, 3, 4})), InvalidInputError);
}
