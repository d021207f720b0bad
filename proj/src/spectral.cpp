#include "resquant/spectral.hpp"

#include <cmath>
#include <random>

#include "resquant/errors.hpp"

namespace resquant {

Tensor as_matrix(const Tensor& weights) {
    if (weights.rank() == 2) return weights;
    if (weights.rank() == 4) {
        const std::size_t out = weights.dim(0);
        return Tensor({out, weights.size() / out}, weights.data());
    }
    if (weights.rank() == 1) return Tensor({1, weights.size()}, weights.data());
    throw InvalidInputError("cannot flatten rank-" + std::to_string(weights.rank()) +
                            " tensor to a matrix");
}

double spectral_norm(const Tensor& w, double tol, int max_iter) {
    if (w.rank() != 2) throw InvalidInputError("spectral_norm expects a 2-D tensor");
    if (w.size() == 0) throw InvalidInputError("spectral_norm expects a non-empty tensor");
    if (tol <= 0.0) throw InvalidInputError("spectral_norm tolerance must be positive");

    const std::size_t rows = w.dim(0);
    const std::size_t cols = w.dim(1);
    const auto& a = w.data();

    // Deterministic start vector; reseeded on the rare stall in a null space.
    std::vector<double> v(cols);
    std::vector<double> u(rows);
    std::uint64_t seed = 0x9e3779b97f4a7c15ull ^ (rows * 1315423911u + cols);

    auto reseed = [&]() {
        std::mt19937_64 gen(seed++);
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        double norm = 0.0;
        for (double& x : v) {
            x = dist(gen);
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
    };
    reseed();

    double estimate = 0.0;
    int restarts = 0;
    for (int iter = 0; iter < max_iter; ++iter) {
        // u = W v
        for (std::size_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            const double* row = a.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) acc += row[c] * v[c];
            u[r] = acc;
        }
        double sigma = 0.0;
        for (double x : u) sigma += x * x;
        sigma = std::sqrt(sigma);

        if (sigma == 0.0) {
            // v sits in the null space; a couple of fresh starts distinguish
            // a zero matrix from bad luck.
            if (++restarts > 3) return 0.0;
            reseed();
            continue;
        }

        // v = W^T u / ||W^T u||
        for (double& x : v) x = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            const double* row = a.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) v[c] += row[c] * u[r];
        }
        double vnorm = 0.0;
        for (double x : v) vnorm += x * x;
        vnorm = std::sqrt(vnorm);
        if (vnorm == 0.0) return 0.0;
        for (double& x : v) x /= vnorm;

        if (iter > 0 && std::fabs(sigma - estimate) <= tol * std::max(sigma, 1e-300)) {
            return sigma;
        }
        estimate = sigma;
    }
    throw ConvergenceError("spectral_norm did not converge within " +
                               std::to_string(max_iter) + " iterations",
                           estimate);
}

double layer_spectral_norm(const Layer& layer, double tol, int max_iter) {
    if (const auto* dense = std::get_if<DenseLayer>(&layer))
        return spectral_norm(as_matrix(dense->weights), tol, max_iter);
    if (const auto* conv = std::get_if<Conv2dLayer>(&layer))
        return spectral_norm(as_matrix(conv->weights), tol, max_iter);
    throw InvalidInputError("layer_spectral_norm expects a dense or conv layer");
}

} // namespace resquant
