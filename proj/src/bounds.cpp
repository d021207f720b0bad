#include "resquant/bounds.hpp"

#include <cmath>
#include <string>

#include "resquant/errors.hpp"
#include "resquant/spectral.hpp"

namespace resquant {

const char* bound_kind_name(BoundReport::Kind kind) {
    switch (kind) {
        case BoundReport::Kind::dense: return "dense";
        case BoundReport::Kind::sparse: return "sparse";
        case BoundReport::Kind::ensemble: return "ensemble";
        case BoundReport::Kind::main_text: return "main_text";
    }
    return "unknown";
}

namespace {

double contraction(int bits) { return 1.0 / (std::pow(2.0, bits - 1) - 1.0); }

void check_order(const LayerExpansion& exp, int order) {
    if (order < 1) throw InvalidInputError("bound order must be >= 1");
    if (order > exp.order())
        throw InvalidInputError("bound order " + std::to_string(order) +
                                " exceeds the expansion order " + std::to_string(exp.order()));
}

void check_bound_network(const Network& net) {
    for (const Layer& layer : net.layers()) {
        if (std::holds_alternative<BatchNormLayer>(layer))
            throw InvalidInputError("bounds require a folded network (no batch-norm layers)");
        if (const auto* act = std::get_if<ActivationLayer>(&layer)) {
            if (act->kind != Activation::relu && act->kind != Activation::identity)
                throw InvalidInputError("bounds cover relu/identity activations only");
        }
    }
}

double max_of(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, x);
    return m;
}

// prod_l (sum_{i<=l} term_i + 1) - 1
double chained_product(const std::vector<double>& layer_terms) {
    double product = 1.0;
    double running = 0.0;
    for (double t : layer_terms) {
        running += t;
        product *= running + 1.0;
    }
    return product - 1.0;
}

// Certified operator-norm upper bound, ||A||_2^2 <= ||A||_1 * ||A||_inf.
// Iteration-free and monotone under entrywise shrinkage.
double schur_norm_2d(const double* data, std::size_t rows, std::size_t cols) {
    std::vector<double> col_sums(cols, 0.0);
    double max_row = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        double row_sum = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double a = std::fabs(data[r * cols + c]);
            row_sum += a;
            col_sums[c] += a;
        }
        max_row = std::max(max_row, row_sum);
    }
    double max_col = 0.0;
    for (double s : col_sums) max_col = std::max(max_col, s);
    return std::sqrt(max_row * max_col);
}

// Certified upper bound on the operator norm of a weight error tensor.
// Dense: Schur bound on the matrix. Conv: the convolution decomposes into
// one channel-mixing map per kernel tap composed with a shift (norm <= 1
// under zero padding), so the tap norms sum.
double operator_norm_upper(const Tensor& m) {
    if (m.rank() == 4) {
        const std::size_t out = m.dim(0);
        const std::size_t in = m.dim(1);
        const std::size_t k = m.dim(2);
        double total = 0.0;
        std::vector<double> slice(out * in);
        for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
                for (std::size_t o = 0; o < out; ++o)
                    for (std::size_t i = 0; i < in; ++i)
                        slice[o * in + i] = m[((o * in + i) * k + ky) * k + kx];
                total += schur_norm_2d(slice.data(), out, in);
            }
        return total;
    }
    const Tensor flat = as_matrix(m);
    return schur_norm_2d(flat.data().data(), flat.dim(0), flat.dim(1));
}

} // namespace

std::vector<double> weight_bound(const LayerExpansion& exp, int order) {
    check_order(exp, order);
    const double factor =
        std::pow(contraction(exp.config.bits), order - 1) * 0.5;
    const std::vector<double>& base_scales = exp.orders.front().quantized.scales;
    std::vector<double> u(base_scales.size());
    for (std::size_t c = 0; c < u.size(); ++c) u[c] = factor * base_scales[c];
    return u;
}

std::vector<double> sparse_weight_bound(const LayerExpansion& exp, int order) {
    check_order(exp, order);
    const auto& mask = exp.orders[(std::size_t)order - 1].mask;
    if (!mask)
        throw InvalidInputError("sparse_weight_bound needs a mask at order " +
                                std::to_string(order));

    const std::vector<double>& base_scales = exp.orders.front().quantized.scales;
    const double factor = std::pow(contraction(exp.config.bits), order) * 0.5;

    // A row counts as pruned if any order up to K skipped its correction;
    // its error no longer follows the dense cascade, so it reports its
    // actual residual relative to the nothing-pruned reference
    // scale_r * factor (convention: 1 when no row is pruned anywhere).
    const std::size_t rows = mask->kept_rows.size();
    std::vector<bool> pruned(rows, false);
    bool any_pruned = false;
    for (int k = 0; k < order; ++k) {
        const auto& order_mask = exp.orders[(std::size_t)k].mask;
        if (!order_mask) continue;
        for (std::size_t r = 0; r < rows; ++r)
            if (!order_mask->kept_rows[r]) {
                pruned[r] = true;
                any_pruned = true;
            }
    }

    double n_inf = 1.0;
    if (any_pruned) {
        const Tensor resid = residual_after(exp, order);
        const std::size_t per_row = resid.size() / rows;
        const bool per_tensor = base_scales.size() == 1;
        n_inf = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            if (!pruned[r]) continue;
            double row_err = 0.0;
            for (std::size_t i = 0; i < per_row; ++i)
                row_err = std::max(row_err, std::fabs(resid[r * per_row + i]));
            const double reference = factor * base_scales[per_tensor ? 0 : r];
            n_inf = std::max(n_inf, row_err / reference);
        }
    }

    std::vector<double> u(base_scales.size());
    for (std::size_t c = 0; c < u.size(); ++c) u[c] = n_inf * factor * base_scales[c];
    return u;
}

BoundReport network_bound(const Network& net, const NetworkExpansion& nexp,
                          BoundReport::Kind kind) {
    if (kind != BoundReport::Kind::dense && kind != BoundReport::Kind::sparse)
        throw InvalidInputError("network_bound computes the dense and sparse kinds");
    check_bound_network(net);

    BoundReport report;
    report.kind = kind;
    report.bits = nexp.config.bits;
    report.order = nexp.order;
    report.gamma = nexp.gamma;

    std::vector<double> terms;
    for (const auto& entry : nexp.entries) {
        const LayerExpansion& exp = entry.expansion;
        const int order = exp.order();
        double u = max_of(weight_bound(exp, order));
        if (kind == BoundReport::Kind::sparse &&
            exp.orders[(std::size_t)order - 1].mask) {
            // Pruned rows follow the sparse lemma, kept rows the dense one.
            u = std::max(u, max_of(sparse_weight_bound(exp, order)));
        }
        const double s = layer_spectral_norm(net.layers()[entry.layer_index]);
        // The per-element lemma does not control the operator norm of the
        // realized error matrix (a handful of dense pruned rows can carry
        // most of it), so the layer term is floored at a certified upper
        // bound on that norm, computed from the expansion without data.
        if (s > 0.0 && max_abs(exp.final_residual) > 0.0)
            u = std::max(u, operator_norm_upper(exp.final_residual) / s);
        report.per_layer.push_back({s, u});
        terms.push_back(s * u);
    }
    report.U = chained_product(terms);
    return report;
}

BoundReport ensemble_bound(const Network& net, const NetworkExpansion& nexp,
                           const Grouping& grouping) {
    check_bound_network(net);
    validate_grouping(grouping, nexp.order);
    if (nexp.entries.empty())
        throw InvalidInputError("ensemble_bound needs at least one weighted layer");

    BoundReport report;
    report.kind = BoundReport::Kind::ensemble;
    report.bits = nexp.config.bits;
    report.order = nexp.order;
    report.gamma = nexp.gamma;
    report.grouping = grouping;

    const std::size_t layer_count = nexp.entries.size();
    for (const auto& entry : nexp.entries)
        report.per_layer.push_back(
            {layer_spectral_norm(net.layers()[entry.layer_index]), 0.0});

    // Single cluster or single weighted layer: the rewrite is exact.
    if (grouping.member_count() == 1 || layer_count == 1) {
        report.U = 0.0;
        return report;
    }

    // Spectral norms of every dequantized residue, per layer and order.
    // Higher-order residues look like noise with tightly clustered top
    // singular values; the loose tolerance keeps power iteration short
    // where the estimate is accurate long before the iterate settles.
    std::vector<std::vector<double>> term_norms(layer_count);
    for (std::size_t l = 0; l < layer_count; ++l) {
        const LayerExpansion& exp = nexp.entries[l].expansion;
        term_norms[l].reserve(exp.orders.size());
        for (const ExpansionOrder& order : exp.orders) {
            const double n = max_abs(order.term) == 0.0
                                 ? 0.0
                                 : spectral_norm(as_matrix(order.term), 1e-8, 10000);
            term_norms[l].push_back(n);
        }
    }

    double last_layer_sum = 0.0;
    for (double n : term_norms[layer_count - 1]) last_layer_sum += n;
    report.per_layer.back().weight_bound = last_layer_sum;

    double tail_factor = 0.0;
    for (int m = 1; m < grouping.member_count(); ++m) {
        const auto [first, last] = grouping.cluster_range(m);
        double member_product = 1.0;
        for (std::size_t l = 0; l + 1 < layer_count; ++l) {
            double cluster = 0.0;
            for (int k = first; k <= last; ++k) cluster += term_norms[l][(std::size_t)k - 1];
            member_product *= cluster;
            report.per_layer[l].weight_bound += cluster;
        }
        tail_factor += member_product;
    }

    const double halving = std::pow(0.5, double(layer_count - 1));
    report.U = halving * last_layer_sum * tail_factor;
    return report;
}

BoundReport main_text_bound(const Network& net, const NetworkExpansion& nexp) {
    check_bound_network(net);

    BoundReport report;
    report.kind = BoundReport::Kind::main_text;
    report.bits = nexp.config.bits;
    report.order = nexp.order;
    report.gamma = nexp.gamma;

    const double factor = std::pow(contraction(nexp.config.bits), nexp.order - 1) * 0.5;
    std::vector<double> terms;
    for (const auto& entry : nexp.entries) {
        const double scale = max_of(entry.expansion.orders.front().quantized.scales);
        report.per_layer.push_back({0.0, factor * scale});
        terms.push_back(factor * scale);
    }
    report.U = chained_product(terms);
    return report;
}

} // namespace resquant
