#include "resquant/bops.hpp"

#include <cmath>
#include <string>

#include "resquant/errors.hpp"

namespace resquant {

namespace {

constexpr double kFloatMultiplyBops = 32.0 * 5.0; // 32 * log2(32)

double log2_cost(int bits) { return double(bits) * std::log2(double(bits)); }

void check_geometry(const LayerGeometry& g) {
    if (g.spatial_sq <= 0.0 || g.kernel < 1 || g.stride < 1 || g.n_in == 0 || g.n_out == 0)
        throw InvalidInputError("layer cost dimensions must be positive");
}

double multiply_count(const LayerGeometry& g) {
    return g.spatial_sq * double(g.kernel) * double(g.kernel) * double(g.n_in) *
           double(g.n_out) / (double(g.stride) * double(g.stride));
}

double rescale_count(const LayerGeometry& g) {
    return g.spatial_sq *
           (double(g.n_in) + double(g.n_out) / (double(g.stride) * double(g.stride)));
}

LayerCost original_cost(const LayerGeometry& g) {
    check_geometry(g);
    LayerCost cost;
    cost.geometry = g;
    cost.bits = 32;
    cost.order = 0;
    cost.rescale_bops = 0.0;
    cost.mac_bops = multiply_count(g) * kFloatMultiplyBops;
    cost.mac_bops_linear = multiply_count(g) * 32.0;
    cost.total = cost.mac_bops;
    cost.total_linear = cost.mac_bops_linear;
    return cost;
}

LayerCost expanded_cost(const LayerGeometry& g, int bits, const std::vector<double>& gammas) {
    check_geometry(g);
    if (bits < 2) throw InvalidInputError("expanded cost needs a bit width >= 2");
    if (gammas.empty()) throw InvalidInputError("expanded cost needs one gamma per order");
    double mass = 0.0;
    for (double gamma : gammas) {
        if (gamma < 0.0 || gamma > 1.0)
            throw InvalidInputError("per-order gamma must be in [0, 1]");
        mass += gamma;
    }

    LayerCost cost;
    cost.geometry = g;
    cost.bits = bits;
    cost.order = int(gammas.size());
    cost.gammas = gammas;
    cost.rescale_bops = rescale_count(g) * kFloatMultiplyBops;
    cost.mac_bops = multiply_count(g) * log2_cost(bits) * mass;
    cost.mac_bops_linear = multiply_count(g) * double(bits) * mass;
    cost.total = cost.rescale_bops + cost.mac_bops;
    cost.total_linear = cost.rescale_bops + cost.mac_bops_linear;
    return cost;
}

LayerGeometry layer_geometry(const Network& net, std::size_t layer_index) {
    const Layer& layer = net.layers()[layer_index];
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
        return {1.0, 1, 1, dense->weights.dim(1), dense->weights.dim(0)};
    }
    const auto& conv = std::get<Conv2dLayer>(layer);
    const auto& in_shape = net.shape_before(layer_index);
    LayerGeometry g;
    g.spatial_sq = double(in_shape[1]) * double(in_shape[2]);
    g.kernel = int(conv.weights.dim(2));
    g.stride = conv.stride;
    g.n_in = conv.weights.dim(1);
    g.n_out = conv.weights.dim(0);
    return g;
}

} // namespace

double bops_original(int spatial, int kernel, int stride, std::size_t n_in, std::size_t n_out) {
    if (spatial < 1) throw InvalidInputError("layer cost dimensions must be positive");
    LayerGeometry g{double(spatial) * double(spatial), kernel, stride, n_in, n_out};
    return original_cost(g).total;
}

LayerCost bops_expanded(int spatial, int kernel, int stride, std::size_t n_in,
                        std::size_t n_out, int bits, int order,
                        const std::vector<double>& gammas) {
    if (spatial < 1) throw InvalidInputError("layer cost dimensions must be positive");
    if (order < 1 || std::size_t(order) != gammas.size())
        throw InvalidInputError("expanded cost needs exactly one gamma per order");
    if (gammas.front() != 1.0)
        throw InvalidInputError("the base order is never pruned; gamma_1 must be 1");
    LayerGeometry g{double(spatial) * double(spatial), kernel, stride, n_in, n_out};
    return expanded_cost(g, bits, gammas);
}

CostReport bops_network(const Network& net, const NetworkExpansion& nexp,
                        const std::optional<Grouping>& grouping) {
    CostReport report;
    for (const auto& entry : nexp.entries) {
        const LayerGeometry g = layer_geometry(net, entry.layer_index);

        report.original_layers.push_back(original_cost(g));
        report.original_total += report.original_layers.back().total;

        std::vector<double> gammas;
        gammas.reserve(entry.expansion.orders.size());
        for (const ExpansionOrder& order : entry.expansion.orders)
            gammas.push_back(order.kept_fraction());
        report.expanded_layers.push_back(expanded_cost(g, nexp.config.bits, gammas));
        report.expanded_total += report.expanded_layers.back().total;
        report.expanded_total_linear += report.expanded_layers.back().total_linear;
    }
    report.expanded_vs_original =
        report.original_total > 0.0 ? report.expanded_total / report.original_total : 0.0;

    if (grouping) {
        validate_grouping(*grouping, nexp.order);
        for (int m = 0; m < grouping->member_count(); ++m) {
            const auto [first, last] = grouping->cluster_range(m);
            double member_total = 0.0;
            for (const auto& entry : nexp.entries) {
                const LayerGeometry g = layer_geometry(net, entry.layer_index);
                std::vector<double> gammas;
                for (int k = first; k <= last; ++k)
                    gammas.push_back(
                        entry.expansion.orders[(std::size_t)k - 1].kept_fraction());
                member_total += expanded_cost(g, nexp.config.bits, gammas).total;
            }
            report.member_totals.push_back(member_total);
            report.combined_total += member_total;
            report.max_member_total = std::max(report.max_member_total, member_total);
        }
        if (report.original_total > 0.0) {
            report.combined_vs_original = report.combined_total / report.original_total;
            report.max_member_vs_original = report.max_member_total / report.original_total;
        }
    }
    return report;
}

} // namespace resquant
