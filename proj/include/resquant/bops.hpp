#ifndef RESQUANT_BOPS_HPP
#define RESQUANT_BOPS_HPP

#include <optional>
#include <vector>

#include "resquant/ensemble.hpp"
#include "resquant/expansion.hpp"
#include "resquant/network.hpp"

namespace resquant {

/// Geometry a layer contributes to the cost model. Dense layers encode
/// D=1, d=1, s=1; conv layers use their input feature-map area for D^2.
struct LayerGeometry {
    double spatial_sq = 1.0; // D^2 (input height * width for conv)
    int kernel = 1;          // d
    int stride = 1;          // s
    std::size_t n_in = 1;
    std::size_t n_out = 1;
};

/// Bit-operation cost of one layer. A scalar b-bit multiply is costed at
/// b*log2(b) bit operations; the linear-in-b accounting (cost b per
/// multiply) is carried alongside because equal-budget comparisons across
/// bit widths are usually quoted that way. Additions are excluded.
struct LayerCost {
    LayerGeometry geometry;
    int bits = 32;
    int order = 1;
    std::vector<double> gammas; // per-order kept fraction

    double rescale_bops = 0.0;
    double mac_bops = 0.0;        // b*log2(b) accounting
    double total = 0.0;           // rescale_bops + mac_bops
    double mac_bops_linear = 0.0; // linear-in-b accounting
    double total_linear = 0.0;
};

/// Full-precision cost: D^2 * (d^2 * n_i * n_o / s^2) * 32 * log2(32).
double bops_original(int spatial, int kernel, int stride, std::size_t n_in, std::size_t n_out);

/// Expanded-layer cost:
///   rescale = D^2 * (n_i + n_o / s^2) * 32 * log2(32)
///   mac     = D^2 * (d^2 * n_i * n_o / s^2) * b * log2(b) * sum_k gamma_k
/// gammas has one kept-fraction per order, with gamma_1 = 1 (the base
/// quantization is dense).
LayerCost bops_expanded(int spatial, int kernel, int stride, std::size_t n_in,
                        std::size_t n_out, int bits, int order,
                        const std::vector<double>& gammas);

struct CostReport {
    std::vector<LayerCost> original_layers;
    std::vector<LayerCost> expanded_layers;
    double original_total = 0.0;
    double expanded_total = 0.0;
    double expanded_total_linear = 0.0;
    double expanded_vs_original = 0.0;

    // Filled when a grouping is given. Each member pays its own rescale
    // term; the combined total is the plain sum, and the max member is the
    // critical path when members run in parallel.
    std::vector<double> member_totals;
    double combined_total = 0.0;
    double max_member_total = 0.0;
    double combined_vs_original = 0.0;
    double max_member_vs_original = 0.0;
};

/// Aggregate costs over the network's weighted layers for the original
/// model, the expansion, and (optionally) the ensemble members under the
/// per-layer cluster cost convention.
CostReport bops_network(const Network& net, const NetworkExpansion& nexp,
                        const std::optional<Grouping>& grouping = std::nullopt);

} // namespace resquant

#endif
