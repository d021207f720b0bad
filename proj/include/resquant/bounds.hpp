#ifndef RESQUANT_BOUNDS_HPP
#define RESQUANT_BOUNDS_HPP

#include <optional>
#include <vector>

#include "resquant/ensemble.hpp"
#include "resquant/expansion.hpp"
#include "resquant/network.hpp"

namespace resquant {

struct LayerBoundTerm {
    double spectral_norm = 0.0;
    double weight_bound = 0.0;
};

/// Certified worst-case logit error for unit-norm inputs, with the per-layer
/// ingredients that produced it.
struct BoundReport {
    enum class Kind { dense, sparse, ensemble, main_text };

    Kind kind = Kind::dense;
    double U = 0.0;
    std::vector<LayerBoundTerm> per_layer;
    int bits = 8;
    int order = 1;
    double gamma = 1.0;
    std::optional<Grouping> grouping;
};

const char* bound_kind_name(BoundReport::Kind kind);

/// Per-channel worst-case weight error after K orders:
///   u_c = (1 / (2^(b-1)-1))^(K-1) * scale_c / 2
/// with scale_c the base-order (first) quantization scale of the channel.
/// The per-order rescaling shrinks the order-K scale at least this fast, so
/// the bound holds for every expansion while staying monotone in K.
std::vector<double> weight_bound(const LayerExpansion& exp, int order);

/// Sparse variant at a masked order K:
///   u_c = N * scale_c / ((2^(b-1)-1)^K * 2)
/// where N is the max residual error over pruned rows, each row normalized
/// by its own nothing-pruned reference scale_r / ((2^(b-1)-1)^K * 2); N = 1
/// when the mask prunes nothing.
std::vector<double> sparse_weight_bound(const LayerExpansion& exp, int order);

/// Whole-network worst-case logit error over unit-norm inputs:
///   U = prod_l (sum_{i<=l} s_i * u_i + 1) - 1
/// with s_i the spectral norm of the full-precision kernel and u_i the max
/// channel of the per-layer weight bound (dense or sparse kind). For the
/// sparse kind, rows the mask keeps still follow the dense term, so the
/// per-layer value is the larger of the two. Requires a folded network with
/// relu/identity activations.
BoundReport network_bound(const Network& net, const NetworkExpansion& nexp,
                          BoundReport::Kind kind);

/// Worst-case logit gap between the expanded network and its ensemble
/// rewrite. With S_L the summed spectral norms of all dequantized residues
/// of the final layer and T_{l,m} the summed norms of cluster m at hidden
/// layer l:
///   U = S_L / 2^(L-1) * sum_{m>=2} prod_{l<L} T_{l,m}
/// (one factor 1/2 per activation the split crosses). Zero for a single
/// cluster or a single weighted layer, where the rewrite is exact.
BoundReport ensemble_bound(const Network& net, const NetworkExpansion& nexp,
                           const Grouping& grouping);

/// The simpler bound variant without spectral-norm factors:
///   U = prod_l (sum_{i<=l} (1/(2^(b-1)-1))^(K-1) * s_i / 2 + 1) - 1
/// with s_i the max channel scale of layer i's base quantization. Reported
/// alongside the spectral variant for comparison.
BoundReport main_text_bound(const Network& net, const NetworkExpansion& nexp);

} // namespace resquant

#endif
