#ifndef RESQUANT_ENSEMBLE_HPP
#define RESQUANT_ENSEMBLE_HPP

#include <optional>
#include <vector>

#include "resquant/expansion.hpp"
#include "resquant/network.hpp"

namespace resquant {

/// Partition of the expansion orders into clusters: sizes [K_1, ..., K_M],
/// cluster m covering orders sum(K_1..K_{m-1})+1 .. sum(K_1..K_m).
struct Grouping {
    std::vector<int> sizes;

    int member_count() const { return int(sizes.size()); }
    int total() const {
        int t = 0;
        for (int k : sizes) t += k;
        return t;
    }
    int max_size() const {
        int m = 0;
        for (int k : sizes) m = std::max(m, k);
        return m;
    }
    /// 1-based order range [first, last] of cluster m (0-based member index).
    std::pair<int, int> cluster_range(int m) const {
        int first = 1;
        for (int j = 0; j < m; ++j) first += sizes[(std::size_t)j];
        return {first, first + sizes[(std::size_t)m] - 1};
    }
};

void validate_grouping(const Grouping& grouping, int expansion_order);

/// M networks of identical architecture whose outputs sum. Biases live only
/// in member 1; the other members are bias-free.
struct EnsembleNetwork {
    std::vector<Network> members;
    Grouping grouping;
};

/// Rewrite an expanded network as an ensemble. Hidden weighted layers of
/// member m carry the summed residues of cluster m; the final weighted layer
/// carries the full expansion in every member (each member corrects the
/// logits for its own hidden path, so the member outputs sum to the expanded
/// forward whenever the activations act linearly). Requires a folded network
/// with relu/identity activations and a grouping summing to the expansion
/// order.
EnsembleNetwork build_ensemble(const Network& net, const NetworkExpansion& nexp,
                               const Grouping& grouping);

/// Sum of the member outputs, evaluated in ascending member order for
/// reproducibility. Members are independent and could run concurrently.
Tensor ensemble_forward(const EnsembleNetwork& ens, const Tensor& x);

/// Pick the most balanced candidate (smallest max cluster) whose ensemble
/// error bound stays below threshold_ratio * logit_norm_estimate. Falls back
/// to the no-split grouping [K] when no candidate qualifies.
Grouping select_grouping(const Network& net, const NetworkExpansion& nexp,
                         const std::vector<Grouping>& candidates, double logit_norm_estimate,
                         double threshold_ratio = 0.1);

/// Data-free logit-magnitude estimate from the trailing batch-norm layer of
/// an unfolded network: sqrt(sum(beta^2 + gamma^2)). Empty when the network
/// does not end in batch-norm.
std::optional<double> logit_norm_from_batch_norm(const Network& unfolded);

/// Mean L2 norm of the network's outputs over calibration inputs.
double mean_logit_norm(const Network& net, const std::vector<Tensor>& xs);

} // namespace resquant

#endif
