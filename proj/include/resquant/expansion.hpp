#ifndef RESQUANT_EXPANSION_HPP
#define RESQUANT_EXPANSION_HPP

#include <optional>
#include <vector>

#include "resquant/network.hpp"
#include "resquant/quantize.hpp"
#include "resquant/tensor.hpp"

namespace resquant {

/// Row-level (output-channel) pruning mask. kept_rows[i] tells whether
/// channel i of a residual term is retained; gamma is the kept fraction the
/// mask was built for (ceil(gamma * rows) rows kept).
struct StructuredMask {
    std::vector<bool> kept_rows;
    double gamma = 1.0;

    std::size_t kept_count() const {
        std::size_t n = 0;
        for (bool k : kept_rows) n += k;
        return n;
    }
};

/// Keep the ceil(gamma * rows) rows of largest residual L2 norm, ties broken
/// toward the lower row index. Rows are slices along axis 0.
StructuredMask make_structured_mask(const Tensor& residual_error, double gamma);

/// One term of a residual expansion: the integer codes of the quantized
/// residual, the optional mask, and the deployed real-valued term
/// (mask applied to the dequantized codes).
struct ExpansionOrder {
    QuantizedTensor quantized;
    std::optional<StructuredMask> mask;
    Tensor term;

    /// Fraction of rows this order actually computes (1 when unmasked).
    double kept_fraction() const {
        if (!mask) return 1.0;
        return double(mask->kept_count()) / double(mask->kept_rows.size());
    }
};

/// Residual expansion of a single weight tensor: term k quantizes whatever
/// error the first k-1 terms left behind, each order with fresh per-channel
/// scales. The partial sums converge to the weights exponentially in the
/// order.
struct LayerExpansion {
    std::vector<ExpansionOrder> orders;
    QuantConfig config;
    std::vector<std::size_t> weight_shape;
    Tensor final_residual; // W minus the sum of all deployed terms

    int order() const { return int(orders.size()); }
};

/// Expand W into K residual terms. When gamma < 1, orders >= from_order are
/// masked (the first order is always dense; from_order must be >= 2).
/// from_order > K means no masking.
LayerExpansion expand(const Tensor& w, const QuantConfig& cfg, int order_count, double gamma,
                      int from_order);

/// Sum of the first `upto_order` deployed terms (the deployed approximation
/// of the weights at that order).
Tensor reconstructed(const LayerExpansion& exp, int upto_order);

/// W minus the first `upto_order` terms.
Tensor residual_after(const LayerExpansion& exp, int upto_order);

/// Whole-network expansion: one LayerExpansion per dense/conv layer.
struct NetworkExpansion {
    struct Entry {
        std::size_t layer_index;
        LayerExpansion expansion;
    };
    std::vector<Entry> entries;
    QuantConfig config;
    int order = 1;
    double gamma = 1.0;
    int mask_from_order = 2;
};

NetworkExpansion expand_network(const Network& net, const QuantConfig& cfg, int order_count,
                                double gamma, int from_order);

/// The network whose weighted layers carry the summed expansion terms
/// (biases and activations untouched).
Network expanded_network(const Network& net, const NetworkExpansion& nexp);

/// An expansion rewritten as one kernel: the output channels of all orders
/// (masked rows dropped) concatenated along the output dimension, plus the
/// map from fused output channels back to logical ones.
struct FusedLayer {
    Layer layer; // bias-free dense/conv whose out dim is the fused channel count
    std::vector<std::size_t> summation_map; // fused channel -> logical channel
    std::size_t logical_outputs = 0;
};

/// Concatenate the expansion's kernels along the output dimension.
/// `original` supplies the layer kind and conv geometry.
FusedLayer fuse_kernels(const LayerExpansion& exp, const Layer& original);

/// Evaluate the fused kernel and sum fused channels back into logical
/// outputs. Equals the per-order evaluation (without bias).
Tensor apply_fused(const FusedLayer& fused, const Tensor& x);

} // namespace resquant

#endif
