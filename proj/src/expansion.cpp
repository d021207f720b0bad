#include "resquant/expansion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "resquant/errors.hpp"

namespace resquant {

StructuredMask make_structured_mask(const Tensor& residual_error, double gamma) {
    if (!(gamma > 0.0) || gamma > 1.0)
        throw InvalidInputError("mask gamma must be in (0, 1]");
    const std::size_t rows = residual_error.dim(0);
    const std::size_t per_row = residual_error.size() / rows;

    std::vector<double> norms(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < per_row; ++i) {
            const double v = residual_error[r * per_row + i];
            s += v * v;
        }
        norms[r] = s;
    }

    const std::size_t keep = (std::size_t)std::ceil(gamma * double(rows));
    std::vector<std::size_t> idx(rows);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });

    StructuredMask mask;
    mask.gamma = gamma;
    mask.kept_rows.assign(rows, false);
    for (std::size_t i = 0; i < keep && i < rows; ++i) mask.kept_rows[idx[i]] = true;
    return mask;
}

namespace {

Tensor masked_term(const Tensor& deq, const std::optional<StructuredMask>& mask) {
    if (!mask) return deq;
    const std::size_t rows = deq.dim(0);
    const std::size_t per_row = deq.size() / rows;
    std::vector<double> out(deq.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const bool keep = mask->kept_rows[r];
        for (std::size_t i = 0; i < per_row; ++i)
            out[r * per_row + i] = keep ? deq[r * per_row + i] : 0.0;
    }
    return Tensor(deq.shape(), std::move(out));
}

} // namespace

LayerExpansion expand(const Tensor& w, const QuantConfig& cfg, int order_count, double gamma,
                      int from_order) {
    validate_config(cfg);
    if (order_count < 1) throw InvalidInputError("expansion order must be >= 1");
    if (!(gamma > 0.0) || gamma > 1.0)
        throw InvalidInputError("expansion gamma must be in (0, 1]");
    if (gamma < 1.0 && from_order < 2)
        throw InvalidInputError("masking cannot start before order 2; "
                                "the base quantization is always dense");

    LayerExpansion exp;
    exp.config = cfg;
    exp.weight_shape = w.shape();
    exp.orders.reserve((std::size_t)order_count);

    Tensor residual = w;
    for (int k = 1; k <= order_count; ++k) {
        ExpansionOrder entry;
        entry.quantized = quantize(residual, compute_scales(residual, cfg), cfg);
        const Tensor deq = dequantize(entry.quantized);
        if (gamma < 1.0 && k >= from_order)
            entry.mask = make_structured_mask(residual, gamma);
        entry.term = masked_term(deq, entry.mask);
        residual = subtract(residual, entry.term);
        exp.orders.push_back(std::move(entry));
    }
    exp.final_residual = std::move(residual);
    return exp;
}

Tensor reconstructed(const LayerExpansion& exp, int upto_order) {
    if (upto_order < 0 || upto_order > exp.order())
        throw InvalidInputError("reconstruction order out of range");
    Tensor sum = Tensor::zeros(exp.weight_shape);
    for (int k = 0; k < upto_order; ++k) sum = add(sum, exp.orders[(std::size_t)k].term);
    return sum;
}

Tensor residual_after(const LayerExpansion& exp, int upto_order) {
    if (upto_order < 0 || upto_order > exp.order())
        throw InvalidInputError("residual order out of range");
    Tensor r = exp.final_residual;
    for (int k = exp.order(); k > upto_order; --k)
        r = add(r, exp.orders[(std::size_t)k - 1].term);
    return r;
}

NetworkExpansion expand_network(const Network& net, const QuantConfig& cfg, int order_count,
                                double gamma, int from_order) {
    NetworkExpansion nexp;
    nexp.config = cfg;
    nexp.order = order_count;
    nexp.gamma = gamma;
    nexp.mask_from_order = from_order;
    const auto& layers = net.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Tensor* w = nullptr;
        if (const auto* dense = std::get_if<DenseLayer>(&layers[i])) w = &dense->weights;
        if (const auto* conv = std::get_if<Conv2dLayer>(&layers[i])) w = &conv->weights;
        if (!w) continue;
        nexp.entries.push_back({i, expand(*w, cfg, order_count, gamma, from_order)});
    }
    return nexp;
}

Network expanded_network(const Network& net, const NetworkExpansion& nexp) {
    std::vector<Layer> layers = net.layers();
    for (const auto& entry : nexp.entries) {
        Tensor sum = reconstructed(entry.expansion, entry.expansion.order());
        Layer& layer = layers[entry.layer_index];
        if (auto* dense = std::get_if<DenseLayer>(&layer)) {
            if (dense->weights.shape() != sum.shape())
                throw InvalidInputError("expansion does not match layer " +
                                        std::to_string(entry.layer_index));
            dense->weights = std::move(sum);
        } else if (auto* conv = std::get_if<Conv2dLayer>(&layer)) {
            if (conv->weights.shape() != sum.shape())
                throw InvalidInputError("expansion does not match layer " +
                                        std::to_string(entry.layer_index));
            conv->weights = std::move(sum);
        } else {
            throw InvalidInputError("expansion entry points at a non-weighted layer");
        }
    }
    return Network(std::move(layers), net.input_shape());
}

FusedLayer fuse_kernels(const LayerExpansion& exp, const Layer& original) {
    if (!is_weighted(original))
        throw InvalidInputError("fuse_kernels expects a dense or conv layer");
    if (exp.orders.empty()) throw InvalidInputError("cannot fuse an empty expansion");

    const std::size_t logical = exp.weight_shape[0];
    const std::size_t per_row = shape_volume(exp.weight_shape) / logical;

    std::vector<double> rows;
    std::vector<std::size_t> map;
    for (const ExpansionOrder& order : exp.orders) {
        for (std::size_t r = 0; r < logical; ++r) {
            if (order.mask && !order.mask->kept_rows[r]) continue;
            const double* src = order.term.data().data() + r * per_row;
            rows.insert(rows.end(), src, src + per_row);
            map.push_back(r);
        }
    }

    std::vector<std::size_t> fused_shape = exp.weight_shape;
    fused_shape[0] = map.size();
    Tensor fused_weights(std::move(fused_shape), std::move(rows));

    FusedLayer fused;
    fused.summation_map = std::move(map);
    fused.logical_outputs = logical;
    if (std::holds_alternative<DenseLayer>(original)) {
        fused.layer = DenseLayer{std::move(fused_weights), std::nullopt};
    } else {
        const auto& conv = std::get<Conv2dLayer>(original);
        fused.layer = Conv2dLayer{std::move(fused_weights), std::nullopt, conv.stride,
                                  conv.padding};
    }
    return fused;
}

Tensor apply_fused(const FusedLayer& fused, const Tensor& x) {
    const Tensor y = apply_layer(fused.layer, x);
    const std::size_t fused_channels = y.dim(0);
    const std::size_t per_channel = y.size() / fused_channels;

    std::vector<std::size_t> out_shape = y.shape();
    out_shape[0] = fused.logical_outputs;
    std::vector<double> out(fused.logical_outputs * per_channel, 0.0);
    for (std::size_t f = 0; f < fused_channels; ++f) {
        const std::size_t target = fused.summation_map[f];
        for (std::size_t i = 0; i < per_channel; ++i)
            out[target * per_channel + i] += y[f * per_channel + i];
    }
    return Tensor(std::move(out_shape), std::move(out));
}

} // namespace resquant
