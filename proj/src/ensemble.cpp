#include "resquant/ensemble.hpp"

#include <cmath>
#include <string>

#include "resquant/bounds.hpp"
#include "resquant/errors.hpp"

namespace resquant {

void validate_grouping(const Grouping& grouping, int expansion_order) {
    if (grouping.sizes.empty()) throw InvalidInputError("grouping must have at least one cluster");
    for (int k : grouping.sizes)
        if (k < 1) throw InvalidInputError("grouping sizes must be positive");
    if (grouping.total() != expansion_order)
        throw InvalidInputError("grouping sums to " + std::to_string(grouping.total()) +
                                " but the expansion order is " +
                                std::to_string(expansion_order));
}

namespace {

Tensor cluster_sum(const LayerExpansion& exp, int first_order, int last_order) {
    Tensor sum = Tensor::zeros(exp.weight_shape);
    for (int k = first_order; k <= last_order; ++k)
        sum = add(sum, exp.orders[(std::size_t)k - 1].term);
    return sum;
}

void set_weights(Layer& layer, Tensor weights, bool keep_bias) {
    if (auto* dense = std::get_if<DenseLayer>(&layer)) {
        dense->weights = std::move(weights);
        if (!keep_bias) dense->bias.reset();
    } else {
        auto& conv = std::get<Conv2dLayer>(layer);
        conv.weights = std::move(weights);
        if (!keep_bias) conv.bias.reset();
    }
}

} // namespace

EnsembleNetwork build_ensemble(const Network& net, const NetworkExpansion& nexp,
                               const Grouping& grouping) {
    validate_grouping(grouping, nexp.order);
    for (const Layer& layer : net.layers()) {
        if (std::holds_alternative<BatchNormLayer>(layer))
            throw InvalidInputError("build_ensemble expects a folded network");
        if (const auto* act = std::get_if<ActivationLayer>(&layer)) {
            if (act->kind != Activation::relu && act->kind != Activation::identity)
                throw InvalidInputError(
                    "build_ensemble supports relu/identity activations only");
        }
    }
    if (nexp.entries.empty())
        throw InvalidInputError("build_ensemble needs at least one weighted layer");

    const std::size_t last_weighted = nexp.entries.back().layer_index;
    const bool single_layer = nexp.entries.size() == 1;

    EnsembleNetwork ens;
    ens.grouping = grouping;
    for (int m = 0; m < grouping.member_count(); ++m) {
        const auto [first, last] = grouping.cluster_range(m);
        const bool is_first_member = m == 0;
        std::vector<Layer> layers = net.layers();
        for (const auto& entry : nexp.entries) {
            // Hidden layers carry the member's own cluster; the output layer
            // carries every order so the member sum reproduces the expanded
            // logits when no activation clips.
            const bool full = entry.layer_index == last_weighted && !single_layer;
            Tensor weights = full ? cluster_sum(entry.expansion, 1, nexp.order)
                                  : cluster_sum(entry.expansion, first, last);
            set_weights(layers[entry.layer_index], std::move(weights), is_first_member);
        }
        if (!is_first_member) {
            // Bias terms appear only in member 1.
            for (Layer& layer : layers) {
                if (auto* dense = std::get_if<DenseLayer>(&layer)) dense->bias.reset();
                if (auto* conv = std::get_if<Conv2dLayer>(&layer)) conv->bias.reset();
            }
        }
        ens.members.emplace_back(std::move(layers), net.input_shape());
    }
    return ens;
}

Tensor ensemble_forward(const EnsembleNetwork& ens, const Tensor& x) {
    if (ens.members.empty()) throw InvalidInputError("ensemble has no members");
    Tensor sum = forward(ens.members.front(), x);
    for (std::size_t m = 1; m < ens.members.size(); ++m)
        sum = add(sum, forward(ens.members[m], x));
    return sum;
}

Grouping select_grouping(const Network& net, const NetworkExpansion& nexp,
                         const std::vector<Grouping>& candidates, double logit_norm_estimate,
                         double threshold_ratio) {
    if (candidates.empty()) throw InvalidInputError("select_grouping needs candidates");
    if (!(logit_norm_estimate > 0.0))
        throw InvalidInputError("logit norm estimate must be positive");
    if (threshold_ratio < 0.0) throw InvalidInputError("threshold ratio must be >= 0");

    const double threshold = threshold_ratio * logit_norm_estimate;
    const Grouping* best = nullptr;
    for (const Grouping& candidate : candidates) {
        validate_grouping(candidate, nexp.order);
        const double u = ensemble_bound(net, nexp, candidate).U;
        if (u > threshold) continue;
        if (!best || candidate.max_size() < best->max_size() ||
            (candidate.max_size() == best->max_size() &&
             candidate.member_count() < best->member_count())) {
            best = &candidate;
        }
    }
    if (best) return *best;
    return Grouping{{nexp.order}};
}

std::optional<double> logit_norm_from_batch_norm(const Network& unfolded) {
    if (unfolded.layers().empty()) return std::nullopt;
    const auto* bn = std::get_if<BatchNormLayer>(&unfolded.layers().back());
    if (!bn) return std::nullopt;
    // Treat each output channel as N(beta, gamma^2) and use sqrt(E||y||^2).
    double s = 0.0;
    for (std::size_t c = 0; c < bn->gamma.size(); ++c)
        s += bn->beta[c] * bn->beta[c] + bn->gamma[c] * bn->gamma[c];
    return std::sqrt(s);
}

double mean_logit_norm(const Network& net, const std::vector<Tensor>& xs) {
    if (xs.empty()) throw InvalidInputError("mean_logit_norm needs at least one input");
    double acc = 0.0;
    for (const Tensor& x : xs) acc += l2_norm(forward(net, x));
    return acc / double(xs.size());
}

} // namespace resquant
