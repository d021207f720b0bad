#include "resquant/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <random>

#include "resquant/errors.hpp"
#include "resquant/metrics.hpp"
#include "resquant/quantize.hpp"

namespace resquant {

using nlohmann::json;

void validate_run_config(const RunConfig& config) {
    if (config.bits < 2 || config.bits > 16)
        throw InvalidInputError("bits must be in [2, 16]");
    if (config.order < 1) throw InvalidInputError("expansion order must be >= 1");
    if (!(config.sparsity > 0.0) || config.sparsity > 1.0)
        throw InvalidInputError("sparsity must be in (0, 1]");
    if (config.mask_from_order < 2)
        throw InvalidInputError("mask-from order must be >= 2 (the base order stays dense)");
    if (config.threshold_ratio < 0.0)
        throw InvalidInputError("threshold ratio must be >= 0");
    if (config.activation_bits && (*config.activation_bits < 2 || *config.activation_bits > 16))
        throw InvalidInputError("activation bits must be in [2, 16]");
    if (config.activation_bits && !config.calibration_path && config.generated_samples <= 0)
        throw InvalidInputError(
            "activation quantization needs calibration inputs to set ranges");
    if (config.grouping && config.auto_grouping)
        throw InvalidInputError("give either an explicit grouping or 'auto', not both");
    if (config.generated_samples < 0)
        throw InvalidInputError("sample count must be >= 0");
}

std::vector<Tensor> generate_unit_inputs(const std::vector<std::size_t>& shape, int count,
                                         std::uint64_t seed) {
    std::mt19937_64 gen(seed ^ 0x5eedf00dULL);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<Tensor> xs;
    xs.reserve((std::size_t)count);
    const std::size_t n = shape_volume(shape);
    for (int i = 0; i < count; ++i) {
        std::vector<double> v(n);
        double norm = 0.0;
        for (double& x : v) {
            x = dist(gen);
            norm += x * x;
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) norm = 1.0;
        for (double& x : v) x /= norm;
        xs.emplace_back(shape, std::move(v));
    }
    return xs;
}

std::vector<Tensor> load_calibration(const std::filesystem::path& path,
                                     const std::vector<std::size_t>& expected_shape) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open calibration file " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw IoError("malformed calibration file: " + std::string(e.what()));
    }
    if (!doc.contains("inputs") || !doc.at("inputs").is_array())
        throw IoError("calibration file lacks an 'inputs' array");
    std::vector<std::size_t> shape = expected_shape;
    if (doc.contains("input_shape")) {
        shape = doc.at("input_shape").get<std::vector<std::size_t>>();
        if (shape != expected_shape)
            throw IoError("calibration input shape " + shape_to_string(shape) +
                          " does not match the model input " + shape_to_string(expected_shape));
    }
    std::vector<Tensor> xs;
    for (const json& row : doc.at("inputs")) {
        std::vector<double> data = row.get<std::vector<double>>();
        if (data.size() != shape_volume(shape))
            throw IoError("calibration input has " + std::to_string(data.size()) +
                          " values; shape " + shape_to_string(shape) + " needs " +
                          std::to_string(shape_volume(shape)));
        xs.emplace_back(shape, std::move(data));
    }
    if (xs.empty()) throw IoError("calibration file holds no inputs");
    return xs;
}

ActivationQuant calibrate_activation_quant(const Network& net, const std::vector<Tensor>& xs,
                                           int bits) {
    if (xs.empty()) throw InvalidInputError("activation calibration needs inputs");
    const double top = std::pow(2.0, bits - 1) - 1.0;
    ActivationQuant aq;
    aq.bits = bits;
    aq.layer_scales.assign(net.layers().size(), 0.0);
    double input_max = 0.0;
    for (const Tensor& x : xs) {
        input_max = std::max(input_max, max_abs(x));
        Tensor current = x;
        for (std::size_t i = 0; i < net.layers().size(); ++i) {
            current = apply_layer(net.layers()[i], current);
            aq.layer_scales[i] = std::max(aq.layer_scales[i], max_abs(current));
        }
    }
    aq.input_scale = input_max == 0.0 ? 1.0 : input_max / top;
    for (double& s : aq.layer_scales) s = s == 0.0 ? 1.0 : s / top;
    return aq;
}

namespace {

Tensor fake_quant(const Tensor& t, double scale, int bits) {
    const double top = std::pow(2.0, bits - 1) - 1.0;
    std::vector<double> out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i)
        out[i] = std::clamp(std::round(t[i] / scale), -top, top) * scale;
    return Tensor(t.shape(), std::move(out));
}

} // namespace

Tensor fake_quant_forward(const Network& net, const Tensor& x, const ActivationQuant& aq) {
    Tensor current = fake_quant(x, aq.input_scale, aq.bits);
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        current = apply_layer(net.layers()[i], current);
        if (i + 1 < net.layers().size())
            current = fake_quant(current, aq.layer_scales[i], aq.bits);
    }
    return current;
}

json bound_report_json(const BoundReport& report) {
    json doc;
    doc["kind"] = bound_kind_name(report.kind);
    doc["U"] = report.U;
    doc["bits"] = report.bits;
    doc["order"] = report.order;
    doc["gamma"] = report.gamma;
    doc["grouping"] = report.grouping ? json(report.grouping->sizes) : json(nullptr);
    json layers = json::array();
    for (const LayerBoundTerm& term : report.per_layer) {
        layers.push_back(
            {{"spectral_norm", term.spectral_norm}, {"weight_bound", term.weight_bound}});
    }
    doc["per_layer"] = layers;
    return doc;
}

namespace {

json layer_cost_json(const LayerCost& cost) {
    return {{"rescale_bops", cost.rescale_bops},
            {"mac_bops", cost.mac_bops},
            {"mac_bops_linear", cost.mac_bops_linear},
            {"total", cost.total},
            {"total_linear", cost.total_linear},
            {"bits", cost.bits},
            {"order", cost.order},
            {"gammas", cost.gammas}};
}

} // namespace

json cost_report_json(const CostReport& report) {
    json doc;
    doc["original_total"] = report.original_total;
    doc["expanded_total"] = report.expanded_total;
    doc["expanded_total_linear"] = report.expanded_total_linear;
    doc["expanded_vs_original"] = report.expanded_vs_original;
    json original = json::array();
    for (const LayerCost& cost : report.original_layers) original.push_back(layer_cost_json(cost));
    json expanded = json::array();
    for (const LayerCost& cost : report.expanded_layers) expanded.push_back(layer_cost_json(cost));
    doc["original_layers"] = original;
    doc["expanded_layers"] = expanded;
    if (!report.member_totals.empty()) {
        doc["ensemble"] = {{"member_totals", report.member_totals},
                           {"combined_total", report.combined_total},
                           {"max_member_total", report.max_member_total},
                           {"combined_vs_original", report.combined_vs_original},
                           {"max_member_vs_original", report.max_member_vs_original}};
    } else {
        doc["ensemble"] = nullptr;
    }
    return doc;
}

std::string canonical_report(const json& report) { return report.dump(2) + "\n"; }

namespace {

json config_json(const RunConfig& config) {
    json doc;
    doc["bits"] = config.bits;
    doc["order"] = config.order;
    doc["sparsity"] = config.sparsity;
    doc["mask_from_order"] = config.mask_from_order;
    if (config.grouping)
        doc["grouping"] = *config.grouping;
    else
        doc["grouping"] = config.auto_grouping ? json("auto") : json(nullptr);
    doc["threshold_ratio"] = config.threshold_ratio;
    doc["activation_bits"] =
        config.activation_bits ? json(*config.activation_bits) : json(nullptr);
    doc["seed"] = config.seed;
    doc["calibration_inputs"] =
        config.calibration_path ? json(config.calibration_path->string()) : json(nullptr);
    doc["generated_samples"] = config.generated_samples;
    return doc;
}

const char* layer_kind_name(const Layer& layer) {
    if (std::holds_alternative<DenseLayer>(layer)) return "dense";
    if (std::holds_alternative<Conv2dLayer>(layer)) return "conv2d";
    if (std::holds_alternative<BatchNormLayer>(layer)) return "batch_norm";
    return "activation";
}

json expansion_summary_json(const Network& folded, const NetworkExpansion& nexp) {
    json layers = json::array();
    for (const auto& entry : nexp.entries) {
        json orders = json::array();
        for (std::size_t k = 0; k < entry.expansion.orders.size(); ++k) {
            const ExpansionOrder& order = entry.expansion.orders[k];
            double scale_max = 0.0;
            for (double s : order.quantized.scales) scale_max = std::max(scale_max, s);
            const std::size_t rows = entry.expansion.weight_shape[0];
            orders.push_back({{"order", k + 1},
                              {"scale_max", scale_max},
                              {"rows_kept", order.mask ? order.mask->kept_count() : rows},
                              {"rows_total", rows}});
        }
        layers.push_back({{"index", entry.layer_index},
                          {"kind", layer_kind_name(folded.layers()[entry.layer_index])},
                          {"orders", orders}});
    }
    return layers;
}

std::vector<std::vector<int>> balanced_candidates(int order) {
    // One candidate per member count: sizes as even as possible, larger
    // clusters first so early members carry the dominant orders.
    std::vector<std::vector<int>> candidates;
    for (int m = 1; m <= order; ++m) {
        std::vector<int> sizes((std::size_t)m, order / m);
        for (int r = 0; r < order % m; ++r) sizes[(std::size_t)r] += 1;
        candidates.push_back(std::move(sizes));
    }
    return candidates;
}

} // namespace

json describe_model(const Network& net) {
    json doc;
    doc["input_shape"] = net.input_shape();
    doc["output_shape"] = net.output_shape();
    json layers = json::array();
    std::size_t parameters = 0;
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        const Layer& layer = net.layers()[i];
        json entry;
        entry["index"] = i;
        entry["kind"] = layer_kind_name(layer);
        entry["output_shape"] = infer_layer_shape(layer, net.shape_before(i));
        if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
            entry["weight_shape"] = dense->weights.shape();
            entry["has_bias"] = dense->bias.has_value();
            parameters += dense->weights.size() + (dense->bias ? dense->bias->size() : 0);
        } else if (const auto* conv = std::get_if<Conv2dLayer>(&layer)) {
            entry["weight_shape"] = conv->weights.shape();
            entry["has_bias"] = conv->bias.has_value();
            entry["stride"] = conv->stride;
            entry["padding"] = conv->padding == Padding::same ? "same" : "valid";
            parameters += conv->weights.size() + (conv->bias ? conv->bias->size() : 0);
        } else if (const auto* bn = std::get_if<BatchNormLayer>(&layer)) {
            entry["channels"] = bn->gamma.size();
            entry["epsilon"] = bn->epsilon;
            parameters += 4 * bn->gamma.size();
        } else {
            const auto& act = std::get<ActivationLayer>(layer);
            switch (act.kind) {
                case Activation::relu: entry["activation"] = "relu"; break;
                case Activation::identity: entry["activation"] = "identity"; break;
                case Activation::sigmoid: entry["activation"] = "sigmoid"; break;
                case Activation::gelu: entry["activation"] = "gelu"; break;
            }
        }
        layers.push_back(entry);
    }
    doc["layers"] = layers;
    doc["parameter_count"] = parameters;
    return doc;
}

PipelineResult run_pipeline(const Network& net, const RunConfig& config) {
    validate_run_config(config);

    // The batch-norm logit estimate must come from the unfolded network.
    const std::optional<double> bn_logit_norm = logit_norm_from_batch_norm(net);

    const auto t0 = std::chrono::steady_clock::now();
    Network folded = fold_batch_norm(net);
    NetworkExpansion expansion =
        expand_network(folded, QuantConfig{config.bits, 0}, config.order, config.sparsity,
                       config.mask_from_order);
    Network expanded = expanded_network(folded, expansion);
    const auto t1 = std::chrono::steady_clock::now();

    std::vector<Tensor> inputs;
    if (config.calibration_path)
        inputs = load_calibration(*config.calibration_path, net.input_shape());
    else if (config.generated_samples > 0)
        inputs = generate_unit_inputs(net.input_shape(), config.generated_samples, config.seed);

    json grouping_info;
    grouping_info["requested"] = config.grouping ? json(*config.grouping)
                                 : config.auto_grouping ? json("auto")
                                                        : json(nullptr);
    grouping_info["selected"] = nullptr;
    grouping_info["logit_norm_estimate"] = nullptr;
    grouping_info["logit_norm_source"] = nullptr;

    std::optional<Grouping> grouping;
    if (config.grouping) {
        grouping = Grouping{*config.grouping};
        validate_grouping(*grouping, expansion.order);
    } else if (config.auto_grouping) {
        double logit_norm = 0.0;
        if (!inputs.empty()) {
            logit_norm = mean_logit_norm(expanded, inputs);
            grouping_info["logit_norm_source"] = "calibration";
        } else if (bn_logit_norm) {
            logit_norm = *bn_logit_norm;
            grouping_info["logit_norm_source"] = "batch_norm";
        } else {
            throw InvalidInputError(
                "auto grouping needs calibration inputs or a trailing batch-norm layer "
                "to estimate the logit magnitude");
        }
        grouping_info["logit_norm_estimate"] = logit_norm;

        std::vector<Grouping> candidates;
        if (config.grouping_candidates.empty()) {
            for (auto& sizes : balanced_candidates(expansion.order))
                candidates.push_back(Grouping{std::move(sizes)});
        } else {
            for (const auto& sizes : config.grouping_candidates)
                candidates.push_back(Grouping{sizes});
        }
        grouping =
            select_grouping(folded, expansion, candidates, logit_norm, config.threshold_ratio);
    }

    std::optional<EnsembleNetwork> ensemble;
    if (grouping) {
        grouping_info["selected"] = grouping->sizes;
        ensemble = build_ensemble(folded, expansion, *grouping);
    }

    json report;
    report["config"] = config_json(config);
    report["model"] = describe_model(net);
    report["layers"] = expansion_summary_json(folded, expansion);
    report["grouping"] = grouping_info;

    json bounds;
    try {
        bounds["dense"] = bound_report_json(
            network_bound(folded, expansion, BoundReport::Kind::dense));
        bounds["main_text"] = bound_report_json(main_text_bound(folded, expansion));
        const bool has_mask = config.sparsity < 1.0 && config.order >= config.mask_from_order;
        bounds["sparse"] = has_mask
                               ? bound_report_json(network_bound(folded, expansion,
                                                                 BoundReport::Kind::sparse))
                               : json(nullptr);
        bounds["ensemble"] = grouping
                                 ? bound_report_json(ensemble_bound(folded, expansion, *grouping))
                                 : json(nullptr);
        report["bounds"] = bounds;
    } catch (const InvalidInputError& e) {
        report["bounds"] = nullptr;
        report["bounds_skipped"] = e.what();
    }

    report["costs"] = cost_report_json(bops_network(folded, expansion, grouping));

    if (!inputs.empty()) {
        std::optional<ActivationQuant> aq;
        if (config.activation_bits)
            aq = calibrate_activation_quant(folded, inputs, *config.activation_bits);

        auto deployed_expansion = [&](const Tensor& x) {
            return aq ? fake_quant_forward(expanded, x, *aq) : forward(expanded, x);
        };
        const double u_expansion =
            logits_max_error(evaluator(folded), deployed_expansion, inputs);

        json empirical;
        empirical["sample_count"] = inputs.size();
        empirical["u_empirical_expansion"] = u_expansion;
        if (ensemble) {
            std::vector<std::optional<ActivationQuant>> member_aq(ensemble->members.size());
            if (config.activation_bits)
                for (std::size_t m = 0; m < ensemble->members.size(); ++m)
                    member_aq[m] = calibrate_activation_quant(ensemble->members[m], inputs,
                                                              *config.activation_bits);
            auto deployed_ensemble = [&](const Tensor& x) {
                Tensor sum = member_aq[0] ? fake_quant_forward(ensemble->members[0], x,
                                                               *member_aq[0])
                                          : forward(ensemble->members[0], x);
                for (std::size_t m = 1; m < ensemble->members.size(); ++m) {
                    Tensor y = member_aq[m]
                                   ? fake_quant_forward(ensemble->members[m], x, *member_aq[m])
                                   : forward(ensemble->members[m], x);
                    sum = add(sum, y);
                }
                return sum;
            };
            const double u_ensemble =
                logits_max_error(evaluator(folded), deployed_ensemble, inputs);
            empirical["u_empirical_ensemble"] = u_ensemble;
            empirical["ensemble_gap"] =
                logits_max_error(deployed_expansion, deployed_ensemble, inputs);
            empirical["u_empirical"] = u_ensemble;
        } else {
            empirical["u_empirical_ensemble"] = nullptr;
            empirical["ensemble_gap"] = nullptr;
            empirical["u_empirical"] = u_expansion;
        }
        report["empirical"] = empirical;
    } else {
        report["empirical"] = nullptr;
    }

    if (config.include_timing) {
        report["timing_ms"] =
            std::chrono::duration<double, std::milli>(t1 - t0).count();
    }

    PipelineResult result{std::move(report), std::move(folded), std::move(expanded),
                          std::move(expansion), std::move(ensemble), grouping};
    return result;
}

} // namespace resquant
