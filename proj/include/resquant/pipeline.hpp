#ifndef RESQUANT_PIPELINE_HPP
#define RESQUANT_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "resquant/bops.hpp"
#include "resquant/bounds.hpp"
#include "resquant/ensemble.hpp"
#include "resquant/expansion.hpp"
#include "resquant/network.hpp"

namespace resquant {

/// Everything one quantization run needs. Mirrors the CLI flags.
struct RunConfig {
    int bits = 8;
    int order = 1;
    double sparsity = 1.0;
    int mask_from_order = 2;

    std::optional<std::vector<int>> grouping; // explicit cluster sizes
    bool auto_grouping = false;
    std::vector<std::vector<int>> grouping_candidates; // empty: balanced defaults
    double threshold_ratio = 0.1;

    std::optional<int> activation_bits;
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> calibration_path;
    int generated_samples = 0; // fallback sample count when no calibration file
    bool include_timing = false;
};

void validate_run_config(const RunConfig& config);

struct PipelineResult {
    nlohmann::json report;
    Network folded;
    Network expanded;
    NetworkExpansion expansion;
    std::optional<EnsembleNetwork> ensemble;
    std::optional<Grouping> selected_grouping;
};

/// Fold batch-norm, expand every dense/conv kernel, optionally mask and
/// ensemble, then assemble bounds, costs and (given inputs) the measured
/// worst-case logit error into a canonical report. Deterministic for a fixed
/// (network, config, seed); timing is only included when asked for, so the
/// default report is byte-stable.
PipelineResult run_pipeline(const Network& net, const RunConfig& config);

/// Canonical serialization of a report: sorted keys, two-space indent,
/// trailing newline. Byte-identical across runs for the same inputs.
std::string canonical_report(const nlohmann::json& report);

nlohmann::json bound_report_json(const BoundReport& report);
nlohmann::json cost_report_json(const CostReport& report);

/// Calibration inputs: a JSON file {"input_shape": [...], "inputs": [[...]]}
/// with one flat row-major array per input.
std::vector<Tensor> load_calibration(const std::filesystem::path& path,
                                     const std::vector<std::size_t>& expected_shape);

/// Deterministic unit-norm inputs for data-free evaluation.
std::vector<Tensor> generate_unit_inputs(const std::vector<std::size_t>& shape, int count,
                                         std::uint64_t seed);

/// Uniform per-tensor fake quantization of activations, calibrated from
/// sample inputs on a reference network.
struct ActivationQuant {
    int bits = 8;
    double input_scale = 1.0;
    std::vector<double> layer_scales; // one per layer output, final excluded
};

ActivationQuant calibrate_activation_quant(const Network& net, const std::vector<Tensor>& xs,
                                           int bits);

/// Forward pass with the input and every intermediate activation pushed onto
/// the calibrated quantization grid (the final logits stay full precision).
Tensor fake_quant_forward(const Network& net, const Tensor& x, const ActivationQuant& aq);

/// Human-oriented model summary used by the `inspect` subcommand.
nlohmann::json describe_model(const Network& net);

} // namespace resquant

#endif
