// Command-line front end: loads a model container, runs the quantization
// pipeline and writes the report (and optional output containers).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "resquant/errors.hpp"
#include "resquant/model_io.hpp"
#include "resquant/pipeline.hpp"

namespace fs = std::filesystem;
using namespace resquant;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInputError = 2;
constexpr int kExitInternalError = 3;

struct CliOptions {
    std::string model_dir;
    RunConfig config;
    std::string grouping_spec;
    std::string calib_path;
    std::string out_dir;
    std::string report_path;
    int samples = 0;
};

void add_common_flags(CLI::App* cmd, CliOptions& opts) {
    cmd->add_option("model", opts.model_dir, "model container directory")->required();
    cmd->add_option("--bits", opts.config.bits, "weight bit width (2..16)");
    cmd->add_option("--order", opts.config.order, "expansion order K");
    cmd->add_option("--sparsity", opts.config.sparsity, "kept row fraction in (0,1]");
    cmd->add_option("--mask-from", opts.config.mask_from_order,
                    "first masked order (>= 2)");
    cmd->add_option("--grouping", opts.grouping_spec,
                    "cluster sizes like 2,2 or 'auto'");
    cmd->add_option("--threshold-ratio", opts.config.threshold_ratio,
                    "auto grouping acceptance ratio");
    cmd->add_option("--activation-bits", opts.config.activation_bits,
                    "fake-quantize activations at this width");
    cmd->add_option("--calib", opts.calib_path, "calibration inputs (JSON)");
    cmd->add_option("--samples", opts.samples,
                    "generate this many unit-norm inputs when no --calib is given");
    cmd->add_option("--seed", opts.config.seed, "seed for generated inputs");
    cmd->add_option("--out", opts.out_dir, "directory for output containers");
    cmd->add_option("--report", opts.report_path, "report file (default: stdout)");
    cmd->add_flag("--timings", opts.config.include_timing,
                  "include wall-clock timing in the report (breaks byte determinism)");
}

RunConfig finalize_config(CliOptions& opts) {
    RunConfig config = opts.config;
    if (!opts.grouping_spec.empty()) {
        if (opts.grouping_spec == "auto") {
            config.auto_grouping = true;
        } else {
            std::vector<int> sizes;
            std::stringstream ss(opts.grouping_spec);
            std::string item;
            while (std::getline(ss, item, ',')) {
                try {
                    sizes.push_back(std::stoi(item));
                } catch (const std::exception&) {
                    throw InvalidInputError("cannot parse grouping '" + opts.grouping_spec +
                                            "'");
                }
            }
            if (sizes.empty())
                throw InvalidInputError("cannot parse grouping '" + opts.grouping_spec + "'");
            config.grouping = sizes;
        }
    }
    if (!opts.calib_path.empty()) config.calibration_path = opts.calib_path;
    config.generated_samples = opts.samples;
    return config;
}

void write_report(const nlohmann::json& report, const std::string& path) {
    const std::string text = canonical_report(report);
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report to " + path);
    out << text;
}

void write_outputs(const PipelineResult& result, const std::string& out_dir) {
    if (out_dir.empty()) return;
    const fs::path base(out_dir);
    save_model(result.expanded, base / "expanded");
    if (result.ensemble) {
        for (std::size_t m = 0; m < result.ensemble->members.size(); ++m)
            save_model(result.ensemble->members[m],
                       base / ("member_" + std::to_string(m + 1)));
    }
}

nlohmann::json select_keys(const nlohmann::json& report,
                           const std::vector<std::string>& keys) {
    nlohmann::json out;
    for (const std::string& key : keys)
        if (report.contains(key)) out[key] = report.at(key);
    return out;
}

int run(const std::string& mode, CliOptions& opts) {
    const RunConfig config = finalize_config(opts);

    if (mode == "inspect") {
        const Network net = load_model(opts.model_dir);
        write_report(describe_model(net), opts.report_path);
        return kExitOk;
    }

    if (mode == "eval" && !config.calibration_path && config.generated_samples <= 0) {
        throw InvalidInputError("eval needs --calib or --samples to measure logits");
    }

    const Network net = load_model(opts.model_dir);
    const PipelineResult result = run_pipeline(net, config);

    if (mode == "quantize") {
        write_outputs(result, opts.out_dir);
        write_report(result.report, opts.report_path);
    } else if (mode == "bound") {
        write_report(select_keys(result.report, {"config", "bounds", "empirical"}),
                     opts.report_path);
    } else if (mode == "bops") {
        write_report(select_keys(result.report, {"config", "costs", "grouping"}),
                     opts.report_path);
    } else { // eval
        write_report(select_keys(result.report, {"config", "bounds", "empirical"}),
                     opts.report_path);
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"data-free residual quantization toolkit"};
    app.require_subcommand(1);

    CliOptions quantize_opts, bound_opts, bops_opts, eval_opts, inspect_opts;
    add_common_flags(app.add_subcommand("quantize",
                                        "expand, bound and cost a model; write containers"),
                     quantize_opts);
    add_common_flags(app.add_subcommand("bound", "report certified error bounds"), bound_opts);
    add_common_flags(app.add_subcommand("bops", "report bit-operation costs"), bops_opts);
    add_common_flags(app.add_subcommand("eval", "measure the empirical logit error"),
                     eval_opts);
    add_common_flags(app.add_subcommand("inspect", "describe a model container"),
                     inspect_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInputError;
    }

    try {
        if (app.got_subcommand("quantize")) return run("quantize", quantize_opts);
        if (app.got_subcommand("bound")) return run("bound", bound_opts);
        if (app.got_subcommand("bops")) return run("bops", bops_opts);
        if (app.got_subcommand("eval")) return run("eval", eval_opts);
        return run("inspect", inspect_opts);
    } catch (const InvalidInputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternalError;
    }
}
