#include "resquant/quantize.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "resquant/errors.hpp"

namespace resquant {

void validate_config(const QuantConfig& cfg) {
    if (cfg.bits < 2 || cfg.bits > 16)
        throw InvalidInputError("quantization bit width must be in [2, 16], got " +
                                std::to_string(cfg.bits));
    if (cfg.axis != 0 && cfg.axis != -1)
        throw InvalidInputError("quantization axis must be 0 (per-channel) or -1 (per-tensor)");
}

std::size_t channel_count(const Tensor& w, const QuantConfig& cfg) {
    validate_config(cfg);
    if (cfg.axis == -1) return 1;
    if (w.rank() == 0) throw InvalidInputError("cannot quantize a rank-0 tensor per channel");
    return w.dim(0);
}

std::vector<double> compute_scales(const Tensor& w, const QuantConfig& cfg) {
    const std::size_t channels = channel_count(w, cfg);
    const std::size_t per_channel = w.size() / channels;
    const double top = double(cfg.top_code());

    std::vector<double> scales(channels);
    for (std::size_t c = 0; c < channels; ++c) {
        double m = 0.0;
        for (std::size_t i = 0; i < per_channel; ++i)
            m = std::max(m, std::fabs(w[c * per_channel + i]));
        scales[c] = m == 0.0 ? 1.0 : m / top;
    }
    return scales;
}

QuantizedTensor quantize(const Tensor& w, const std::vector<double>& scales,
                         const QuantConfig& cfg) {
    const std::size_t channels = channel_count(w, cfg);
    if (scales.size() != channels)
        throw InvalidInputError("expected " + std::to_string(channels) + " scales, got " +
                                std::to_string(scales.size()));
    for (double s : scales)
        if (!(s > 0.0)) throw InvalidInputError("quantization scales must be positive");

    const std::size_t per_channel = w.size() / channels;
    const double top = double(cfg.top_code());

    QuantizedTensor q;
    q.values.resize(w.size());
    q.shape = w.shape();
    q.scales = scales;
    q.bits = cfg.bits;
    q.axis = cfg.axis;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < per_channel; ++i) {
            const std::size_t idx = c * per_channel + i;
            const double scaled = w[idx] / scales[c];
            const double rounded = std::round(scaled); // halfway cases away from zero
            q.values[idx] = (std::int32_t)std::clamp(rounded, -top, top);
        }
    }
    return q;
}

Tensor dequantize(const QuantizedTensor& q) {
    const std::size_t channels = q.axis == -1 ? 1 : (q.shape.empty() ? 1 : q.shape[0]);
    const std::size_t per_channel = q.size() / channels;
    std::vector<double> out(q.size());
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < per_channel; ++i) {
            const std::size_t idx = c * per_channel + i;
            out[idx] = double(q.values[idx]) * q.scales[c];
        }
    return Tensor(q.shape, std::move(out));
}

} // namespace resquant
