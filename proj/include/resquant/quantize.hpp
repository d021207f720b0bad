#ifndef RESQUANT_QUANTIZE_HPP
#define RESQUANT_QUANTIZE_HPP

#include <cstdint>
#include <vector>

#include "resquant/tensor.hpp"

namespace resquant {

/// Symmetric scale-and-round quantization setup. Rounding is always
/// half-away-from-zero. axis 0 means one scale per output channel (the
/// leading dimension of a kernel); axis -1 means a single per-tensor scale.
struct QuantConfig {
    int bits = 8;
    int axis = 0;

    /// Top of the symmetric code range, 2^(b-1) - 1. Codes are clamped to
    /// [-top_code, top_code] so the channel max lands exactly on the top code.
    std::int32_t top_code() const { return (std::int32_t(1) << (bits - 1)) - 1; }
};

void validate_config(const QuantConfig& cfg);

/// Integer codes plus the per-channel scales needed to rescale them back.
struct QuantizedTensor {
    std::vector<std::int32_t> values;
    std::vector<std::size_t> shape;
    std::vector<double> scales; // one per channel (or a single per-tensor entry)
    int bits = 8;
    int axis = 0;

    std::size_t size() const { return values.size(); }
};

/// Number of channel slices the config induces on a tensor, and the flat
/// length of each slice. Channels are contiguous for axis 0 kernels.
std::size_t channel_count(const Tensor& w, const QuantConfig& cfg);

/// Per channel c: scale = max|W_c| / (2^(b-1) - 1). An all-zero channel gets
/// scale 1.0 so its codes stay zero and rescaling is a no-op.
std::vector<double> compute_scales(const Tensor& w, const QuantConfig& cfg);

/// values = clamp(round_half_away(W / scale), -(2^(b-1)-1), 2^(b-1)-1).
/// Scales may come from compute_scales or be caller-provided positives.
QuantizedTensor quantize(const Tensor& w, const std::vector<double>& scales,
                         const QuantConfig& cfg);

/// Per channel, values * scale; shape preserved.
Tensor dequantize(const QuantizedTensor& q);

} // namespace resquant

#endif
