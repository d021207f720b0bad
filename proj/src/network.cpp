#include "resquant/network.hpp"

#include <cmath>
#include <string>

#include "resquant/errors.hpp"

namespace resquant {

namespace {

void validate_dense(const DenseLayer& layer) {
    if (layer.weights.rank() != 2)
        throw StructureError("dense weights must be 2-D, got " +
                             shape_to_string(layer.weights.shape()));
    if (layer.bias) {
        if (layer.bias->rank() != 1 || layer.bias->dim(0) != layer.weights.dim(0))
            throw StructureError("dense bias length must equal the output dimension");
    }
}

void validate_conv(const Conv2dLayer& layer) {
    if (layer.weights.rank() != 4)
        throw StructureError("conv2d weights must be 4-D [out,in,k,k], got " +
                             shape_to_string(layer.weights.shape()));
    if (layer.weights.dim(2) != layer.weights.dim(3))
        throw StructureError("conv2d kernels must be square");
    if (layer.stride < 1) throw StructureError("conv2d stride must be positive");
    if (layer.bias) {
        if (layer.bias->rank() != 1 || layer.bias->dim(0) != layer.weights.dim(0))
            throw StructureError("conv2d bias length must equal the out-channel count");
    }
}

void validate_batch_norm(const BatchNormLayer& layer) {
    const std::size_t n = layer.gamma.size();
    if (layer.gamma.rank() != 1 || layer.beta.rank() != 1 || layer.mean.rank() != 1 ||
        layer.variance.rank() != 1)
        throw StructureError("batch-norm parameters must be 1-D");
    if (layer.beta.size() != n || layer.mean.size() != n || layer.variance.size() != n)
        throw StructureError("batch-norm parameter vectors must share one length");
    if (layer.epsilon < 0.0) throw StructureError("batch-norm epsilon must be >= 0");
    for (double v : layer.variance.data()) {
        if (v < 0.0) throw StructureError("batch-norm variance entries must be >= 0");
        if (v + layer.epsilon <= 0.0)
            throw StructureError("batch-norm variance + epsilon must be positive");
    }
}

std::size_t conv_out_extent(std::size_t in, std::size_t k, int stride, Padding padding) {
    if (padding == Padding::same) {
        return (in + stride - 1) / stride;
    }
    if (in < k) throw StructureError("conv2d valid padding needs input >= kernel size");
    return (in - k) / stride + 1;
}

} // namespace

bool is_weighted(const Layer& layer) {
    return std::holds_alternative<DenseLayer>(layer) || std::holds_alternative<Conv2dLayer>(layer);
}

std::vector<std::size_t> infer_layer_shape(const Layer& layer,
                                           const std::vector<std::size_t>& input_shape) {
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
        validate_dense(*dense);
        if (input_shape.size() != 1 || input_shape[0] != dense->weights.dim(1))
            throw StructureError("dense layer expects 1-D input of length " +
                                 std::to_string(dense->weights.dim(1)) + ", got " +
                                 shape_to_string(input_shape));
        return {dense->weights.dim(0)};
    }
    if (const auto* conv = std::get_if<Conv2dLayer>(&layer)) {
        validate_conv(*conv);
        if (input_shape.size() != 3 || input_shape[0] != conv->weights.dim(1))
            throw StructureError("conv2d layer expects [channels,height,width] input with " +
                                 std::to_string(conv->weights.dim(1)) + " channels, got " +
                                 shape_to_string(input_shape));
        const std::size_t k = conv->weights.dim(2);
        return {conv->weights.dim(0),
                conv_out_extent(input_shape[1], k, conv->stride, conv->padding),
                conv_out_extent(input_shape[2], k, conv->stride, conv->padding)};
    }
    if (const auto* bn = std::get_if<BatchNormLayer>(&layer)) {
        validate_batch_norm(*bn);
        const std::size_t channels = input_shape.empty() ? 0 : input_shape[0];
        if ((input_shape.size() != 1 && input_shape.size() != 3) || channels != bn->gamma.size())
            throw StructureError("batch-norm expects 1-D or [channels,h,w] input with " +
                                 std::to_string(bn->gamma.size()) + " channels, got " +
                                 shape_to_string(input_shape));
        return input_shape;
    }
    return input_shape; // activation
}

Network::Network(std::vector<Layer> layers, std::vector<std::size_t> input_shape)
    : layers_(std::move(layers)), input_shape_(std::move(input_shape)) {
    if (input_shape_.empty()) throw StructureError("network input shape must be non-empty");
    for (std::size_t d : input_shape_)
        if (d == 0) throw StructureError("network input shape has a zero dimension");

    std::vector<std::size_t> shape = input_shape_;
    shapes_.reserve(layers_.size());
    for (const Layer& layer : layers_) {
        shapes_.push_back(shape);
        shape = infer_layer_shape(layer, shape);
    }
    output_shape_ = shape;
}

double apply_activation(Activation kind, double v) {
    switch (kind) {
        case Activation::relu: return v > 0.0 ? v : 0.0;
        case Activation::identity: return v;
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-v));
        case Activation::gelu: return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
    }
    throw InternalError("unknown activation kind");
}

namespace {

Tensor dense_forward(const DenseLayer& layer, const Tensor& x) {
    const std::size_t out = layer.weights.dim(0);
    const std::size_t in = layer.weights.dim(1);
    std::vector<double> y(out, 0.0);
    const auto& w = layer.weights.data();
    for (std::size_t o = 0; o < out; ++o) {
        double acc = layer.bias ? (*layer.bias)[o] : 0.0;
        const double* row = w.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
    return Tensor({out}, std::move(y));
}

Tensor conv_forward(const Conv2dLayer& layer, const Tensor& x) {
    const std::size_t out_c = layer.weights.dim(0);
    const std::size_t in_c = layer.weights.dim(1);
    const std::size_t k = layer.weights.dim(2);
    const std::size_t h = x.dim(1);
    const std::size_t w = x.dim(2);
    const int s = layer.stride;

    const std::size_t out_h = conv_out_extent(h, k, s, layer.padding);
    const std::size_t out_w = conv_out_extent(w, k, s, layer.padding);

    // TF-style 'same' padding: total pad makes ceil(in/s) outputs, split with
    // the smaller half on the leading side.
    long pad_top = 0, pad_left = 0;
    if (layer.padding == Padding::same) {
        const long pad_h = std::max<long>(0, (long)(out_h - 1) * s + (long)k - (long)h);
        const long pad_w = std::max<long>(0, (long)(out_w - 1) * s + (long)k - (long)w);
        pad_top = pad_h / 2;
        pad_left = pad_w / 2;
    }

    std::vector<double> y(out_c * out_h * out_w, 0.0);
    const auto& kw = layer.weights.data();
    const auto& xd = x.data();
    for (std::size_t oc = 0; oc < out_c; ++oc) {
        const double bias = layer.bias ? (*layer.bias)[oc] : 0.0;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                double acc = bias;
                for (std::size_t ic = 0; ic < in_c; ++ic) {
                    for (std::size_t ky = 0; ky < k; ++ky) {
                        const long iy = (long)oy * s - pad_top + (long)ky;
                        if (iy < 0 || iy >= (long)h) continue;
                        for (std::size_t kx = 0; kx < k; ++kx) {
                            const long ix = (long)ox * s - pad_left + (long)kx;
                            if (ix < 0 || ix >= (long)w) continue;
                            acc += kw[((oc * in_c + ic) * k + ky) * k + kx] *
                                   xd[(ic * h + (std::size_t)iy) * w + (std::size_t)ix];
                        }
                    }
                }
                y[(oc * out_h + oy) * out_w + ox] = acc;
            }
        }
    }
    return Tensor({out_c, out_h, out_w}, std::move(y));
}

Tensor batch_norm_forward(const BatchNormLayer& layer, const Tensor& x) {
    const std::size_t channels = layer.gamma.size();
    const std::size_t per_channel = x.size() / channels;
    std::vector<double> y(x.size());
    for (std::size_t c = 0; c < channels; ++c) {
        const double f = layer.gamma[c] / std::sqrt(layer.variance[c] + layer.epsilon);
        const double shift = layer.beta[c] - layer.mean[c] * f;
        for (std::size_t i = 0; i < per_channel; ++i) {
            const std::size_t idx = c * per_channel + i;
            y[idx] = x[idx] * f + shift;
        }
    }
    return Tensor(x.shape(), std::move(y));
}

} // namespace

Tensor apply_layer(const Layer& layer, const Tensor& x) {
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) return dense_forward(*dense, x);
    if (const auto* conv = std::get_if<Conv2dLayer>(&layer)) return conv_forward(*conv, x);
    if (const auto* bn = std::get_if<BatchNormLayer>(&layer)) return batch_norm_forward(*bn, x);
    const auto& act = std::get<ActivationLayer>(layer);
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = apply_activation(act.kind, x[i]);
    return Tensor(x.shape(), std::move(y));
}

Tensor forward(const Network& net, const Tensor& x) {
    if (x.shape() != net.input_shape())
        throw InvalidInputError("input shape " + shape_to_string(x.shape()) +
                                " does not match network input " +
                                shape_to_string(net.input_shape()));
    Tensor current = x;
    for (const Layer& layer : net.layers()) current = apply_layer(layer, current);
    return current;
}

Network fold_batch_norm(const Network& net) {
    std::vector<Layer> folded;
    folded.reserve(net.layers().size());
    const auto& layers = net.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto* bn = std::get_if<BatchNormLayer>(&layers[i]);
        if (!bn) {
            folded.push_back(layers[i]);
            continue;
        }
        if (i == 0 || !is_weighted(layers[i - 1]))
            throw StructureError("batch-norm at layer " + std::to_string(i) +
                                 " has no dense/conv predecessor to fold into");

        Layer& prev = folded.back();
        const Tensor& weights =
            std::holds_alternative<DenseLayer>(prev) ? std::get<DenseLayer>(prev).weights
                                                     : std::get<Conv2dLayer>(prev).weights;
        const auto& bias = std::holds_alternative<DenseLayer>(prev)
                               ? std::get<DenseLayer>(prev).bias
                               : std::get<Conv2dLayer>(prev).bias;

        const std::size_t channels = weights.dim(0);
        if (channels != bn->gamma.size())
            throw StructureError("batch-norm channel count does not match layer " +
                                 std::to_string(i - 1));

        const std::size_t per_channel = weights.size() / channels;
        std::vector<double> new_w(weights.size());
        std::vector<double> new_b(channels);
        for (std::size_t c = 0; c < channels; ++c) {
            const double f = bn->gamma[c] / std::sqrt(bn->variance[c] + bn->epsilon);
            for (std::size_t j = 0; j < per_channel; ++j)
                new_w[c * per_channel + j] = weights[c * per_channel + j] * f;
            const double b = bias ? (*bias)[c] : 0.0;
            new_b[c] = (b - bn->mean[c]) * f + bn->beta[c];
        }

        Tensor wt(weights.shape(), std::move(new_w));
        Tensor bt({channels}, std::move(new_b));
        if (auto* dense = std::get_if<DenseLayer>(&prev)) {
            dense->weights = std::move(wt);
            dense->bias = std::move(bt);
        } else {
            auto& conv = std::get<Conv2dLayer>(prev);
            conv.weights = std::move(wt);
            conv.bias = std::move(bt);
        }
    }
    return Network(std::move(folded), net.input_shape());
}

} // namespace resquant
