#ifndef RESQUANT_NETWORK_HPP
#define RESQUANT_NETWORK_HPP

#include <optional>
#include <variant>
#include <vector>

#include "resquant/tensor.hpp"

namespace resquant {

enum class Activation { relu, identity, sigmoid, gelu };
enum class Padding { same, valid };

/// Fully connected layer: weights [out, in], optional bias [out].
struct DenseLayer {
    Tensor weights;
    std::optional<Tensor> bias;
};

/// 2-D convolution over [channels, height, width] inputs.
/// Weights [out, in, k, k] (square kernels only), optional bias [out].
struct Conv2dLayer {
    Tensor weights;
    std::optional<Tensor> bias;
    int stride = 1;
    Padding padding = Padding::same;
};

struct BatchNormLayer {
    Tensor gamma;
    Tensor beta;
    Tensor mean;
    Tensor variance;
    double epsilon = 1e-5;
};

struct ActivationLayer {
    Activation kind = Activation::relu;
};

using Layer = std::variant<DenseLayer, Conv2dLayer, BatchNormLayer, ActivationLayer>;

bool is_weighted(const Layer& layer);

/// Sequential feed-forward network. Construction runs shape inference over
/// the layer list and rejects networks whose layers do not compose, so any
/// accepted network evaluates without runtime shape errors.
class Network {
public:
    Network(std::vector<Layer> layers, std::vector<std::size_t> input_shape);

    const std::vector<Layer>& layers() const noexcept { return layers_; }
    const std::vector<std::size_t>& input_shape() const noexcept { return input_shape_; }
    const std::vector<std::size_t>& output_shape() const noexcept { return output_shape_; }

    /// Shape of the tensor flowing into layer `index`.
    const std::vector<std::size_t>& shape_before(std::size_t index) const {
        return shapes_[index];
    }

private:
    std::vector<Layer> layers_;
    std::vector<std::size_t> input_shape_;
    std::vector<std::size_t> output_shape_;
    std::vector<std::vector<std::size_t>> shapes_; // shapes_[i] feeds layers_[i]
};

/// Output shape of a single layer given its input shape. Throws
/// StructureError when the shapes do not compose.
std::vector<std::size_t> infer_layer_shape(const Layer& layer,
                                           const std::vector<std::size_t>& input_shape);

/// Reference forward pass. Pure and deterministic: the same (net, x) always
/// produces bit-identical output. Safe to call concurrently.
Tensor forward(const Network& net, const Tensor& x);

/// Evaluate one layer on an input of matching shape.
Tensor apply_layer(const Layer& layer, const Tensor& x);

double apply_activation(Activation kind, double v);

/// Absorb every batch-norm layer into its preceding dense/conv layer:
/// W' = W * g / sqrt(var + eps) per output channel,
/// b' = (b - mean) * g / sqrt(var + eps) + beta.
/// Forward outputs are preserved. A batch-norm without a directly preceding
/// dense/conv layer is a StructureError.
Network fold_batch_norm(const Network& net);

} // namespace resquant

#endif
