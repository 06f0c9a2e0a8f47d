#pragma once

// The three residual attention U-Nets: raunet1 (2D liver localisation),
// raunet2 (3D liver/tumor) and raunet_brain (3D, four input modalities).

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "raunet/blocks.hpp"

namespace raunet {

enum class LayerKind { Input, Conv, Pool, Residual, Attention, Upsample, SigmoidHead };

const char* layer_kind_name(LayerKind kind);

struct LayerEntry {
    std::string name;
    LayerKind kind = LayerKind::Input;
    // Earlier entries feeding this one; empty means the previous entry. Two
    // sources are concatenated along channels (first, then second).
    std::vector<std::size_t> sources;
    std::size_t channels = 1;  // output channels
    std::size_t depth = 0;     // soft-mask depth for attention entries
};

struct NetworkSpec {
    std::string name;
    std::size_t spatial_dims = 3;
    std::size_t width_divisor = 1;
    Shape input_shape;   // [C, spatial...], the published input size
    Shape output_shape;  // [1, spatial...]
    std::vector<LayerEntry> entries;

    std::size_t index_of(const std::string& entry_name) const;
};

const std::vector<std::string>& network_names();

// Channel widths are divided by `width_divisor` (floored, at least 1); the
// input and output channel counts are kept.
NetworkSpec network_spec(const std::string& name, std::size_t width_divisor = 1);

// Per-entry output shapes [C, spatial...] for an input of `input_shape`,
// without allocating activations.
std::vector<Shape> trace_shapes(const NetworkSpec& spec, const Shape& input_shape);

// Trainable scalars: conv weights and biases, batch-norm gamma and beta.
std::size_t count_parameters(const NetworkSpec& spec);

// Number of convolution layers, projections and mask tails included.
std::size_t count_conv_layers(const NetworkSpec& spec);

struct BuildOptions {
    std::size_t width_divisor = 1;
    std::uint64_t seed = 0;
};

template <typename T>
class Network {
public:
    Network() = default;
    Network(NetworkSpec spec, std::uint64_t seed);

    static Network build(const std::string& name, const BuildOptions& options = {}) {
        return Network(network_spec(name, options.width_divisor), options.seed);
    }

    const NetworkSpec& spec() const { return spec_; }

    // input: [N, C, spatial...]. Returns [N, 1, spatial...] probabilities.
    // When `activations` is given it receives every entry's output.
    Tensor<T> forward(const Tensor<T>& input, NormMode mode, std::vector<Tensor<T>>* activations = nullptr);

    // Every parameter and batch-norm buffer in a fixed order.
    void visit(const TensorVisitor<T>& fn);
    std::vector<std::pair<std::string, Tensor<T>>> parameters();
    std::size_t parameter_count();

    AttentionModuleParams<T>& attention(const std::string& entry_name);

private:
    struct EntryParams {
        std::optional<ConvParams<T>> conv;
        std::optional<ResidualBlockParams<T>> residual;
        std::optional<AttentionModuleParams<T>> attention;
    };

    NetworkSpec spec_;
    std::vector<EntryParams> params_;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace raunet
