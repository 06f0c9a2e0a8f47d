#pragma once

// Residual blocks and attention residual modules.

#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "raunet/ops.hpp"
#include "raunet/tensor.hpp"

namespace raunet {

// Residual blocks stacked on the trunk branch of every attention module.
inline constexpr std::size_t kTrunkBlocks = 2;

// Visitor over named tensors. `trainable` is false for batch-norm running
// statistics, which are checkpointed but not optimised.
template <typename T>
using TensorVisitor = std::function<void(const std::string& name, Tensor<T>& tensor, bool trainable)>;

template <typename T>
struct ConvParams {
    Tensor<T> weight;  // [Cout, Cin, k...]
    Tensor<T> bias;    // [Cout]

    // He-normal weights (variance 2 / fan_in), zero bias.
    static ConvParams create(std::size_t in, std::size_t out, std::size_t kernel, std::size_t spatial_dims,
                             std::mt19937_64& rng);
    void visit(const std::string& prefix, const TensorVisitor<T>& fn);
};

template <typename T>
struct NormParams {
    Tensor<T> gamma;
    Tensor<T> beta;
    BatchNormState<T> state;

    static NormParams create(std::size_t channels);
    void visit(const std::string& prefix, const TensorVisitor<T>& fn);
};

std::size_t conv_parameter_count(std::size_t in, std::size_t out, std::size_t kernel, std::size_t spatial_dims);

struct ResidualBlockSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t spatial_dims = 3;  // 2 or 3
    std::size_t kernel = 3;

    // Bottleneck width of the residual path.
    std::size_t mid_channels() const;
    bool uses_projection() const { return in_channels != out_channels; }
    std::size_t parameter_count() const;
};

// Residual path: (BN, ReLU, 1x1 conv in->mid), (BN, ReLU, k conv mid->mid),
// (BN, ReLU, 1x1 conv mid->out). Identity path: pass-through, or a 1x1
// projection when channel counts differ.
template <typename T>
struct ResidualBlockParams {
    ResidualBlockSpec spec;
    NormParams<T> norm[3];
    ConvParams<T> conv[3];
    std::optional<ConvParams<T>> projection;

    static ResidualBlockParams create(const ResidualBlockSpec& spec, std::mt19937_64& rng);
    void visit(const std::string& prefix, const TensorVisitor<T>& fn);
};

template <typename T>
Tensor<T> residual_block(const Tensor<T>& input, ResidualBlockParams<T>& params, NormMode mode);

struct AttentionModuleSpec {
    std::size_t channels = 1;
    std::size_t depth = 0;
    std::size_t trunk_blocks = kTrunkBlocks;
    std::size_t spatial_dims = 3;

    std::size_t parameter_count() const;
};

// Soft-mask branch. Level i (1..depth) pools, runs an encoder block, and keeps
// a skip block of the level above; the decoder mirrors it with a block,
// upsampling and an elementwise add of the skip. Tail: two 1x1 convolutions
// followed by a sigmoid.
template <typename T>
struct SoftMaskParams {
    std::size_t depth = 0;
    std::vector<ResidualBlockParams<T>> encoder;
    std::vector<ResidualBlockParams<T>> skip;
    std::vector<ResidualBlockParams<T>> decoder;
    ConvParams<T> tail[2];

    static SoftMaskParams create(const AttentionModuleSpec& spec, std::mt19937_64& rng);
    void visit(const std::string& prefix, const TensorVisitor<T>& fn);
};

template <typename T>
Tensor<T> soft_mask(const Tensor<T>& input, SoftMaskParams<T>& params, NormMode mode);

template <typename T>
struct AttentionModuleParams {
    AttentionModuleSpec spec;
    std::vector<ResidualBlockParams<T>> trunk;
    SoftMaskParams<T> mask;

    static AttentionModuleParams create(const AttentionModuleSpec& spec, std::mt19937_64& rng);
    void visit(const std::string& prefix, const TensorVisitor<T>& fn);
};

template <typename T>
Tensor<T> trunk_branch(const Tensor<T>& input, AttentionModuleParams<T>& params, NormMode mode);

// (1 + mask) * trunk.
template <typename T>
Tensor<T> attention_combine(const Tensor<T>& mask, const Tensor<T>& trunk);

// When `forced_mask` is set the soft-mask branch is skipped and S is the
// given constant everywhere.
template <typename T>
Tensor<T> attention_module(const Tensor<T>& input, AttentionModuleParams<T>& params, NormMode mode,
                           std::optional<T> forced_mask = std::nullopt);

}  // namespace raunet
