#pragma once

// Differentiable tensor operators. Inputs are rank-4 [N, C, H, W] or rank-5
// [N, C, D, H, W] unless stated otherwise. Each op records onto the active
// tape when one is in scope and any input requires grad.

#include <cstddef>
#include <vector>

#include "raunet/tensor.hpp"

namespace raunet {

enum class Padding { Same, Valid };

struct ConvOptions {
    std::vector<std::size_t> stride;  // empty = 1 on every spatial axis
    Padding padding = Padding::Same;
};

// weight: [Cout, Cin, k...] with one kernel extent per spatial axis.
// bias: [Cout], or an undefined tensor for no bias.
// Output extent per axis: floor((in + 2p - k) / stride) + 1, where p = (k-1)/2
// for Same (k must be odd) and p = 0 for Valid.
template <typename T>
Tensor<T> conv(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
               const ConvOptions& options = {});

// Output extent floor((in - window) / stride) + 1. Gradient goes to the first
// maximum in scan order.
template <typename T>
Tensor<T> max_pool(const Tensor<T>& input, const std::vector<std::size_t>& window,
                   const std::vector<std::size_t>& stride);

template <typename T>
Tensor<T> max_pool(const Tensor<T>& input, std::size_t window) {
    const std::vector<std::size_t> w(input.rank() - 2, window);
    return max_pool(input, w, w);
}

// Nearest-neighbour replication by an integer factor per spatial axis.
template <typename T>
Tensor<T> upsample(const Tensor<T>& input, const std::vector<std::size_t>& factor);

template <typename T>
Tensor<T> upsample(const Tensor<T>& input, std::size_t factor) {
    return upsample(input, std::vector<std::size_t>(input.rank() - 2, factor));
}

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.99;

enum class NormMode {
    Train,       // batch statistics; running statistics updated
    Eval,        // running statistics
    BatchStats,  // batch statistics; running statistics untouched
};

template <typename T>
struct BatchNormState {
    Tensor<T> running_mean;
    Tensor<T> running_var;

    static BatchNormState create(std::size_t channels) {
        return {Tensor<T>::zeros({channels}), Tensor<T>::full({channels}, T(1))};
    }
};

// Per-channel normalisation over every non-channel axis. Running statistics
// follow r <- momentum * r + (1 - momentum) * batch, with biased variance.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, NormMode mode);

// relu'(0) is taken as 0.
template <typename T>
Tensor<T> relu(const Tensor<T>& input);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

// Stacks the channels of a, then b. All other extents must agree.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

// One-element tensor holding the sum of all elements.
template <typename T>
Tensor<T> sum(const Tensor<T>& input);

}  // namespace raunet
