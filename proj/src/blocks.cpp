#include "raunet/blocks.hpp"

#include <algorithm>
#include <cmath>

namespace raunet {
namespace {

Shape kernel_shape(std::size_t out, std::size_t in, std::size_t kernel, std::size_t spatial_dims) {
    Shape s{out, in};
    for (std::size_t i = 0; i < spatial_dims; ++i) s.push_back(kernel);
    return s;
}

std::size_t ipow(std::size_t base, std::size_t exp) {
    std::size_t r = 1;
    for (std::size_t i = 0; i < exp; ++i) r *= base;
    return r;
}

}  // namespace

std::size_t conv_parameter_count(std::size_t in, std::size_t out, std::size_t kernel, std::size_t spatial_dims) {
    return ipow(kernel, spatial_dims) * in * out + out;
}

template <typename T>
ConvParams<T> ConvParams<T>::create(std::size_t in, std::size_t out, std::size_t kernel, std::size_t spatial_dims,
                                    std::mt19937_64& rng) {
    const double fan_in = static_cast<double>(in * ipow(kernel, spatial_dims));
    ConvParams p;
    p.weight = Tensor<T>::randn(kernel_shape(out, in, kernel, spatial_dims), rng, std::sqrt(2.0 / fan_in));
    p.bias = Tensor<T>::zeros({out});
    return p;
}

template <typename T>
void ConvParams<T>::visit(const std::string& prefix, const TensorVisitor<T>& fn) {
    fn(prefix + ".weight", weight, true);
    fn(prefix + ".bias", bias, true);
}

template <typename T>
NormParams<T> NormParams<T>::create(std::size_t channels) {
    return {Tensor<T>::full({channels}, T(1)), Tensor<T>::zeros({channels}), BatchNormState<T>::create(channels)};
}

template <typename T>
void NormParams<T>::visit(const std::string& prefix, const TensorVisitor<T>& fn) {
    fn(prefix + ".gamma", gamma, true);
    fn(prefix + ".beta", beta, true);
    fn(prefix + ".running_mean", state.running_mean, false);
    fn(prefix + ".running_var", state.running_var, false);
}

std::size_t ResidualBlockSpec::mid_channels() const {
    return std::max<std::size_t>(1, std::max(in_channels, out_channels) / 4);
}

std::size_t ResidualBlockSpec::parameter_count() const {
    const std::size_t m = mid_channels();
    std::size_t n = 2 * in_channels + conv_parameter_count(in_channels, m, 1, spatial_dims) + 2 * m +
                    conv_parameter_count(m, m, kernel, spatial_dims) + 2 * m +
                    conv_parameter_count(m, out_channels, 1, spatial_dims);
    if (uses_projection()) n += conv_parameter_count(in_channels, out_channels, 1, spatial_dims);
    return n;
}

template <typename T>
ResidualBlockParams<T> ResidualBlockParams<T>::create(const ResidualBlockSpec& spec, std::mt19937_64& rng) {
    if (spec.in_channels == 0 || spec.out_channels == 0)
        throw ShapeError("residual block needs positive channel counts");
    if (spec.spatial_dims != 2 && spec.spatial_dims != 3)
        throw ShapeError("residual block supports 2 or 3 spatial dimensions");
    const std::size_t m = spec.mid_channels();
    ResidualBlockParams p;
    p.spec = spec;
    p.norm[0] = NormParams<T>::create(spec.in_channels);
    p.norm[1] = NormParams<T>::create(m);
    p.norm[2] = NormParams<T>::create(m);
    p.conv[0] = ConvParams<T>::create(spec.in_channels, m, 1, spec.spatial_dims, rng);
    p.conv[1] = ConvParams<T>::create(m, m, spec.kernel, spec.spatial_dims, rng);
    p.conv[2] = ConvParams<T>::create(m, spec.out_channels, 1, spec.spatial_dims, rng);
    if (spec.uses_projection())
        p.projection = ConvParams<T>::create(spec.in_channels, spec.out_channels, 1, spec.spatial_dims, rng);
    return p;
}

template <typename T>
void ResidualBlockParams<T>::visit(const std::string& prefix, const TensorVisitor<T>& fn) {
    for (int i = 0; i < 3; ++i) {
        norm[i].visit(prefix + ".bn" + std::to_string(i), fn);
        conv[i].visit(prefix + ".conv" + std::to_string(i), fn);
    }
    if (projection) projection->visit(prefix + ".proj", fn);
}

template <typename T>
Tensor<T> residual_block(const Tensor<T>& input, ResidualBlockParams<T>& params, NormMode mode) {
    if (input.rank() < 2 || input.extent(1) != params.spec.in_channels)
        throw ShapeError("residual_block: input " + shape_str(input.shape()) + " does not have " +
                         std::to_string(params.spec.in_channels) + " channels");
    Tensor<T> h = input;
    for (int i = 0; i < 3; ++i) {
        auto& n = params.norm[i];
        h = batch_norm(h, n.gamma, n.beta, n.state, mode);
        h = relu(h);
        h = conv(h, params.conv[i].weight, params.conv[i].bias);
    }
    const Tensor<T> identity =
        params.projection ? conv(input, params.projection->weight, params.projection->bias) : input;
    return add(identity, h);
}

std::size_t AttentionModuleSpec::parameter_count() const {
    const ResidualBlockSpec rb{channels, channels, spatial_dims, 3};
    return (trunk_blocks + 3 * depth) * rb.parameter_count() +
           2 * conv_parameter_count(channels, channels, 1, spatial_dims);
}

template <typename T>
SoftMaskParams<T> SoftMaskParams<T>::create(const AttentionModuleSpec& spec, std::mt19937_64& rng) {
    const ResidualBlockSpec rb{spec.channels, spec.channels, spec.spatial_dims, 3};
    SoftMaskParams p;
    p.depth = spec.depth;
    for (std::size_t i = 0; i < spec.depth; ++i) p.encoder.push_back(ResidualBlockParams<T>::create(rb, rng));
    for (std::size_t i = 0; i < spec.depth; ++i) p.skip.push_back(ResidualBlockParams<T>::create(rb, rng));
    for (std::size_t i = 0; i < spec.depth; ++i) p.decoder.push_back(ResidualBlockParams<T>::create(rb, rng));
    for (auto& t : p.tail) t = ConvParams<T>::create(spec.channels, spec.channels, 1, spec.spatial_dims, rng);
    return p;
}

template <typename T>
void SoftMaskParams<T>::visit(const std::string& prefix, const TensorVisitor<T>& fn) {
    for (std::size_t i = 0; i < depth; ++i) encoder[i].visit(prefix + ".enc" + std::to_string(i), fn);
    for (std::size_t i = 0; i < depth; ++i) skip[i].visit(prefix + ".skip" + std::to_string(i), fn);
    for (std::size_t i = 0; i < depth; ++i) decoder[i].visit(prefix + ".dec" + std::to_string(i), fn);
    tail[0].visit(prefix + ".tail0", fn);
    tail[1].visit(prefix + ".tail1", fn);
}

template <typename T>
Tensor<T> soft_mask(const Tensor<T>& input, SoftMaskParams<T>& params, NormMode mode) {
    if (input.rank() != 4 && input.rank() != 5)
        throw ShapeError("soft_mask: expected rank 4 or 5 input, got " + shape_str(input.shape()));
    const std::size_t divisor = ipow(2, params.depth);
    for (std::size_t a = 2; a < input.rank(); ++a)
        if (input.extent(a) % divisor != 0)
            throw ShapeError("soft_mask: depth " + std::to_string(params.depth) +
                             " needs every spatial extent divisible by " + std::to_string(divisor) + ", got " +
                             shape_str(input.shape()));

    // Skip i is taken at the resolution entering encoder level i.
    std::vector<Tensor<T>> skips;
    Tensor<T> h = input;
    for (std::size_t i = 0; i < params.depth; ++i) {
        skips.push_back(residual_block(h, params.skip[i], mode));
        h = residual_block(max_pool(h, std::size_t{2}), params.encoder[i], mode);
    }
    for (std::size_t i = params.depth; i-- > 0;) {
        h = residual_block(h, params.decoder[i], mode);
        h = add(upsample(h, std::size_t{2}), skips[i]);
    }
    h = conv(h, params.tail[0].weight, params.tail[0].bias);
    h = conv(h, params.tail[1].weight, params.tail[1].bias);
    return sigmoid(h);
}

template <typename T>
AttentionModuleParams<T> AttentionModuleParams<T>::create(const AttentionModuleSpec& spec, std::mt19937_64& rng) {
    AttentionModuleParams p;
    p.spec = spec;
    const ResidualBlockSpec rb{spec.channels, spec.channels, spec.spatial_dims, 3};
    for (std::size_t i = 0; i < spec.trunk_blocks; ++i) p.trunk.push_back(ResidualBlockParams<T>::create(rb, rng));
    p.mask = SoftMaskParams<T>::create(spec, rng);
    return p;
}

template <typename T>
void AttentionModuleParams<T>::visit(const std::string& prefix, const TensorVisitor<T>& fn) {
    for (std::size_t i = 0; i < trunk.size(); ++i) trunk[i].visit(prefix + ".trunk" + std::to_string(i), fn);
    mask.visit(prefix + ".mask", fn);
}

template <typename T>
Tensor<T> trunk_branch(const Tensor<T>& input, AttentionModuleParams<T>& params, NormMode mode) {
    Tensor<T> h = input;
    for (auto& block : params.trunk) h = residual_block(h, block, mode);
    return h;
}

template <typename T>
Tensor<T> attention_combine(const Tensor<T>& mask, const Tensor<T>& trunk) {
    return mul(add_scalar(mask, T(1)), trunk);
}

template <typename T>
Tensor<T> attention_module(const Tensor<T>& input, AttentionModuleParams<T>& params, NormMode mode,
                           std::optional<T> forced_mask) {
    if (input.rank() < 2 || input.extent(1) != params.spec.channels)
        throw ShapeError("attention_module: input " + shape_str(input.shape()) + " does not have " +
                         std::to_string(params.spec.channels) + " channels");
    const Tensor<T> f = trunk_branch(input, params, mode);
    const Tensor<T> s = forced_mask ? Tensor<T>::full(f.shape(), *forced_mask) : soft_mask(input, params.mask, mode);
    return attention_combine(s, f);
}

#define RAUNET_INSTANTIATE_BLOCKS(T)                                                                    \
    template struct ConvParams<T>;                                                                      \
    template struct NormParams<T>;                                                                      \
    template struct ResidualBlockParams<T>;                                                             \
    template struct SoftMaskParams<T>;                                                                  \
    template struct AttentionModuleParams<T>;                                                           \
    template Tensor<T> residual_block(const Tensor<T>&, ResidualBlockParams<T>&, NormMode);             \
    template Tensor<T> soft_mask(const Tensor<T>&, SoftMaskParams<T>&, NormMode);                       \
    template Tensor<T> trunk_branch(const Tensor<T>&, AttentionModuleParams<T>&, NormMode);             \
    template Tensor<T> attention_combine(const Tensor<T>&, const Tensor<T>&);                           \
    template Tensor<T> attention_module(const Tensor<T>&, AttentionModuleParams<T>&, NormMode, std::optional<T>);

RAUNET_INSTANTIATE_BLOCKS(float)
RAUNET_INSTANTIATE_BLOCKS(double)

#undef RAUNET_INSTANTIATE_BLOCKS

}  // namespace raunet
