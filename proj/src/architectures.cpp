#include "raunet/architectures.hpp"

#include <algorithm>
#include <stdexcept>

namespace raunet {
namespace {

struct Widths {
    std::size_t input;
    std::size_t conv1;
    std::size_t res[6];
};

const Widths* widths_for(const std::string& name) {
    static const Widths raunet1{1, 16, {16, 32, 64, 128, 256, 256}};
    static const Widths raunet2{1, 32, {32, 64, 128, 256, 512, 512}};
    static const Widths brain{4, 32, {64, 128, 256, 512, 512, 512}};
    if (name == "raunet1") return &raunet1;
    if (name == "raunet2") return &raunet2;
    if (name == "raunet_brain") return &brain;
    return nullptr;
}

std::vector<std::size_t> sources_of(const NetworkSpec& spec, std::size_t i) {
    if (!spec.entries[i].sources.empty()) return spec.entries[i].sources;
    return {i - 1};
}

std::size_t input_channels(const NetworkSpec& spec, std::size_t i) {
    std::size_t c = 0;
    for (std::size_t s : sources_of(spec, i)) c += spec.entries[s].channels;
    return c;
}

std::size_t pow2(std::size_t e) { return std::size_t{1} << e; }

constexpr std::size_t kConvKernel = 3;

}  // namespace

const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Input: return "input";
        case LayerKind::Conv: return "conv";
        case LayerKind::Pool: return "pool";
        case LayerKind::Residual: return "residual";
        case LayerKind::Attention: return "attention";
        case LayerKind::Upsample: return "upsample";
        case LayerKind::SigmoidHead: return "sigmoid_head";
    }
    return "unknown";
}

std::size_t NetworkSpec::index_of(const std::string& entry_name) const {
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (entries[i].name == entry_name) return i;
    throw std::invalid_argument("network " + name + " has no entry named " + entry_name);
}

const std::vector<std::string>& network_names() {
    static const std::vector<std::string> names{"raunet1", "raunet2", "raunet_brain"};
    return names;
}

NetworkSpec network_spec(const std::string& name, std::size_t width_divisor) {
    const Widths* w = widths_for(name);
    if (w == nullptr) throw std::invalid_argument("unknown network '" + name + "' (expected raunet1, raunet2 or raunet_brain)");
    if (width_divisor == 0) throw std::invalid_argument("width divisor must be positive");
    auto ch = [&](std::size_t c) { return std::max<std::size_t>(1, c / width_divisor); };

    NetworkSpec spec;
    spec.name = name;
    spec.width_divisor = width_divisor;
    if (name == "raunet1") {
        spec.spatial_dims = 2;
        spec.input_shape = {1, 256, 256};
    } else if (name == "raunet2") {
        spec.input_shape = {1, 32, 224, 224};
    } else {
        spec.input_shape = {4, 64, 64, 64};
    }
    spec.output_shape = spec.input_shape;
    spec.output_shape[0] = 1;

    auto& e = spec.entries;
    auto push = [&](std::string n, LayerKind k, std::size_t c, std::vector<std::size_t> src = {}, std::size_t d = 0) {
        e.push_back({std::move(n), k, std::move(src), c, d});
        return e.size() - 1;
    };
    auto at = [&](const std::string& n) { return spec.index_of(n); };

    push("Input", LayerKind::Input, w->input);
    push("Conv1", LayerKind::Conv, ch(w->conv1));
    std::size_t prev = ch(w->conv1);
    for (int i = 0; i < 5; ++i) {
        push("Pool" + std::to_string(i + 1), LayerKind::Pool, prev);
        prev = ch(w->res[i]);
        push("Res" + std::to_string(i + 1), LayerKind::Residual, prev);
    }
    push("Res6", LayerKind::Residual, ch(w->res[5]));
    push("Up1", LayerKind::Upsample, ch(w->res[5]));

    // Decoder level k attends to encoder block Res(5-k) at depth k-1.
    for (int k = 1; k <= 4; ++k) {
        const std::string enc = "Res" + std::to_string(5 - k);
        const std::size_t c = e[at(enc)].channels;
        const std::string att = "Att" + std::to_string(k);
        push(att, LayerKind::Attention, c, {at(enc)}, static_cast<std::size_t>(k - 1));
        const std::string up = "Up" + std::to_string(k);
        push("Res" + std::to_string(6 + k), LayerKind::Residual, c, {at(up), at(att)});
        push("Up" + std::to_string(k + 1), LayerKind::Upsample, c);
    }
    push("Conv2", LayerKind::Conv, ch(w->conv1), {at("Up5"), at("Conv1")});
    push("Conv3", LayerKind::SigmoidHead, 1);
    return spec;
}

std::vector<Shape> trace_shapes(const NetworkSpec& spec, const Shape& input_shape) {
    if (input_shape.size() != spec.spatial_dims + 1)
        throw ShapeError(spec.name + ": input shape " + shape_str(input_shape) + " needs " +
                         std::to_string(spec.spatial_dims) + " spatial axes plus channels");
    if (input_shape[0] != spec.input_shape[0])
        throw ShapeError(spec.name + ": input has " + std::to_string(input_shape[0]) + " channels, expected " +
                         std::to_string(spec.input_shape[0]));
    std::vector<Shape> shapes;
    shapes.reserve(spec.entries.size());
    for (std::size_t i = 0; i < spec.entries.size(); ++i) {
        const LayerEntry& entry = spec.entries[i];
        auto fail = [&](const std::string& why) {
            throw ShapeError(spec.name + " entry " + std::to_string(i) + " (" + entry.name + "): " + why);
        };
        if (entry.kind == LayerKind::Input) {
            shapes.push_back(input_shape);
            continue;
        }
        const auto src = sources_of(spec, i);
        Shape s = shapes[src[0]];
        for (std::size_t k = 1; k < src.size(); ++k) {
            const Shape& o = shapes[src[k]];
            if (!std::equal(s.begin() + 1, s.end(), o.begin() + 1))
                fail("cannot concatenate " + shape_str(s) + " with " + shape_str(o));
            s[0] += o[0];
        }
        switch (entry.kind) {
            case LayerKind::Pool:
                for (std::size_t a = 1; a < s.size(); ++a) {
                    if (s[a] % 2 != 0) fail("pooling needs even extents, got " + shape_str(s));
                    s[a] /= 2;
                }
                break;
            case LayerKind::Upsample:
                for (std::size_t a = 1; a < s.size(); ++a) s[a] *= 2;
                break;
            case LayerKind::Attention:
                for (std::size_t a = 1; a < s.size(); ++a)
                    if (s[a] % pow2(entry.depth) != 0)
                        fail("soft mask depth " + std::to_string(entry.depth) + " needs extents divisible by " +
                             std::to_string(pow2(entry.depth)) + ", got " + shape_str(s));
                break;
            default:
                break;
        }
        s[0] = entry.channels;
        shapes.push_back(std::move(s));
    }
    return shapes;
}

std::size_t count_parameters(const NetworkSpec& spec) {
    std::size_t n = 0;
    for (std::size_t i = 1; i < spec.entries.size(); ++i) {
        const LayerEntry& entry = spec.entries[i];
        const std::size_t in = input_channels(spec, i);
        switch (entry.kind) {
            case LayerKind::Conv:
            case LayerKind::SigmoidHead:
                n += conv_parameter_count(in, entry.channels, kConvKernel, spec.spatial_dims);
                break;
            case LayerKind::Residual:
                n += ResidualBlockSpec{in, entry.channels, spec.spatial_dims, kConvKernel}.parameter_count();
                break;
            case LayerKind::Attention:
                n += AttentionModuleSpec{entry.channels, entry.depth, kTrunkBlocks, spec.spatial_dims}.parameter_count();
                break;
            default:
                break;
        }
    }
    return n;
}

std::size_t count_conv_layers(const NetworkSpec& spec) {
    auto block = [](std::size_t in, std::size_t out) { return std::size_t{3} + (in != out ? 1 : 0); };
    std::size_t n = 0;
    for (std::size_t i = 1; i < spec.entries.size(); ++i) {
        const LayerEntry& entry = spec.entries[i];
        switch (entry.kind) {
            case LayerKind::Conv:
            case LayerKind::SigmoidHead: n += 1; break;
            case LayerKind::Residual: n += block(input_channels(spec, i), entry.channels); break;
            case LayerKind::Attention: n += (kTrunkBlocks + 3 * entry.depth) * 3 + 2; break;
            default: break;
        }
    }
    return n;
}

template <typename T>
Network<T>::Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    std::mt19937_64 rng(seed);
    params_.resize(spec_.entries.size());
    const std::size_t dims = spec_.spatial_dims;
    for (std::size_t i = 1; i < spec_.entries.size(); ++i) {
        const LayerEntry& entry = spec_.entries[i];
        const std::size_t in = input_channels(spec_, i);
        switch (entry.kind) {
            case LayerKind::Conv:
            case LayerKind::SigmoidHead:
                params_[i].conv = ConvParams<T>::create(in, entry.channels, kConvKernel, dims, rng);
                break;
            case LayerKind::Residual:
                params_[i].residual =
                    ResidualBlockParams<T>::create({in, entry.channels, dims, kConvKernel}, rng);
                break;
            case LayerKind::Attention:
                params_[i].attention =
                    AttentionModuleParams<T>::create({entry.channels, entry.depth, kTrunkBlocks, dims}, rng);
                break;
            default:
                break;
        }
    }
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& input, NormMode mode, std::vector<Tensor<T>>* activations) {
    if (input.rank() != spec_.spatial_dims + 2)
        throw ShapeError(spec_.name + ": expected rank " + std::to_string(spec_.spatial_dims + 2) + " input, got " +
                         shape_str(input.shape()));
    const Shape per_item(input.shape().begin() + 1, input.shape().end());
    trace_shapes(spec_, per_item);

    std::vector<Tensor<T>> out(spec_.entries.size());
    out[0] = input;
    for (std::size_t i = 1; i < spec_.entries.size(); ++i) {
        const LayerEntry& entry = spec_.entries[i];
        const auto src = sources_of(spec_, i);
        Tensor<T> x = out[src[0]];
        for (std::size_t k = 1; k < src.size(); ++k) x = concat_channels(x, out[src[k]]);
        EntryParams& p = params_[i];
        switch (entry.kind) {
            case LayerKind::Conv: out[i] = conv(x, p.conv->weight, p.conv->bias); break;
            case LayerKind::SigmoidHead: out[i] = sigmoid(conv(x, p.conv->weight, p.conv->bias)); break;
            case LayerKind::Pool: out[i] = max_pool(x, std::size_t{2}); break;
            case LayerKind::Upsample: out[i] = upsample(x, std::size_t{2}); break;
            case LayerKind::Residual: out[i] = residual_block(x, *p.residual, mode); break;
            case LayerKind::Attention: out[i] = attention_module(x, *p.attention, mode); break;
            case LayerKind::Input: break;
        }
    }
    Tensor<T> result = out.back();
    if (activations) *activations = std::move(out);
    return result;
}

template <typename T>
void Network<T>::visit(const TensorVisitor<T>& fn) {
    for (std::size_t i = 1; i < spec_.entries.size(); ++i) {
        const std::string& name = spec_.entries[i].name;
        EntryParams& p = params_[i];
        if (p.conv) p.conv->visit(name, fn);
        if (p.residual) p.residual->visit(name, fn);
        if (p.attention) p.attention->visit(name, fn);
    }
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> Network<T>::parameters() {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    visit([&](const std::string& name, Tensor<T>& t, bool trainable) {
        if (trainable) out.emplace_back(name, t);
    });
    return out;
}

template <typename T>
std::size_t Network<T>::parameter_count() {
    std::size_t n = 0;
    visit([&](const std::string&, Tensor<T>& t, bool trainable) {
        if (trainable) n += t.numel();
    });
    return n;
}

template <typename T>
AttentionModuleParams<T>& Network<T>::attention(const std::string& entry_name) {
    auto& p = params_[spec_.index_of(entry_name)];
    if (!p.attention) throw std::invalid_argument(entry_name + " is not an attention entry");
    return *p.attention;
}

template class Network<float>;
template class Network<double>;

}  // namespace raunet
