#include <doctest.h>

#include <random>

#include "raunet/blocks.hpp"
#include "../oracles.hpp"

using namespace raunet;

namespace {

template <typename T, typename Params>
std::vector<Tensor<T>> round_and_collect(Params& params) {
    std::vector<Tensor<T>> out;
    params.visit("", [&](const std::string&, Tensor<T>& t, bool trainable) {
        for (auto& v : t.values()) v = static_cast<T>(static_cast<float>(v));
        if (trainable) out.push_back(t);
    });
    return out;
}

std::size_t visited_trainable(auto& params) {
    std::size_t n = 0;
    params.visit("", [&](const std::string&, auto& t, bool trainable) {
        if (trainable) n += t.numel();
    });
    return n;
}

}  // namespace

TEST_CASE("residual block parameter counts agree with the allocated tensors") {
    std::mt19937_64 rng(1);
    for (std::size_t dims : {2, 3})
        for (auto [in, out] : {std::pair<std::size_t, std::size_t>{16, 16}, {16, 32}, {64, 32}, {1, 4}, {3, 3}}) {
            const ResidualBlockSpec spec{in, out, dims};
            auto p = ResidualBlockParams<float>::create(spec, rng);
            CHECK(visited_trainable(p) == spec.parameter_count());
            CHECK(p.projection.has_value() == (in != out));
            CHECK(spec.mid_channels() == std::max<std::size_t>(std::max(in, out) / 4, 1));
        }
}

TEST_CASE("attention module parameter counts agree with the allocated tensors") {
    std::mt19937_64 rng(2);
    for (std::size_t depth = 0; depth <= 3; ++depth) {
        const AttentionModuleSpec spec{8, depth, kTrunkBlocks, 3};
        auto p = AttentionModuleParams<float>::create(spec, rng);
        CHECK(visited_trainable(p) == spec.parameter_count());
        CHECK(p.mask.encoder.size() == depth);
        CHECK(p.trunk.size() == kTrunkBlocks);
    }
}

TEST_CASE("residual block with a zeroed last convolution is the identity path") {
    std::mt19937_64 rng(3);
    auto p = ResidualBlockParams<double>::create({4, 4, 3}, rng);
    for (auto& v : p.conv[2].weight.values()) v = 0.0;
    const auto x = Tensor<double>::randn({1, 4, 3, 4, 5}, rng);
    const auto y = residual_block(x, p, NormMode::Train);
    CHECK(y.values() == x.values());
}

TEST_CASE("residual block rejects a channel mismatch") {
    std::mt19937_64 rng(4);
    auto p = ResidualBlockParams<float>::create({4, 8, 2}, rng);
    CHECK_THROWS_AS(residual_block(Tensor<float>({1, 3, 4, 4}), p, NormMode::Train), ShapeError);
}

TEST_CASE("attention algebra with an injected mask") {
    std::mt19937_64 rng(5);
    auto p = AttentionModuleParams<float>::create({6, 2, kTrunkBlocks, 3}, rng);
    const auto x = Tensor<float>::randn({1, 6, 4, 8, 8}, rng);
    const auto trunk = trunk_branch(x, p, NormMode::BatchStats);
    const auto s0 = attention_module(x, p, NormMode::BatchStats, std::optional<float>(0.0f));
    const auto s1 = attention_module(x, p, NormMode::BatchStats, std::optional<float>(1.0f));
    CHECK(s0.values() == trunk.values());
    for (std::size_t i = 0; i < trunk.numel(); ++i) CHECK(s1.data()[i] == 2.0f * trunk.data()[i]);
}

TEST_CASE("soft mask lies in [0, 1] and needs divisible extents") {
    std::mt19937_64 rng(6);
    auto p = AttentionModuleParams<float>::create({4, 3, kTrunkBlocks, 2}, rng);
    const auto x = Tensor<float>::randn({1, 4, 16, 8}, rng, 5.0);
    const auto s = soft_mask(x, p.mask, NormMode::BatchStats);
    CHECK(s.shape() == x.shape());
    for (float v : s.values()) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    CHECK_THROWS_AS(soft_mask(Tensor<float>({1, 4, 12, 8}), p.mask, NormMode::BatchStats), ShapeError);
}

TEST_CASE("gradient: residual block with projection") {
    for (std::size_t dims : {2, 3}) {
        std::mt19937_64 rng(7);
        const Shape xs = dims == 2 ? Shape{2, 3, 5, 4} : Shape{2, 3, 3, 4, 3};
        const auto x = oracle::randn(shape_numel(xs), rng);
        auto make = [&]<typename T>() {
            std::mt19937_64 prng(70 + dims);
            auto params = std::make_shared<ResidualBlockParams<T>>(ResidualBlockParams<T>::create({3, 8, dims}, prng));
            oracle::Problem<T> p;
            p.leaves = {oracle::tensor<T>(xs, x)};
            for (auto& t : round_and_collect<T>(*params)) p.leaves.push_back(t);
            const Tensor<T> in = p.leaves[0];
            p.output = [params, in] { return residual_block(in, *params, NormMode::Train); };
            return p;
        };
        CHECK(oracle::gradient_check<double>(make, 8).max_rel_error < 1e-6);
        CHECK(oracle::gradient_check<float>(make, 8).max_rel_error < 1e-3);
    }
}

TEST_CASE("gradient: attention module with a depth-1 soft mask") {
    std::mt19937_64 rng(9);
    const Shape xs{2, 4, 4, 4, 4};
    const auto x = oracle::randn(shape_numel(xs), rng);
    auto make = [&]<typename T>() {
        std::mt19937_64 prng(90);
        auto params = std::make_shared<AttentionModuleParams<T>>(AttentionModuleParams<T>::create({4, 1, kTrunkBlocks, 3}, prng));
        oracle::Problem<T> p;
        p.leaves = {oracle::tensor<T>(xs, x)};
        for (auto& t : round_and_collect<T>(*params)) p.leaves.push_back(t);
        const Tensor<T> in = p.leaves[0];
        p.output = [params, in] { return attention_module(in, *params, NormMode::Train); };
        return p;
    };
    // Single-channel bottlenecks put many ReLU inputs near zero; a small step
    // keeps the central difference off the kinks.
    const auto d = oracle::gradient_check<double>(make, 10, 3, 1e-7);
    INFO(d.worst_fd << " vs " << d.worst_analytic);
    CHECK(d.max_rel_error < 1e-6);
    CHECK(oracle::gradient_check<float>(make, 10, 3, 1e-7).max_rel_error < 1e-3);
}

TEST_CASE("gradient: blocks with running statistics") {
    // Zero biases would put 1x1 convolutions of dead ReLU outputs exactly on
    // the next kink, so biases and statistics are drawn at random.
    auto perturb = [](auto& params, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        params.visit("", [&](const std::string& key, auto& t, bool) {
            for (auto& v : t.values()) {
                if (key.ends_with(".bias") || key.ends_with(".beta") || key.ends_with(".running_mean"))
                    v = 0.1 * standard_normal(rng);
                else if (key.ends_with(".running_var"))
                    v = 0.5 + uniform_unit(rng);
            }
        });
    };
    std::mt19937_64 rng(11);
    const Shape xs{1, 4, 4, 4, 4};
    const auto x = oracle::randn(shape_numel(xs), rng);
    auto make = [&]<typename T>() {
        std::mt19937_64 prng(110);
        auto params = std::make_shared<AttentionModuleParams<T>>(AttentionModuleParams<T>::create({4, 1, kTrunkBlocks, 3}, prng));
        perturb(*params, 111);
        oracle::Problem<T> p;
        p.leaves = {oracle::tensor<T>(xs, x)};
        for (auto& t : round_and_collect<T>(*params)) p.leaves.push_back(t);
        const Tensor<T> in = p.leaves[0];
        p.output = [params, in] { return attention_module(in, *params, NormMode::Eval); };
        return p;
    };
    CHECK(oracle::gradient_check<double>(make, 12, 3, 1e-8).max_rel_error < 1e-6);
    CHECK(oracle::gradient_check<float>(make, 12, 3, 1e-8).max_rel_error < 1e-3);
}
