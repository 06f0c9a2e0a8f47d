#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "raunet/architectures.hpp"
#include "raunet/checkpoint.hpp"
#include "../reference_tables.hpp"

using namespace raunet;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "raunet_unit";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("traced shapes equal the published tables") {
    for (const std::string& name : network_names()) {
        CAPTURE(name);
        const NetworkSpec spec = network_spec(name);
        const auto& table = tables::for_network(name);
        REQUIRE(spec.entries.size() == table.size());
        const auto shapes = trace_shapes(spec, spec.input_shape);
        for (std::size_t i = 0; i < table.size(); ++i) {
            CAPTURE(spec.entries[i].name);
            const std::string expected_name = table[i].first;
            if (expected_name == "Pooling")
                CHECK(spec.entries[i].kind == LayerKind::Pool);
            else
                CHECK(spec.entries[i].name == expected_name);
            CHECK(shapes[i] == tables::parse(table[i].second));
        }
    }
}

TEST_CASE("attention entries carry the published mask depths and skip sources") {
    const NetworkSpec spec = network_spec("raunet2");
    for (std::size_t k = 1; k <= 4; ++k) {
        const LayerEntry& att = spec.entries[spec.index_of("Att" + std::to_string(k))];
        CHECK(att.depth == k - 1);
        REQUIRE(att.sources.size() == 1);
        CHECK(spec.entries[att.sources[0]].name == "Res" + std::to_string(5 - k));
    }
    const LayerEntry& conv2 = spec.entries[spec.index_of("Conv2")];
    CHECK(spec.entries[conv2.sources[0]].name == "Up5");
    CHECK(spec.entries[conv2.sources[1]].name == "Conv1");
}

TEST_CASE("parameter counts") {
    // Frozen from the symbolic count; cross-checked against allocation below.
    CHECK(count_parameters(network_spec("raunet1")) == 563865);
    CHECK(count_parameters(network_spec("raunet2")) == 4128209);
    CHECK(count_parameters(network_spec("raunet_brain")) == 9620289);
    for (const std::string& name : {"raunet1", "raunet2"}) {
        auto net = Network<float>::build(name, {1, 0});
        CHECK(net.parameter_count() == count_parameters(net.spec()));
    }
    for (std::size_t d : {2, 4, 8, 16}) {
        auto net = Network<float>::build("raunet_brain", {d, 0});
        CHECK(net.parameter_count() == count_parameters(net.spec()));
    }
}

TEST_CASE("width divisor keeps input and output channels") {
    const NetworkSpec spec = network_spec("raunet_brain", 64);
    CHECK(spec.input_shape[0] == 4);
    CHECK(spec.entries.back().channels == 1);
    CHECK(spec.entries[spec.index_of("Conv1")].channels == 1);
    CHECK(spec.entries[spec.index_of("Res5")].channels == 8);
    CHECK_THROWS_AS(network_spec("raunet2", 0), std::invalid_argument);
    CHECK_THROWS_AS(network_spec("unet"), std::invalid_argument);
}

TEST_CASE("forward activations match the trace on a reduced network") {
    auto net = Network<float>::build("raunet2", {16, 3});
    std::mt19937_64 rng(1);
    const auto x = Tensor<float>::randn({1, 1, 32, 32, 64}, rng);
    std::vector<Tensor<float>> acts;
    const auto y = net.forward(x, NormMode::BatchStats, &acts);
    const auto shapes = trace_shapes(net.spec(), {1, 32, 32, 64});
    REQUIRE(acts.size() == shapes.size());
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        Shape s = acts[i].shape();
        s.erase(s.begin());
        CHECK(s == shapes[i]);
    }
    CHECK(y.shape() == Shape{1, 1, 32, 32, 64});
    for (float v : y.values()) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("input extents must survive five poolings") {
    const NetworkSpec spec = network_spec("raunet1", 16);
    CHECK_THROWS_WITH_AS(trace_shapes(spec, {1, 48, 40}), doctest::Contains("Pool4"), ShapeError);
    CHECK_THROWS_AS(trace_shapes(spec, {2, 64, 64}), ShapeError);
}

TEST_CASE("same seed gives bit-identical forward passes") {
    std::mt19937_64 rng(2);
    const auto x = Tensor<float>::randn({1, 1, 64, 64}, rng);
    auto a = Network<float>::build("raunet1", {8, 42});
    auto b = Network<float>::build("raunet1", {8, 42});
    CHECK(a.forward(x, NormMode::BatchStats).values() == b.forward(x, NormMode::BatchStats).values());
    auto c = Network<float>::build("raunet1", {8, 43});
    CHECK(a.forward(x, NormMode::BatchStats).values() != c.forward(x, NormMode::BatchStats).values());
}

TEST_CASE("checkpoint round trip") {
    const fs::path path = temp_file("ckpt_roundtrip.rawt");
    auto net = Network<float>::build("raunet2", {8, 5});
    std::mt19937_64 rng(3);
    const auto x = Tensor<float>::randn({1, 1, 32, 32, 32}, rng);
    // Touch the running statistics so they are not at their defaults.
    net.forward(x, NormMode::Train);
    save_network(path.string(), net);
    Network<float> back = load_network(path.string());
    CHECK(back.spec().name == "raunet2");
    CHECK(back.spec().width_divisor == 8);
    CHECK(back.forward(x, NormMode::Eval).values() == net.forward(x, NormMode::Eval).values());

    SUBCASE("bytes survive a second write") {
        const fs::path again = temp_file("ckpt_roundtrip2.rawt");
        save_network(again.string(), back);
        std::ifstream a(path, std::ios::binary), b(again, std::ios::binary);
        const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
        CHECK(sa == sb);
    }
    SUBCASE("corruption is rejected") {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), {});
        const fs::path bad = temp_file("ckpt_bad.rawt");
        {
            std::ofstream out(bad, std::ios::binary);
            out << "XXXXX" << bytes.substr(5);
        }
        CHECK_THROWS_AS(read_checkpoint(bad.string()), DataError);
        {
            std::ofstream out(bad, std::ios::binary);
            out << bytes.substr(0, bytes.size() - 7);
        }
        CHECK_THROWS_AS(read_checkpoint(bad.string()), DataError);
        {
            std::ofstream out(bad, std::ios::binary);
            out << bytes << "z";
        }
        CHECK_THROWS_AS(read_checkpoint(bad.string()), DataError);
    }
    SUBCASE("restore into a different width is rejected") {
        auto other = Network<float>::build("raunet2", {4, 5});
        CHECK_THROWS_AS(restore(other, read_checkpoint(path.string())), DataError);
    }
}
