#include <doctest.h>

#include <map>

#include "raunet/postprocess.hpp"
#include "../oracles.hpp"

using namespace raunet;

namespace {

// Labels agree up to the numbering, which both sides assign in scan order.
bool same_partition(const LabelVolume& lv, const std::vector<std::int32_t>& ref) {
    return lv.labels == ref;
}

Volume random_prob(const Extents& e, std::mt19937_64& rng) {
    Volume v(e);
    for (auto& x : v.values) x = static_cast<float>(uniform_unit(rng));
    return v;
}

}  // namespace

TEST_CASE("connected components small cases") {
    Mask m({4, 4, 4}, 0);
    m.at(0, 0, 0) = 1;
    m.at(1, 1, 1) = 1;
    CHECK(connected_components(m, 26).count == 1);
    CHECK(connected_components(m, 18).count == 2);
    CHECK(connected_components(m, 6).count == 2);
    CHECK(connected_components(Mask({4, 4, 4}, 0)).count == 0);

    Mask cubes({8, 3, 3}, 0);
    for (std::size_t z = 0; z < 2; ++z)
        for (std::size_t y = 0; y < 2; ++y)
            for (std::size_t x = 0; x < 2; ++x) {
                cubes.at(x, y, z) = 1;
                cubes.at(x + 5, y, z) = 1;
            }
    const auto lv = connected_components(cubes);
    CHECK(lv.count == 2);
    CHECK(component_sizes(lv) == std::vector<std::size_t>{8, 8});
    CHECK(lv.labels[cubes.index(0, 0, 0)] == 1);
    CHECK(lv.labels[cubes.index(5, 0, 0)] == 2);

    Mask plane({3, 3, 1}, 0);
    plane.at(0, 0, 0) = 1;
    plane.at(1, 1, 0) = 1;
    CHECK(connected_components(plane, 8).count == 1);
    CHECK(connected_components(plane, 4).count == 2);
    CHECK_THROWS_AS(connected_components(m, 8), std::invalid_argument);
    CHECK_THROWS_AS(connected_components(m, 10), std::invalid_argument);
}

TEST_CASE("connected components equal a flood fill on random masks") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 60; ++trial) {
        const Extents e{1 + rng() % 16, 1 + rng() % 16, 2 + rng() % 15};
        const Mask m = oracle::random_mask(e, 0.15 + 0.5 * uniform_unit(rng), rng);
        for (int conn : {6, 18, 26}) {
            std::size_t count = 0;
            const auto ref = oracle::flood_fill(m, conn, &count);
            const auto lv = connected_components(m, conn);
            CHECK(lv.count == count);
            CHECK(same_partition(lv, ref));
        }
    }
    for (int trial = 0; trial < 20; ++trial) {
        const Mask m = oracle::random_mask({16, 16, 1}, 0.45, rng);
        for (int conn : {4, 8}) {
            std::size_t count = 0;
            const auto ref = oracle::flood_fill(m, conn, &count);
            CHECK(connected_components(m, conn).labels == ref);
        }
    }
}

TEST_CASE("largest component") {
    Mask m({12, 1, 1}, 0);
    for (std::size_t x = 0; x < 5; ++x) m.at(x, 0, 0) = 1;
    for (std::size_t x = 6; x < 12; ++x) m.at(x, 0, 0) = 1;
    Mask big = largest_component(connected_components(m));
    CHECK(count_nonzero(big) == 6);
    CHECK(big.at(6, 0, 0) == 1);

    Mask tie({5, 1, 1}, 0);
    tie.at(0, 0, 0) = tie.at(1, 0, 0) = tie.at(3, 0, 0) = tie.at(4, 0, 0) = 1;
    const Mask t = largest_component(connected_components(tie));
    CHECK(t.values == std::vector<std::uint8_t>{1, 1, 0, 0, 0});

    CHECK_THROWS_AS(largest_component(connected_components(Mask({3, 3, 3}, 0))), DataError);

    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const Mask r = oracle::random_mask({10, 9, 8}, 0.3, rng);
        const Mask l = largest_component(connected_components(r));
        for (std::size_t i = 0; i < r.size(); ++i)
            if (l.values[i]) CHECK(r.values[i] == 1);
    }
}

TEST_CASE("bounding box") {
    Mask m({100, 100, 100}, 0);
    m.at(50, 50, 50) = 1;
    CHECK(bounding_box(m) == Box{{40, 40, 40}, {60, 60, 60}});
    m.at(3, 3, 3) = 1;
    m.at(50, 50, 50) = 0;
    CHECK(bounding_box(m) == Box{{0, 0, 0}, {13, 13, 13}});
    m.at(98, 3, 3) = 1;
    CHECK(bounding_box(m, 5).max.x == 99);
    CHECK_THROWS_AS(bounding_box(Mask({4, 4, 4}, 0)), DataError);

    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        Mask r({20, 20, 20}, 0);
        for (int k = 0; k < 4; ++k) r.at(2 + rng() % 16, 2 + rng() % 16, 2 + rng() % 16) = 1;
        const Box tight = bounding_box(r, 0);
        const Box grown = bounding_box(r, 3);
        Mask extra = r;
        for (int k = 0; k < 5; ++k)
            extra.at(tight.min.x + rng() % tight.extents().x, tight.min.y + rng() % tight.extents().y,
                     tight.min.z + rng() % tight.extents().z) = 1;
        CHECK(bounding_box(extra, 3) == grown);
        for (std::size_t z = 0; z < 20; ++z)
            for (std::size_t y = 0; y < 20; ++y)
                for (std::size_t x = 0; x < 20; ++x)
                    if (r.at(x, y, z)) CHECK(grown.contains(x, y, z));
    }
}

TEST_CASE("expand_to grows symmetrically and stays inside") {
    const Box b{{10, 0, 5}, {13, 3, 5}};
    const Box e = expand_to(b, {8, 8, 4}, {20, 20, 6});
    CHECK(e.extents().x == 8);
    CHECK(e.extents().y == 8);
    CHECK(e.extents().z == 4);
    CHECK(e.min.y == 0);
    CHECK(e.max.z <= 5);
    CHECK(e.contains(10, 0, 5));
    CHECK(e.contains(13, 3, 5));
    CHECK(expand_to(b, {2, 2, 1}, {20, 20, 6}) == b);
    CHECK_THROWS_AS(expand_to(b, {8, 8, 8}, {20, 20, 6}), DataError);
}

TEST_CASE("tile origins") {
    const auto t = tile_patches({224, 224, 64}, {224, 224, 32}, {112, 112, 16});
    REQUIRE(t.size() == 3);
    CHECK(t[0] == Index3{0, 0, 0});
    CHECK(t[1] == Index3{0, 0, 16});
    CHECK(t[2] == Index3{0, 0, 32});
    CHECK(tile_patches({32, 32, 32}, {32, 32, 32}, {16, 16, 16}) == std::vector<Index3>{{0, 0, 0}});
    const auto c = tile_patches({10, 1, 1}, {4, 1, 1}, {0, 0, 0});
    CHECK(c == std::vector<Index3>{{0, 0, 0}, {4, 0, 0}, {6, 0, 0}});
    CHECK_THROWS_AS(tile_patches({10, 10, 10}, {11, 4, 4}, {1, 1, 1}), DataError);
}

TEST_CASE("tiles cover every voxel") {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 200; ++trial) {
        const Extents box{1 + rng() % 30, 1 + rng() % 30, 1 + rng() % 30};
        const Extents patch{1 + rng() % box.x, 1 + rng() % box.y, 1 + rng() % box.z};
        const Extents stride{1 + rng() % patch.x, 1 + rng() % patch.y, 1 + rng() % patch.z};
        std::vector<int> hits(box.count(), 0);
        for (const Index3& o : tile_patches(box, patch, stride)) {
            REQUIRE(o.x + patch.x <= box.x);
            REQUIRE(o.y + patch.y <= box.y);
            REQUIRE(o.z + patch.z <= box.z);
            for (std::size_t z = 0; z < patch.z; ++z)
                for (std::size_t y = 0; y < patch.y; ++y)
                    for (std::size_t x = 0; x < patch.x; ++x) ++hits[((o.z + z) * box.y + o.y + y) * box.x + o.x + x];
        }
        CHECK(*std::min_element(hits.begin(), hits.end()) >= 1);
    }
}

TEST_CASE("vote merge") {
    SUBCASE("two overlapping probabilities average") {
        const Volume a({1, 1, 1}, 0.4f), b({1, 1, 1}, 0.8f);
        const Volume v = vote_merge({{{0, 0, 0}, a}, {{0, 0, 0}, b}}, {1, 1, 1});
        CHECK(v.values[0] == doctest::Approx(0.6));
        const Volume maj = vote_merge({{{0, 0, 0}, a}, {{0, 0, 0}, b}}, {1, 1, 1}, VoteMode::Majority);
        CHECK(maj.values[0] == 0.5f);
    }
    SUBCASE("random tilings equal dense accumulation") {
        std::mt19937_64 rng(15);
        for (int trial = 0; trial < 50; ++trial) {
            const Extents box{2 + rng() % 20, 2 + rng() % 20, 2 + rng() % 12};
            const Extents patch{1 + rng() % box.x, 1 + rng() % box.y, 1 + rng() % box.z};
            const Extents stride{1 + rng() % patch.x, 1 + rng() % patch.y, 1 + rng() % patch.z};
            std::vector<ProbabilityPatch> patches;
            for (const Index3& o : tile_patches(box, patch, stride)) patches.push_back({o, random_prob(patch, rng)});
            std::shuffle(patches.begin(), patches.end(), rng);
            for (bool majority : {false, true}) {
                const auto ref = oracle::dense_vote(patches, box, majority, 0.5f);
                const Volume v = vote_merge(patches, box, majority ? VoteMode::Majority : VoteMode::Mean);
                for (std::size_t i = 0; i < ref.size(); ++i) {
                    CHECK(v.values[i] == static_cast<float>(ref[i]));
                    CHECK(v.values[i] >= 0.0f);
                    CHECK(v.values[i] <= 1.0f);
                }
            }
        }
    }
    SUBCASE("single coverage passes through") {
        std::mt19937_64 rng(16);
        const Volume p = random_prob({4, 3, 2}, rng);
        CHECK(vote_merge({{{0, 0, 0}, p}}, p.extents).values == p.values);
    }
    SUBCASE("uncovered voxels are rejected") {
        const Volume p({2, 2, 2}, 0.5f);
        CHECK_THROWS_AS(vote_merge({{{0, 0, 0}, p}}, {3, 2, 2}), DataError);
        CHECK_THROWS_AS(vote_merge({{{2, 0, 0}, p}}, {3, 2, 2}), ShapeError);
    }
}

TEST_CASE("binarize, mask_within and paste") {
    Volume p({3, 1, 1});
    p.values = {0.49f, 0.5f, 0.9f};
    CHECK(binarize(p).values == std::vector<std::uint8_t>{0, 1, 1});

    Mask liver({4, 1, 1}, 0), tumor({4, 1, 1}, 0);
    liver.values = {1, 1, 0, 0};
    tumor.values = {0, 1, 1, 0};
    CHECK(mask_within(tumor, liver).values == std::vector<std::uint8_t>{0, 1, 0, 0});
    Mask inside({4, 1, 1}, 0);
    inside.values = {1, 0, 0, 0};
    CHECK(mask_within(inside, liver).values == inside.values);

    Mask part({2, 1, 1}, 1);
    const Mask pasted = paste(part, {5, 2, 1}, {3, 1, 0});
    CHECK(count_nonzero(pasted) == 2);
    CHECK(pasted.at(3, 1, 0) == 1);
    CHECK(pasted.at(4, 1, 0) == 1);
    CHECK_THROWS_AS(paste(part, {5, 2, 1}, {4, 0, 0}), ShapeError);
}
