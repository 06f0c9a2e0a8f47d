#include "raunet/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>

#include "raunet/random.hpp"

namespace raunet {
namespace {

struct AxisMap {
    std::vector<std::size_t> lo, hi;
    std::vector<double> t;
};

AxisMap axis_map(std::size_t in, std::size_t out) {
    AxisMap m;
    m.lo.resize(out);
    m.hi.resize(out);
    m.t.resize(out);
    for (std::size_t i = 0; i < out; ++i) {
        const double c = out == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
        std::size_t i0 = static_cast<std::size_t>(std::floor(c));
        if (i0 > in - 1) i0 = in - 1;
        m.lo[i] = i0;
        m.hi[i] = std::min(i0 + 1, in - 1);
        m.t[i] = c - static_cast<double>(i0);
    }
    return m;
}

std::vector<std::size_t> nearest_map(std::size_t in, std::size_t out) {
    std::vector<std::size_t> m(out);
    for (std::size_t i = 0; i < out; ++i) {
        const double c = out == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
        m[i] = std::min(static_cast<std::size_t>(std::floor(c + 0.5)), in - 1);
    }
    return m;
}

float rescale_spacing(float s, std::size_t in, std::size_t out) {
    if (out == 1 || in == 1) return s;
    return static_cast<float>(static_cast<double>(s) * static_cast<double>(in - 1) / static_cast<double>(out - 1));
}

Spacing rescaled(const Spacing& s, const Extents& in, const Extents& out) {
    return {rescale_spacing(s.x, in.x, out.x), rescale_spacing(s.y, in.y, out.y), rescale_spacing(s.z, in.z, out.z)};
}

template <typename V>
Raster<V> nearest_resample(const Raster<V>& v, const Extents& e) {
    const auto mx = nearest_map(v.extents.x, e.x);
    const auto my = nearest_map(v.extents.y, e.y);
    const auto mz = nearest_map(v.extents.z, e.z);
    Raster<V> out(e, V{}, rescaled(v.spacing, v.extents, e));
    for (std::size_t z = 0; z < e.z; ++z)
        for (std::size_t y = 0; y < e.y; ++y)
            for (std::size_t x = 0; x < e.x; ++x) out.at(x, y, z) = v.at(mx[x], my[y], mz[z]);
    return out;
}

template <typename V>
Raster<V> crop_raster(const Raster<V>& v, const Index3& o, const Extents& e) {
    if (o.x + e.x > v.extents.x || o.y + e.y > v.extents.y || o.z + e.z > v.extents.z)
        throw ShapeError("crop of " + extents_str(e) + " at (" + std::to_string(o.x) + "," + std::to_string(o.y) + "," +
                         std::to_string(o.z) + ") exceeds " + extents_str(v.extents));
    Raster<V> out(e, V{}, v.spacing);
    for (std::size_t z = 0; z < e.z; ++z)
        for (std::size_t y = 0; y < e.y; ++y) {
            const V* src = &v.at(o.x, o.y + y, o.z + z);
            std::copy(src, src + e.x, &out.at(0, y, z));
        }
    return out;
}

std::vector<Index3> voxels_where(const Extents& e, const std::function<bool(std::size_t)>& pred) {
    std::vector<Index3> out;
    std::size_t i = 0;
    for (std::size_t z = 0; z < e.z; ++z)
        for (std::size_t y = 0; y < e.y; ++y)
            for (std::size_t x = 0; x < e.x; ++x, ++i)
                if (pred(i)) out.push_back({x, y, z});
    return out;
}

std::size_t clamp_origin(std::size_t centre, std::size_t patch, std::size_t extent) {
    const std::size_t half = patch / 2;
    const std::size_t o = centre > half ? centre - half : 0;
    return std::min(o, extent - patch);
}

Index3 centred_origin(const Index3& c, const Extents& patch, const Extents& e) {
    return {clamp_origin(c.x, patch.x, e.x), clamp_origin(c.y, patch.y, e.y), clamp_origin(c.z, patch.z, e.z)};
}

void require_fits(const Extents& patch, const Extents& e, const char* what) {
    if (patch.x == 0 || patch.y == 0 || patch.z == 0) throw ShapeError(std::string(what) + ": patch extents must be positive");
    if (patch.x > e.x || patch.y > e.y || patch.z > e.z)
        throw DataError(std::string(what) + ": patch " + extents_str(patch) + " does not fit volume " + extents_str(e) +
                        "; pad the volume or use a smaller patch");
}

// Origins for `count` patches: the first round(count * fraction) centred on
// `positive` voxels, the rest on `background` voxels.
std::vector<Index3> centred_origins(const std::vector<Index3>& positive, const std::vector<Index3>& background,
                                    const Extents& patch, const Extents& e, std::size_t count, double fraction,
                                    std::mt19937_64& rng) {
    std::size_t n_pos = positive.empty() ? 0 : static_cast<std::size_t>(std::llround(static_cast<double>(count) * fraction));
    n_pos = std::min(n_pos, count);
    if (background.empty()) n_pos = count;
    std::vector<Index3> origins;
    origins.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto& pool = i < n_pos ? positive : background;
        const Index3& c = pool[static_cast<std::size_t>(uniform_index(rng, pool.size()))];
        origins.push_back(centred_origin(c, patch, e));
    }
    return origins;
}

Tensor<float> patch_tensor(const std::vector<const Volume*>& channels, const Index3& o, const Extents& p) {
    Tensor<float> t({1, channels.size(), p.z, p.y, p.x});
    float* dst = t.data().data();
    for (const Volume* v : channels) {
        const Volume c = crop_raster(*v, o, p);
        dst = std::copy(c.values.begin(), c.values.end(), dst);
    }
    return t;
}

Tensor<float> mask_patch(const Mask& m, const Index3& o, const Extents& p) {
    return to_tensor(crop_raster(m, o, p));
}

}  // namespace

Volume hu_window(const Volume& v, float lo, float hi) {
    if (!(lo < hi)) throw std::invalid_argument("hu_window: lower bound must be below upper bound");
    Volume out = v;
    for (float& x : out.values) x = std::clamp(x, lo, hi);
    return out;
}

Volume normalize(const Volume& v, bool* was_constant) {
    double sum = 0.0;
    for (float x : v.values) sum += static_cast<double>(x);
    const double mean = sum / static_cast<double>(v.size());
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (float x : v.values) {
        const double c = static_cast<double>(x) - mean;
        lo = std::min(lo, c);
        hi = std::max(hi, c);
    }
    Volume out = v;
    const bool constant = !(hi > lo);
    if (was_constant) *was_constant = constant;
    if (constant) {
        if (!was_constant) std::cerr << "warning: normalize: constant volume mapped to 0.5\n";
        std::fill(out.values.begin(), out.values.end(), 0.5f);
        return out;
    }
    const double range = hi - lo;
    for (float& x : out.values) x = static_cast<float>((static_cast<double>(x) - mean - lo) / range);
    return out;
}

Volume min_max(const Volume& v) {
    const auto [mn, mx] = std::minmax_element(v.values.begin(), v.values.end());
    Volume out = v;
    const double lo = *mn, hi = *mx;
    if (!(hi > lo)) {
        std::fill(out.values.begin(), out.values.end(), 0.5f);
        return out;
    }
    for (float& x : out.values) x = static_cast<float>((static_cast<double>(x) - lo) / (hi - lo));
    return out;
}

Volume resample(const Volume& v, const Extents& e, Interpolation mode) {
    if (e.x == 0 || e.y == 0 || e.z == 0) throw ShapeError("resample: target extents must be positive");
    if (e == v.extents) return v;
    if (mode == Interpolation::Nearest) return nearest_resample(v, e);
    const AxisMap mx = axis_map(v.extents.x, e.x);
    const AxisMap my = axis_map(v.extents.y, e.y);
    const AxisMap mz = axis_map(v.extents.z, e.z);
    Volume out(e, 0.0f, rescaled(v.spacing, v.extents, e));
    auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
    for (std::size_t z = 0; z < e.z; ++z)
        for (std::size_t y = 0; y < e.y; ++y)
            for (std::size_t x = 0; x < e.x; ++x) {
                auto s = [&](std::size_t xi, std::size_t yi, std::size_t zi) { return static_cast<double>(v.at(xi, yi, zi)); };
                const double tx = mx.t[x], ty = my.t[y], tz = mz.t[z];
                const std::size_t x0 = mx.lo[x], x1 = mx.hi[x], y0 = my.lo[y], y1 = my.hi[y], z0 = mz.lo[z], z1 = mz.hi[z];
                const double c00 = lerp(s(x0, y0, z0), s(x1, y0, z0), tx);
                const double c10 = lerp(s(x0, y1, z0), s(x1, y1, z0), tx);
                const double c01 = lerp(s(x0, y0, z1), s(x1, y0, z1), tx);
                const double c11 = lerp(s(x0, y1, z1), s(x1, y1, z1), tx);
                out.at(x, y, z) = static_cast<float>(lerp(lerp(c00, c10, ty), lerp(c01, c11, ty), tz));
            }
    return out;
}

Mask resample(const Mask& m, const Extents& e) {
    if (e.x == 0 || e.y == 0 || e.z == 0) throw ShapeError("resample: target extents must be positive");
    if (e == m.extents) return m;
    return nearest_resample(m, e);
}

Volume crop(const Volume& v, const Index3& origin, const Extents& extents) { return crop_raster(v, origin, extents); }
Mask crop(const Mask& m, const Index3& origin, const Extents& extents) { return crop_raster(m, origin, extents); }

const char* stage_name(Stage stage) {
    switch (stage) {
        case Stage::Localization: return "localization";
        case Stage::Liver: return "liver";
        case Stage::Tumor: return "tumor";
        case Stage::Brain: return "brain";
    }
    return "unknown";
}

std::vector<std::size_t> select_slices(const Mask& mask, std::uint64_t seed, double nonliver_fraction) {
    const Extents& e = mask.extents;
    std::vector<std::size_t> with, without;
    for (std::size_t z = 0; z < e.z; ++z) {
        const auto* first = &mask.at(0, 0, z);
        const bool any = std::any_of(first, first + e.x * e.y, [](std::uint8_t v) { return v != 0; });
        (any ? with : without).push_back(z);
    }
    std::mt19937_64 rng(seed);
    shuffle_in_place(without, rng);
    const auto keep = static_cast<std::size_t>(std::llround(static_cast<double>(without.size()) * nonliver_fraction));
    with.insert(with.end(), without.begin(), without.begin() + static_cast<std::ptrdiff_t>(std::min(keep, without.size())));
    std::sort(with.begin(), with.end());
    return with;
}

PatchSet slice_sampler_2d(const Volume& v, const Mask& mask, std::size_t size, std::uint64_t seed,
                          double nonliver_fraction) {
    require_same_extents(v.extents, mask.extents, "slice_sampler_2d");
    PatchSet set;
    set.stage = Stage::Localization;
    const Extents plane{v.extents.x, v.extents.y, 1};
    const Extents target{size, size, 1};
    for (std::size_t z : select_slices(mask, seed, nonliver_fraction)) {
        const Volume img = resample(crop(v, {0, 0, z}, plane), target);
        const Mask lab = resample(crop(mask, {0, 0, z}, plane), target);
        Patch p;
        p.origin = {0, 0, z};
        p.extents = plane;
        p.image = Tensor<float>({1, 1, size, size}, img.values);
        p.target = Tensor<float>({1, 1, size, size}, std::vector<float>(lab.values.begin(), lab.values.end()));
        set.patches.push_back(std::move(p));
    }
    return set;
}

PatchSet liver_patch_sampler(const Volume& v, const Mask& mask, std::size_t depth, std::size_t count,
                             std::uint64_t seed) {
    require_same_extents(v.extents, mask.extents, "liver_patch_sampler");
    if (depth == 0) throw std::invalid_argument("liver_patch_sampler: depth must be positive");
    if (v.extents.z < depth)
        throw DataError("liver_patch_sampler: box has " + std::to_string(v.extents.z) + " slices, fewer than the " +
                        std::to_string(depth) + " needed per patch; pad the box in z or skip this case");
    std::mt19937_64 rng(seed);
    PatchSet set;
    set.stage = Stage::Liver;
    const Extents pe{v.extents.x, v.extents.y, depth};
    for (std::size_t i = 0; i < count; ++i) {
        const Index3 o{0, 0, static_cast<std::size_t>(uniform_index(rng, v.extents.z - depth + 1))};
        set.patches.push_back({o, pe, patch_tensor({&v}, o, pe), mask_patch(mask, o, pe)});
    }
    return set;
}

PatchSet tumor_patch_sampler(const Volume& v, const Mask& liver, const Mask& tumor, const Extents& patch,
                             std::size_t count, std::uint64_t seed, double tumor_fraction) {
    require_same_extents(v.extents, liver.extents, "tumor_patch_sampler");
    require_same_extents(v.extents, tumor.extents, "tumor_patch_sampler");
    require_fits(patch, v.extents, "tumor_patch_sampler");
    const auto tumor_voxels = voxels_where(v.extents, [&](std::size_t i) { return tumor.values[i] != 0 && liver.values[i] != 0; });
    auto liver_voxels = voxels_where(v.extents, [&](std::size_t i) { return liver.values[i] != 0 && tumor.values[i] == 0; });
    if (tumor_voxels.empty() && liver_voxels.empty()) throw DataError("tumor_patch_sampler: liver mask is empty");
    if (liver_voxels.empty()) liver_voxels = tumor_voxels;
    std::mt19937_64 rng(seed);
    PatchSet set;
    set.stage = Stage::Tumor;
    for (const Index3& o : centred_origins(tumor_voxels, liver_voxels, patch, v.extents, count, tumor_fraction, rng))
        set.patches.push_back({o, patch, patch_tensor({&v}, o, patch), mask_patch(tumor, o, patch)});
    return set;
}

BratsCase brats_prepare(const std::vector<Volume>& modalities, const Mask& labels, const Extents& patch,
                        std::size_t count, std::uint64_t seed, double tumor_fraction) {
    if (modalities.size() != 4)
        throw DataError("brats_prepare: expected 4 modalities, got " + std::to_string(modalities.size()));
    const Extents& e = labels.extents;
    for (const Volume& m : modalities) require_same_extents(m.extents, e, "brats_prepare");
    require_fits(patch, e, "brats_prepare");

    BratsCase out;
    out.whole_tumor = Mask(e, 0, labels.spacing);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::uint8_t l = labels.values[i];
        out.whole_tumor.values[i] = (l == 1 || l == 2 || l == 4) ? 1 : 0;
    }
    std::vector<Volume> norm;
    for (const Volume& m : modalities) norm.push_back(min_max(m));

    const auto tumor_voxels = voxels_where(e, [&](std::size_t i) { return out.whole_tumor.values[i] != 0; });
    auto region = voxels_where(e, [&](std::size_t i) {
        if (out.whole_tumor.values[i] != 0) return false;
        for (const Volume& m : modalities)
            if (m.values[i] != 0.0f) return true;
        return false;
    });
    if (region.empty()) region = voxels_where(e, [&](std::size_t i) { return out.whole_tumor.values[i] == 0; });
    if (region.empty()) region = tumor_voxels;

    std::mt19937_64 rng(seed);
    out.patches.stage = Stage::Brain;
    const std::vector<const Volume*> channels{&norm[0], &norm[1], &norm[2], &norm[3]};
    for (const Index3& o : centred_origins(tumor_voxels, region, patch, e, count, tumor_fraction, rng))
        out.patches.patches.push_back({o, patch, patch_tensor(channels, o, patch), mask_patch(out.whole_tumor, o, patch)});
    return out;
}

}  // namespace raunet
