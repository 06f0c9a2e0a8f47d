#include "raunet/postprocess.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <numeric>
#include <string>
#include <tuple>

namespace raunet {
namespace {

struct Offset {
    int dx, dy, dz;
};

// Neighbours already visited in scan order.
std::vector<Offset> backward_offsets(int connectivity) {
    const bool planar = connectivity == 4 || connectivity == 8;
    const int max_l1 = (connectivity == 6 || connectivity == 4) ? 1 : connectivity == 18 ? 2 : 3;
    std::vector<Offset> out;
    for (int dz = planar ? 0 : -1; dz <= 0; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (dz == 0 && (dy > 0 || (dy == 0 && dx >= 0))) continue;
                if (std::abs(dx) + std::abs(dy) + std::abs(dz) > max_l1) continue;
                out.push_back({dx, dy, dz});
            }
    return out;
}

std::int32_t find_root(std::vector<std::int32_t>& parent, std::int32_t a) {
    while (parent[a] != a) {
        parent[a] = parent[parent[a]];
        a = parent[a];
    }
    return a;
}

void unite(std::vector<std::int32_t>& parent, std::int32_t a, std::int32_t b) {
    a = find_root(parent, a);
    b = find_root(parent, b);
    if (a == b) return;
    if (a < b)
        parent[b] = a;
    else
        parent[a] = b;
}

std::size_t axis_stride(std::size_t patch, std::size_t stride) { return stride == 0 ? patch : stride; }

}  // namespace

LabelVolume connected_components(const Mask& mask, int connectivity) {
    const Extents& e = mask.extents;
    const bool planar = connectivity == 4 || connectivity == 8;
    if (!planar && connectivity != 6 && connectivity != 18 && connectivity != 26)
        throw std::invalid_argument("connected_components: connectivity must be 6, 18 or 26 (4 or 8 in 2D), got " +
                                    std::to_string(connectivity));
    if (planar && e.z != 1)
        throw std::invalid_argument("connected_components: 2D connectivity " + std::to_string(connectivity) +
                                    " needs a single-slice mask");
    const auto offsets = backward_offsets(connectivity);

    LabelVolume lv;
    lv.extents = e;
    lv.connectivity = connectivity;
    lv.labels.assign(e.count(), 0);
    std::vector<std::int32_t> parent{0};

    for (std::size_t z = 0; z < e.z; ++z)
        for (std::size_t y = 0; y < e.y; ++y)
            for (std::size_t x = 0; x < e.x; ++x) {
                const std::size_t i = mask.index(x, y, z);
                if (mask.values[i] == 0) continue;
                std::int32_t label = 0;
                for (const Offset& o : offsets) {
                    const auto nx = static_cast<std::ptrdiff_t>(x) + o.dx;
                    const auto ny = static_cast<std::ptrdiff_t>(y) + o.dy;
                    const auto nz = static_cast<std::ptrdiff_t>(z) + o.dz;
                    if (nx < 0 || ny < 0 || nz < 0 || nx >= static_cast<std::ptrdiff_t>(e.x) ||
                        ny >= static_cast<std::ptrdiff_t>(e.y))
                        continue;
                    const std::int32_t n = lv.labels[mask.index(static_cast<std::size_t>(nx), static_cast<std::size_t>(ny),
                                                                static_cast<std::size_t>(nz))];
                    if (n == 0) continue;
                    if (label == 0)
                        label = n;
                    else
                        unite(parent, label, n);
                }
                if (label == 0) {
                    label = static_cast<std::int32_t>(parent.size());
                    parent.push_back(label);
                }
                lv.labels[i] = label;
            }

    std::vector<std::int32_t> remap(parent.size(), 0);
    std::int32_t next = 0;
    for (std::int32_t& l : lv.labels) {
        if (l == 0) continue;
        const std::int32_t root = find_root(parent, l);
        if (remap[root] == 0) remap[root] = ++next;
        l = remap[root];
    }
    lv.count = static_cast<std::size_t>(next);
    return lv;
}

std::vector<std::size_t> component_sizes(const LabelVolume& lv) {
    std::vector<std::size_t> sizes(lv.count + 1, 0);
    for (std::int32_t l : lv.labels) ++sizes[static_cast<std::size_t>(l)];
    sizes.erase(sizes.begin());
    return sizes;
}

Mask largest_component(const LabelVolume& lv) {
    if (lv.count == 0) throw DataError("largest_component: mask has no foreground component");
    const auto sizes = component_sizes(lv);
    const auto best = static_cast<std::int32_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin()) + 1;
    Mask out(lv.extents, 0);
    for (std::size_t i = 0; i < lv.labels.size(); ++i) out.values[i] = lv.labels[i] == best ? 1 : 0;
    return out;
}

Box bounding_box(const Mask& mask, std::size_t margin) {
    const Extents& e = mask.extents;
    std::array<std::size_t, 3> lo{e.x, e.y, e.z}, hi{0, 0, 0};
    bool any = false;
    for (std::size_t z = 0; z < e.z; ++z)
        for (std::size_t y = 0; y < e.y; ++y)
            for (std::size_t x = 0; x < e.x; ++x) {
                if (mask.at(x, y, z) == 0) continue;
                any = true;
                const std::array<std::size_t, 3> p{x, y, z};
                for (int a = 0; a < 3; ++a) {
                    lo[a] = std::min(lo[a], p[a]);
                    hi[a] = std::max(hi[a], p[a]);
                }
            }
    if (!any) throw DataError("bounding_box: mask is empty");
    std::array<std::size_t, 3> bmin{}, bmax{};
    for (int a = 0; a < 3; ++a) {
        bmin[a] = lo[a] > margin ? lo[a] - margin : 0;
        bmax[a] = std::min(hi[a] + margin, e[a] - 1);
    }
    return {{bmin[0], bmin[1], bmin[2]}, {bmax[0], bmax[1], bmax[2]}};
}

Box expand_to(const Box& box, const Extents& minimum, const Extents& volume) {
    std::array<std::size_t, 3> bmin{box.min.x, box.min.y, box.min.z}, bmax{box.max.x, box.max.y, box.max.z};
    for (std::size_t a = 0; a < 3; ++a) {
        if (minimum[a] > volume[a])
            throw DataError("expand_to: volume extent " + std::to_string(volume[a]) + " on axis " + std::to_string(a) +
                            " is below the required " + std::to_string(minimum[a]));
        const std::size_t have = bmax[a] - bmin[a] + 1;
        if (have >= minimum[a]) continue;
        const std::size_t grow = minimum[a] - have;
        const std::size_t before = std::min(bmin[a], grow / 2);
        bmin[a] -= before;
        bmax[a] += grow - before;
        if (bmax[a] >= volume[a]) {
            const std::size_t shift = bmax[a] - (volume[a] - 1);
            bmax[a] -= shift;
            bmin[a] -= shift;
        }
    }
    return {{bmin[0], bmin[1], bmin[2]}, {bmax[0], bmax[1], bmax[2]}};
}

std::vector<Index3> tile_patches(const Extents& box, const Extents& patch, const Extents& stride) {
    std::array<std::vector<std::size_t>, 3> axis;
    for (std::size_t a = 0; a < 3; ++a) {
        if (patch[a] == 0) throw std::invalid_argument("tile_patches: patch extents must be positive");
        if (patch[a] > box[a])
            throw DataError("tile_patches: patch " + extents_str(patch) + " larger than box " + extents_str(box));
        const std::size_t step = axis_stride(patch[a], stride[a]);
        if (step > patch[a])
            throw std::invalid_argument("tile_patches: stride " + extents_str(stride) + " exceeds patch " +
                                        extents_str(patch) + " and would leave gaps");
        for (std::size_t o = 0;; o += step) {
            if (o + patch[a] >= box[a]) {
                axis[a].push_back(box[a] - patch[a]);
                break;
            }
            axis[a].push_back(o);
        }
    }
    std::vector<Index3> out;
    for (std::size_t z : axis[2])
        for (std::size_t y : axis[1])
            for (std::size_t x : axis[0]) out.push_back({x, y, z});
    return out;
}

Volume vote_merge(const std::vector<ProbabilityPatch>& patches, const Extents& extents, VoteMode mode, float threshold) {
    std::vector<std::size_t> order(patches.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const Index3& p = patches[a].origin;
        const Index3& q = patches[b].origin;
        return std::tie(p.z, p.y, p.x) < std::tie(q.z, q.y, q.x);
    });
    std::vector<double> sum(extents.count(), 0.0);
    std::vector<std::uint32_t> hits(extents.count(), 0);
    const Raster<std::uint8_t> shape_only(extents, 0);
    for (std::size_t k : order) {
        const ProbabilityPatch& p = patches[k];
        const Extents& pe = p.prob.extents;
        if (p.origin.x + pe.x > extents.x || p.origin.y + pe.y > extents.y || p.origin.z + pe.z > extents.z)
            throw ShapeError("vote_merge: patch " + extents_str(pe) + " exceeds box " + extents_str(extents));
        for (std::size_t z = 0; z < pe.z; ++z)
            for (std::size_t y = 0; y < pe.y; ++y)
                for (std::size_t x = 0; x < pe.x; ++x) {
                    const std::size_t i = shape_only.index(p.origin.x + x, p.origin.y + y, p.origin.z + z);
                    const float v = p.prob.at(x, y, z);
                    sum[i] += mode == VoteMode::Mean ? static_cast<double>(v) : (v >= threshold ? 1.0 : 0.0);
                    ++hits[i];
                }
    }
    Volume out(extents, 0.0f);
    for (std::size_t i = 0; i < sum.size(); ++i) {
        if (hits[i] == 0) throw DataError("vote_merge: voxel " + std::to_string(i) + " is not covered by any patch");
        out.values[i] = static_cast<float>(sum[i] / static_cast<double>(hits[i]));
    }
    return out;
}

Mask binarize(const Volume& prob, float threshold) {
    Mask out(prob.extents, 0, prob.spacing);
    for (std::size_t i = 0; i < prob.size(); ++i) out.values[i] = prob.values[i] >= threshold ? 1 : 0;
    return out;
}

Mask mask_within(const Mask& tumor, const Mask& liver) {
    require_same_extents(tumor.extents, liver.extents, "mask_within");
    Mask out = tumor;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (liver.values[i] == 0) out.values[i] = 0;
    return out;
}

Mask paste(const Mask& part, const Extents& extents, const Index3& origin) {
    const Extents& pe = part.extents;
    if (origin.x + pe.x > extents.x || origin.y + pe.y > extents.y || origin.z + pe.z > extents.z)
        throw ShapeError("paste: " + extents_str(pe) + " does not fit " + extents_str(extents));
    Mask out(extents, 0, part.spacing);
    for (std::size_t z = 0; z < pe.z; ++z)
        for (std::size_t y = 0; y < pe.y; ++y)
            for (std::size_t x = 0; x < pe.x; ++x) out.at(origin.x + x, origin.y + y, origin.z + z) = part.at(x, y, z);
    return out;
}

}  // namespace raunet
