#pragma once

// Connected components, bounding boxes, patch tiling and probability merging.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "raunet/volume.hpp"

namespace raunet {

struct LabelVolume {
    Extents extents;
    std::vector<std::int32_t> labels;  // 0 background, components 1..count
    int connectivity = 26;
    std::size_t count = 0;
};

// Maximal connected foreground sets, numbered in order of their first voxel
// in x-fastest scan order. Connectivity 6, 18 or 26; 4 or 8 for single-slice
// masks (z extent 1).
LabelVolume connected_components(const Mask& mask, int connectivity = 26);

std::vector<std::size_t> component_sizes(const LabelVolume& lv);

// Voxels of the largest component; ties go to the smaller label. Throws
// DataError when there are no components.
Mask largest_component(const LabelVolume& lv);

// Inclusive voxel bounds.
struct Box {
    Index3 min, max;

    Extents extents() const { return {max.x - min.x + 1, max.y - min.y + 1, max.z - min.z + 1}; }
    bool contains(std::size_t x, std::size_t y, std::size_t z) const {
        return x >= min.x && x <= max.x && y >= min.y && y <= max.y && z >= min.z && z <= max.z;
    }
    bool operator==(const Box&) const = default;
};

// Tight box of the foreground grown by `margin` on every side, clipped to the
// volume. Throws DataError on an empty mask.
Box bounding_box(const Mask& mask, std::size_t margin = 10);

// Grows `box` symmetrically (then shifts it inward) until every axis spans at
// least `minimum`. Throws DataError when the volume itself is smaller.
Box expand_to(const Box& box, const Extents& minimum, const Extents& volume);

// Regular grid of patch origins with step `stride` per axis; the last origin
// on each axis is clamped so the final patch ends at the boundary. A zero
// stride means the patch extent. Ordered z-major, then y, then x.
std::vector<Index3> tile_patches(const Extents& box, const Extents& patch, const Extents& stride);

struct ProbabilityPatch {
    Index3 origin;
    Volume prob;
};

enum class VoteMode {
    Mean,      // per-voxel mean probability
    Majority,  // per-voxel fraction of patches with probability >= threshold
};

// Patches are accumulated in (z, y, x) origin order in double precision.
// Throws DataError if any voxel is left uncovered.
Volume vote_merge(const std::vector<ProbabilityPatch>& patches, const Extents& extents,
                  VoteMode mode = VoteMode::Mean, float threshold = 0.5f);

// 1 where prob >= threshold.
Mask binarize(const Volume& prob, float threshold = 0.5f);

// Tumor voxels outside the liver are cleared.
Mask mask_within(const Mask& tumor, const Mask& liver);

// Writes `part` into a zero mask of `extents` at `origin`.
Mask paste(const Mask& part, const Extents& extents, const Index3& origin);

}  // namespace raunet
