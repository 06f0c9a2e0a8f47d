#pragma once

// Intensity windowing, normalisation, resampling and patch sampling.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "raunet/volume.hpp"

namespace raunet {

inline constexpr float kWindowLow = -100.0f;
inline constexpr float kWindowHigh = 200.0f;

// Clamps every voxel to [lo, hi].
Volume hu_window(const Volume& v, float lo = kWindowLow, float hi = kWindowHigh);

// Subtracts the mean, then maps [min, max] affinely onto [0, 1]. Statistics
// are taken over the whole volume. A constant volume becomes all 0.5 and sets
// `was_constant` (a warning is printed when the pointer is null).
Volume normalize(const Volume& v, bool* was_constant = nullptr);

// Per-volume min-max to [0, 1]; constant input becomes 0.5.
Volume min_max(const Volume& v);

enum class Interpolation { Trilinear, Nearest };

// Corner-aligned: output index i maps to source coordinate i * (in - 1) / (out - 1)
// on each axis (0 when out == 1). Nearest rounds half up. Identical extents
// return an exact copy. Spacing is rescaled so the physical extent is kept.
Volume resample(const Volume& v, const Extents& extents, Interpolation mode = Interpolation::Trilinear);
Mask resample(const Mask& m, const Extents& extents);

// Axis-aligned sub-block [origin, origin + extents).
Volume crop(const Volume& v, const Index3& origin, const Extents& extents);
Mask crop(const Mask& m, const Index3& origin, const Extents& extents);

enum class Stage { Localization, Liver, Tumor, Brain };
const char* stage_name(Stage stage);

struct Patch {
    Index3 origin;      // in the sampled volume
    Extents extents;
    Tensor<float> image;   // [1, C, z, y, x] (or [1, C, y, x] for slices)
    Tensor<float> target;  // [1, 1, ...]
};

struct PatchSet {
    Stage stage = Stage::Liver;
    std::vector<Patch> patches;
};

// z indices of every slice containing foreground plus round(n / 3) of the
// remaining n slices, drawn without replacement; ascending.
std::vector<std::size_t> select_slices(const Mask& mask, std::uint64_t seed, double nonliver_fraction = 1.0 / 3.0);

// Selected slices resampled to size x size, as 2D patches.
PatchSet slice_sampler_2d(const Volume& v, const Mask& mask, std::size_t size, std::uint64_t seed,
                          double nonliver_fraction = 1.0 / 3.0);

// `count` full-plane windows of `depth` contiguous slices at seeded z origins
// in [0, M - depth]. Throws DataError when M < depth.
PatchSet liver_patch_sampler(const Volume& v, const Mask& mask, std::size_t depth, std::size_t count,
                             std::uint64_t seed);

// `count` patches, round(count * tumor_fraction) centred on random tumor
// voxels and the rest on random liver voxels outside the tumor. Origins are
// clamped so every patch lies inside the volume and contains its centre
// voxel, hence intersects the liver.
PatchSet tumor_patch_sampler(const Volume& v, const Mask& liver, const Mask& tumor, const Extents& patch,
                             std::size_t count, std::uint64_t seed, double tumor_fraction = 0.5);

struct BratsCase {
    PatchSet patches;  // four-channel images, whole-tumor targets
    Mask whole_tumor;
};

// Labels 1, 2 and 4 merge into the whole-tumor mask. Modalities are min-max
// normalised independently. Non-tumor patches are centred inside the region
// where any modality is non-zero.
BratsCase brats_prepare(const std::vector<Volume>& modalities, const Mask& labels, const Extents& patch,
                        std::size_t count, std::uint64_t seed, double tumor_fraction = 0.5);

}  // namespace raunet
