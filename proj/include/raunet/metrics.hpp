#pragma once

// Overlap and surface-distance segmentation metrics.

#include <cstddef>
#include <string>
#include <vector>

#include "raunet/volume.hpp"

namespace raunet {

struct OverlapCounts {
    std::size_t seg = 0;           // |S|
    std::size_t gt = 0;            // |G|
    std::size_t intersection = 0;  // |S and G|
    std::size_t total = 0;         // voxels

    OverlapCounts& operator+=(const OverlapCounts& o);
};

OverlapCounts overlap_counts(const Mask& seg, const Mask& gt);

// Undefined ratios are NaN: RVD and sensitivity when |G| = 0, specificity when
// G covers the volume. With |G| = 0, DC and Jaccard are 1 if S is also empty
// and 0 otherwise.
struct OverlapMetrics {
    double dc = 0.0;
    double jaccard = 0.0;
    double voe = 0.0;
    double rvd = 0.0;  // (|S| - |G|) / |G|
    double sensitivity = 0.0;
    double specificity = 0.0;
    bool rvd_defined = true;
};

OverlapMetrics overlap_metrics(const OverlapCounts& counts);
OverlapMetrics overlap_metrics(const Mask& seg, const Mask& gt);

// Foreground voxels with at least one background 6-neighbour; voxels on the
// volume faces always qualify.
Mask surface(const Mask& mask);

// Squared Euclidean distance (in spacing units) from every voxel to the
// nearest non-zero voxel of `sites`; infinity when there are none.
std::vector<double> squared_distance_transform(const Mask& sites, const Spacing& spacing);

// Distance from each surface voxel of `from` to the nearest surface voxel of
// `to`, in scan order of `from`.
std::vector<double> directed_surface_distances(const Mask& from, const Mask& to, const Spacing& spacing);

struct SurfaceMetrics {
    double assd = 0.0;  // mean of both directed distance sets pooled
    double msd = 0.0;   // maximum
    double hd95 = 0.0;  // 95th percentile of the pooled set
};

// Linear-interpolation percentile: rank q * (n - 1) in the sorted values.
double percentile(std::vector<double> values, double q);

// Throws DataError naming the empty mask.
SurfaceMetrics surface_metrics(const Mask& seg, const Mask& gt, const Spacing& spacing);

struct EvalCase {
    std::string id;
    const Mask* seg = nullptr;
    const Mask* gt = nullptr;
    Spacing spacing;
};

struct CaseMetrics {
    std::string id;
    OverlapCounts counts;
    OverlapMetrics overlap;
    SurfaceMetrics surface;
    bool surface_defined = false;  // false when either mask is empty
};

struct EvalReport {
    std::vector<CaseMetrics> cases;  // ordered by case id
    double mean_dc = 0.0;            // Dice per case
    double dice_global = 0.0;        // Dice over pooled voxels

    std::string to_csv() const;
    void write_csv(const std::string& path) const;
};

double dice_global(const std::vector<OverlapCounts>& cases);
EvalReport evaluate(const std::vector<EvalCase>& cases);

}  // namespace raunet
