#pragma once

// Synthetic CT-like volumes with analytic liver and tumor ground truth.

#include <cstdint>
#include <string>
#include <vector>

#include "raunet/volume.hpp"

namespace raunet {

struct Point3 {
    double x = 0.0, y = 0.0, z = 0.0;
    bool operator==(const Point3&) const = default;
};

struct Sphere {
    Point3 center;
    double radius = 0.0;
    bool operator==(const Sphere&) const = default;
};

// Coordinates are in voxel units, measured at voxel centres.
struct PhantomSpec {
    Extents extents{64, 64, 48};
    Spacing spacing{1.0f, 1.0f, 1.0f};
    Point3 liver_center{32.0, 30.0, 24.0};
    Point3 liver_axes{20.0, 16.0, 14.0};
    std::vector<Sphere> tumors{{{37.0, 31.0, 24.0}, 6.0}, {{24.0, 26.0, 20.0}, 4.5}};
    float hu_air = -1000.0f;
    float hu_bone = 400.0f;
    float hu_liver = 45.0f;
    float hu_tumor = 30.0f;
    float noise_sigma = 5.0f;
    // Rows [bone_y0, bone_y1) across the full x-z plane; empty when equal.
    std::size_t bone_y0 = 54;
    std::size_t bone_y1 = 58;
    std::uint64_t seed = 7;

    bool operator==(const PhantomSpec&) const = default;
};

struct Phantom {
    Volume hu;
    Mask liver;  // includes the tumors
    Mask tumor;
};

bool in_ellipsoid(const Point3& center, const Point3& axes, double x, double y, double z);

// Throws std::invalid_argument when a tumor voxel falls outside the liver,
// the bone slab meets the liver, or the geometry leaves the volume.
void validate(const PhantomSpec& spec);
Phantom generate_phantom(const PhantomSpec& spec);

std::string phantom_sidecar(const PhantomSpec& spec);
PhantomSpec parse_phantom_sidecar(const std::string& text);
void write_phantom_sidecar(const std::string& path, const PhantomSpec& spec);
PhantomSpec read_phantom_sidecar(const std::string& path);

}  // namespace raunet
