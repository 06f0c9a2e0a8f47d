#pragma once

// 3D rasters and the RVOL file format.
//
// RVOL layout (little-endian):
//   "RVOL1\0"             6 bytes
//   u32 x, y, z           extents
//   u8 dtype              0 = f32, 1 = u8
//   f32 sx, sy, sz        spacing in mm
//   raster                x fastest, z slowest

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "raunet/tensor.hpp"

namespace raunet {

struct Extents {
    std::size_t x = 1, y = 1, z = 1;

    std::size_t count() const { return x * y * z; }
    std::size_t operator[](std::size_t axis) const { return axis == 0 ? x : axis == 1 ? y : z; }
    bool operator==(const Extents&) const = default;
};

struct Index3 {
    std::size_t x = 0, y = 0, z = 0;

    std::size_t operator[](std::size_t axis) const { return axis == 0 ? x : axis == 1 ? y : z; }
    auto operator<=>(const Index3&) const = default;
};

struct Spacing {
    float x = 1.0f, y = 1.0f, z = 1.0f;
    bool operator==(const Spacing&) const = default;
};

std::string extents_str(const Extents& e);

template <typename V>
struct Raster {
    Extents extents;
    Spacing spacing;
    std::vector<V> values;

    Raster() = default;
    explicit Raster(Extents e, V fill = V{}, Spacing s = {}) : extents(e), spacing(s), values(e.count(), fill) {
        if (e.x == 0 || e.y == 0 || e.z == 0) throw ShapeError("raster extents must be positive, got " + extents_str(e));
    }

    std::size_t size() const { return values.size(); }
    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const { return (z * extents.y + y) * extents.x + x; }
    V& at(std::size_t x, std::size_t y, std::size_t z) { return values[index(x, y, z)]; }
    const V& at(std::size_t x, std::size_t y, std::size_t z) const { return values[index(x, y, z)]; }
};

using Volume = Raster<float>;
using Mask = Raster<std::uint8_t>;

enum class VoxelType : std::uint8_t { F32 = 0, U8 = 1 };

struct RvolHeader {
    Extents extents;
    VoxelType dtype = VoxelType::F32;
    Spacing spacing;
};

inline constexpr std::size_t kRvolHeaderBytes = 6 + 12 + 1 + 12;

void write_rvol(const std::string& path, const Volume& volume);
void write_rvol(const std::string& path, const Mask& mask);
RvolHeader read_rvol_header(const std::string& path);
// u8 files are widened to float.
Volume read_volume(const std::string& path);
// Requires a u8 file.
Mask read_mask(const std::string& path);

// [1, 1, z, y, x] views for network input and output.
Tensor<float> to_tensor(const Volume& volume);
Tensor<float> to_tensor(const Mask& mask);
Volume volume_from_tensor(const Tensor<float>& tensor, Spacing spacing = {});

std::size_t count_nonzero(const Mask& mask);
void require_same_extents(const Extents& a, const Extents& b, const std::string& what);

}  // namespace raunet
