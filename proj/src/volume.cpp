#include "raunet/volume.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "io/binary.hpp"

namespace raunet {
namespace {

constexpr char kMagic[6] = {'R', 'V', 'O', 'L', '1', '\0'};

void write_header(std::ostream& out, const Extents& e, VoxelType dtype, const Spacing& s) {
    out.write(kMagic, sizeof(kMagic));
    io::put_u32(out, static_cast<std::uint32_t>(e.x));
    io::put_u32(out, static_cast<std::uint32_t>(e.y));
    io::put_u32(out, static_cast<std::uint32_t>(e.z));
    const char d = static_cast<char>(dtype);
    out.write(&d, 1);
    io::put_f32(out, s.x);
    io::put_f32(out, s.y);
    io::put_f32(out, s.z);
}

RvolHeader read_header(std::istream& in, const std::string& path) {
    char magic[6];
    io::get_bytes(in, magic, sizeof(magic), "RVOL magic");
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw DataError(path + " is not an RVOL1 file");
    RvolHeader h;
    h.extents.x = io::get_u32(in, "RVOL extents");
    h.extents.y = io::get_u32(in, "RVOL extents");
    h.extents.z = io::get_u32(in, "RVOL extents");
    if (h.extents.x == 0 || h.extents.y == 0 || h.extents.z == 0)
        throw DataError(path + " has a zero extent " + extents_str(h.extents));
    char d;
    io::get_bytes(in, &d, 1, "RVOL dtype");
    if (d != 0 && d != 1) throw DataError(path + " has unknown dtype " + std::to_string(static_cast<int>(d)));
    h.dtype = static_cast<VoxelType>(d);
    h.spacing.x = io::get_f32(in, "RVOL spacing");
    h.spacing.y = io::get_f32(in, "RVOL spacing");
    h.spacing.z = io::get_f32(in, "RVOL spacing");
    return h;
}

void expect_end(std::istream& in, const std::string& path) {
    if (in.peek() != std::char_traits<char>::eof()) throw DataError(path + " has trailing bytes after the raster");
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path);
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path);
    return in;
}

}  // namespace

std::string extents_str(const Extents& e) {
    return std::to_string(e.x) + "x" + std::to_string(e.y) + "x" + std::to_string(e.z);
}

void write_rvol(const std::string& path, const Volume& volume) {
    auto out = open_out(path);
    write_header(out, volume.extents, VoxelType::F32, volume.spacing);
    io::put_f32_array(out, volume.values.data(), volume.values.size());
    if (!out) throw DataError("failed writing " + path);
}

void write_rvol(const std::string& path, const Mask& mask) {
    auto out = open_out(path);
    write_header(out, mask.extents, VoxelType::U8, mask.spacing);
    out.write(reinterpret_cast<const char*>(mask.values.data()), static_cast<std::streamsize>(mask.values.size()));
    if (!out) throw DataError("failed writing " + path);
}

RvolHeader read_rvol_header(const std::string& path) {
    auto in = open_in(path);
    return read_header(in, path);
}

Volume read_volume(const std::string& path) {
    auto in = open_in(path);
    const RvolHeader h = read_header(in, path);
    Volume v(h.extents, 0.0f, h.spacing);
    if (h.dtype == VoxelType::F32) {
        io::get_f32_array(in, v.values.data(), v.values.size(), "RVOL raster");
    } else {
        std::vector<std::uint8_t> raw(v.values.size());
        io::get_bytes(in, reinterpret_cast<char*>(raw.data()), raw.size(), "RVOL raster");
        std::copy(raw.begin(), raw.end(), v.values.begin());
    }
    expect_end(in, path);
    return v;
}

Mask read_mask(const std::string& path) {
    auto in = open_in(path);
    const RvolHeader h = read_header(in, path);
    if (h.dtype != VoxelType::U8) throw DataError(path + " holds f32 data; a u8 label volume is required");
    Mask m(h.extents, 0, h.spacing);
    io::get_bytes(in, reinterpret_cast<char*>(m.values.data()), m.values.size(), "RVOL raster");
    expect_end(in, path);
    return m;
}

Tensor<float> to_tensor(const Volume& volume) {
    const Extents& e = volume.extents;
    return Tensor<float>({1, 1, e.z, e.y, e.x}, volume.values);
}

Tensor<float> to_tensor(const Mask& mask) {
    const Extents& e = mask.extents;
    return Tensor<float>({1, 1, e.z, e.y, e.x}, std::vector<float>(mask.values.begin(), mask.values.end()));
}

Volume volume_from_tensor(const Tensor<float>& tensor, Spacing spacing) {
    const Shape& s = tensor.shape();
    Extents e;
    if (s.size() == 5 && s[0] == 1 && s[1] == 1) {
        e = {s[4], s[3], s[2]};
    } else if (s.size() == 4 && s[0] == 1 && s[1] == 1) {
        e = {s[3], s[2], 1};
    } else {
        throw ShapeError("volume_from_tensor needs a single-item, single-channel tensor, got " + shape_str(s));
    }
    Volume v(e, 0.0f, spacing);
    v.values = tensor.values();
    return v;
}

std::size_t count_nonzero(const Mask& mask) {
    return static_cast<std::size_t>(std::count_if(mask.values.begin(), mask.values.end(), [](std::uint8_t v) { return v != 0; }));
}

void require_same_extents(const Extents& a, const Extents& b, const std::string& what) {
    if (!(a == b)) throw ShapeError(what + ": extents " + extents_str(a) + " and " + extents_str(b) + " differ");
}

}  // namespace raunet
