#include "raunet/phantom.hpp"

#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "raunet/random.hpp"

namespace raunet {
namespace {

using nlohmann::json;

json point_json(const Point3& p) { return json::array({p.x, p.y, p.z}); }

Point3 point_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

bool in_sphere(const Sphere& s, double x, double y, double z) {
    const double dx = x - s.center.x, dy = y - s.center.y, dz = z - s.center.z;
    return dx * dx + dy * dy + dz * dz <= s.radius * s.radius;
}

}  // namespace

bool in_ellipsoid(const Point3& c, const Point3& a, double x, double y, double z) {
    const double u = (x - c.x) / a.x, v = (y - c.y) / a.y, w = (z - c.z) / a.z;
    return u * u + v * v + w * w <= 1.0;
}

void validate(const PhantomSpec& s) {
    const Extents& e = s.extents;
    if (e.x == 0 || e.y == 0 || e.z == 0) throw std::invalid_argument("phantom: extents must be positive");
    if (s.liver_axes.x <= 0 || s.liver_axes.y <= 0 || s.liver_axes.z <= 0)
        throw std::invalid_argument("phantom: liver semi-axes must be positive");
    if (s.noise_sigma < 0) throw std::invalid_argument("phantom: noise sigma must be non-negative");
    if (s.bone_y0 > s.bone_y1 || s.bone_y1 > e.y) throw std::invalid_argument("phantom: bone slab rows out of range");
    const auto lo = [](double c, double a) { return c - a; };
    const auto hi = [](double c, double a) { return c + a; };
    if (lo(s.liver_center.x, s.liver_axes.x) < 0 || hi(s.liver_center.x, s.liver_axes.x) > double(e.x - 1) ||
        lo(s.liver_center.y, s.liver_axes.y) < 0 || hi(s.liver_center.y, s.liver_axes.y) > double(e.y - 1) ||
        lo(s.liver_center.z, s.liver_axes.z) < 0 || hi(s.liver_center.z, s.liver_axes.z) > double(e.z - 1))
        throw std::invalid_argument("phantom: liver ellipsoid leaves the volume");
    if (s.bone_y0 < s.bone_y1 &&
        double(s.bone_y0) <= s.liver_center.y + s.liver_axes.y && double(s.bone_y1 - 1) >= s.liver_center.y - s.liver_axes.y)
        throw std::invalid_argument("phantom: bone slab intersects the liver");
    for (std::size_t t = 0; t < s.tumors.size(); ++t) {
        const Sphere& sp = s.tumors[t];
        if (sp.radius <= 0) throw std::invalid_argument("phantom: tumor radius must be positive");
        bool any = false;
        for (std::size_t z = 0; z < e.z; ++z)
            for (std::size_t y = 0; y < e.y; ++y)
                for (std::size_t x = 0; x < e.x; ++x) {
                    if (!in_sphere(sp, double(x), double(y), double(z))) continue;
                    any = true;
                    if (!in_ellipsoid(s.liver_center, s.liver_axes, double(x), double(y), double(z)))
                        throw std::invalid_argument("phantom: tumor " + std::to_string(t) + " escapes the liver at voxel (" +
                                                    std::to_string(x) + ", " + std::to_string(y) + ", " + std::to_string(z) + ")");
                }
        if (!any) throw std::invalid_argument("phantom: tumor " + std::to_string(t) + " covers no voxel centre");
    }
}

Phantom generate_phantom(const PhantomSpec& s) {
    validate(s);
    const Extents& e = s.extents;
    Phantom p{Volume(e, s.hu_air, s.spacing), Mask(e, 0, s.spacing), Mask(e, 0, s.spacing)};
    std::mt19937_64 rng(s.seed);
    for (std::size_t z = 0; z < e.z; ++z)
        for (std::size_t y = 0; y < e.y; ++y)
            for (std::size_t x = 0; x < e.x; ++x) {
                const double fx = double(x), fy = double(y), fz = double(z);
                float hu = s.hu_air;
                if (y >= s.bone_y0 && y < s.bone_y1) hu = s.hu_bone;
                if (in_ellipsoid(s.liver_center, s.liver_axes, fx, fy, fz)) {
                    hu = s.hu_liver;
                    p.liver.at(x, y, z) = 1;
                    for (const Sphere& t : s.tumors)
                        if (in_sphere(t, fx, fy, fz)) {
                            hu = s.hu_tumor;
                            p.tumor.at(x, y, z) = 1;
                        }
                }
                // One draw per voxel regardless of sigma keeps the stream aligned.
                const double n = standard_normal(rng);
                p.hu.at(x, y, z) = hu + static_cast<float>(n * s.noise_sigma);
            }
    return p;
}

std::string phantom_sidecar(const PhantomSpec& s) {
    json j;
    j["extents"] = {s.extents.x, s.extents.y, s.extents.z};
    j["spacing"] = {s.spacing.x, s.spacing.y, s.spacing.z};
    j["liver_center"] = point_json(s.liver_center);
    j["liver_axes"] = point_json(s.liver_axes);
    j["tumors"] = json::array();
    for (const Sphere& t : s.tumors) j["tumors"].push_back({{"center", point_json(t.center)}, {"radius", t.radius}});
    j["hu_air"] = s.hu_air;
    j["hu_bone"] = s.hu_bone;
    j["hu_liver"] = s.hu_liver;
    j["hu_tumor"] = s.hu_tumor;
    j["noise_sigma"] = s.noise_sigma;
    j["bone_rows"] = {s.bone_y0, s.bone_y1};
    j["seed"] = s.seed;
    return j.dump(2) + "\n";
}

PhantomSpec parse_phantom_sidecar(const std::string& text) {
    PhantomSpec s;
    try {
        const json j = json::parse(text);
        const auto& ex = j.at("extents");
        s.extents = {ex.at(0).get<std::size_t>(), ex.at(1).get<std::size_t>(), ex.at(2).get<std::size_t>()};
        const auto& sp = j.at("spacing");
        s.spacing = {sp.at(0).get<float>(), sp.at(1).get<float>(), sp.at(2).get<float>()};
        s.liver_center = point_from(j.at("liver_center"));
        s.liver_axes = point_from(j.at("liver_axes"));
        s.tumors.clear();
        for (const auto& t : j.at("tumors")) s.tumors.push_back({point_from(t.at("center")), t.at("radius").get<double>()});
        s.hu_air = j.at("hu_air").get<float>();
        s.hu_bone = j.at("hu_bone").get<float>();
        s.hu_liver = j.at("hu_liver").get<float>();
        s.hu_tumor = j.at("hu_tumor").get<float>();
        s.noise_sigma = j.at("noise_sigma").get<float>();
        s.bone_y0 = j.at("bone_rows").at(0).get<std::size_t>();
        s.bone_y1 = j.at("bone_rows").at(1).get<std::size_t>();
        s.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& ex) {
        throw DataError(std::string("phantom sidecar: ") + ex.what());
    }
    return s;
}

void write_phantom_sidecar(const std::string& path, const PhantomSpec& spec) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out << phantom_sidecar(spec);
}

PhantomSpec read_phantom_sidecar(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_phantom_sidecar(ss.str());
}

}  // namespace raunet
