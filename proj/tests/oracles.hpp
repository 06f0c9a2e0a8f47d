#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Deliberately naive: direct loops, flood fill, all-pairs distances.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "raunet/architectures.hpp"
#include "raunet/postprocess.hpp"
#include "raunet/random.hpp"
#include "raunet/tensor.hpp"
#include "raunet/volume.hpp"

namespace oracle {

using raunet::Extents;
using raunet::Mask;
using raunet::Shape;
using raunet::Spacing;
using raunet::Tensor;

// Values exactly representable in float so single and double runs see the
// same inputs.
inline std::vector<double> randn(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
    std::vector<double> out(n);
    for (auto& v : out) v = static_cast<double>(static_cast<float>(raunet::standard_normal(rng) * scale));
    return out;
}

template <typename T>
Tensor<T> tensor(const Shape& shape, const std::vector<double>& values) {
    return Tensor<T>(shape, std::vector<T>(values.begin(), values.end()));
}

// Direct "same"/"valid" convolution, stride s, N C spatial layout, 2D or 3D.
inline std::vector<double> conv(const std::vector<double>& x, const Shape& xs, const std::vector<double>& w,
                                const Shape& ws, const std::vector<double>& b, std::size_t stride, bool same,
                                Shape* out_shape) {
    const std::size_t dims = xs.size() - 2;
    const std::size_t n = xs[0], cin = xs[1], cout = ws[0], k = ws[2];
    const std::size_t pad = same ? (k - 1) / 2 : 0;
    std::array<std::size_t, 3> in{1, 1, 1}, out{1, 1, 1};
    for (std::size_t d = 0; d < dims; ++d) {
        in[3 - dims + d] = xs[2 + d];
        out[3 - dims + d] = (xs[2 + d] + 2 * pad - k) / stride + 1;
    }
    Shape os{n, cout};
    for (std::size_t d = 0; d < dims; ++d) os.push_back(out[3 - dims + d]);
    *out_shape = os;
    const std::size_t kz = dims == 3 ? k : 1;
    const std::ptrdiff_t pz = dims == 3 ? static_cast<std::ptrdiff_t>(pad) : 0;
    std::vector<double> y(n * cout * out[0] * out[1] * out[2], 0.0);
    for (std::size_t b0 = 0; b0 < n; ++b0)
        for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t oz = 0; oz < out[0]; ++oz)
                for (std::size_t oy = 0; oy < out[1]; ++oy)
                    for (std::size_t ox = 0; ox < out[2]; ++ox) {
                        double acc = b[co];
                        for (std::size_t ci = 0; ci < cin; ++ci)
                            for (std::size_t dz = 0; dz < kz; ++dz)
                                for (std::size_t dy = 0; dy < k; ++dy)
                                    for (std::size_t dx = 0; dx < k; ++dx) {
                                        const std::ptrdiff_t iz = static_cast<std::ptrdiff_t>(oz * stride + dz) - pz;
                                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + dy) - static_cast<std::ptrdiff_t>(pad);
                                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + dx) - static_cast<std::ptrdiff_t>(pad);
                                        if (iz < 0 || iy < 0 || ix < 0 || iz >= std::ptrdiff_t(in[0]) ||
                                            iy >= std::ptrdiff_t(in[1]) || ix >= std::ptrdiff_t(in[2]))
                                            continue;
                                        const std::size_t xi =
                                            (((b0 * cin + ci) * in[0] + std::size_t(iz)) * in[1] + std::size_t(iy)) * in[2] + std::size_t(ix);
                                        const std::size_t wi = (((co * cin + ci) * kz + dz) * k + dy) * k + dx;
                                        acc += x[xi] * w[wi];
                                    }
                        y[(((b0 * cout + co) * out[0] + oz) * out[1] + oy) * out[2] + ox] = acc;
                    }
    return y;
}

// Scalar loss sum(f(leaves) * projection), with perturbations applied in place.
template <typename T>
struct Problem {
    std::vector<Tensor<T>> leaves;
    std::function<Tensor<T>()> output;
};

// Directional derivative along `dir` by central differences in double.
inline double fd_directional(Problem<double>& p, const std::vector<std::vector<double>>& dir,
                             const std::vector<double>& projection, double h) {
    std::vector<std::vector<double>> saved;
    for (auto& l : p.leaves) saved.push_back(l.values());
    auto eval = [&](double sign) {
        for (std::size_t i = 0; i < p.leaves.size(); ++i) {
            auto& d = p.leaves[i].values();
            for (std::size_t j = 0; j < d.size(); ++j) d[j] = saved[i][j] + sign * h * dir[i][j];
        }
        const Tensor<double> y = p.output();
        double acc = 0.0;
        for (std::size_t j = 0; j < y.numel(); ++j) acc += y.data()[j] * projection[j];
        return acc;
    };
    const double plus = eval(1.0);
    const double minus = eval(-1.0);
    for (std::size_t i = 0; i < p.leaves.size(); ++i) p.leaves[i].values() = saved[i];
    return (plus - minus) / (2.0 * h);
}

template <typename T>
double analytic_directional(Problem<T>& p, const std::vector<std::vector<double>>& dir,
                            const std::vector<double>& projection) {
    for (auto& l : p.leaves) {
        l.set_requires_grad(true);
        l.zero_grad();
    }
    raunet::Tape<T> tape;
    {
        raunet::TapeScope<T> scope(tape);
        const Tensor<T> y = p.output();
        const Tensor<T> r(y.shape(), std::vector<T>(projection.begin(), projection.end()));
        tape.backward(raunet::sum(raunet::mul(y, r)));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < p.leaves.size(); ++i) {
        auto g = p.leaves[i].grad();
        for (std::size_t j = 0; j < g.size(); ++j) acc += static_cast<double>(g[j]) * dir[i][j];
    }
    for (auto& l : p.leaves) l.set_requires_grad(false);
    return acc;
}

struct GradReport {
    double max_rel_error = 0.0;
    double worst_fd = 0.0;
    double worst_analytic = 0.0;
};

// `make<T>()` must build identical problems for T = float and double. The
// analytic gradient of the T build is compared with double-precision central
// differences along `directions` random directions.
template <typename T, typename Make>
GradReport gradient_check(Make make, std::uint64_t seed, std::size_t directions = 3, double h = 1e-5) {
    std::mt19937_64 rng(seed);
    Problem<double> ref = make.template operator()<double>();
    Problem<T> sut = make.template operator()<T>();
    const std::size_t out_n = ref.output().numel();
    GradReport rep;
    for (std::size_t k = 0; k < directions; ++k) {
        std::vector<std::vector<double>> dir;
        for (auto& l : ref.leaves) dir.push_back(randn(l.numel(), rng));
        const std::vector<double> proj = randn(out_n, rng);
        const double fd = fd_directional(ref, dir, proj, h);
        const double an = analytic_directional(sut, dir, proj);
        const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
        if (rel >= rep.max_rel_error) rep = {rel, fd, an};
    }
    return rep;
}

// Copies every parameter and buffer of `from` into `to` (same spec).
template <typename A, typename B>
void copy_weights(raunet::Network<A>& from, raunet::Network<B>& to) {
    std::vector<std::vector<double>> vals;
    from.visit([&](const std::string&, Tensor<A>& t, bool) { vals.emplace_back(t.values().begin(), t.values().end()); });
    std::size_t i = 0;
    to.visit([&](const std::string&, Tensor<B>& t, bool) {
        const auto& v = vals.at(i++);
        t.values().assign(v.begin(), v.end());
    });
}

// Breadth-first flood fill labels in scan order of first voxel.
inline std::vector<std::int32_t> flood_fill(const Mask& m, int connectivity, std::size_t* count) {
    const Extents& e = m.extents;
    std::vector<std::int32_t> lab(e.count(), 0);
    std::int32_t next = 0;
    for (std::size_t start = 0; start < e.count(); ++start) {
        if (!m.values[start] || lab[start]) continue;
        lab[start] = ++next;
        std::deque<std::size_t> q{start};
        while (!q.empty()) {
            const std::size_t i = q.front();
            q.pop_front();
            const std::ptrdiff_t x = std::ptrdiff_t(i % e.x), y = std::ptrdiff_t((i / e.x) % e.y), z = std::ptrdiff_t(i / (e.x * e.y));
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int l1 = std::abs(dx) + std::abs(dy) + std::abs(dz);
                        if (l1 == 0) continue;
                        if ((connectivity == 6 || connectivity == 4) && l1 > 1) continue;
                        if (connectivity == 18 && l1 > 2) continue;
                        if ((connectivity == 4 || connectivity == 8) && dz != 0) continue;
                        const std::ptrdiff_t nx = x + dx, ny = y + dy, nz = z + dz;
                        if (nx < 0 || ny < 0 || nz < 0 || nx >= std::ptrdiff_t(e.x) || ny >= std::ptrdiff_t(e.y) ||
                            nz >= std::ptrdiff_t(e.z))
                            continue;
                        const std::size_t j = (std::size_t(nz) * e.y + std::size_t(ny)) * e.x + std::size_t(nx);
                        if (m.values[j] && !lab[j]) {
                            lab[j] = next;
                            q.push_back(j);
                        }
                    }
        }
    }
    *count = static_cast<std::size_t>(next);
    return lab;
}

inline Mask random_mask(const Extents& e, double density, std::mt19937_64& rng) {
    Mask m(e, 0);
    for (auto& v : m.values) v = raunet::uniform_unit(rng) < density ? 1 : 0;
    return m;
}

// Surface voxels by the same 6-neighbour definition, written independently.
inline std::vector<std::array<std::size_t, 3>> surface_points(const Mask& m) {
    const Extents& e = m.extents;
    std::vector<std::array<std::size_t, 3>> out;
    auto fg = [&](std::ptrdiff_t x, std::ptrdiff_t y, std::ptrdiff_t z) {
        if (x < 0 || y < 0 || z < 0 || x >= std::ptrdiff_t(e.x) || y >= std::ptrdiff_t(e.y) || z >= std::ptrdiff_t(e.z))
            return false;
        return m.at(std::size_t(x), std::size_t(y), std::size_t(z)) != 0;
    };
    for (std::size_t z = 0; z < e.z; ++z)
        for (std::size_t y = 0; y < e.y; ++y)
            for (std::size_t x = 0; x < e.x; ++x) {
                if (!m.at(x, y, z)) continue;
                const auto X = std::ptrdiff_t(x), Y = std::ptrdiff_t(y), Z = std::ptrdiff_t(z);
                if (!fg(X - 1, Y, Z) || !fg(X + 1, Y, Z) || !fg(X, Y - 1, Z) || !fg(X, Y + 1, Z) || !fg(X, Y, Z - 1) ||
                    !fg(X, Y, Z + 1))
                    out.push_back({x, y, z});
            }
    return out;
}

inline std::vector<double> all_pairs_directed(const Mask& a, const Mask& b, const Spacing& s) {
    const auto pa = surface_points(a), pb = surface_points(b);
    std::vector<double> out;
    for (const auto& p : pa) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : pb) {
            const double dx = (double(p[0]) - double(q[0])) * s.x;
            const double dy = (double(p[1]) - double(q[1])) * s.y;
            const double dz = (double(p[2]) - double(q[2])) * s.z;
            best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
        }
        out.push_back(best);
    }
    return out;
}

struct SurfaceOracle {
    double assd, msd, hd95;
};

inline SurfaceOracle brute_surface(const Mask& seg, const Mask& gt, const Spacing& s) {
    auto d = all_pairs_directed(seg, gt, s);
    const auto back = all_pairs_directed(gt, seg, s);
    d.insert(d.end(), back.begin(), back.end());
    double sum = 0.0, mx = 0.0;
    for (double v : d) {
        sum += v;
        mx = std::max(mx, v);
    }
    std::sort(d.begin(), d.end());
    const double rank = 0.95 * double(d.size() - 1);
    const std::size_t lo = std::size_t(rank);
    const std::size_t hi = std::min(lo + 1, d.size() - 1);
    return {sum / double(d.size()), mx, d[lo] + (d[hi] - d[lo]) * (rank - double(lo))};
}

// Per-voxel sums and counts accumulated in plain loops.
inline std::vector<double> dense_vote(const std::vector<raunet::ProbabilityPatch>& patches, const Extents& e, bool majority,
                                      float threshold) {
    std::vector<double> sum(e.count(), 0.0), cnt(e.count(), 0.0);
    std::vector<std::size_t> order(patches.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& p = patches[a].origin;
        const auto& q = patches[b].origin;
        if (p.z != q.z) return p.z < q.z;
        if (p.y != q.y) return p.y < q.y;
        return p.x < q.x;
    });
    for (std::size_t k : order) {
        const auto& p = patches[k];
        for (std::size_t z = 0; z < p.prob.extents.z; ++z)
            for (std::size_t y = 0; y < p.prob.extents.y; ++y)
                for (std::size_t x = 0; x < p.prob.extents.x; ++x) {
                    const std::size_t i = ((p.origin.z + z) * e.y + p.origin.y + y) * e.x + p.origin.x + x;
                    const float v = p.prob.at(x, y, z);
                    sum[i] += majority ? (v >= threshold ? 1.0 : 0.0) : double(v);
                    cnt[i] += 1.0;
                }
    }
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] /= cnt[i];
    return sum;
}

}  // namespace oracle
