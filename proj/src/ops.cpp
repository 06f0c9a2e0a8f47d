#include "raunet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "raunet/simd/kernels.hpp"

namespace raunet {
namespace {

struct Geometry {
    std::size_t n = 1, c = 1, d = 1, h = 1, w = 1;
    std::size_t spatial() const { return d * h * w; }
};

Geometry geometry_of(const Shape& s, const char* op) {
    if (s.size() != 4 && s.size() != 5)
        throw ShapeError(std::string(op) + ": expected rank 4 or 5 input, got " + shape_str(s));
    Geometry g;
    g.n = s[0];
    g.c = s[1];
    if (s.size() == 5) {
        g.d = s[2];
        g.h = s[3];
        g.w = s[4];
    } else {
        g.h = s[2];
        g.w = s[3];
    }
    return g;
}

// Pads a per-spatial-axis parameter list for rank 4 up to (d, h, w).
std::array<std::size_t, 3> to_dhw(const std::vector<std::size_t>& v, std::size_t rank,
                                  std::size_t fill, const char* op, const char* what) {
    const std::size_t sp = rank - 2;
    if (v.size() != sp)
        throw ShapeError(std::string(op) + ": " + what + " needs " + std::to_string(sp) +
                         " entries, got " + std::to_string(v.size()));
    if (sp == 3) return {v[0], v[1], v[2]};
    return {fill, v[0], v[1]};
}

Shape make_shape(std::size_t rank, std::size_t n, std::size_t c, std::size_t d, std::size_t h,
                 std::size_t w) {
    if (rank == 5) return {n, c, d, h, w};
    return {n, c, h, w};
}

template <typename T>
Tape<T>* recording_tape(std::initializer_list<const Tensor<T>*> inputs) {
    Tape<T>* tape = active_tape<T>();
    if (tape == nullptr) return nullptr;
    for (const Tensor<T>* t : inputs)
        if (t != nullptr && t->defined() && t->requires_grad()) return tape;
    return nullptr;
}

template <typename T>
bool wants_grad(const std::shared_ptr<TensorImpl<T>>& impl) {
    return impl && impl->requires_grad;
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
    if (a != b)
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

// ---------------------------------------------------------------------------
// Convolution geometry and column transforms.

struct ConvGeometry {
    std::size_t cin = 0, cout = 0;
    std::array<std::size_t, 3> in{}, k{}, s{}, p{}, out{};
    std::size_t rows() const { return cin * k[0] * k[1] * k[2]; }
    std::size_t in_spatial() const { return in[0] * in[1] * in[2]; }
    std::size_t out_spatial() const { return out[0] * out[1] * out[2]; }
    bool pointwise() const {
        return k[0] == 1 && k[1] == 1 && k[2] == 1 && s[0] == 1 && s[1] == 1 && s[2] == 1;
    }
};

constexpr std::size_t kColumnBudget = std::size_t{1} << 21;

std::size_t column_chunk(const ConvGeometry& cg) {
    const std::size_t total = cg.out_spatial();
    const std::size_t chunk = std::max<std::size_t>(1, kColumnBudget / std::max<std::size_t>(1, cg.rows()));
    return std::min(total, chunk);
}

// Visits every output row (oz, oy) intersecting [p0, p0 + count) and hands the
// ox sub-range to `fn(oz, oy, ox_begin, ox_end, q_offset)`.
template <typename Fn>
void for_each_output_row(const ConvGeometry& cg, std::size_t p0, std::size_t count, Fn&& fn) {
    const std::size_t wo = cg.out[2];
    const std::size_t plane = cg.out[1] * wo;
    std::size_t p = p0;
    const std::size_t end = p0 + count;
    while (p < end) {
        const std::size_t oz = p / plane;
        const std::size_t rem = p % plane;
        const std::size_t oy = rem / wo;
        const std::size_t ox0 = rem % wo;
        const std::size_t ox1 = std::min(wo, ox0 + (end - p));
        fn(oz, oy, ox0, ox1, p - p0);
        p += ox1 - ox0;
    }
}

// Valid ox range [lo, hi) for which ix = ox*s + kx - pad lies in [0, W).
inline void valid_range(std::size_t ox0, std::size_t ox1, std::size_t kx, std::size_t stride,
                        std::size_t pad, std::size_t width, std::size_t& lo, std::size_t& hi) {
    // ix >= 0  <=>  ox*s >= pad - kx
    std::size_t min_ox = 0;
    if (pad > kx) min_ox = (pad - kx + stride - 1) / stride;
    // ix < W  <=>  ox*s < W + pad - kx
    const std::ptrdiff_t limit = static_cast<std::ptrdiff_t>(width + pad) - static_cast<std::ptrdiff_t>(kx);
    std::size_t max_ox = 0;  // exclusive
    if (limit > 0) max_ox = (static_cast<std::size_t>(limit) + stride - 1) / stride;
    lo = std::max(ox0, min_ox);
    hi = std::min(ox1, max_ox);
    if (hi < lo) hi = lo;
}

template <typename T>
void im2col(const ConvGeometry& cg, const T* x, std::size_t p0, std::size_t count, T* col) {
    const auto [D, H, W] = cg.in;
    const auto [kd, kh, kw] = cg.k;
    const auto [sd, sh, sw] = cg.s;
    const auto [pd, ph, pw] = cg.p;
    for (std::size_t ci = 0; ci < cg.cin; ++ci) {
        const T* xc = x + ci * D * H * W;
        for (std::size_t kz = 0; kz < kd; ++kz)
            for (std::size_t ky = 0; ky < kh; ++ky)
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const std::size_t row = ((ci * kd + kz) * kh + ky) * kw + kx;
                    T* dst = col + row * count;
                    for_each_output_row(cg, p0, count, [&](std::size_t oz, std::size_t oy, std::size_t ox0,
                                                           std::size_t ox1, std::size_t q) {
                        const std::ptrdiff_t iz = static_cast<std::ptrdiff_t>(oz * sd + kz) - static_cast<std::ptrdiff_t>(pd);
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * sh + ky) - static_cast<std::ptrdiff_t>(ph);
                        T* out = dst + q;
                        if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(D) || iy < 0 ||
                            iy >= static_cast<std::ptrdiff_t>(H)) {
                            std::fill(out, out + (ox1 - ox0), T(0));
                            return;
                        }
                        const T* src = xc + (static_cast<std::size_t>(iz) * H + static_cast<std::size_t>(iy)) * W;
                        std::size_t lo, hi;
                        valid_range(ox0, ox1, kx, sw, pw, W, lo, hi);
                        std::fill(out, out + (lo - ox0), T(0));
                        if (sw == 1) {
                            if (hi > lo) std::memcpy(out + (lo - ox0), src + (lo + kx - pw), (hi - lo) * sizeof(T));
                        } else {
                            for (std::size_t ox = lo; ox < hi; ++ox) out[ox - ox0] = src[ox * sw + kx - pw];
                        }
                        std::fill(out + (hi - ox0), out + (ox1 - ox0), T(0));
                    });
                }
    }
}

template <typename T>
void col2im_add(const ConvGeometry& cg, const T* col, std::size_t p0, std::size_t count, T* gx) {
    const auto [D, H, W] = cg.in;
    const auto [kd, kh, kw] = cg.k;
    const auto [sd, sh, sw] = cg.s;
    const auto [pd, ph, pw] = cg.p;
    for (std::size_t ci = 0; ci < cg.cin; ++ci) {
        T* gc = gx + ci * D * H * W;
        for (std::size_t kz = 0; kz < kd; ++kz)
            for (std::size_t ky = 0; ky < kh; ++ky)
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const std::size_t row = ((ci * kd + kz) * kh + ky) * kw + kx;
                    const T* src = col + row * count;
                    for_each_output_row(cg, p0, count, [&](std::size_t oz, std::size_t oy, std::size_t ox0,
                                                           std::size_t ox1, std::size_t q) {
                        const std::ptrdiff_t iz = static_cast<std::ptrdiff_t>(oz * sd + kz) - static_cast<std::ptrdiff_t>(pd);
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * sh + ky) - static_cast<std::ptrdiff_t>(ph);
                        if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(D) || iy < 0 ||
                            iy >= static_cast<std::ptrdiff_t>(H))
                            return;
                        T* dst = gc + (static_cast<std::size_t>(iz) * H + static_cast<std::size_t>(iy)) * W;
                        std::size_t lo, hi;
                        valid_range(ox0, ox1, kx, sw, pw, W, lo, hi);
                        const T* in = src + q;
                        for (std::size_t ox = lo; ox < hi; ++ox) dst[ox * sw + kx - pw] += in[ox - ox0];
                    });
                }
    }
}

}  // namespace

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
               const ConvOptions& options) {
    const Geometry g = geometry_of(input.shape(), "conv");
    const std::size_t rank = input.rank();
    if (weight.rank() != rank)
        throw ShapeError("conv: kernel rank " + std::to_string(weight.rank()) +
                         " does not match input rank " + std::to_string(rank));
    ConvGeometry cg;
    cg.cout = weight.extent(0);
    cg.cin = weight.extent(1);
    if (cg.cin != g.c)
        throw ShapeError("conv: input has " + std::to_string(g.c) + " channels but kernel expects " +
                         std::to_string(cg.cin));
    cg.in = {g.d, g.h, g.w};
    cg.k = rank == 5 ? std::array<std::size_t, 3>{weight.extent(2), weight.extent(3), weight.extent(4)}
                     : std::array<std::size_t, 3>{1, weight.extent(2), weight.extent(3)};
    cg.s = options.stride.empty() ? std::array<std::size_t, 3>{1, 1, 1}
                                  : to_dhw(options.stride, rank, 1, "conv", "stride");
    for (int a = 0; a < 3; ++a) {
        if (cg.s[a] == 0) throw ShapeError("conv: stride must be positive");
        if (options.padding == Padding::Same) {
            if (cg.k[a] % 2 == 0)
                throw ShapeError("conv: 'same' padding needs odd kernel extents, got " + shape_str(weight.shape()));
            cg.p[a] = (cg.k[a] - 1) / 2;
        }
        if (cg.in[a] + 2 * cg.p[a] < cg.k[a])
            throw ShapeError("conv: kernel " + shape_str(weight.shape()) + " larger than padded input " +
                             shape_str(input.shape()));
        cg.out[a] = (cg.in[a] + 2 * cg.p[a] - cg.k[a]) / cg.s[a] + 1;
    }
    if (bias.defined() && bias.shape() != Shape{cg.cout})
        throw ShapeError("conv: bias shape " + shape_str(bias.shape()) + " expected [" +
                         std::to_string(cg.cout) + "]");

    const auto& K = simd::kernels<T>();
    const std::size_t P = cg.out_spatial();
    const std::size_t J = cg.rows();
    const std::size_t S = cg.in_spatial();
    Tensor<T> out(make_shape(rank, g.n, cg.cout, cg.out[0], cg.out[1], cg.out[2]));
    const T* x = input.data().data();
    const T* w = weight.data().data();
    T* y = out.data().data();

    const bool pointwise = cg.pointwise();
    const std::size_t chunk = column_chunk(cg);
    std::vector<T> col;
    if (!pointwise) col.resize(J * chunk);

    for (std::size_t n = 0; n < g.n; ++n) {
        const T* xn = x + n * cg.cin * S;
        T* yn = y + n * cg.cout * P;
        if (pointwise) {
            K.gemm(false, false, cg.cout, P, cg.cin, w, cg.cin, xn, S, false, yn, P);
        } else {
            for (std::size_t p0 = 0; p0 < P; p0 += chunk) {
                const std::size_t pc = std::min(chunk, P - p0);
                im2col(cg, xn, p0, pc, col.data());
                K.gemm(false, false, cg.cout, pc, J, w, J, col.data(), pc, false, yn + p0, P);
            }
        }
        if (bias.defined()) {
            const T* b = bias.data().data();
            for (std::size_t co = 0; co < cg.cout; ++co) {
                T* row = yn + co * P;
                const T bv = b[co];
                for (std::size_t q = 0; q < P; ++q) row[q] += bv;
            }
        }
    }

    if (Tape<T>* tape = recording_tape<T>({&input, &weight, &bias})) {
        auto in = input.impl();
        auto wt = weight.impl();
        auto bs = bias.defined() ? bias.impl() : nullptr;
        auto o = out.impl();
        std::vector<std::shared_ptr<TensorImpl<T>>> inputs{in, wt};
        if (bs) inputs.push_back(bs);
        const std::size_t batch = g.n;
        tape->record(OpKind::Conv, std::move(inputs), o, [in, wt, bs, o, cg, batch, chunk, pointwise]() {
            const auto& K = simd::kernels<T>();
            const std::size_t P = cg.out_spatial();
            const std::size_t J = cg.rows();
            const std::size_t S = cg.in_spatial();
            const T* gy = o->grad.data();
            const T* x = in->data.data();
            const T* w = wt->data.data();
            std::vector<T> col;
            if (!pointwise) col.resize(J * chunk);
            if (wants_grad(wt)) {
                T* gw = wt->ensure_grad().data();
                for (std::size_t n = 0; n < batch; ++n) {
                    const T* xn = x + n * cg.cin * S;
                    const T* gyn = gy + n * cg.cout * P;
                    if (pointwise) {
                        K.gemm(false, true, cg.cout, cg.cin, P, gyn, P, xn, S, true, gw, cg.cin);
                    } else {
                        for (std::size_t p0 = 0; p0 < P; p0 += chunk) {
                            const std::size_t pc = std::min(chunk, P - p0);
                            im2col(cg, xn, p0, pc, col.data());
                            K.gemm(false, true, cg.cout, J, pc, gyn + p0, P, col.data(), pc, true, gw, J);
                        }
                    }
                }
            }
            if (wants_grad(bs)) {
                T* gb = bs->ensure_grad().data();
                for (std::size_t n = 0; n < batch; ++n)
                    for (std::size_t co = 0; co < cg.cout; ++co)
                        gb[co] += static_cast<T>(K.sum(gy + (n * cg.cout + co) * P, P));
            }
            if (wants_grad(in)) {
                T* gx = in->ensure_grad().data();
                for (std::size_t n = 0; n < batch; ++n) {
                    const T* gyn = gy + n * cg.cout * P;
                    T* gxn = gx + n * cg.cin * S;
                    if (pointwise) {
                        K.gemm(true, false, cg.cin, P, cg.cout, w, cg.cin, gyn, P, true, gxn, S);
                    } else {
                        for (std::size_t p0 = 0; p0 < P; p0 += chunk) {
                            const std::size_t pc = std::min(chunk, P - p0);
                            K.gemm(true, false, J, pc, cg.cout, w, J, gyn + p0, P, false, col.data(), pc);
                            col2im_add(cg, col.data(), p0, pc, gxn);
                        }
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> max_pool(const Tensor<T>& input, const std::vector<std::size_t>& window,
                   const std::vector<std::size_t>& stride) {
    const Geometry g = geometry_of(input.shape(), "max_pool");
    const std::size_t rank = input.rank();
    const auto k = to_dhw(window, rank, 1, "max_pool", "window");
    const auto s = to_dhw(stride, rank, 1, "max_pool", "stride");
    const std::array<std::size_t, 3> in{g.d, g.h, g.w};
    std::array<std::size_t, 3> o{};
    for (int a = 0; a < 3; ++a) {
        if (k[a] == 0 || s[a] == 0) throw ShapeError("max_pool: window and stride must be positive");
        if (k[a] > in[a])
            throw ShapeError("max_pool: window " + shape_str(window) + " larger than extent " +
                             shape_str(input.shape()));
        o[a] = (in[a] - k[a]) / s[a] + 1;
    }
    Tensor<T> out(make_shape(rank, g.n, g.c, o[0], o[1], o[2]));
    const std::size_t S = g.spatial();
    const std::size_t P = o[0] * o[1] * o[2];
    auto argmax = std::make_shared<std::vector<std::size_t>>(g.n * g.c * P);
    const T* x = input.data().data();
    T* y = out.data().data();
    for (std::size_t nc = 0; nc < g.n * g.c; ++nc) {
        const T* xc = x + nc * S;
        std::size_t q = nc * P;
        for (std::size_t oz = 0; oz < o[0]; ++oz)
            for (std::size_t oy = 0; oy < o[1]; ++oy)
                for (std::size_t ox = 0; ox < o[2]; ++ox, ++q) {
                    std::size_t best_idx = ((oz * s[0]) * g.h + oy * s[1]) * g.w + ox * s[2];
                    T best = xc[best_idx];
                    for (std::size_t wz = 0; wz < k[0]; ++wz)
                        for (std::size_t wy = 0; wy < k[1]; ++wy)
                            for (std::size_t wx = 0; wx < k[2]; ++wx) {
                                const std::size_t idx =
                                    ((oz * s[0] + wz) * g.h + oy * s[1] + wy) * g.w + ox * s[2] + wx;
                                if (xc[idx] > best) {
                                    best = xc[idx];
                                    best_idx = idx;
                                }
                            }
                    y[q] = best;
                    (*argmax)[q] = best_idx;
                }
    }
    if (Tape<T>* tape = recording_tape<T>({&input})) {
        auto in = input.impl();
        auto op = out.impl();
        tape->record(OpKind::MaxPool, {in}, op, [in, op, argmax, S, P, nc_total = g.n * g.c]() {
            T* gx = in->ensure_grad().data();
            const T* gy = op->grad.data();
            for (std::size_t nc = 0; nc < nc_total; ++nc)
                for (std::size_t q = 0; q < P; ++q) gx[nc * S + (*argmax)[nc * P + q]] += gy[nc * P + q];
        });
    }
    return out;
}

template <typename T>
Tensor<T> upsample(const Tensor<T>& input, const std::vector<std::size_t>& factor) {
    const Geometry g = geometry_of(input.shape(), "upsample");
    const std::size_t rank = input.rank();
    const auto f = to_dhw(factor, rank, 1, "upsample", "factor");
    for (std::size_t v : f)
        if (v == 0) throw ShapeError("upsample: factor must be >= 1");
    const std::array<std::size_t, 3> o{g.d * f[0], g.h * f[1], g.w * f[2]};
    Tensor<T> out(make_shape(rank, g.n, g.c, o[0], o[1], o[2]));
    const std::size_t S = g.spatial();
    const std::size_t P = o[0] * o[1] * o[2];
    const T* x = input.data().data();
    T* y = out.data().data();
    for (std::size_t nc = 0; nc < g.n * g.c; ++nc) {
        const T* xc = x + nc * S;
        T* yc = y + nc * P;
        for (std::size_t z = 0; z < o[0]; ++z)
            for (std::size_t yy = 0; yy < o[1]; ++yy) {
                const T* src = xc + ((z / f[0]) * g.h + yy / f[1]) * g.w;
                T* dst = yc + (z * o[1] + yy) * o[2];
                for (std::size_t xx = 0; xx < o[2]; ++xx) dst[xx] = src[xx / f[2]];
            }
    }
    if (Tape<T>* tape = recording_tape<T>({&input})) {
        auto in = input.impl();
        auto op = out.impl();
        tape->record(OpKind::Upsample, {in}, op, [in, op, g, f, o, S, P]() {
            T* gx = in->ensure_grad().data();
            const T* gy = op->grad.data();
            for (std::size_t nc = 0; nc < g.n * g.c; ++nc) {
                T* gc = gx + nc * S;
                const T* yc = gy + nc * P;
                for (std::size_t z = 0; z < o[0]; ++z)
                    for (std::size_t yy = 0; yy < o[1]; ++yy) {
                        T* dst = gc + ((z / f[0]) * g.h + yy / f[1]) * g.w;
                        const T* src = yc + (z * o[1] + yy) * o[2];
                        for (std::size_t xx = 0; xx < o[2]; ++xx) dst[xx / f[2]] += src[xx];
                    }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, NormMode mode) {
    const Shape& shape = input.shape();
    if (shape.size() < 2) throw ShapeError("batch_norm: input needs [N, C, ...], got " + shape_str(shape));
    const std::size_t N = shape[0];
    const std::size_t C = shape[1];
    const std::size_t S = shape_numel(shape) / (N * C);
    const std::size_t M = N * S;
    if (M == 0) throw ShapeError("batch_norm: zero-element channel");
    const Shape cshape{C};
    if (gamma.shape() != cshape || beta.shape() != cshape)
        throw ShapeError("batch_norm: gamma/beta must have shape [" + std::to_string(C) + "]");
    if (state.running_mean.shape() != cshape || state.running_var.shape() != cshape)
        throw ShapeError("batch_norm: running statistics must have shape [" + std::to_string(C) + "]");

    const bool batch_stats = mode != NormMode::Eval;
    const T* x = input.data().data();
    auto xhat = std::make_shared<std::vector<T>>(input.numel());
    auto inv_std = std::make_shared<std::vector<double>>(C);
    Tensor<T> out(shape);
    T* y = out.data().data();
    const T* gm = gamma.data().data();
    const T* bt = beta.data().data();

    for (std::size_t c = 0; c < C; ++c) {
        double mean, var;
        if (batch_stats) {
            double acc = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const T* xc = x + (n * C + c) * S;
                for (std::size_t i = 0; i < S; ++i) acc += static_cast<double>(xc[i]);
            }
            mean = acc / static_cast<double>(M);
            double sq = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const T* xc = x + (n * C + c) * S;
                for (std::size_t i = 0; i < S; ++i) {
                    const double dlt = static_cast<double>(xc[i]) - mean;
                    sq += dlt * dlt;
                }
            }
            var = sq / static_cast<double>(M);
            if (mode == NormMode::Train) {
                T& rm = state.running_mean.data()[c];
                T& rv = state.running_var.data()[c];
                rm = static_cast<T>(kBatchNormMomentum * static_cast<double>(rm) + (1.0 - kBatchNormMomentum) * mean);
                rv = static_cast<T>(kBatchNormMomentum * static_cast<double>(rv) + (1.0 - kBatchNormMomentum) * var);
            }
        } else {
            mean = static_cast<double>(state.running_mean.data()[c]);
            var = static_cast<double>(state.running_var.data()[c]);
        }
        const double is = 1.0 / std::sqrt(var + kBatchNormEpsilon);
        (*inv_std)[c] = is;
        const double gv = static_cast<double>(gm[c]);
        const double bv = static_cast<double>(bt[c]);
        for (std::size_t n = 0; n < N; ++n) {
            const std::size_t off = (n * C + c) * S;
            for (std::size_t i = 0; i < S; ++i) {
                const T xh = static_cast<T>((static_cast<double>(x[off + i]) - mean) * is);
                (*xhat)[off + i] = xh;
                y[off + i] = static_cast<T>(gv * static_cast<double>(xh) + bv);
            }
        }
    }

    if (Tape<T>* tape = recording_tape<T>({&input, &gamma, &beta})) {
        auto in = input.impl();
        auto gi = gamma.impl();
        auto bi = beta.impl();
        auto op = out.impl();
        tape->record(OpKind::BatchNorm, {in, gi, bi}, op, [in, gi, bi, op, xhat, inv_std, N, C, S, M, batch_stats]() {
            const T* gy = op->grad.data();
            const T* gm = gi->data.data();
            T* gx = wants_grad(in) ? in->ensure_grad().data() : nullptr;
            T* gg = wants_grad(gi) ? gi->ensure_grad().data() : nullptr;
            T* gb = wants_grad(bi) ? bi->ensure_grad().data() : nullptr;
            for (std::size_t c = 0; c < C; ++c) {
                double sum_g = 0.0, sum_gx = 0.0;
                for (std::size_t n = 0; n < N; ++n) {
                    const std::size_t off = (n * C + c) * S;
                    for (std::size_t i = 0; i < S; ++i) {
                        sum_g += static_cast<double>(gy[off + i]);
                        sum_gx += static_cast<double>(gy[off + i]) * static_cast<double>((*xhat)[off + i]);
                    }
                }
                if (gg) gg[c] += static_cast<T>(sum_gx);
                if (gb) gb[c] += static_cast<T>(sum_g);
                if (!gx) continue;
                const double scale = static_cast<double>(gm[c]) * (*inv_std)[c];
                const double md = static_cast<double>(M);
                for (std::size_t n = 0; n < N; ++n) {
                    const std::size_t off = (n * C + c) * S;
                    for (std::size_t i = 0; i < S; ++i) {
                        const double g = static_cast<double>(gy[off + i]);
                        double dx;
                        if (batch_stats)
                            dx = scale / md * (md * g - sum_g - static_cast<double>((*xhat)[off + i]) * sum_gx);
                        else
                            dx = scale * g;
                        gx[off + i] += static_cast<T>(dx);
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
    Tensor<T> out(input.shape());
    simd::kernels<T>().relu(input.data().data(), out.data().data(), input.numel());
    if (Tape<T>* tape = recording_tape<T>({&input})) {
        auto in = input.impl();
        auto op = out.impl();
        tape->record(OpKind::Relu, {in}, op, [in, op]() {
            simd::kernels<T>().relu_backward(in->data.data(), op->grad.data(), in->ensure_grad().data(),
                                             in->data.size());
        });
    }
    return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input) {
    Tensor<T> out(input.shape());
    const T* x = input.data().data();
    T* y = out.data().data();
    for (std::size_t i = 0; i < input.numel(); ++i) {
        if (x[i] >= T(0)) {
            y[i] = T(1) / (T(1) + std::exp(-x[i]));
        } else {
            const T e = std::exp(x[i]);
            y[i] = e / (T(1) + e);
        }
    }
    if (Tape<T>* tape = recording_tape<T>({&input})) {
        auto in = input.impl();
        auto op = out.impl();
        tape->record(OpKind::Sigmoid, {in}, op, [in, op]() {
            T* gx = in->ensure_grad().data();
            const T* gy = op->grad.data();
            const T* yv = op->data.data();
            for (std::size_t i = 0; i < op->data.size(); ++i) gx[i] += gy[i] * yv[i] * (T(1) - yv[i]);
        });
    }
    return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "add");
    Tensor<T> out(a.shape());
    simd::kernels<T>().add(a.data().data(), b.data().data(), out.data().data(), a.numel());
    if (Tape<T>* tape = recording_tape<T>({&a, &b})) {
        auto ai = a.impl();
        auto bi = b.impl();
        auto op = out.impl();
        tape->record(OpKind::Add, {ai, bi}, op, [ai, bi, op]() {
            const auto& K = simd::kernels<T>();
            if (wants_grad(ai)) K.accumulate(op->grad.data(), ai->ensure_grad().data(), op->grad.size());
            if (wants_grad(bi)) K.accumulate(op->grad.data(), bi->ensure_grad().data(), op->grad.size());
        });
    }
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "mul");
    Tensor<T> out(a.shape());
    simd::kernels<T>().mul(a.data().data(), b.data().data(), out.data().data(), a.numel());
    if (Tape<T>* tape = recording_tape<T>({&a, &b})) {
        auto ai = a.impl();
        auto bi = b.impl();
        auto op = out.impl();
        tape->record(OpKind::Mul, {ai, bi}, op, [ai, bi, op]() {
            const auto& K = simd::kernels<T>();
            const std::size_t n = op->grad.size();
            if (wants_grad(ai)) K.mul_accumulate(op->grad.data(), bi->data.data(), ai->ensure_grad().data(), n);
            if (wants_grad(bi)) K.mul_accumulate(op->grad.data(), ai->data.data(), bi->ensure_grad().data(), n);
        });
    }
    return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
    Tensor<T> out(a.shape());
    const T* x = a.data().data();
    T* y = out.data().data();
    for (std::size_t i = 0; i < a.numel(); ++i) y[i] = x[i] + value;
    if (Tape<T>* tape = recording_tape<T>({&a})) {
        auto ai = a.impl();
        auto op = out.impl();
        tape->record(OpKind::AddScalar, {ai}, op, [ai, op]() {
            simd::kernels<T>().accumulate(op->grad.data(), ai->ensure_grad().data(), op->grad.size());
        });
    }
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    Tensor<T> out(a.shape());
    const T* x = a.data().data();
    T* y = out.data().data();
    for (std::size_t i = 0; i < a.numel(); ++i) y[i] = x[i] * factor;
    if (Tape<T>* tape = recording_tape<T>({&a})) {
        auto ai = a.impl();
        auto op = out.impl();
        tape->record(OpKind::Scale, {ai}, op, [ai, op, factor]() {
            simd::kernels<T>().axpy(factor, op->grad.data(), ai->ensure_grad().data(), op->grad.size());
        });
    }
    return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() < 2 || sa.size() != sb.size())
        throw ShapeError("concat_channels: incompatible ranks " + shape_str(sa) + " and " + shape_str(sb));
    for (std::size_t i = 0; i < sa.size(); ++i)
        if (i != 1 && sa[i] != sb[i])
            throw ShapeError("concat_channels: non-channel extents differ " + shape_str(sa) + " vs " + shape_str(sb));
    Shape so = sa;
    so[1] = sa[1] + sb[1];
    Tensor<T> out(so);
    const std::size_t N = sa[0];
    const std::size_t blk_a = a.numel() / N;
    const std::size_t blk_b = b.numel() / N;
    for (std::size_t n = 0; n < N; ++n) {
        T* dst = out.data().data() + n * (blk_a + blk_b);
        std::copy_n(a.data().data() + n * blk_a, blk_a, dst);
        std::copy_n(b.data().data() + n * blk_b, blk_b, dst + blk_a);
    }
    if (Tape<T>* tape = recording_tape<T>({&a, &b})) {
        auto ai = a.impl();
        auto bi = b.impl();
        auto op = out.impl();
        tape->record(OpKind::Concat, {ai, bi}, op, [ai, bi, op, N, blk_a, blk_b]() {
            const auto& K = simd::kernels<T>();
            const T* gy = op->grad.data();
            for (std::size_t n = 0; n < N; ++n) {
                const T* src = gy + n * (blk_a + blk_b);
                if (wants_grad(ai)) K.accumulate(src, ai->ensure_grad().data() + n * blk_a, blk_a);
                if (wants_grad(bi)) K.accumulate(src + blk_a, bi->ensure_grad().data() + n * blk_b, blk_b);
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& input) {
    Tensor<T> out(Shape{1});
    out.data()[0] = static_cast<T>(simd::kernels<T>().sum(input.data().data(), input.numel()));
    if (Tape<T>* tape = recording_tape<T>({&input})) {
        auto in = input.impl();
        auto op = out.impl();
        tape->record(OpKind::Sum, {in}, op, [in, op]() {
            const T g = op->grad[0];
            for (T& v : in->ensure_grad()) v += g;
        });
    }
    return out;
}

#define RAUNET_INSTANTIATE_OPS(T)                                                                    \
    template Tensor<T> conv(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const ConvOptions&); \
    template Tensor<T> max_pool(const Tensor<T>&, const std::vector<std::size_t>&,                   \
                                const std::vector<std::size_t>&);                                    \
    template Tensor<T> upsample(const Tensor<T>&, const std::vector<std::size_t>&);                   \
    template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,              \
                                  BatchNormState<T>&, NormMode);                                     \
    template Tensor<T> relu(const Tensor<T>&);                                                       \
    template Tensor<T> sigmoid(const Tensor<T>&);                                                    \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                      \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                      \
    template Tensor<T> add_scalar(const Tensor<T>&, T);                                              \
    template Tensor<T> scale(const Tensor<T>&, T);                                                   \
    template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                          \
    template Tensor<T> sum(const Tensor<T>&);

RAUNET_INSTANTIATE_OPS(float)
RAUNET_INSTANTIATE_OPS(double)

#undef RAUNET_INSTANTIATE_OPS

}  // namespace raunet
