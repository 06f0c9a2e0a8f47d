// AVX2 + FMA kernel variants. This translation unit is the only one built
// with -mavx2 -mfma; nothing here may run before dispatch has confirmed CPU
// support.

#include <immintrin.h>

#include <algorithm>
#include <cstring>
#include <type_traits>
#include <vector>

#include "raunet/simd/kernels.hpp"

namespace raunet::simd::detail {
namespace {

template <typename T>
struct Vec;

template <>
struct Vec<float> {
    using type = __m256;
    static constexpr std::size_t lanes = 8;
    static type zero() { return _mm256_setzero_ps(); }
    static type load(const float* p) { return _mm256_loadu_ps(p); }
    static void store(float* p, type v) { _mm256_storeu_ps(p, v); }
    static type set1(float x) { return _mm256_set1_ps(x); }
    static type add(type a, type b) { return _mm256_add_ps(a, b); }
    static type mul(type a, type b) { return _mm256_mul_ps(a, b); }
    static type fma(type a, type b, type c) { return _mm256_fmadd_ps(a, b, c); }
    static type max(type a, type b) { return _mm256_max_ps(a, b); }
    static type positive_mask(type x) { return _mm256_cmp_ps(x, zero(), _CMP_GT_OQ); }
    static type bit_and(type a, type b) { return _mm256_and_ps(a, b); }
};

template <>
struct Vec<double> {
    using type = __m256d;
    static constexpr std::size_t lanes = 4;
    static type zero() { return _mm256_setzero_pd(); }
    static type load(const double* p) { return _mm256_loadu_pd(p); }
    static void store(double* p, type v) { _mm256_storeu_pd(p, v); }
    static type set1(double x) { return _mm256_set1_pd(x); }
    static type add(type a, type b) { return _mm256_add_pd(a, b); }
    static type mul(type a, type b) { return _mm256_mul_pd(a, b); }
    static type fma(type a, type b, type c) { return _mm256_fmadd_pd(a, b, c); }
    static type max(type a, type b) { return _mm256_max_pd(a, b); }
    static type positive_mask(type x) { return _mm256_cmp_pd(x, zero(), _CMP_GT_OQ); }
    static type bit_and(type a, type b) { return _mm256_and_pd(a, b); }
};

// ---------------------------------------------------------------------------
// GEMM: packed panels + MR x NR register-blocked micro-kernel.

constexpr std::size_t kMr = 6;
constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = 120;
constexpr std::size_t kNc = 3072;

template <typename T>
constexpr std::size_t nr() {
    return 2 * Vec<T>::lanes;
}

template <typename T>
inline T elem_a(const T* a, std::size_t lda, bool trans, std::size_t i, std::size_t p) {
    return trans ? a[p * lda + i] : a[i * lda + p];
}

// Ap layout: panel-major, within a panel p-major with kMr rows interleaved.
template <typename T>
void pack_a(const T* a, std::size_t lda, bool trans, std::size_t i0, std::size_t mc, std::size_t p0,
            std::size_t kc, T* out) {
    for (std::size_t ir = 0; ir < mc; ir += kMr) {
        const std::size_t rows = std::min(kMr, mc - ir);
        for (std::size_t p = 0; p < kc; ++p) {
            T* dst = out + p * kMr;
            for (std::size_t r = 0; r < rows; ++r) dst[r] = elem_a(a, lda, trans, i0 + ir + r, p0 + p);
            for (std::size_t r = rows; r < kMr; ++r) dst[r] = T(0);
        }
        out += kc * kMr;
    }
}

// Bp layout: panel-major, within a panel p-major with NR columns contiguous.
template <typename T>
void pack_b(const T* b, std::size_t ldb, bool trans, std::size_t p0, std::size_t kc, std::size_t j0,
            std::size_t nc, T* out) {
    constexpr std::size_t NR = nr<T>();
    for (std::size_t jr = 0; jr < nc; jr += NR) {
        const std::size_t cols = std::min(NR, nc - jr);
        for (std::size_t p = 0; p < kc; ++p) {
            T* dst = out + p * NR;
            if (!trans) {
                const T* src = b + (p0 + p) * ldb + j0 + jr;
                std::memcpy(dst, src, cols * sizeof(T));
            } else {
                for (std::size_t j = 0; j < cols; ++j) dst[j] = b[(j0 + jr + j) * ldb + p0 + p];
            }
            for (std::size_t j = cols; j < NR; ++j) dst[j] = T(0);
        }
        out += kc * NR;
    }
}

template <typename T>
void micro_kernel(std::size_t kc, const T* ap, const T* bp, T* c, std::size_t ldc, bool accumulate,
                  std::size_t rows, std::size_t cols) {
    using V = Vec<T>;
    using R = typename V::type;
    constexpr std::size_t L = V::lanes;
    constexpr std::size_t NR = nr<T>();

    R c00 = V::zero(), c01 = V::zero(), c10 = V::zero(), c11 = V::zero();
    R c20 = V::zero(), c21 = V::zero(), c30 = V::zero(), c31 = V::zero();
    R c40 = V::zero(), c41 = V::zero(), c50 = V::zero(), c51 = V::zero();
    for (std::size_t p = 0; p < kc; ++p) {
        const R b0 = V::load(bp);
        const R b1 = V::load(bp + L);
        R a = V::set1(ap[0]);
        c00 = V::fma(a, b0, c00);
        c01 = V::fma(a, b1, c01);
        a = V::set1(ap[1]);
        c10 = V::fma(a, b0, c10);
        c11 = V::fma(a, b1, c11);
        a = V::set1(ap[2]);
        c20 = V::fma(a, b0, c20);
        c21 = V::fma(a, b1, c21);
        a = V::set1(ap[3]);
        c30 = V::fma(a, b0, c30);
        c31 = V::fma(a, b1, c31);
        a = V::set1(ap[4]);
        c40 = V::fma(a, b0, c40);
        c41 = V::fma(a, b1, c41);
        a = V::set1(ap[5]);
        c50 = V::fma(a, b0, c50);
        c51 = V::fma(a, b1, c51);
        ap += kMr;
        bp += NR;
    }

    alignas(32) T tile[kMr * NR];
    V::store(tile + 0 * NR, c00);
    V::store(tile + 0 * NR + L, c01);
    V::store(tile + 1 * NR, c10);
    V::store(tile + 1 * NR + L, c11);
    V::store(tile + 2 * NR, c20);
    V::store(tile + 2 * NR + L, c21);
    V::store(tile + 3 * NR, c30);
    V::store(tile + 3 * NR + L, c31);
    V::store(tile + 4 * NR, c40);
    V::store(tile + 4 * NR + L, c41);
    V::store(tile + 5 * NR, c50);
    V::store(tile + 5 * NR + L, c51);

    if (cols == NR) {
        for (std::size_t r = 0; r < rows; ++r) {
            T* crow = c + r * ldc;
            R lo = V::load(tile + r * NR);
            R hi = V::load(tile + r * NR + L);
            if (accumulate) {
                lo = V::add(V::load(crow), lo);
                hi = V::add(V::load(crow + L), hi);
            }
            V::store(crow, lo);
            V::store(crow + L, hi);
        }
    } else {
        for (std::size_t r = 0; r < rows; ++r) {
            T* crow = c + r * ldc;
            for (std::size_t j = 0; j < cols; ++j)
                crow[j] = accumulate ? crow[j] + tile[r * NR + j] : tile[r * NR + j];
        }
    }
}

template <typename T>
void gemm_avx2(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
               std::size_t lda, const T* b, std::size_t ldb, bool accumulate, T* c, std::size_t ldc) {
    constexpr std::size_t NR = nr<T>();
    if (m == 0 || n == 0) return;
    if (k == 0) {
        if (!accumulate)
            for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, T(0));
        return;
    }
    thread_local std::vector<T> apack;
    thread_local std::vector<T> bpack;
    apack.resize(((kMc + kMr - 1) / kMr) * kMr * kKc);
    bpack.resize(((kNc + NR - 1) / NR) * NR * kKc);

    for (std::size_t j0 = 0; j0 < n; j0 += kNc) {
        const std::size_t nc = std::min(kNc, n - j0);
        for (std::size_t p0 = 0; p0 < k; p0 += kKc) {
            const std::size_t kc = std::min(kKc, k - p0);
            const bool acc = accumulate || p0 > 0;
            pack_b(b, ldb, trans_b, p0, kc, j0, nc, bpack.data());
            for (std::size_t i0 = 0; i0 < m; i0 += kMc) {
                const std::size_t mc = std::min(kMc, m - i0);
                pack_a(a, lda, trans_a, i0, mc, p0, kc, apack.data());
                for (std::size_t jr = 0; jr < nc; jr += NR) {
                    const std::size_t cols = std::min(NR, nc - jr);
                    const T* bp = bpack.data() + (jr / NR) * kc * NR;
                    for (std::size_t ir = 0; ir < mc; ir += kMr) {
                        const std::size_t rows = std::min(kMr, mc - ir);
                        const T* ap = apack.data() + (ir / kMr) * kc * kMr;
                        micro_kernel<T>(kc, ap, bp, c + (i0 + ir) * ldc + j0 + jr, ldc, acc, rows,
                                        cols);
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Elementwise kernels.

template <typename T>
void accumulate_avx2(const T* x, T* y, std::size_t n) {
    using V = Vec<T>;
    std::size_t i = 0;
    for (; i + V::lanes <= n; i += V::lanes) V::store(y + i, V::add(V::load(y + i), V::load(x + i)));
    for (; i < n; ++i) y[i] += x[i];
}

template <typename T>
void add_avx2(const T* a, const T* b, T* out, std::size_t n) {
    using V = Vec<T>;
    std::size_t i = 0;
    for (; i + V::lanes <= n; i += V::lanes) V::store(out + i, V::add(V::load(a + i), V::load(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void mul_avx2(const T* a, const T* b, T* out, std::size_t n) {
    using V = Vec<T>;
    std::size_t i = 0;
    for (; i + V::lanes <= n; i += V::lanes) V::store(out + i, V::mul(V::load(a + i), V::load(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void mul_accumulate_avx2(const T* a, const T* b, T* y, std::size_t n) {
    using V = Vec<T>;
    std::size_t i = 0;
    for (; i + V::lanes <= n; i += V::lanes)
        V::store(y + i, V::fma(V::load(a + i), V::load(b + i), V::load(y + i)));
    for (; i < n; ++i) y[i] += a[i] * b[i];
}

template <typename T>
void axpy_avx2(T alpha, const T* x, T* y, std::size_t n) {
    using V = Vec<T>;
    const auto va = V::set1(alpha);
    std::size_t i = 0;
    for (; i + V::lanes <= n; i += V::lanes) V::store(y + i, V::fma(va, V::load(x + i), V::load(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void relu_avx2(const T* x, T* y, std::size_t n) {
    using V = Vec<T>;
    std::size_t i = 0;
    for (; i + V::lanes <= n; i += V::lanes) V::store(y + i, V::max(V::load(x + i), V::zero()));
    for (; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward_avx2(const T* x, const T* gy, T* gx, std::size_t n) {
    using V = Vec<T>;
    std::size_t i = 0;
    for (; i + V::lanes <= n; i += V::lanes) {
        const auto pass = V::bit_and(V::positive_mask(V::load(x + i)), V::load(gy + i));
        V::store(gx + i, V::add(V::load(gx + i), pass));
    }
    for (; i < n; ++i)
        if (x[i] > T(0)) gx[i] += gy[i];
}

double reduce4(__m256d v) {
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, v);
    return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

double sum_avx2_float(const float* x, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 v = _mm256_loadu_ps(x + i);
        acc0 = _mm256_add_pd(acc0, _mm256_cvtps_pd(_mm256_castps256_ps128(v)));
        acc1 = _mm256_add_pd(acc1, _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)));
    }
    double total = reduce4(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) total += static_cast<double>(x[i]);
    return total;
}

double sum_avx2_double(const double* x, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
        acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
    }
    double total = reduce4(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) total += x[i];
    return total;
}

template <typename T>
KernelTable<T> make_table() {
    if constexpr (std::is_same_v<T, float>) {
        return KernelTable<float>{&gemm_avx2<float>,          &accumulate_avx2<float>,
                                  &add_avx2<float>,           &mul_avx2<float>,
                                  &mul_accumulate_avx2<float>, &axpy_avx2<float>,
                                  &relu_avx2<float>,          &relu_backward_avx2<float>,
                                  &sum_avx2_float};
    } else {
        return KernelTable<double>{&gemm_avx2<double>,          &accumulate_avx2<double>,
                                   &add_avx2<double>,           &mul_avx2<double>,
                                   &mul_accumulate_avx2<double>, &axpy_avx2<double>,
                                   &relu_avx2<double>,          &relu_backward_avx2<double>,
                                   &sum_avx2_double};
    }
}

}  // namespace

template <typename T>
const KernelTable<T>* avx2_table() {
    static const KernelTable<T> table = make_table<T>();
    return &table;
}

template const KernelTable<float>* avx2_table<float>();
template const KernelTable<double>* avx2_table<double>();

}  // namespace raunet::simd::detail
