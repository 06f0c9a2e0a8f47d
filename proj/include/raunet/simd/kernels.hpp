#pragma once

// Inner-loop kernels used by the tensor engine.
//
// Every kernel has a portable scalar reference implementation. Wider variants
// (AVX2 + FMA on x86-64) are compiled into separate translation units and
// selected at runtime. All variants use a fixed, data-independent summation
// order, so repeated calls on identical inputs are bit-identical for a given
// backend; different backends agree only up to rounding.

#include <cstddef>
#include <string_view>

namespace raunet::simd {

enum class Backend { Scalar, Avx2 };

std::string_view backend_name(Backend backend);

template <typename T>
struct KernelTable {
    // C[m x n] (=|+=) op(A)[m x k] * op(B)[k x n], row-major with leading
    // dimensions. op(A) = A^T when trans_a (A then stored k x m).
    void (*gemm)(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 const T* a, std::size_t lda, const T* b, std::size_t ldb, bool accumulate, T* c,
                 std::size_t ldc);
    // y += x
    void (*accumulate)(const T* x, T* y, std::size_t n);
    // out = a + b
    void (*add)(const T* a, const T* b, T* out, std::size_t n);
    // out = a * b
    void (*mul)(const T* a, const T* b, T* out, std::size_t n);
    // y += a * b
    void (*mul_accumulate)(const T* a, const T* b, T* y, std::size_t n);
    // y += alpha * x
    void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
    // y = max(x, 0)
    void (*relu)(const T* x, T* y, std::size_t n);
    // gx += gy where x > 0
    void (*relu_backward)(const T* x, const T* gy, T* gx, std::size_t n);
    // Sum accumulated in double precision.
    double (*sum)(const T* x, std::size_t n);
};

bool backend_available(Backend backend);

// Best backend supported by the running CPU.
Backend detect_backend();

// Currently selected backend; initialised from detect_backend(), or from the
// RAUNET_SIMD environment variable ("scalar" / "avx2") when set.
Backend active_backend();

// Throws std::invalid_argument when the backend is not available.
void set_backend(Backend backend);

template <typename T>
const KernelTable<T>& kernels(Backend backend);

template <typename T>
const KernelTable<T>& kernels() {
    return kernels<T>(active_backend());
}

// RAII override of the active backend, mainly for equivalence tests.
class BackendScope {
public:
    explicit BackendScope(Backend backend);
    ~BackendScope();
    BackendScope(const BackendScope&) = delete;
    BackendScope& operator=(const BackendScope&) = delete;

private:
    Backend previous_;
};

namespace detail {
template <typename T>
const KernelTable<T>& scalar_table();
template <typename T>
const KernelTable<T>* avx2_table();  // nullptr when not compiled in
}  // namespace detail

}  // namespace raunet::simd
