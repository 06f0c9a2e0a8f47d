#include "raunet/simd/kernels.hpp"

#include <algorithm>

namespace raunet::simd::detail {
namespace {

// i-p-j loop order: each C element still sums over p in increasing order.
template <typename T>
void gemm_scalar(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 const T* a, std::size_t lda, const T* b, std::size_t ldb, bool accumulate, T* c,
                 std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * ldc;
        if (!accumulate) std::fill(crow, crow + n, T(0));
        for (std::size_t p = 0; p < k; ++p) {
            const T av = trans_a ? a[p * lda + i] : a[i * lda + p];
            if (trans_b) {
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * ldb + p];
            } else {
                const T* brow = b + p * ldb;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
}

template <typename T>
void accumulate_scalar(const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

template <typename T>
void add_scalar(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void mul_scalar(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void mul_accumulate_scalar(const T* a, const T* b, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

template <typename T>
void axpy_scalar(T alpha, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void relu_scalar(const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward_scalar(const T* x, const T* gy, T* gx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (x[i] > T(0)) gx[i] += gy[i];
}

template <typename T>
double sum_scalar(const T* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]);
    return acc;
}

template <typename T>
KernelTable<T> make_table() {
    return KernelTable<T>{&gemm_scalar<T>,         &accumulate_scalar<T>, &add_scalar<T>,
                          &mul_scalar<T>,          &mul_accumulate_scalar<T>,
                          &axpy_scalar<T>,         &relu_scalar<T>,       &relu_backward_scalar<T>,
                          &sum_scalar<T>};
}

}  // namespace

template <typename T>
const KernelTable<T>& scalar_table() {
    static const KernelTable<T> table = make_table<T>();
    return table;
}

template const KernelTable<float>& scalar_table<float>();
template const KernelTable<double>& scalar_table<double>();

}  // namespace raunet::simd::detail
