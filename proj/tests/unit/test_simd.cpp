#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "raunet/ops.hpp"
#include "raunet/simd/kernels.hpp"
#include "../oracles.hpp"

using namespace raunet;
using raunet::simd::Backend;

namespace {

template <typename T>
std::vector<T> random_vec(std::size_t n, std::mt19937_64& rng) {
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(standard_normal(rng));
    return v;
}

template <typename T>
void naive_gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const std::vector<T>& a, std::size_t lda,
                const std::vector<T>& b, std::size_t ldb, std::vector<double>& c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = ta ? a[p * lda + i] : a[i * lda + p];
                const double bv = tb ? b[j * ldb + p] : b[p * ldb + j];
                acc += av * bv;
            }
            c[i * ldc + j] += acc;
        }
}

template <typename T>
void check_gemm(Backend backend, double tol) {
    const auto& kt = simd::kernels<T>(backend);
    std::mt19937_64 rng(11);
    for (std::size_t m : {1, 3, 8, 17})
        for (std::size_t n : {1, 7, 16, 33})
            for (std::size_t k : {1, 5, 9, 64})
                for (int mode = 0; mode < 8; ++mode) {
                    const bool ta = mode & 1, tb = mode & 2, acc = mode & 4;
                    const std::size_t lda = ta ? m : k, ldb = tb ? k : n, ldc = n;
                    const auto a = random_vec<T>(m * k, rng);
                    const auto b = random_vec<T>(k * n, rng);
                    auto c = random_vec<T>(m * n, rng);
                    std::vector<double> ref(m * n, 0.0);
                    if (acc)
                        for (std::size_t i = 0; i < ref.size(); ++i) ref[i] = c[i];
                    naive_gemm(ta, tb, m, n, k, a, lda, b, ldb, ref, ldc);
                    kt.gemm(ta, tb, m, n, k, a.data(), lda, b.data(), ldb, acc, c.data(), ldc);
                    for (std::size_t i = 0; i < ref.size(); ++i)
                        REQUIRE(std::abs(c[i] - ref[i]) <= tol * (1.0 + std::abs(ref[i]) + std::sqrt(double(k))));
                }
}

template <typename T>
void check_backends_agree(double tol) {
    if (!simd::backend_available(Backend::Avx2)) return;
    const auto& s = simd::kernels<T>(Backend::Scalar);
    const auto& v = simd::kernels<T>(Backend::Avx2);
    std::mt19937_64 rng(5);
    for (std::size_t n : {0, 1, 3, 7, 8, 9, 15, 16, 31, 64, 1000, 1027}) {
        const auto a = random_vec<T>(n, rng), b = random_vec<T>(n, rng);
        const auto y0 = random_vec<T>(n, rng);
        auto close = [&](const std::vector<T>& p, const std::vector<T>& q) {
            for (std::size_t i = 0; i < n; ++i) REQUIRE(std::abs(double(p[i]) - double(q[i])) <= tol * (1.0 + std::abs(double(p[i]))));
        };
        std::vector<T> p(n), q(n);
        s.add(a.data(), b.data(), p.data(), n);
        v.add(a.data(), b.data(), q.data(), n);
        CHECK(p == q);
        s.mul(a.data(), b.data(), p.data(), n);
        v.mul(a.data(), b.data(), q.data(), n);
        CHECK(p == q);
        s.relu(a.data(), p.data(), n);
        v.relu(a.data(), q.data(), n);
        CHECK(p == q);
        p = y0;
        q = y0;
        s.relu_backward(a.data(), b.data(), p.data(), n);
        v.relu_backward(a.data(), b.data(), q.data(), n);
        CHECK(p == q);
        p = y0;
        q = y0;
        s.accumulate(a.data(), p.data(), n);
        v.accumulate(a.data(), q.data(), n);
        CHECK(p == q);
        p = y0;
        q = y0;
        s.mul_accumulate(a.data(), b.data(), p.data(), n);
        v.mul_accumulate(a.data(), b.data(), q.data(), n);
        close(p, q);
        p = y0;
        q = y0;
        s.axpy(T(0.37), a.data(), p.data(), n);
        v.axpy(T(0.37), a.data(), q.data(), n);
        close(p, q);
        const double ss = s.sum(a.data(), n), vs = v.sum(a.data(), n);
        CHECK(std::abs(ss - vs) <= 1e-12 * (1.0 + double(n)));
    }
}

}  // namespace

TEST_CASE("scalar gemm matches naive triple loop") {
    check_gemm<float>(Backend::Scalar, 1e-5);
    check_gemm<double>(Backend::Scalar, 1e-12);
}

TEST_CASE("avx2 gemm matches naive triple loop") {
    if (!simd::backend_available(Backend::Avx2)) return;
    check_gemm<float>(Backend::Avx2, 1e-5);
    check_gemm<double>(Backend::Avx2, 1e-12);
}

TEST_CASE("elementwise kernels agree across backends") {
    check_backends_agree<float>(1e-6);
    check_backends_agree<double>(1e-14);
}

TEST_CASE("backend scope restores the previous selection") {
    const Backend before = simd::active_backend();
    {
        simd::BackendScope scope(Backend::Scalar);
        CHECK(simd::active_backend() == Backend::Scalar);
    }
    CHECK(simd::active_backend() == before);
}

TEST_CASE("convolution forward and gradients agree across backends") {
    if (!simd::backend_available(Backend::Avx2)) return;
    std::mt19937_64 rng(3);
    const auto xv = oracle::randn(2 * 3 * 6 * 7 * 5, rng);
    const auto wv = oracle::randn(4 * 3 * 27, rng);
    const auto bv = oracle::randn(4, rng);
    auto run = [&](Backend backend) {
        simd::BackendScope scope(backend);
        auto x = oracle::tensor<float>({2, 3, 6, 7, 5}, xv);
        auto w = oracle::tensor<float>({4, 3, 3, 3, 3}, wv);
        auto b = oracle::tensor<float>({4}, bv);
        x.set_requires_grad(true);
        w.set_requires_grad(true);
        Tape<float> tape;
        Tensor<float> y;
        {
            TapeScope<float> s(tape);
            y = conv(x, w, b);
            tape.backward(sum(mul(y, y)));
        }
        std::vector<float> all = y.values();
        all.insert(all.end(), x.grad().begin(), x.grad().end());
        all.insert(all.end(), w.grad().begin(), w.grad().end());
        return all;
    };
    const auto s = run(Backend::Scalar), v = run(Backend::Avx2);
    REQUIRE(s.size() == v.size());
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(s[i] - v[i]) <= 1e-4f * (1.0f + std::abs(s[i])));
}
