#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "raunet/simd/kernels.hpp"

namespace raunet::simd {
namespace {

bool cpu_has_avx2() {
#if defined(RAUNET_HAS_AVX2) && (defined(__x86_64__) || defined(__i386__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend initial_backend() {
    Backend chosen = detect_backend();
    if (const char* env = std::getenv("RAUNET_SIMD")) {
        const std::string value(env);
        if (value == "scalar") chosen = Backend::Scalar;
        else if (value == "avx2" && backend_available(Backend::Avx2)) chosen = Backend::Avx2;
    }
    return chosen;
}

std::atomic<Backend>& current() {
    static std::atomic<Backend> backend{initial_backend()};
    return backend;
}

}  // namespace

namespace detail {
#if !defined(RAUNET_HAS_AVX2)
template <typename T>
const KernelTable<T>* avx2_table() {
    return nullptr;
}
template const KernelTable<float>* avx2_table<float>();
template const KernelTable<double>* avx2_table<double>();
#endif
}  // namespace detail

std::string_view backend_name(Backend backend) {
    switch (backend) {
        case Backend::Scalar: return "scalar";
        case Backend::Avx2: return "avx2";
    }
    return "unknown";
}

bool backend_available(Backend backend) {
    if (backend == Backend::Scalar) return true;
    static const bool avx2 = cpu_has_avx2();
    return avx2;
}

Backend detect_backend() {
    return backend_available(Backend::Avx2) ? Backend::Avx2 : Backend::Scalar;
}

Backend active_backend() { return current().load(std::memory_order_relaxed); }

void set_backend(Backend backend) {
    if (!backend_available(backend))
        throw std::invalid_argument("SIMD backend '" + std::string(backend_name(backend)) +
                                    "' is not available on this CPU/build");
    current().store(backend, std::memory_order_relaxed);
}

template <typename T>
const KernelTable<T>& kernels(Backend backend) {
    if (backend == Backend::Avx2 && backend_available(Backend::Avx2)) return *detail::avx2_table<T>();
    return detail::scalar_table<T>();
}

template const KernelTable<float>& kernels<float>(Backend);
template const KernelTable<double>& kernels<double>(Backend);

BackendScope::BackendScope(Backend backend) : previous_(active_backend()) { set_backend(backend); }
BackendScope::~BackendScope() { current().store(previous_, std::memory_order_relaxed); }

}  // namespace raunet::simd
