#include "dyadloop/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string_view>

namespace dyadloop::kernels {

namespace {

Isa detect() noexcept {
    if (const char* env = std::getenv("DYADLOOP_SIMD"); env != nullptr && std::string_view(env) == "scalar") {
        return Isa::Scalar;
    }
    return avx2_supported() ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<Isa>& current() noexcept {
    static std::atomic<Isa> isa{detect()};
    return isa;
}

} // namespace

bool avx2_supported() noexcept {
#if defined(DYADLOOP_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa active_isa() noexcept { return current().load(std::memory_order_relaxed); }

void force_isa(Isa isa) noexcept {
    if (isa == Isa::Avx2 && !avx2_supported()) {
        isa = Isa::Scalar;
    }
    current().store(isa, std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) noexcept {
    return isa == Isa::Avx2 ? "avx2" : "scalar";
}

DotTriple dot_triple(std::span<const double> x, std::span<const double> y) {
#if defined(DYADLOOP_HAVE_AVX2_KERNELS)
    if (active_isa() == Isa::Avx2) {
        return avx2::dot_triple(x, y);
    }
#endif
    return scalar::dot_triple(x, y);
}

double squared_distance(std::span<const double> x, std::span<const double> y) {
#if defined(DYADLOOP_HAVE_AVX2_KERNELS)
    if (active_isa() == Isa::Avx2) {
        return avx2::squared_distance(x, y);
    }
#endif
    return scalar::squared_distance(x, y);
}

double tsne_gradient(std::span<const double> p, Points2D pts, double exaggeration,
                     std::span<double> grad_x, std::span<double> grad_y) {
#if defined(DYADLOOP_HAVE_AVX2_KERNELS)
    if (active_isa() == Isa::Avx2) {
        return avx2::tsne_gradient(p, pts, exaggeration, grad_x, grad_y);
    }
#endif
    return scalar::tsne_gradient(p, pts, exaggeration, grad_x, grad_y);
}

} // namespace dyadloop::kernels
