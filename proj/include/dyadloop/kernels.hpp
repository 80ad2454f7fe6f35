#pragma once

// Data-parallel inner loops shared by the embedding and projection modules.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The top-level functions dispatch at runtime to the best
// variant the CPU supports; `DYADLOOP_SIMD=scalar` in the environment pins the
// scalar path. The per-ISA namespaces are public so tests can check the
// variants against each other.

#include <cstddef>
#include <span>
#include <string_view>

namespace dyadloop::kernels {

enum class Isa { Scalar, Avx2 };

/// Sums needed by cosine distance, produced in one pass.
struct DotTriple {
    double xy = 0.0;
    double xx = 0.0;
    double yy = 0.0;
};

/// Point set in structure-of-arrays layout for 2-D projections.
struct Points2D {
    std::span<const double> x;
    std::span<const double> y;
};

bool avx2_supported() noexcept;
Isa active_isa() noexcept;
/// Overrides dispatch for the current process. Requesting Avx2 on a CPU
/// without it falls back to Scalar.
void force_isa(Isa isa) noexcept;
std::string_view isa_name(Isa isa) noexcept;

DotTriple dot_triple(std::span<const double> x, std::span<const double> y);
double squared_distance(std::span<const double> x, std::span<const double> y);

/// Student-t kernel gradient of KL(P||Q) for a 2-D map.
///
/// `p` is the row-major N x N joint affinity matrix. Writes
/// grad_i = 4 * sum_j (exaggeration * p_ij - q_ij) * w_ij * (y_i - y_j)
/// with w_ij = 1 / (1 + |y_i - y_j|^2) and q_ij = w_ij / Z, and returns
/// Z = sum_{i != j} w_ij.
double tsne_gradient(std::span<const double> p, Points2D pts, double exaggeration,
                     std::span<double> grad_x, std::span<double> grad_y);

namespace scalar {
DotTriple dot_triple(std::span<const double> x, std::span<const double> y);
double squared_distance(std::span<const double> x, std::span<const double> y);
double tsne_gradient(std::span<const double> p, Points2D pts, double exaggeration,
                     std::span<double> grad_x, std::span<double> grad_y);
} // namespace scalar

#if defined(DYADLOOP_HAVE_AVX2_KERNELS)
namespace avx2 {
DotTriple dot_triple(std::span<const double> x, std::span<const double> y);
double squared_distance(std::span<const double> x, std::span<const double> y);
double tsne_gradient(std::span<const double> p, Points2D pts, double exaggeration,
                     std::span<double> grad_x, std::span<double> grad_y);
} // namespace avx2
#endif

} // namespace dyadloop::kernels
