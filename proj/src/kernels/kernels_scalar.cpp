#include "dyadloop/kernels.hpp"

namespace dyadloop::kernels::scalar {

// Reference path: long double accumulators.
DotTriple dot_triple(std::span<const double> x, std::span<const double> y) {
    long double xy = 0.0L;
    long double xx = 0.0L;
    long double yy = 0.0L;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const long double a = x[i];
        const long double b = y[i];
        xy += a * b;
        xx += a * a;
        yy += b * b;
    }
    return {static_cast<double>(xy), static_cast<double>(xx), static_cast<double>(yy)};
}

double squared_distance(std::span<const double> x, std::span<const double> y) {
    long double acc = 0.0L;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const long double d = static_cast<long double>(x[i]) - y[i];
        acc += d * d;
    }
    return static_cast<double>(acc);
}

double tsne_gradient(std::span<const double> p, Points2D pts, double exaggeration,
                     std::span<double> grad_x, std::span<double> grad_y) {
    const std::size_t n = pts.x.size();
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) {
                continue;
            }
            const double dx = pts.x[i] - pts.x[j];
            const double dy = pts.y[i] - pts.y[j];
            z += 1.0 / (1.0 + dx * dx + dy * dy);
        }
    }
    const double inv_z = 1.0 / z;
    for (std::size_t i = 0; i < n; ++i) {
        double gx = 0.0;
        double gy = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) {
                continue;
            }
            const double dx = pts.x[i] - pts.x[j];
            const double dy = pts.y[i] - pts.y[j];
            const double w = 1.0 / (1.0 + dx * dx + dy * dy);
            const double m = (exaggeration * p[i * n + j] - w * inv_z) * w;
            gx += m * dx;
            gy += m * dy;
        }
        grad_x[i] = 4.0 * gx;
        grad_y[i] = 4.0 * gy;
    }
    return z;
}

} // namespace dyadloop::kernels::scalar
