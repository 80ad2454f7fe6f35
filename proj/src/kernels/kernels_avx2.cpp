#include "dyadloop/kernels.hpp"

#include <immintrin.h>

namespace dyadloop::kernels::avx2 {

namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

} // namespace

DotTriple dot_triple(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    __m256d xy = _mm256_setzero_pd();
    __m256d xx = _mm256_setzero_pd();
    __m256d yy = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d a = _mm256_loadu_pd(x.data() + i);
        const __m256d b = _mm256_loadu_pd(y.data() + i);
        xy = _mm256_fmadd_pd(a, b, xy);
        xx = _mm256_fmadd_pd(a, a, xx);
        yy = _mm256_fmadd_pd(b, b, yy);
    }
    DotTriple out{hsum(xy), hsum(xx), hsum(yy)};
    for (; i < n; ++i) {
        out.xy += x[i] * y[i];
        out.xx += x[i] * x[i];
        out.yy += y[i] * y[i];
    }
    return out;
}

double squared_distance(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x.data() + i), _mm256_loadu_pd(y.data() + i));
        acc = _mm256_fmadd_pd(d, d, acc);
    }
    double out = hsum(acc);
    for (; i < n; ++i) {
        const double d = x[i] - y[i];
        out += d * d;
    }
    return out;
}

double tsne_gradient(std::span<const double> p, Points2D pts, double exaggeration,
                     std::span<double> grad_x, std::span<double> grad_y) {
    const std::size_t n = pts.x.size();
    const __m256d one = _mm256_set1_pd(1.0);

    // Z over all ordered pairs including the diagonal (w_ii = 1), corrected below.
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const __m256d xi = _mm256_set1_pd(pts.x[i]);
        const __m256d yi = _mm256_set1_pd(pts.y[i]);
        __m256d acc = _mm256_setzero_pd();
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            const __m256d dx = _mm256_sub_pd(xi, _mm256_loadu_pd(pts.x.data() + j));
            const __m256d dy = _mm256_sub_pd(yi, _mm256_loadu_pd(pts.y.data() + j));
            const __m256d d2 = _mm256_fmadd_pd(dy, dy, _mm256_fmadd_pd(dx, dx, one));
            acc = _mm256_add_pd(acc, _mm256_div_pd(one, d2));
        }
        double row = hsum(acc);
        for (; j < n; ++j) {
            const double dx = pts.x[i] - pts.x[j];
            const double dy = pts.y[i] - pts.y[j];
            row += 1.0 / (1.0 + dx * dx + dy * dy);
        }
        z += row;
    }
    z -= static_cast<double>(n);

    const __m256d inv_z = _mm256_set1_pd(1.0 / z);
    const __m256d ex = _mm256_set1_pd(exaggeration);
    for (std::size_t i = 0; i < n; ++i) {
        const __m256d xi = _mm256_set1_pd(pts.x[i]);
        const __m256d yi = _mm256_set1_pd(pts.y[i]);
        const double* prow = p.data() + i * n;
        __m256d gx = _mm256_setzero_pd();
        __m256d gy = _mm256_setzero_pd();
        std::size_t j = 0;
        // The diagonal term has dx = dy = 0 and contributes nothing.
        for (; j + 4 <= n; j += 4) {
            const __m256d dx = _mm256_sub_pd(xi, _mm256_loadu_pd(pts.x.data() + j));
            const __m256d dy = _mm256_sub_pd(yi, _mm256_loadu_pd(pts.y.data() + j));
            const __m256d w = _mm256_div_pd(one, _mm256_fmadd_pd(dy, dy, _mm256_fmadd_pd(dx, dx, one)));
            const __m256d pe = _mm256_mul_pd(ex, _mm256_loadu_pd(prow + j));
            const __m256d m = _mm256_mul_pd(_mm256_fnmadd_pd(w, inv_z, pe), w);
            gx = _mm256_fmadd_pd(m, dx, gx);
            gy = _mm256_fmadd_pd(m, dy, gy);
        }
        double sx = hsum(gx);
        double sy = hsum(gy);
        for (; j < n; ++j) {
            const double dx = pts.x[i] - pts.x[j];
            const double dy = pts.y[i] - pts.y[j];
            const double w = 1.0 / (1.0 + dx * dx + dy * dy);
            const double m = (exaggeration * prow[j] - w / z) * w;
            sx += m * dx;
            sy += m * dy;
        }
        grad_x[i] = 4.0 * sx;
        grad_y[i] = 4.0 * sy;
    }
    return z;
}

} // namespace dyadloop::kernels::avx2
