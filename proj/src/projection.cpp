#include "dyadloop/projection.hpp"

#include "dyadloop/error.hpp"
#include "dyadloop/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace dyadloop {

namespace {

// Row entropy (nats) and normalized probabilities for precision beta.
// `d` holds squared distances already shifted so the smallest is 0.
double row_entropy(std::span<const double> d, std::size_t self, double beta, std::span<double> out) {
    double sum = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j) {
        out[j] = j == self ? 0.0 : std::exp(-beta * d[j]);
        sum += out[j];
    }
    double weighted = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j) {
        out[j] /= sum;
        weighted += d[j] * out[j];
    }
    return std::log(sum) + beta * weighted;
}

double uniform01(std::mt19937_64& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

} // namespace

ConditionalAffinities conditional_probabilities(std::span<const EmbeddingVector> points, double perplexity) {
    const std::size_t n = points.size();
    if (n < 4) {
        throw ContractError("t-SNE needs at least 4 points");
    }
    if (!(perplexity > 1.0) || !(perplexity < static_cast<double>(n))) {
        throw ContractError("perplexity must be in (1, N)");
    }
    const std::size_t dim = points.front().dim();
    for (const auto& pt : points) {
        if (pt.dim() != dim) {
            throw ContractError("t-SNE inputs have different dimensions");
        }
    }

    std::vector<double> dist(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = kernels::squared_distance(points[i].values(), points[j].values());
            if (!std::isfinite(d)) {
                throw ContractError("t-SNE input distance is not finite");
            }
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    ConditionalAffinities out;
    out.n = n;
    out.perplexity = perplexity;
    out.p.assign(n * n, 0.0);
    out.beta.assign(n, 1.0);
    const double target = std::log(perplexity);
    std::vector<double> shifted(n);
    for (std::size_t i = 0; i < n; ++i) {
        double dmin = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                dmin = std::min(dmin, dist[i * n + j]);
            }
        }
        for (std::size_t j = 0; j < n; ++j) {
            shifted[j] = j == i ? 0.0 : dist[i * n + j] - dmin;
        }
        std::span<double> row(out.p.data() + i * n, n);
        double beta = 1.0;
        double lo = 0.0;
        double hi = std::numeric_limits<double>::infinity();
        for (int iter = 0; iter < 256; ++iter) {
            const double diff = row_entropy(shifted, i, beta, row) - target;
            if (std::abs(diff) < 1e-12) {
                break;
            }
            if (diff > 0.0) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
            if (!std::isfinite(beta)) {
                break;
            }
        }
        if (!std::isfinite(beta)) {
            beta = lo;
        }
        row_entropy(shifted, i, beta, row);
        out.beta[i] = beta;
    }
    return out;
}

AffinityMatrix symmetrize(const ConditionalAffinities& c) {
    AffinityMatrix out;
    out.n = c.n;
    out.perplexity = c.perplexity;
    out.p.assign(c.n * c.n, 0.0);
    const double denom = 2.0 * static_cast<double>(c.n);
    for (std::size_t i = 0; i < c.n; ++i) {
        for (std::size_t j = 0; j < c.n; ++j) {
            if (i != j) {
                out.p[i * c.n + j] = (c.at(i, j) + c.at(j, i)) / denom;
            }
        }
    }
    return out;
}

AffinityMatrix conditional_affinities(std::span<const EmbeddingVector> points, double perplexity) {
    return symmetrize(conditional_probabilities(points, perplexity));
}

double kl_divergence(const AffinityMatrix& p, std::span<const double> x, std::span<const double> y) {
    const std::size_t n = p.n;
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j) {
                const double dx = x[i] - x[j];
                const double dy = y[i] - y[j];
                z += 1.0 / (1.0 + dx * dx + dy * dy);
            }
        }
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double pij = p.at(i, j);
            if (i == j || pij <= 0.0) {
                continue;
            }
            const double dx = x[i] - x[j];
            const double dy = y[i] - y[j];
            const double q = 1.0 / ((1.0 + dx * dx + dy * dy) * z);
            kl += pij * std::log(pij / q);
        }
    }
    return kl;
}

void kl_gradient(const AffinityMatrix& p, std::span<const double> x, std::span<const double> y,
                 std::span<double> grad_x, std::span<double> grad_y) {
    kernels::tsne_gradient(p.p, {x, y}, 1.0, grad_x, grad_y);
}

void initial_layout(std::size_t n, std::uint64_t seed, double sigma, std::vector<double>& x, std::vector<double>& y) {
    std::mt19937_64 rng(seed);
    x.resize(n);
    y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double r = std::sqrt(-2.0 * std::log(uniform01(rng)));
        const double theta = 2.0 * std::numbers::pi * uniform01(rng);
        x[i] = sigma * r * std::cos(theta);
        y[i] = sigma * r * std::sin(theta);
    }
}

TsneResult tsne(const AffinityMatrix& p, const TsneOptions& options, std::span<const double> init_x,
                std::span<const double> init_y) {
    const std::size_t n = p.n;
    if (init_x.size() != n || init_y.size() != n) {
        throw ContractError("t-SNE initial layout has the wrong number of points");
    }
    if (options.iterations < 0 || !(options.learning_rate > 0.0)) {
        throw ContractError("t-SNE needs iterations >= 0 and a positive learning rate");
    }
    TsneResult res;
    res.seed = options.seed;
    res.x.assign(init_x.begin(), init_x.end());
    res.y.assign(init_y.begin(), init_y.end());
    res.kl_initial = kl_divergence(p, res.x, res.y);
    std::vector<double> best_x = res.x;
    std::vector<double> best_y = res.y;
    double best_kl = res.kl_initial;

    std::vector<double> gx(n), gy(n);
    std::vector<double> ux(n, 0.0), uy(n, 0.0);
    std::vector<double> gain_x(n, 1.0), gain_y(n, 1.0);
    constexpr double kMinGain = 0.01;

    auto step = [&](double grad, double& update, double& gain, double& coord, double momentum) {
        gain = (grad > 0.0) != (update > 0.0) ? gain + 0.2 : gain * 0.8;
        gain = std::max(gain, kMinGain);
        update = momentum * update - options.learning_rate * gain * grad;
        coord += update;
    };

    for (int iter = 0; iter < options.iterations; ++iter) {
        const double ex = iter < options.exaggeration_iterations ? options.early_exaggeration : 1.0;
        const double momentum = iter < options.momentum_switch ? options.initial_momentum : options.final_momentum;
        kernels::tsne_gradient(p.p, {res.x, res.y}, ex, gx, gy);
        double mx = 0.0;
        double my = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            step(gx[i], ux[i], gain_x[i], res.x[i], momentum);
            step(gy[i], uy[i], gain_y[i], res.y[i], momentum);
            mx += res.x[i];
            my += res.y[i];
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            res.x[i] -= mx;
            res.y[i] -= my;
        }
        if ((iter + 1) % kKlCheckInterval == 0 || iter + 1 == options.iterations) {
            const double kl = kl_divergence(p, res.x, res.y);
            if (kl <= best_kl) {
                best_kl = kl;
                best_x = res.x;
                best_y = res.y;
            }
        }
    }
    res.x = std::move(best_x);
    res.y = std::move(best_y);
    res.kl_final = best_kl;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(res.x[i]) || !std::isfinite(res.y[i])) {
            throw ContractError("t-SNE diverged to a non-finite layout");
        }
    }
    return res;
}

TsneResult tsne(std::span<const EmbeddingVector> points, const TsneOptions& options) {
    const auto p = conditional_affinities(points, options.perplexity);
    std::vector<double> x, y;
    initial_layout(points.size(), options.seed, options.init_sigma, x, y);
    return tsne(p, options, x, y);
}

} // namespace dyadloop
