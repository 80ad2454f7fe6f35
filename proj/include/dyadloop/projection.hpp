#pragma once

#include "dyadloop/core.hpp"
#include "dyadloop/embedding.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace dyadloop {

/// Row-stochastic Gaussian neighbour probabilities p_{j|i} (row-major N x N)
/// with the per-row precision beta_i = 1 / (2 sigma_i^2) that was found.
struct ConditionalAffinities {
    std::size_t n = 0;
    double perplexity = 0.0;
    std::vector<double> p;
    std::vector<double> beta;

    double at(std::size_t i, std::size_t j) const { return p[i * n + j]; }
};

/// Symmetric joint affinities p_ij = (p_{j|i} + p_{i|j}) / 2N. Sums to 1,
/// zero diagonal.
struct AffinityMatrix {
    std::size_t n = 0;
    double perplexity = 0.0;
    std::vector<double> p;

    double at(std::size_t i, std::size_t j) const { return p[i * n + j]; }
};

/// Per-row bandwidths by bisection so that 2^H(row) equals the perplexity.
/// A row whose distances are all equal stays uniform whatever the target.
/// Throws ContractError when N < 4, perplexity <= 1 or >= N, dimensions
/// differ, or an input is non-finite.
ConditionalAffinities conditional_probabilities(std::span<const EmbeddingVector> points, double perplexity);

AffinityMatrix symmetrize(const ConditionalAffinities& conditional);

/// symmetrize(conditional_probabilities(points, perplexity))
AffinityMatrix conditional_affinities(std::span<const EmbeddingVector> points, double perplexity);

/// Defaults target N >= 51. Below roughly 40 points a rate of 100 overshoots
/// and layouts can scatter; pass a smaller learning_rate there.
struct TsneOptions {
    double perplexity = 5.0;
    int iterations = 500;
    double learning_rate = 100.0;
    double early_exaggeration = 4.0;
    int exaggeration_iterations = 100;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    int momentum_switch = 250;
    /// Seeds the N(0, init_sigma^2) initial layout.
    std::uint64_t seed = 1;
    double init_sigma = 1e-2;
};

struct TsneResult {
    std::vector<double> x;
    std::vector<double> y;
    double kl_initial = 0.0;
    double kl_final = 0.0;
    std::uint64_t seed = 0;
};

inline constexpr int kKlCheckInterval = 10;

/// KL(P || Q) with the Student-t kernel q_ij = w_ij / sum w.
double kl_divergence(const AffinityMatrix& p, std::span<const double> x, std::span<const double> y);

/// Gradient of kl_divergence with respect to each coordinate.
void kl_gradient(const AffinityMatrix& p, std::span<const double> x, std::span<const double> y,
                 std::span<double> grad_x, std::span<double> grad_y);

/// Seeded Gaussian start layout (Box-Muller over mt19937_64).
void initial_layout(std::size_t n, std::uint64_t seed, double sigma, std::vector<double>& x, std::vector<double>& y);

/// Exact-gradient t-SNE to 2-D with early exaggeration, momentum and
/// per-coordinate gains. The layout is re-centred every iteration.
///
/// KL is evaluated at the start, every kKlCheckInterval iterations and at
/// the end; the lowest-KL checkpoint is returned. That is normally the last
/// iterate, but momentum can leave a very small or nearly uniform problem
/// slightly uphill of where it started.
TsneResult tsne(const AffinityMatrix& p, const TsneOptions& options, std::span<const double> init_x,
                std::span<const double> init_y);
TsneResult tsne(std::span<const EmbeddingVector> points, const TsneOptions& options = {});

/// One projected output. `author` is empty for the seed sentence.
struct ProjectionPoint {
    double x = 0.0;
    double y = 0.0;
    int step_index = 0;
    std::optional<Author> author;
    int round_id = 0;
};

} // namespace dyadloop
