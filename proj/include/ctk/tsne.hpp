#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace ctk::tsne {

/// Dense row-major n x n matrix (conditional P, joint P or Q).
struct Affinity {
    int n = 0;
    std::vector<double> v;

    Affinity() = default;
    explicit Affinity(int size) : n(size), v(static_cast<std::size_t>(size) * size, 0.0) {}
    double& at(int i, int j) { return v[static_cast<std::size_t>(i) * n + j]; }
    double at(int i, int j) const { return v[static_cast<std::size_t>(i) * n + j]; }
};

inline constexpr double kFloor = 1e-12;

/// Squared Euclidean distances between the rows of `points` (n x dim).
std::vector<double> squared_distances(const std::vector<double>& points, int dim);

/// p_{j|i} for one row of squared distances; entry `self` is excluded and 0.
std::vector<double> cond_p_row(const std::vector<double>& d2, int self, double sigma);

/// Shannon entropy in bits.
double entropy_bits(const std::vector<double>& p);

struct SigmaResult {
    double sigma = 0;
    double entropy = 0;   // bits
    double residual = 0;  // |entropy - log2(perplexity)|
    int iterations = 0;
};

/// Bisection on sigma (geometric midpoints after bracket doubling) until the
/// row entropy is within `tol` bits of log2(perplexity); at most 100 steps.
SigmaResult sigma_search(const std::vector<double>& d2, int self, double perplexity, double tol = 1e-5);

/// Conditional matrix with per-row calibrated sigmas.
Affinity conditional_p(const std::vector<double>& d2, int n, double perplexity, std::vector<double>* sigmas = nullptr);

/// (p_{j|i} + p_{i|j}) / 2n with a floor, renormalized to sum 1.
Affinity joint_p(const Affinity& cond);

/// Symmetric Student-t affinities of an embedding (n x dims), floored and
/// renormalized.
Affinity q_student(const std::vector<double>& y, int dims);

/// Sum of p log(p/q) over p > 0.
double kl_cost(const Affinity& p, const Affinity& q);

/// dC/dy_i = 4 sum_j (p_ij - q_ij)(y_i - y_j) / (1 + |y_i - y_j|^2).
std::vector<double> kl_gradient(const Affinity& p, const std::vector<double>& y, int dims);

struct EmbedConfig {
    int dims = 2;
    double perplexity = 30;
    int iterations = 1000;
    std::uint64_t seed = 42;
    double learning_rate = 100;
    double exaggeration = 4;
    int exaggeration_iters = 50;
    double momentum = 0.5;
    double final_momentum = 0.8;
    int momentum_switch = 250;
    double init_sigma = 1e-4;
};

struct Embedding {
    int n = 0;
    int dims = 0;
    std::vector<double> y;     // n x dims
    std::vector<double> cost;  // KL against un-exaggerated P, one per iteration
};

Embedding embed(const std::vector<double>& points, int dim, const EmbedConfig& cfg,
                const std::function<void(int, double)>& progress = {});

}  // namespace ctk::tsne
