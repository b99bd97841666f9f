#include "ctk/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ctk/error.hpp"
#include "ctk/rng.hpp"

namespace ctk::tsne {

std::vector<double> squared_distances(const std::vector<double>& points, int dim) {
    if (dim < 1 || points.size() % dim) throw ShapeError("point buffer is not a multiple of the dimension");
    const int n = static_cast<int>(points.size() / dim);
    std::vector<double> d2(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double s = 0;
            for (int k = 0; k < dim; ++k) {
                const double diff = points[i * dim + k] - points[j * dim + k];
                s += diff * diff;
            }
            d2[static_cast<std::size_t>(i) * n + j] = d2[static_cast<std::size_t>(j) * n + i] = s;
        }
    return d2;
}

std::vector<double> cond_p_row(const std::vector<double>& d2, int self, double sigma) {
    if (!(sigma > 0)) throw ParamError("sigma must be > 0");
    const int n = static_cast<int>(d2.size());
    double dmin = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j)
        if (j != self) dmin = std::min(dmin, d2[j]);
    if (!std::isfinite(dmin)) throw DegenerateError("all distances in the row are infinite");
    std::vector<double> p(n, 0.0);
    const double scale = 1.0 / (2 * sigma * sigma);
    double sum = 0;
    for (int j = 0; j < n; ++j) {
        if (j == self) continue;
        p[j] = std::exp(-(d2[j] - dmin) * scale);
        sum += p[j];
    }
    for (auto& v : p) v /= sum;
    return p;
}

double entropy_bits(const std::vector<double>& p) {
    double h = 0;
    for (double v : p)
        if (v > 0) h -= v * std::log2(v);
    return h;
}

SigmaResult sigma_search(const std::vector<double>& d2, int self, double perplexity, double tol) {
    const int n = static_cast<int>(d2.size());
    if (!(perplexity > 1) || !(perplexity < n))
        throw ParamError("perplexity must lie in (1, " + std::to_string(n) + "), got " + std::to_string(perplexity));
    const double target = std::log2(perplexity);
    SigmaResult r;
    auto eval = [&](double sigma) {
        r.sigma = sigma;
        r.entropy = entropy_bits(cond_p_row(d2, self, sigma));
        r.residual = std::abs(r.entropy - target);
        ++r.iterations;
        return r.entropy;
    };

    // Start at the RMS neighbour distance; entropy grows with sigma.
    double mean = 0;
    int count = 0;
    for (int j = 0; j < n; ++j)
        if (j != self && std::isfinite(d2[j])) mean += d2[j], ++count;
    double sigma = count && mean > 0 ? std::sqrt(mean / count) : 1.0;
    double lo = 0, hi = 0;
    double h = eval(sigma);
    while (r.residual >= tol && r.iterations < 100) {
        if (h < target) {
            lo = sigma;
            sigma = hi > 0 ? std::sqrt(lo * hi) : sigma * 2;
        } else {
            hi = sigma;
            sigma = lo > 0 ? std::sqrt(lo * hi) : sigma / 2;
        }
        h = eval(sigma);
    }
    if (r.residual >= tol)
        throw ConvergenceError("sigma search did not reach perplexity " + std::to_string(perplexity), r.residual);
    return r;
}

Affinity conditional_p(const std::vector<double>& d2, int n, double perplexity, std::vector<double>* sigmas) {
    Affinity p(n);
    if (sigmas) sigmas->assign(n, 0.0);
    std::vector<double> row(n);
    for (int i = 0; i < n; ++i) {
        std::copy_n(d2.begin() + static_cast<std::ptrdiff_t>(i) * n, n, row.begin());
        const auto s = sigma_search(row, i, perplexity);
        const auto pr = cond_p_row(row, i, s.sigma);
        std::copy(pr.begin(), pr.end(), p.v.begin() + static_cast<std::ptrdiff_t>(i) * n);
        if (sigmas) (*sigmas)[i] = s.sigma;
    }
    return p;
}

namespace {

void floor_and_normalize(Affinity& a) {
    double sum = 0;
    for (int i = 0; i < a.n; ++i)
        for (int j = 0; j < a.n; ++j) {
            if (i == j) continue;
            a.at(i, j) = std::max(a.at(i, j), kFloor);
            sum += a.at(i, j);
        }
    for (auto& v : a.v) v /= sum;
}

}  // namespace

Affinity joint_p(const Affinity& cond) {
    const int n = cond.n;
    Affinity p(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) p.at(i, j) = (cond.at(i, j) + cond.at(j, i)) / (2.0 * n);
    floor_and_normalize(p);
    return p;
}

Affinity q_student(const std::vector<double>& y, int dims) {
    const int n = static_cast<int>(y.size() / dims);
    if (n < 2) throw ParamError("Q needs at least two points");
    Affinity q(n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double d = 0;
            for (int k = 0; k < dims; ++k) {
                const double diff = y[i * dims + k] - y[j * dims + k];
                d += diff * diff;
            }
            q.at(i, j) = q.at(j, i) = 1.0 / (1.0 + d);
        }
    floor_and_normalize(q);
    return q;
}

double kl_cost(const Affinity& p, const Affinity& q) {
    if (p.n != q.n) throw ShapeError("P and Q differ in size");
    double c = 0;
    for (std::size_t i = 0; i < p.v.size(); ++i) {
        if (p.v[i] <= 0) continue;
        if (q.v[i] <= 0) throw DegenerateError("KL cost is infinite: q = 0 where p > 0");
        c += p.v[i] * std::log(p.v[i] / q.v[i]);
    }
    return c;
}

std::vector<double> kl_gradient(const Affinity& p, const std::vector<double>& y, int dims) {
    const int n = p.n;
    const Affinity q = q_student(y, dims);
    std::vector<double> g(y.size(), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            double d = 0;
            for (int k = 0; k < dims; ++k) {
                const double diff = y[i * dims + k] - y[j * dims + k];
                d += diff * diff;
            }
            const double w = 4 * (p.at(i, j) - q.at(i, j)) / (1.0 + d);
            for (int k = 0; k < dims; ++k) g[i * dims + k] += w * (y[i * dims + k] - y[j * dims + k]);
        }
    return g;
}

Embedding embed(const std::vector<double>& points, int dim, const EmbedConfig& cfg,
                const std::function<void(int, double)>& progress) {
    if (cfg.dims != 2 && cfg.dims != 3) throw ParamError("embedding dimension must be 2 or 3");
    if (dim < 1 || points.size() % dim) throw ShapeError("point buffer is not a multiple of the dimension");
    const int n = static_cast<int>(points.size() / dim);
    if (n < 4) throw ParamError("t-SNE needs at least 4 points");
    if (cfg.iterations < 0) throw ParamError("iterations must be >= 0");

    const Affinity p = joint_p(conditional_p(squared_distances(points, dim), n, cfg.perplexity));
    Affinity pe = p;
    for (auto& v : pe.v) v *= cfg.exaggeration;

    Embedding e;
    e.n = n;
    e.dims = cfg.dims;
    e.y.resize(static_cast<std::size_t>(n) * cfg.dims);
    Rng rng(cfg.seed);
    for (auto& v : e.y) v = cfg.init_sigma * rng.normal();
    std::vector<double> velocity(e.y.size(), 0.0);

    for (int it = 0; it < cfg.iterations; ++it) {
        const bool exaggerate = it < cfg.exaggeration_iters;
        const double momentum = it < cfg.momentum_switch ? cfg.momentum : cfg.final_momentum;
        e.cost.push_back(kl_cost(p, q_student(e.y, cfg.dims)));
        const auto g = kl_gradient(exaggerate ? pe : p, e.y, cfg.dims);
        for (std::size_t k = 0; k < e.y.size(); ++k) {
            velocity[k] = momentum * velocity[k] - cfg.learning_rate * g[k];
            e.y[k] += velocity[k];
        }
        for (int k = 0; k < cfg.dims; ++k) {
            double mean = 0;
            for (int i = 0; i < n; ++i) mean += e.y[i * cfg.dims + k];
            mean /= n;
            for (int i = 0; i < n; ++i) e.y[i * cfg.dims + k] -= mean;
        }
        if (progress) progress(it, e.cost.back());
    }
    return e;
}

}  // namespace ctk::tsne
