#include "ctk/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ctk/nn/gemm.hpp"

namespace ctk::nn {

namespace {

void require_rank(const Shape& s, int rank, const char* what) {
    if (static_cast<int>(s.size()) != rank)
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " + to_string(s));
}

struct ConvDims {
    int n, h, w, c, kh, kw, o, stride;
    ConvGeometry g;
    int rows() const { return n * g.out_h * g.out_w; }
    int depth() const { return kh * kw * c; }
};

template <typename T>
ConvDims conv_dims(const BasicTensor<T>& x, const BasicTensor<T>& w, int stride, Padding padding) {
    require_rank(x.shape, 4, "conv2d input");
    require_rank(w.shape, 4, "conv2d weights");
    if (stride < 1) throw ParamError("conv2d stride must be >= 1");
    if (w.dim(2) != x.dim(3))
        throw ShapeError("conv2d: input has " + std::to_string(x.dim(3)) + " channels but weights expect " +
                         std::to_string(w.dim(2)) + " (input " + to_string(x.shape) + ", weights " +
                         to_string(w.shape) + ")");
    ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(1), w.dim(3), stride, {}};
    d.g = conv_geometry(d.h, d.w, d.kh, d.kw, stride, padding);
    return d;
}

template <typename T>
std::vector<T> im2col(const BasicTensor<T>& x, const ConvDims& d) {
    const int K = d.depth();
    std::vector<T> cols(static_cast<std::size_t>(d.rows()) * K);
    T* row = cols.data();
    for (int n = 0; n < d.n; ++n)
        for (int oh = 0; oh < d.g.out_h; ++oh)
            for (int ow = 0; ow < d.g.out_w; ++ow, row += K) {
                T* dst = row;
                for (int kh = 0; kh < d.kh; ++kh) {
                    const int ih = oh * d.stride - d.g.pad_top + kh;
                    for (int kw = 0; kw < d.kw; ++kw, dst += d.c) {
                        const int iw = ow * d.stride - d.g.pad_left + kw;
                        if (ih < 0 || ih >= d.h || iw < 0 || iw >= d.w) {
                            for (int c = 0; c < d.c; ++c) dst[c] = T(0);
                        } else {
                            const T* src = x.ptr() + ((static_cast<std::size_t>(n) * d.h + ih) * d.w + iw) * d.c;
                            for (int c = 0; c < d.c; ++c) dst[c] = src[c];
                        }
                    }
                }
            }
    return cols;
}

template <typename T>
void col2im(const std::vector<T>& cols, const ConvDims& d, BasicTensor<T>& dx) {
    const int K = d.depth();
    const T* row = cols.data();
    for (int n = 0; n < d.n; ++n)
        for (int oh = 0; oh < d.g.out_h; ++oh)
            for (int ow = 0; ow < d.g.out_w; ++ow, row += K) {
                const T* src = row;
                for (int kh = 0; kh < d.kh; ++kh) {
                    const int ih = oh * d.stride - d.g.pad_top + kh;
                    for (int kw = 0; kw < d.kw; ++kw, src += d.c) {
                        const int iw = ow * d.stride - d.g.pad_left + kw;
                        if (ih < 0 || ih >= d.h || iw < 0 || iw >= d.w) continue;
                        T* dst = dx.ptr() + ((static_cast<std::size_t>(n) * d.h + ih) * d.w + iw) * d.c;
                        for (int c = 0; c < d.c; ++c) dst[c] += src[c];
                    }
                }
            }
}

template <typename T>
void add_bias(BasicTensor<T>& y, const BasicTensor<T>& b) {
    const std::size_t o = b.size();
    for (std::size_t i = 0; i < y.size(); i += o)
        for (std::size_t j = 0; j < o; ++j) y.data[i + j] += b.data[j];
}

template <typename T>
BasicTensor<T> column_sums(const BasicTensor<T>& dy, int cols) {
    BasicTensor<T> out(Shape{cols});
    for (std::size_t i = 0; i < dy.size(); i += cols)
        for (int j = 0; j < cols; ++j) out.data[j] += dy.data[i + j];
    return out;
}

}  // namespace

ConvGeometry conv_geometry(int in_h, int in_w, int k_h, int k_w, int stride, Padding padding) {
    ConvGeometry g;
    if (padding == Padding::valid) {
        if (k_h > in_h || k_w > in_w)
            throw ShapeError("conv2d: kernel " + std::to_string(k_h) + "x" + std::to_string(k_w) +
                             " larger than input " + std::to_string(in_h) + "x" + std::to_string(in_w));
        g.out_h = (in_h - k_h) / stride + 1;
        g.out_w = (in_w - k_w) / stride + 1;
    } else {
        g.out_h = (in_h + stride - 1) / stride;
        g.out_w = (in_w + stride - 1) / stride;
        g.pad_top = std::max((g.out_h - 1) * stride + k_h - in_h, 0) / 2;
        g.pad_left = std::max((g.out_w - 1) * stride + k_w - in_w, 0) / 2;
    }
    return g;
}

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b, int stride,
                              Padding padding) {
    auto d = conv_dims(x, w, stride, padding);
    if (static_cast<int>(b.size()) != d.o) throw ShapeError("conv2d: bias length does not match output channels");
    auto cols = im2col(x, d);
    BasicTensor<T> y(Shape{d.n, d.g.out_h, d.g.out_w, d.o});
    gemm_acc(d.rows(), d.o, d.depth(), cols.data(), d.depth(), w.ptr(), d.o, y.ptr(), d.o);
    add_bias(y, b);
    return y;
}

template <typename T>
BasicTensor<T> conv2d_forward_reference(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b,
                                        int stride, Padding padding) {
    auto d = conv_dims(x, w, stride, padding);
    BasicTensor<T> y(Shape{d.n, d.g.out_h, d.g.out_w, d.o});
    std::size_t idx = 0;
    for (int n = 0; n < d.n; ++n)
        for (int oh = 0; oh < d.g.out_h; ++oh)
            for (int ow = 0; ow < d.g.out_w; ++ow)
                for (int o = 0; o < d.o; ++o) {
                    T acc = 0;
                    for (int kh = 0; kh < d.kh; ++kh)
                        for (int kw = 0; kw < d.kw; ++kw)
                            for (int c = 0; c < d.c; ++c) {
                                const int ih = oh * stride - d.g.pad_top + kh;
                                const int iw = ow * stride - d.g.pad_left + kw;
                                T xv = 0;
                                if (ih >= 0 && ih < d.h && iw >= 0 && iw < d.w)
                                    xv = x.data[((static_cast<std::size_t>(n) * d.h + ih) * d.w + iw) * d.c + c];
                                T wv = w.data[((static_cast<std::size_t>(kh) * d.kw + kw) * d.c + c) * d.o + o];
                                acc = std::fma(xv, wv, acc);
                            }
                    y.data[idx++] = acc + b.data[o];
                }
    return y;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& dy, int stride,
                             Padding padding, bool need_dx) {
    auto d = conv_dims(x, w, stride, padding);
    const Shape want{d.n, d.g.out_h, d.g.out_w, d.o};
    if (dy.shape != want) throw ShapeError("conv2d backward: dy " + to_string(dy.shape) + ", expected " + to_string(want));
    const int M = d.rows();
    const int K = d.depth();

    auto cols = im2col(x, d);
    ConvGrads<T> g{{}, BasicTensor<T>(w.shape), {}};
    gemm_tn_acc(K, d.o, M, cols.data(), K, dy.ptr(), d.o, g.dw.ptr(), d.o);
    g.db = column_sums(dy, d.o);
    if (!need_dx) return g;

    g.dx = BasicTensor<T>(x.shape);
    std::vector<T> w_t(w.size());
    transpose(K, d.o, w.ptr(), w_t.data());
    std::fill(cols.begin(), cols.end(), T(0));
    gemm_acc(M, K, d.o, dy.ptr(), d.o, w_t.data(), K, cols.data(), K);
    col2im(cols, d, g.dx);
    return g;
}

template <typename T>
PoolResult<T> maxpool2d_forward(const BasicTensor<T>& x, int window, int stride) {
    require_rank(x.shape, 4, "maxpool2d input");
    if (window < 1 || stride < 1) throw ParamError("maxpool2d window and stride must be >= 1");
    const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    if (window > h || window > w)
        throw ShapeError("maxpool2d: window " + std::to_string(window) + " exceeds input " + to_string(x.shape));
    const int oh = (h - window) / stride + 1;
    const int ow = (w - window) / stride + 1;
    PoolResult<T> r{BasicTensor<T>(Shape{n, oh, ow, c}), {}};
    r.argmax.resize(r.y.size());
    std::size_t out = 0;
    for (int b = 0; b < n; ++b)
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j)
                for (int ch = 0; ch < c; ++ch, ++out) {
                    std::size_t best = ((static_cast<std::size_t>(b) * h + i * stride) * w + j * stride) * c + ch;
                    T best_v = x.data[best];
                    for (int di = 0; di < window; ++di)
                        for (int dj = 0; dj < window; ++dj) {
                            std::size_t at = ((static_cast<std::size_t>(b) * h + i * stride + di) * w + j * stride + dj) * c + ch;
                            if (x.data[at] > best_v) {
                                best_v = x.data[at];
                                best = at;
                            }
                        }
                    r.y.data[out] = best_v;
                    r.argmax[out] = static_cast<std::uint32_t>(best);
                }
    return r;
}

template <typename T>
BasicTensor<T> maxpool2d_backward(const BasicTensor<T>& dy, const std::vector<std::uint32_t>& argmax,
                                  const Shape& x_shape) {
    if (dy.size() != argmax.size()) throw ShapeError("maxpool2d backward: dy does not match forward output");
    BasicTensor<T> dx(x_shape);
    for (std::size_t i = 0; i < dy.size(); ++i) dx.data[argmax[i]] += dy.data[i];
    return dx;
}

template <typename T>
BasicTensor<T> dense_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
    require_rank(w.shape, 2, "dense weights");
    if (x.rank() < 1) throw ShapeError("dense input must have a batch axis");
    const int n = x.dim(0);
    const int f = n ? static_cast<int>(x.size() / n) : 0;
    if (f != w.dim(0))
        throw ShapeError("dense: input features " + std::to_string(f) + " != weight rows " + std::to_string(w.dim(0)));
    const int o = w.dim(1);
    if (static_cast<int>(b.size()) != o) throw ShapeError("dense: bias length does not match output width");
    BasicTensor<T> y(Shape{n, o});
    gemm_acc(n, o, f, x.ptr(), f, w.ptr(), o, y.ptr(), o);
    add_bias(y, b);
    return y;
}

template <typename T>
DenseGrads<T> dense_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& dy) {
    const int n = x.dim(0);
    const int f = w.dim(0);
    const int o = w.dim(1);
    if (dy.shape != Shape{n, o}) throw ShapeError("dense backward: dy " + to_string(dy.shape) + " unexpected");
    DenseGrads<T> g{BasicTensor<T>(x.shape), BasicTensor<T>(w.shape), {}};
    gemm_tn_acc(f, o, n, x.ptr(), f, dy.ptr(), o, g.dw.ptr(), o);
    g.db = column_sums(dy, o);
    std::vector<T> w_t(w.size());
    transpose(f, o, w.ptr(), w_t.data());
    gemm_acc(n, f, o, dy.ptr(), o, w_t.data(), f, g.dx.ptr(), f);
    return g;
}

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x) {
    BasicTensor<T> y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] > 0 ? x.data[i] : T(0);
    return y;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy) {
    if (x.shape != dy.shape) throw ShapeError("relu backward: shape mismatch");
    BasicTensor<T> dx(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) dx.data[i] = x.data[i] > 0 ? dy.data[i] : T(0);
    return dx;
}

template <typename T>
DropoutResult<T> dropout_forward(const BasicTensor<T>& x, double rate, Rng& rng, bool training) {
    if (!(rate >= 0 && rate < 1)) throw ParamError("dropout rate must be in [0, 1)");
    DropoutResult<T> r{x, BasicTensor<T>(x.shape, T(1))};
    if (!training || rate == 0) return r;
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T m = rng.uniform() < rate ? T(0) : scale;
        r.mask.data[i] = m;
        r.y.data[i] = x.data[i] * m;
    }
    return r;
}

template <typename T>
BasicTensor<T> dropout_backward(const BasicTensor<T>& dy, const BasicTensor<T>& mask) {
    if (dy.shape != mask.shape) throw ShapeError("dropout backward: shape mismatch");
    BasicTensor<T> dx(dy.shape);
    for (std::size_t i = 0; i < dy.size(); ++i) dx.data[i] = dy.data[i] * mask.data[i];
    return dx;
}

template <typename T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                                 BasicTensor<T>& running_mean, BasicTensor<T>& running_var, bool training,
                                 BatchNormCache<T>* cache) {
    if (x.rank() < 2) throw ShapeError("batchnorm input needs a batch axis and a channel axis");
    const int c = x.shape.back();
    if (static_cast<int>(gamma.size()) != c || static_cast<int>(beta.size()) != c ||
        static_cast<int>(running_mean.size()) != c || static_cast<int>(running_var.size()) != c)
        throw ShapeError("batchnorm: parameter length does not match " + std::to_string(c) + " channels");
    const std::size_t m = x.size() / c;
    BasicTensor<T> y(x.shape);
    std::vector<double> mean(c, 0.0), var(c, 0.0);
    if (training) {
        if (x.dim(0) < 2) throw ParamError("batchnorm: training needs a batch of at least 2");
        for (std::size_t i = 0; i < m; ++i)
            for (int ch = 0; ch < c; ++ch) mean[ch] += x.data[i * c + ch];
        for (auto& v : mean) v /= static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i)
            for (int ch = 0; ch < c; ++ch) {
                double dlt = x.data[i * c + ch] - mean[ch];
                var[ch] += dlt * dlt;
            }
        for (auto& v : var) v /= static_cast<double>(m);
        for (int ch = 0; ch < c; ++ch) {
            running_mean.data[ch] = static_cast<T>(kBatchNormMomentum * running_mean.data[ch] + (1 - kBatchNormMomentum) * mean[ch]);
            running_var.data[ch] = static_cast<T>(kBatchNormMomentum * running_var.data[ch] + (1 - kBatchNormMomentum) * var[ch]);
        }
    } else {
        for (int ch = 0; ch < c; ++ch) {
            mean[ch] = running_mean.data[ch];
            var[ch] = running_var.data[ch];
        }
    }
    std::vector<T> inv_std(c);
    for (int ch = 0; ch < c; ++ch) inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var[ch] + kBatchNormEps));
    BasicTensor<T> x_hat(x.shape);
    for (std::size_t i = 0; i < m; ++i)
        for (int ch = 0; ch < c; ++ch) {
            const std::size_t k = i * c + ch;
            x_hat.data[k] = static_cast<T>((x.data[k] - mean[ch]) * inv_std[ch]);
            y.data[k] = gamma.data[ch] * x_hat.data[k] + beta.data[ch];
        }
    if (cache) {
        cache->x_hat = std::move(x_hat);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BasicTensor<T>& dy, const BasicTensor<T>& gamma,
                                     const BatchNormCache<T>& cache) {
    if (dy.shape != cache.x_hat.shape) throw ShapeError("batchnorm backward: shape mismatch");
    const int c = dy.shape.back();
    const std::size_t m = dy.size() / c;
    BatchNormGrads<T> g{BasicTensor<T>(dy.shape), BasicTensor<T>(Shape{c}), BasicTensor<T>(Shape{c})};
    std::vector<double> sum_dxhat(c, 0.0), sum_dxhat_xhat(c, 0.0), dgamma(c, 0.0), dbeta(c, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (int ch = 0; ch < c; ++ch) {
            const std::size_t k = i * c + ch;
            const double d = dy.data[k];
            const double xh = cache.x_hat.data[k];
            dbeta[ch] += d;
            dgamma[ch] += d * xh;
            const double dxh = d * gamma.data[ch];
            sum_dxhat[ch] += dxh;
            sum_dxhat_xhat[ch] += dxh * xh;
        }
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
        for (int ch = 0; ch < c; ++ch) {
            const std::size_t k = i * c + ch;
            const double dxh = static_cast<double>(dy.data[k]) * gamma.data[ch];
            const double xh = cache.x_hat.data[k];
            g.dx.data[k] = static_cast<T>(cache.inv_std[ch] * inv_m *
                                          (static_cast<double>(m) * dxh - sum_dxhat[ch] - xh * sum_dxhat_xhat[ch]));
        }
    for (int ch = 0; ch < c; ++ch) {
        g.dgamma.data[ch] = static_cast<T>(dgamma[ch]);
        g.dbeta.data[ch] = static_cast<T>(dbeta[ch]);
    }
    return g;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
    require_rank(logits.shape, 2, "softmax logits");
    const int n = logits.dim(0), c = logits.dim(1);
    BasicTensor<T> p(logits.shape);
    for (int i = 0; i < n; ++i) {
        const T* z = logits.ptr() + static_cast<std::size_t>(i) * c;
        T* out = p.ptr() + static_cast<std::size_t>(i) * c;
        const T mx = *std::max_element(z, z + c);
        double sum = 0;
        for (int j = 0; j < c; ++j) sum += std::exp(static_cast<double>(z[j] - mx));
        for (int j = 0; j < c; ++j) out[j] = static_cast<T>(std::exp(static_cast<double>(z[j] - mx)) / sum);
    }
    return p;
}

template <typename T>
XentResult<T> softmax_xent(const BasicTensor<T>& logits, const std::vector<int>& classes) {
    require_rank(logits.shape, 2, "softmax_xent logits");
    const int n = logits.dim(0), c = logits.dim(1);
    if (static_cast<int>(classes.size()) != n) throw ShapeError("softmax_xent: label count does not match batch");
    XentResult<T> r{0.0, BasicTensor<T>(logits.shape)};
    for (int i = 0; i < n; ++i) {
        const int t = classes[i];
        if (t < 0 || t >= c) throw ParamError("softmax_xent: class id " + std::to_string(t) + " out of range");
        const T* z = logits.ptr() + static_cast<std::size_t>(i) * c;
        T* dz = r.dlogits.ptr() + static_cast<std::size_t>(i) * c;
        const double mx = *std::max_element(z, z + c);
        double sum = 0;
        for (int j = 0; j < c; ++j) sum += std::exp(z[j] - mx);
        const double log_sum = std::log(sum);
        r.loss += -((z[t] - mx) - log_sum);
        for (int j = 0; j < c; ++j) {
            const double p = std::exp(z[j] - mx - log_sum);
            dz[j] = static_cast<T>((p - (j == t ? 1.0 : 0.0)) / n);
        }
    }
    r.loss /= n;
    return r;
}

template <typename T>
XentResult<T> softmax_xent(const BasicTensor<T>& logits, const BasicTensor<T>& one_hot) {
    if (logits.shape != one_hot.shape)
        throw ShapeError("softmax_xent: logits " + to_string(logits.shape) + " vs targets " + to_string(one_hot.shape));
    require_rank(logits.shape, 2, "softmax_xent logits");
    const int n = logits.dim(0), c = logits.dim(1);
    std::vector<int> classes(n, -1);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
            const T v = one_hot.data[static_cast<std::size_t>(i) * c + j];
            if (v == T(1)) {
                if (classes[i] != -1) throw ParamError("softmax_xent: row " + std::to_string(i) + " is not one-hot");
                classes[i] = j;
            } else if (v != T(0)) {
                throw ParamError("softmax_xent: row " + std::to_string(i) + " is not one-hot");
            }
        }
    for (int i = 0; i < n; ++i)
        if (classes[i] == -1) throw ParamError("softmax_xent: row " + std::to_string(i) + " is not one-hot");
    return softmax_xent(logits, classes);
}

#define CTK_INSTANTIATE_OPS(T)                                                                                      \
    template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, int, \
                                           Padding);                                                                 \
    template BasicTensor<T> conv2d_forward_reference(const BasicTensor<T>&, const BasicTensor<T>&,                  \
                                                     const BasicTensor<T>&, int, Padding);                           \
    template ConvGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, int,  \
                                          Padding, bool);                                                             \
    template PoolResult<T> maxpool2d_forward(const BasicTensor<T>&, int, int);                                      \
    template BasicTensor<T> maxpool2d_backward(const BasicTensor<T>&, const std::vector<std::uint32_t>&,           \
                                               const Shape&);                                                        \
    template BasicTensor<T> dense_forward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);     \
    template DenseGrads<T> dense_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);     \
    template BasicTensor<T> relu_forward(const BasicTensor<T>&);                                                    \
    template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);                            \
    template DropoutResult<T> dropout_forward(const BasicTensor<T>&, double, Rng&, bool);                           \
    template BasicTensor<T> dropout_backward(const BasicTensor<T>&, const BasicTensor<T>&);                         \
    template BasicTensor<T> batchnorm_forward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,  \
                                              BasicTensor<T>&, BasicTensor<T>&, bool, BatchNormCache<T>*);           \
    template BatchNormGrads<T> batchnorm_backward(const BasicTensor<T>&, const BasicTensor<T>&,                     \
                                                  const BatchNormCache<T>&);                                         \
    template BasicTensor<T> softmax(const BasicTensor<T>&);                                                         \
    template XentResult<T> softmax_xent(const BasicTensor<T>&, const BasicTensor<T>&);                              \
    template XentResult<T> softmax_xent(const BasicTensor<T>&, const std::vector<int>&);

CTK_INSTANTIATE_OPS(float)
CTK_INSTANTIATE_OPS(double)

#undef CTK_INSTANTIATE_OPS

}  // namespace ctk::nn
