#pragma once

#include <cstdint>
#include <vector>

#include "ctk/nn/tensor.hpp"
#include "ctk/rng.hpp"

// Stateless forward/backward kernels. Layers in layers.hpp wrap these with
// caches; tests call them directly.
namespace ctk::nn {

enum class Padding { valid, same };

struct ConvGeometry {
    int out_h = 0;
    int out_w = 0;
    int pad_top = 0;
    int pad_left = 0;
};

ConvGeometry conv_geometry(int in_h, int in_w, int k_h, int k_w, int stride, Padding padding);

template <typename T>
struct ConvGrads {
    BasicTensor<T> dx, dw, db;
};

/// x: [N,H,W,C], w: [KH,KW,C,O], b: [O] -> [N,OH,OW,O]. Cross-correlation.
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b, int stride,
                              Padding padding);

/// Direct loop form of conv2d_forward with the same accumulation order.
template <typename T>
BasicTensor<T> conv2d_forward_reference(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b,
                                        int stride, Padding padding);

/// With need_dx false the returned dx is empty.
template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& dy, int stride,
                             Padding padding, bool need_dx = true);

template <typename T>
struct PoolResult {
    BasicTensor<T> y;
    std::vector<std::uint32_t> argmax;  // flat input index per output element
};

template <typename T>
PoolResult<T> maxpool2d_forward(const BasicTensor<T>& x, int window, int stride);

template <typename T>
BasicTensor<T> maxpool2d_backward(const BasicTensor<T>& dy, const std::vector<std::uint32_t>& argmax,
                                  const Shape& x_shape);

template <typename T>
struct DenseGrads {
    BasicTensor<T> dx, dw, db;
};

/// x: [N,F], w: [F,O], b: [O] -> [N,O]
template <typename T>
BasicTensor<T> dense_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b);

template <typename T>
DenseGrads<T> dense_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& dy);

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x);

/// Passes gradient where x > 0; zero at exactly 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy);

template <typename T>
struct DropoutResult {
    BasicTensor<T> y;
    BasicTensor<T> mask;  // 0 or 1/(1-rate)
};

/// Inverted dropout. In inference mode, or with rate 0, y = x and mask = 1.
template <typename T>
DropoutResult<T> dropout_forward(const BasicTensor<T>& x, double rate, Rng& rng, bool training);

template <typename T>
BasicTensor<T> dropout_backward(const BasicTensor<T>& dy, const BasicTensor<T>& mask);

template <typename T>
struct BatchNormCache {
    BasicTensor<T> x_hat;
    std::vector<T> inv_std;
};

template <typename T>
struct BatchNormGrads {
    BasicTensor<T> dx, dgamma, dbeta;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

/// Normalizes over every axis except the last (channels). Training mode uses
/// batch statistics and updates the running ones; inference uses running stats.
template <typename T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                                 BasicTensor<T>& running_mean, BasicTensor<T>& running_var, bool training,
                                 BatchNormCache<T>* cache);

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BasicTensor<T>& dy, const BasicTensor<T>& gamma,
                                     const BatchNormCache<T>& cache);

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

template <typename T>
struct XentResult {
    double loss = 0;
    BasicTensor<T> dlogits;
};

/// Mean over the batch of -log softmax(logits)[true]; dlogits = (p - y) / N.
template <typename T>
XentResult<T> softmax_xent(const BasicTensor<T>& logits, const BasicTensor<T>& one_hot);

/// Same loss from integer class ids.
template <typename T>
XentResult<T> softmax_xent(const BasicTensor<T>& logits, const std::vector<int>& classes);

}  // namespace ctk::nn
