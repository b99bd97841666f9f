#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctk/nn/ops.hpp"
#include "ctk/nn/tensor.hpp"
#include "ctk/rng.hpp"

namespace ctk::nn {

enum class LayerKind { conv2d, relu, maxpool2d, dropout, batchnorm, flatten, dense };

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    int out_channels = 0;  // conv2d
    int kernel_h = 3;
    int kernel_w = 3;
    int stride = 1;
    Padding padding = Padding::valid;
    int window = 2;  // maxpool2d
    double rate = 0;  // dropout
    int out_features = 0;  // dense

    static LayerSpec conv(int out_channels, int k, Padding p = Padding::valid, int stride = 1);
    static LayerSpec pool(int window, int stride = 0);
    static LayerSpec drop(double rate);
    static LayerSpec dense(int out_features);
    static LayerSpec of(LayerKind kind);

    void validate() const;
};

/// Backbone plus `heads` parallel dense+softmax heads of width charset.size().
struct ModelSpec {
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<LayerSpec> backbone;
    int heads = 1;
    std::string charset;

    int classes() const { return static_cast<int>(charset.size()); }
    void validate() const;
};

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

/// Character classifier: conv32 same, conv32, pool, dropout, conv64 same,
/// conv64, pool, dropout, dense 512, dropout, one head.
ModelSpec char_cnn_spec(int cell, std::string charset);

/// Multi-head CAPTCHA model: three conv/batchnorm/pool stages (32, 64, 64
/// filters), dense 1024, dropout before the heads, one head per position.
ModelSpec multihead_spec(int height, int width, int heads, std::string charset);

template <typename T>
struct Param {
    std::string name;
    BasicTensor<T> value;
    BasicTensor<T> grad;
    bool trainable = true;
};

template <typename T>
class Layer {
public:
    virtual ~Layer() = default;
    /// Per-sample shape (without the batch axis) produced for `in`.
    virtual Shape output_shape(const Shape& in) const = 0;
    virtual BasicTensor<T> forward(const BasicTensor<T>& x, bool training) = 0;
    /// Returns dL/dx and accumulates parameter gradients into params().
    virtual BasicTensor<T> backward(const BasicTensor<T>& dy) = 0;
    virtual std::vector<Param<T>*> params() { return {}; }
    virtual std::string name() const = 0;
};

template <typename T>
class Model {
public:
    /// Builds layers and initializes weights (He normal, zero bias) from `seed`.
    Model(ModelSpec spec, std::uint64_t seed);

    const ModelSpec& spec() const { return spec_; }

    /// x: [N,H,W,C]. Returns one [N, classes] logit tensor per head.
    std::vector<BasicTensor<T>> forward(const BasicTensor<T>& x, bool training);

    /// Consumes per-head dL/dlogits; parameter grads are overwritten.
    void backward(const std::vector<BasicTensor<T>>& dlogits);

    /// Forward + summed per-head cross-entropy + backward. labels: [N * heads].
    double loss_and_grad(const BasicTensor<T>& x, const std::vector<int>& labels);

    std::vector<Param<T>*> params();
    std::size_t parameter_count();

    void zero_grad();

    /// Test hook: negates dL/dx leaving backbone layer `index` (-1 disables).
    void sabotage_backward(int index) { sabotage_ = index; }

    /// Per-head argmax class ids, [N * heads] in sample-major order.
    std::vector<int> predict_classes(const BasicTensor<T>& x);

    template <typename U>
    void copy_weights_from(Model<U>& other);

private:
    ModelSpec spec_;
    std::vector<std::unique_ptr<Layer<T>>> backbone_;
    std::vector<std::unique_ptr<Layer<T>>> heads_;
    Shape feature_shape_;
    int sabotage_ = -1;
};

/// Concatenates per-head argmax through the charset.
template <typename T>
std::string predict_string(Model<T>& model, const BasicTensor<T>& image);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace ctk::nn
