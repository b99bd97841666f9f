#include "ctk/nn/model.hpp"

#include <algorithm>
#include <cmath>

namespace ctk::nn {

LayerSpec LayerSpec::conv(int out_channels, int k, Padding p, int stride) {
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.out_channels = out_channels;
    s.kernel_h = s.kernel_w = k;
    s.padding = p;
    s.stride = stride;
    return s;
}

LayerSpec LayerSpec::pool(int window, int stride) {
    LayerSpec s;
    s.kind = LayerKind::maxpool2d;
    s.window = window;
    s.stride = stride > 0 ? stride : window;
    return s;
}

LayerSpec LayerSpec::drop(double rate) {
    LayerSpec s;
    s.kind = LayerKind::dropout;
    s.rate = rate;
    return s;
}

LayerSpec LayerSpec::dense(int out_features) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.out_features = out_features;
    return s;
}

LayerSpec LayerSpec::of(LayerKind kind) {
    LayerSpec s;
    s.kind = kind;
    return s;
}

void LayerSpec::validate() const {
    switch (kind) {
        case LayerKind::conv2d:
            if (out_channels < 1 || kernel_h < 1 || kernel_w < 1 || stride < 1)
                throw ParamError("conv2d parameters must be positive");
            break;
        case LayerKind::maxpool2d:
            if (window < 1 || stride < 1) throw ParamError("maxpool2d parameters must be positive");
            break;
        case LayerKind::dropout:
            if (!(rate >= 0 && rate < 1)) throw ParamError("dropout rate must be in [0, 1)");
            break;
        case LayerKind::dense:
            if (out_features < 1) throw ParamError("dense out_features must be positive");
            break;
        default:
            break;
    }
}

void ModelSpec::validate() const {
    if (height < 1 || width < 1 || channels < 1) throw ParamError("model input shape must be positive");
    if (heads < 1) throw ParamError("model needs at least one head");
    if (charset.empty()) throw ParamError("model charset is empty");
    for (const auto& l : backbone) l.validate();
}

namespace {

const char* kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::relu: return "relu";
        case LayerKind::maxpool2d: return "maxpool2d";
        case LayerKind::dropout: return "dropout";
        case LayerKind::batchnorm: return "batchnorm";
        case LayerKind::flatten: return "flatten";
        case LayerKind::dense: return "dense";
    }
    return "?";
}

LayerKind kind_from(const std::string& s) {
    for (auto k : {LayerKind::conv2d, LayerKind::relu, LayerKind::maxpool2d, LayerKind::dropout, LayerKind::batchnorm,
                   LayerKind::flatten, LayerKind::dense})
        if (s == kind_name(k)) return k;
    throw ParamError("unknown layer kind '" + s + "'");
}

}  // namespace

nlohmann::json to_json(const ModelSpec& spec) {
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (const auto& l : spec.backbone) {
        nlohmann::ordered_json j;
        j["kind"] = kind_name(l.kind);
        switch (l.kind) {
            case LayerKind::conv2d:
                j["out_channels"] = l.out_channels;
                j["kernel"] = {l.kernel_h, l.kernel_w};
                j["stride"] = l.stride;
                j["padding"] = l.padding == Padding::same ? "same" : "valid";
                break;
            case LayerKind::maxpool2d:
                j["window"] = l.window;
                j["stride"] = l.stride;
                break;
            case LayerKind::dropout: j["rate"] = l.rate; break;
            case LayerKind::dense: j["out_features"] = l.out_features; break;
            default: break;
        }
        layers.push_back(j);
    }
    nlohmann::ordered_json j;
    j["input"] = {spec.height, spec.width, spec.channels};
    j["backbone"] = layers;
    j["heads"] = spec.heads;
    j["charset"] = spec.charset;
    return nlohmann::json::parse(j.dump());
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
    try {
        ModelSpec s;
        auto in = j.at("input");
        s.height = in.at(0).get<int>();
        s.width = in.at(1).get<int>();
        s.channels = in.at(2).get<int>();
        for (const auto& lj : j.at("backbone")) {
            LayerSpec l;
            l.kind = kind_from(lj.at("kind").get<std::string>());
            switch (l.kind) {
                case LayerKind::conv2d:
                    l.out_channels = lj.at("out_channels").get<int>();
                    l.kernel_h = lj.at("kernel").at(0).get<int>();
                    l.kernel_w = lj.at("kernel").at(1).get<int>();
                    l.stride = lj.value("stride", 1);
                    l.padding = lj.value("padding", std::string("valid")) == "same" ? Padding::same : Padding::valid;
                    break;
                case LayerKind::maxpool2d:
                    l.window = lj.at("window").get<int>();
                    l.stride = lj.value("stride", l.window);
                    break;
                case LayerKind::dropout: l.rate = lj.at("rate").get<double>(); break;
                case LayerKind::dense: l.out_features = lj.at("out_features").get<int>(); break;
                default: break;
            }
            s.backbone.push_back(l);
        }
        s.heads = j.at("heads").get<int>();
        s.charset = j.at("charset").get<std::string>();
        s.validate();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ParamError(std::string("invalid model spec: ") + e.what());
    }
}

ModelSpec char_cnn_spec(int cell, std::string charset) {
    ModelSpec s;
    s.height = s.width = cell;
    s.channels = 1;
    s.heads = 1;
    s.charset = std::move(charset);
    using L = LayerSpec;
    s.backbone = {L::conv(32, 3, Padding::same), L::of(LayerKind::relu), L::conv(32, 3), L::of(LayerKind::relu),
                  L::pool(2),                    L::drop(0.25),          L::conv(64, 3, Padding::same),
                  L::of(LayerKind::relu),        L::conv(64, 3),         L::of(LayerKind::relu),
                  L::pool(2),                    L::drop(0.25),          L::of(LayerKind::flatten),
                  L::dense(512),                 L::of(LayerKind::relu), L::drop(0.5)};
    return s;
}

ModelSpec multihead_spec(int height, int width, int heads, std::string charset) {
    ModelSpec s;
    s.height = height;
    s.width = width;
    s.channels = 1;
    s.heads = heads;
    s.charset = std::move(charset);
    using L = LayerSpec;
    const auto relu = L::of(LayerKind::relu);
    const auto bn = L::of(LayerKind::batchnorm);
    s.backbone = {L::conv(32, 3), bn, relu, L::pool(2), L::conv(64, 3), bn, relu, L::pool(2),
                  L::conv(64, 3), bn, relu, L::pool(2), L::of(LayerKind::flatten), L::dense(1024), relu,
                  L::drop(0.5)};
    return s;
}

namespace {

template <typename T>
void he_init(BasicTensor<T>& w, int fan_in, Rng& rng) {
    const double sd = std::sqrt(2.0 / fan_in);
    for (auto& v : w.data) v = static_cast<T>(rng.normal() * sd);
}

template <typename T>
class Conv2dLayer final : public Layer<T> {
public:
    Conv2dLayer(const LayerSpec& s, int in_channels, Rng& rng, int index)
        : stride_(s.stride), padding_(s.padding), first_(index == 0),
          w_{"conv" + std::to_string(index) + ".w", BasicTensor<T>(Shape{s.kernel_h, s.kernel_w, in_channels, s.out_channels}),
             BasicTensor<T>(Shape{s.kernel_h, s.kernel_w, in_channels, s.out_channels})},
          b_{"conv" + std::to_string(index) + ".b", BasicTensor<T>(Shape{s.out_channels}),
             BasicTensor<T>(Shape{s.out_channels})} {
        he_init(w_.value, s.kernel_h * s.kernel_w * in_channels, rng);
    }
    Shape output_shape(const Shape& in) const override {
        auto g = conv_geometry(in[0], in[1], w_.value.dim(0), w_.value.dim(1), stride_, padding_);
        return {g.out_h, g.out_w, w_.value.dim(3)};
    }
    BasicTensor<T> forward(const BasicTensor<T>& x, bool) override {
        x_ = x;
        return conv2d_forward(x, w_.value, b_.value, stride_, padding_);
    }
    BasicTensor<T> backward(const BasicTensor<T>& dy) override {
        // Nothing upstream of the first layer consumes its input gradient.
        auto g = conv2d_backward(x_, w_.value, dy, stride_, padding_, !first_);
        w_.grad = std::move(g.dw);
        b_.grad = std::move(g.db);
        return std::move(g.dx);
    }
    std::vector<Param<T>*> params() override { return {&w_, &b_}; }
    std::string name() const override { return "conv2d"; }

private:
    int stride_;
    Padding padding_;
    bool first_;
    Param<T> w_, b_;
    BasicTensor<T> x_;
};

template <typename T>
class DenseLayer final : public Layer<T> {
public:
    DenseLayer(const std::string& name, int in, int out, Rng& rng)
        : w_{name + ".w", BasicTensor<T>(Shape{in, out}), BasicTensor<T>(Shape{in, out})},
          b_{name + ".b", BasicTensor<T>(Shape{out}), BasicTensor<T>(Shape{out})} {
        he_init(w_.value, in, rng);
    }
    Shape output_shape(const Shape&) const override { return {w_.value.dim(1)}; }
    BasicTensor<T> forward(const BasicTensor<T>& x, bool) override {
        x_ = x.reshaped({x.dim(0), static_cast<int>(x.size() / std::max(1, x.dim(0)))});
        in_shape_ = x.shape;
        return dense_forward(x_, w_.value, b_.value);
    }
    BasicTensor<T> backward(const BasicTensor<T>& dy) override {
        auto g = dense_backward(x_, w_.value, dy);
        w_.grad = std::move(g.dw);
        b_.grad = std::move(g.db);
        return g.dx.reshaped(in_shape_);
    }
    std::vector<Param<T>*> params() override { return {&w_, &b_}; }
    std::string name() const override { return "dense"; }

private:
    Param<T> w_, b_;
    BasicTensor<T> x_;
    Shape in_shape_;
};

template <typename T>
class ReluLayer final : public Layer<T> {
public:
    Shape output_shape(const Shape& in) const override { return in; }
    BasicTensor<T> forward(const BasicTensor<T>& x, bool) override {
        x_ = x;
        return relu_forward(x);
    }
    BasicTensor<T> backward(const BasicTensor<T>& dy) override { return relu_backward(x_, dy); }
    std::string name() const override { return "relu"; }

private:
    BasicTensor<T> x_;
};

template <typename T>
class MaxPoolLayer final : public Layer<T> {
public:
    MaxPoolLayer(int window, int stride) : window_(window), stride_(stride) {}
    Shape output_shape(const Shape& in) const override {
        if (in.size() != 3 || window_ > in[0] || window_ > in[1])
            throw ShapeError("maxpool2d window " + std::to_string(window_) + " does not fit " + to_string(in));
        return {(in[0] - window_) / stride_ + 1, (in[1] - window_) / stride_ + 1, in[2]};
    }
    BasicTensor<T> forward(const BasicTensor<T>& x, bool) override {
        auto r = maxpool2d_forward(x, window_, stride_);
        argmax_ = std::move(r.argmax);
        x_shape_ = x.shape;
        return std::move(r.y);
    }
    BasicTensor<T> backward(const BasicTensor<T>& dy) override { return maxpool2d_backward(dy, argmax_, x_shape_); }
    std::string name() const override { return "maxpool2d"; }

private:
    int window_, stride_;
    std::vector<std::uint32_t> argmax_;
    Shape x_shape_;
};

template <typename T>
class DropoutLayer final : public Layer<T> {
public:
    DropoutLayer(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {}
    Shape output_shape(const Shape& in) const override { return in; }
    BasicTensor<T> forward(const BasicTensor<T>& x, bool training) override {
        auto r = dropout_forward(x, rate_, rng_, training);
        mask_ = std::move(r.mask);
        return std::move(r.y);
    }
    BasicTensor<T> backward(const BasicTensor<T>& dy) override { return dropout_backward(dy, mask_); }
    std::string name() const override { return "dropout"; }

private:
    double rate_;
    Rng rng_;
    BasicTensor<T> mask_;
};

template <typename T>
class BatchNormLayer final : public Layer<T> {
public:
    BatchNormLayer(int channels, int index)
        : gamma_{"bn" + std::to_string(index) + ".gamma", BasicTensor<T>(Shape{channels}, T(1)), BasicTensor<T>(Shape{channels})},
          beta_{"bn" + std::to_string(index) + ".beta", BasicTensor<T>(Shape{channels}), BasicTensor<T>(Shape{channels})},
          mean_{"bn" + std::to_string(index) + ".running_mean", BasicTensor<T>(Shape{channels}), {}, false},
          var_{"bn" + std::to_string(index) + ".running_var", BasicTensor<T>(Shape{channels}, T(1)), {}, false} {}
    Shape output_shape(const Shape& in) const override { return in; }
    BasicTensor<T> forward(const BasicTensor<T>& x, bool training) override {
        return batchnorm_forward(x, gamma_.value, beta_.value, mean_.value, var_.value, training, &cache_);
    }
    BasicTensor<T> backward(const BasicTensor<T>& dy) override {
        auto g = batchnorm_backward(dy, gamma_.value, cache_);
        gamma_.grad = std::move(g.dgamma);
        beta_.grad = std::move(g.dbeta);
        return std::move(g.dx);
    }
    std::vector<Param<T>*> params() override { return {&gamma_, &beta_, &mean_, &var_}; }
    std::string name() const override { return "batchnorm"; }

private:
    Param<T> gamma_, beta_, mean_, var_;
    BatchNormCache<T> cache_;
};

template <typename T>
class FlattenLayer final : public Layer<T> {
public:
    Shape output_shape(const Shape& in) const override { return {static_cast<int>(element_count(in))}; }
    BasicTensor<T> forward(const BasicTensor<T>& x, bool) override {
        shape_ = x.shape;
        return x.reshaped({x.dim(0), static_cast<int>(x.size() / std::max(1, x.dim(0)))});
    }
    BasicTensor<T> backward(const BasicTensor<T>& dy) override { return dy.reshaped(shape_); }
    std::string name() const override { return "flatten"; }

private:
    Shape shape_;
};

}  // namespace

template <typename T>
Model<T>::Model(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    spec_.validate();
    Rng init(seed);
    Shape shape{spec_.height, spec_.width, spec_.channels};
    int index = 0;
    for (const auto& l : spec_.backbone) {
        std::unique_ptr<Layer<T>> layer;
        switch (l.kind) {
            case LayerKind::conv2d:
                if (shape.size() != 3) throw ShapeError("conv2d after flatten is not supported");
                layer = std::make_unique<Conv2dLayer<T>>(l, shape[2], init, index);
                break;
            case LayerKind::relu: layer = std::make_unique<ReluLayer<T>>(); break;
            case LayerKind::maxpool2d: layer = std::make_unique<MaxPoolLayer<T>>(l.window, l.stride); break;
            case LayerKind::dropout:
                layer = std::make_unique<DropoutLayer<T>>(l.rate, Rng::derive(seed, 1000 + index).next());
                break;
            case LayerKind::batchnorm: layer = std::make_unique<BatchNormLayer<T>>(shape.back(), index); break;
            case LayerKind::flatten: layer = std::make_unique<FlattenLayer<T>>(); break;
            case LayerKind::dense:
                layer = std::make_unique<DenseLayer<T>>("dense" + std::to_string(index),
                                                        static_cast<int>(element_count(shape)), l.out_features, init);
                break;
        }
        shape = layer->output_shape(shape);
        backbone_.push_back(std::move(layer));
        ++index;
    }
    feature_shape_ = shape;
    const int features = static_cast<int>(element_count(shape));
    for (int h = 0; h < spec_.heads; ++h)
        heads_.push_back(std::make_unique<DenseLayer<T>>("head" + std::to_string(h), features, spec_.classes(), init));
}

template <typename T>
std::vector<BasicTensor<T>> Model<T>::forward(const BasicTensor<T>& x, bool training) {
    const Shape want{spec_.height, spec_.width, spec_.channels};
    if (x.rank() != 4 || Shape(x.shape.begin() + 1, x.shape.end()) != want)
        throw ShapeError("model input " + to_string(x.shape) + " does not match [N," + std::to_string(want[0]) + "," +
                         std::to_string(want[1]) + "," + std::to_string(want[2]) + "]");
    BasicTensor<T> h = x;
    for (auto& l : backbone_) h = l->forward(h, training);
    std::vector<BasicTensor<T>> out;
    out.reserve(heads_.size());
    for (auto& head : heads_) out.push_back(head->forward(h, training));
    return out;
}

template <typename T>
void Model<T>::backward(const std::vector<BasicTensor<T>>& dlogits) {
    if (dlogits.size() != heads_.size()) throw ShapeError("backward: expected one gradient per head");
    BasicTensor<T> d;
    for (std::size_t h = 0; h < heads_.size(); ++h) {
        auto dh = heads_[h]->backward(dlogits[h]);
        if (h == 0) {
            d = std::move(dh);
        } else {
            for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += dh.data[i];
        }
    }
    for (int i = static_cast<int>(backbone_.size()) - 1; i >= 0; --i) {
        d = backbone_[i]->backward(d);
        if (i == sabotage_)
            for (auto& v : d.data) v = -v;
    }
}

template <typename T>
double Model<T>::loss_and_grad(const BasicTensor<T>& x, const std::vector<int>& labels) {
    const int n = x.dim(0);
    if (static_cast<int>(labels.size()) != n * spec_.heads) throw ShapeError("labels must hold N * heads class ids");
    auto logits = forward(x, true);
    double loss = 0;
    std::vector<BasicTensor<T>> grads;
    std::vector<int> classes(n);
    for (int h = 0; h < spec_.heads; ++h) {
        for (int i = 0; i < n; ++i) classes[i] = labels[static_cast<std::size_t>(i) * spec_.heads + h];
        auto r = softmax_xent(logits[h], classes);
        loss += r.loss;
        grads.push_back(std::move(r.dlogits));
    }
    backward(grads);
    return loss;
}

template <typename T>
std::vector<Param<T>*> Model<T>::params() {
    std::vector<Param<T>*> out;
    for (auto& l : backbone_)
        for (auto* p : l->params()) out.push_back(p);
    for (auto& l : heads_)
        for (auto* p : l->params()) out.push_back(p);
    return out;
}

template <typename T>
std::size_t Model<T>::parameter_count() {
    std::size_t n = 0;
    for (auto* p : params())
        if (p->trainable) n += p->value.size();
    return n;
}

template <typename T>
void Model<T>::zero_grad() {
    for (auto* p : params())
        if (p->trainable) p->grad.fill(T(0));
}

template <typename T>
std::vector<int> Model<T>::predict_classes(const BasicTensor<T>& x) {
    auto logits = forward(x, false);
    const int n = x.dim(0);
    const int c = spec_.classes();
    std::vector<int> out(static_cast<std::size_t>(n) * spec_.heads);
    for (int h = 0; h < spec_.heads; ++h)
        for (int i = 0; i < n; ++i) {
            const T* z = logits[h].ptr() + static_cast<std::size_t>(i) * c;
            out[static_cast<std::size_t>(i) * spec_.heads + h] = static_cast<int>(std::max_element(z, z + c) - z);
        }
    return out;
}

template <typename T>
template <typename U>
void Model<T>::copy_weights_from(Model<U>& other) {
    auto dst = params();
    auto src = other.params();
    if (dst.size() != src.size()) throw ShapeError("copy_weights_from: models differ in structure");
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (dst[i]->value.shape != src[i]->value.shape)
            throw ShapeError("copy_weights_from: parameter " + dst[i]->name + " differs in shape");
        for (std::size_t k = 0; k < dst[i]->value.size(); ++k)
            dst[i]->value.data[k] = static_cast<T>(src[i]->value.data[k]);
    }
}

template <typename T>
std::string predict_string(Model<T>& model, const BasicTensor<T>& image) {
    BasicTensor<T> x = image;
    if (x.rank() == 3) x = x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
    if (x.rank() != 4 || x.dim(0) != 1) throw ShapeError("predict_string expects a single image");
    auto ids = model.predict_classes(x);
    std::string out;
    for (int id : ids) out += model.spec().charset[static_cast<std::size_t>(id)];
    return out;
}

template class Model<float>;
template class Model<double>;
template void Model<float>::copy_weights_from<double>(Model<double>&);
template void Model<double>::copy_weights_from<float>(Model<float>&);
template void Model<float>::copy_weights_from<float>(Model<float>&);
template std::string predict_string<float>(Model<float>&, const BasicTensor<float>&);
template std::string predict_string<double>(Model<double>&, const BasicTensor<double>&);

}  // namespace ctk::nn
