#include "ctk/nn/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "ctk/imageio.hpp"

namespace ctk::nn {

Tensor Dataset::batch_images(const std::vector<int>& idx, std::size_t begin, std::size_t end) const {
    Shape s = images.shape;
    s[0] = static_cast<int>(end - begin);
    Tensor out(s);
    const std::size_t per = images.size() / images.dim(0);
    for (std::size_t i = begin; i < end; ++i)
        std::copy_n(images.ptr() + static_cast<std::size_t>(idx[i]) * per, per, out.ptr() + (i - begin) * per);
    return out;
}

std::vector<int> Dataset::batch_labels(const std::vector<int>& idx, std::size_t begin, std::size_t end) const {
    std::vector<int> out;
    out.reserve((end - begin) * heads);
    for (std::size_t i = begin; i < end; ++i)
        for (int h = 0; h < heads; ++h) out.push_back(labels[static_cast<std::size_t>(idx[i]) * heads + h]);
    return out;
}

void TrainConfig::validate() const {
    if (!(lr >= 0)) throw ParamError("learning rate must be >= 0");
    if (batch_size < 1) throw ParamError("batch size must be >= 1");
    if (epochs < 0) throw ParamError("epochs must be >= 0");
}

Optimizer::Optimizer(const TrainConfig& cfg, const std::vector<Param<float>*>& params) : cfg_(cfg) {
    for (auto* p : params)
        if (p->trainable) {
            params_.push_back(p);
            m_.emplace_back(p->value.size(), 0.0f);
            v_.emplace_back(cfg.optimizer == OptimizerKind::adam ? p->value.size() : 0, 0.0f);
        }
}

void Optimizer::step() {
    ++step_;
    if (cfg_.optimizer == OptimizerKind::sgd) {
        const float lr = static_cast<float>(cfg_.lr);
        const float mu = static_cast<float>(cfg_.momentum);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& w = params_[i]->value.data;
            const auto& g = params_[i]->grad.data;
            auto& vel = m_[i];
            for (std::size_t k = 0; k < w.size(); ++k) {
                vel[k] = mu * vel[k] - lr * g[k];
                w[k] += vel[k];
            }
        }
        return;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    const float step_size = static_cast<float>(cfg_.lr / bc1);
    const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
    const float b1 = static_cast<float>(cfg_.beta1), b2 = static_cast<float>(cfg_.beta2);
    const float eps = static_cast<float>(cfg_.eps);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& w = params_[i]->value.data;
        const auto& g = params_[i]->grad.data;
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            m[k] = b1 * m[k] + (1 - b1) * g[k];
            v[k] = b2 * v[k] + (1 - b2) * g[k] * g[k];
            w[k] -= step_size * m[k] / (std::sqrt(v[k]) * inv_sqrt_bc2 + eps);
        }
    }
}

Evaluation evaluate(Model<float>& model, const Dataset& data, int batch_size) {
    const int heads = model.spec().heads;
    Evaluation ev;
    ev.head_accuracy.assign(heads, 0.0);
    const int n = data.size();
    if (n == 0) return ev;
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    long full = 0, chars = 0;
    for (int b = 0; b < n; b += batch_size) {
        const int e = std::min(n, b + batch_size);
        auto pred = model.predict_classes(data.batch_images(idx, b, e));
        ev.predictions.insert(ev.predictions.end(), pred.begin(), pred.end());
        for (int i = b; i < e; ++i) {
            bool all = true;
            for (int h = 0; h < heads; ++h) {
                const bool ok = pred[static_cast<std::size_t>(i - b) * heads + h] ==
                                data.labels[static_cast<std::size_t>(i) * heads + h];
                ev.head_accuracy[h] += ok;
                chars += ok;
                all = all && ok;
            }
            full += all;
        }
    }
    for (auto& a : ev.head_accuracy) a /= n;
    ev.full_accuracy = static_cast<double>(full) / n;
    ev.char_accuracy = static_cast<double>(chars) / (static_cast<double>(n) * heads);
    return ev;
}

double mean_loss(Model<float>& model, const Dataset& data, int batch_size) {
    const int n = data.size();
    const int heads = model.spec().heads;
    if (n == 0) return 0;
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    double total = 0;
    for (int b = 0; b < n; b += batch_size) {
        const int e = std::min(n, b + batch_size);
        auto logits = model.forward(data.batch_images(idx, b, e), false);
        auto labels = data.batch_labels(idx, b, e);
        std::vector<int> cls(e - b);
        for (int h = 0; h < heads; ++h) {
            for (int i = 0; i < e - b; ++i) cls[i] = labels[static_cast<std::size_t>(i) * heads + h];
            total += softmax_xent(logits[h], cls).loss * (e - b);
        }
    }
    return total / n;
}

namespace {

void check_labels(const Model<float>& model, const Dataset& d, const char* which) {
    const auto& spec = model.spec();
    if (d.size() == 0) return;
    if (d.heads != spec.heads)
        throw ParamError(std::string(which) + " labels have " + std::to_string(d.heads) + " positions but the model has " +
                         std::to_string(spec.heads) + " heads");
    if (static_cast<int>(d.labels.size()) != d.size() * d.heads)
        throw ParamError(std::string(which) + " label count does not match sample count");
    for (int l : d.labels)
        if (l < 0 || l >= spec.classes())
            throw ParamError(std::string(which) + " label id " + std::to_string(l) + " outside the charset");
    const Shape want{spec.height, spec.width, spec.channels};
    if (Shape(d.images.shape.begin() + 1, d.images.shape.end()) != want)
        throw ShapeError(std::string(which) + " images " + to_string(d.images.shape) + " do not match the model input");
}

struct Snapshot {
    std::vector<std::vector<float>> values;
    void take(Model<float>& m) {
        values.clear();
        for (auto* p : m.params()) values.push_back(p->value.data);
    }
    void restore(Model<float>& m) const {
        auto ps = m.params();
        for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value.data = values[i];
    }
};

}  // namespace

TrainResult train(Model<float>& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
    cfg.validate();
    check_labels(model, train_set, "training");
    check_labels(model, val_set, "validation");
    if (train_set.size() == 0) throw ParamError("training set is empty");

    TrainResult result;
    result.initial_loss = mean_loss(model, train_set);
    Optimizer opt(cfg, model.params());
    Snapshot best;
    double best_acc = -1;
    const int n = train_set.size();
    std::vector<int> order(n);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng = Rng::derive(cfg.seed, static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(std::span<int>(order));
        double loss_sum = 0;
        for (int b = 0; b < n; b += cfg.batch_size) {
            const int e = std::min(n, b + cfg.batch_size);
            // batchnorm cannot train on a single sample; fold a trailing 1 into the previous batch
            if (e - b < 2 && b > 0) break;
            auto x = train_set.batch_images(order, b, e);
            auto y = train_set.batch_labels(order, b, e);
            loss_sum += model.loss_and_grad(x, y) * (e - b);
            opt.step();
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / n;
        const Dataset& scored = val_set.size() ? val_set : train_set;
        auto ev = evaluate(model, scored);
        rec.head_accuracy = ev.head_accuracy;
        rec.full_accuracy = ev.full_accuracy;
        if (rec.full_accuracy > best_acc) {
            best_acc = rec.full_accuracy;
            result.best_epoch = epoch;
            best.take(model);
        }
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    if (result.best_epoch > 0) best.restore(model);
    return result;
}

std::string history_csv(const TrainResult& result, int heads) {
    std::ostringstream os;
    os << "epoch,train_loss";
    for (int h = 1; h <= heads; ++h) os << ",val_head" << h << "_acc";
    os << ",val_full_acc\n";
    os << std::setprecision(9);
    for (const auto& r : result.history) {
        os << r.epoch << ',' << r.train_loss;
        for (double a : r.head_accuracy) os << ',' << a;
        os << ',' << r.full_accuracy << '\n';
    }
    return os.str();
}

ModelSpec grad_check_spec() {
    ModelSpec s;
    s.height = 6;
    s.width = 6;
    s.channels = 1;
    s.heads = 2;
    s.charset = "ABC";
    s.backbone = {LayerSpec::conv(2, 3, Padding::same), LayerSpec::of(LayerKind::batchnorm), LayerSpec::pool(2),
                  LayerSpec::drop(0.0), LayerSpec::of(LayerKind::flatten), LayerSpec::dense(4)};
    return s;
}

double grad_check(const ModelSpec& spec, std::uint64_t seed, const GradCheckOptions& opts) {
    Model<double> model(spec, seed);
    model.sabotage_backward(opts.sabotage_layer);
    Rng rng = Rng::derive(seed, 0xC0FFEE);
    Tensor64 x(Shape{opts.batch, spec.height, spec.width, spec.channels});
    for (auto& v : x.data) v = rng.normal();
    std::vector<int> labels(static_cast<std::size_t>(opts.batch) * spec.heads);
    for (auto& l : labels) l = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.classes())));

    auto loss_only = [&]() {
        auto logits = model.forward(x, true);
        double loss = 0;
        std::vector<int> cls(opts.batch);
        for (int h = 0; h < spec.heads; ++h) {
            for (int i = 0; i < opts.batch; ++i) cls[i] = labels[static_cast<std::size_t>(i) * spec.heads + h];
            loss += softmax_xent(logits[h], cls).loss;
        }
        return loss;
    };

    model.loss_and_grad(x, labels);
    double worst = 0;
    for (auto* p : model.params()) {
        if (!p->trainable) continue;
        const auto analytic = p->grad.data;
        for (std::size_t k = 0; k < p->value.size(); ++k) {
            const double saved = p->value.data[k];
            p->value.data[k] = saved + opts.eps;
            const double up = loss_only();
            p->value.data[k] = saved - opts.eps;
            const double down = loss_only();
            p->value.data[k] = saved;
            const double numeric = (up - down) / (2 * opts.eps);
            const double a = analytic[k];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

std::uint64_t fnv1a64(const void* data, std::size_t size) {
    auto p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

constexpr const char* kWeightsFormat = "CFW1";

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

}  // namespace

void save_weights(Model<float>& model, const std::filesystem::path& path) {
    std::string payload;
    nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
    for (auto* p : model.params()) {
        tensors.push_back({{"name", p->name}, {"shape", p->value.shape}});
        for (float f : p->value.data) put_u32(payload, std::bit_cast<std::uint32_t>(f));
    }
    nlohmann::ordered_json header;
    header["format"] = kWeightsFormat;
    header["spec"] = nlohmann::ordered_json::parse(to_json(model.spec()).dump());
    header["tensors"] = tensors;
    header["payload_bytes"] = payload.size();
    header["checksum"] = hex64(fnv1a64(payload.data(), payload.size()));
    const std::string h = header.dump();
    std::string out;
    put_u32(out, static_cast<std::uint32_t>(h.size()));
    out += h;
    out += payload;
    write_file_atomic(path, out);
}

Model<float> load_weights(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    auto u = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 4) throw ChecksumError("weights file truncated before header");
    const std::uint32_t hlen = get_u32(u);
    if (bytes.size() < 4ULL + hlen) throw ChecksumError("weights file truncated inside header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(4, hlen));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("weights header is not JSON: ") + e.what(), 4);
    }
    const std::string format = header.value("format", std::string());
    if (format != kWeightsFormat) throw VersionError("unsupported weights format '" + format + "', expected CFW1");
    const std::size_t payload_bytes = header.at("payload_bytes").get<std::size_t>();
    const std::size_t have = bytes.size() - 4 - hlen;
    const unsigned char* payload = u + 4 + hlen;
    if (have != payload_bytes ||
        hex64(fnv1a64(payload, payload_bytes)) != header.at("checksum").get<std::string>())
        throw ChecksumError("weights payload checksum mismatch (" + std::to_string(have) + " of " +
                            std::to_string(payload_bytes) + " bytes present)");

    Model<float> model(model_spec_from_json(header.at("spec")), 0);
    auto params = model.params();
    const auto& table = header.at("tensors");
    if (table.size() != params.size()) throw ShapeError("weights file tensor count does not match the model spec");
    std::size_t off = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (table[i].at("shape").get<Shape>() != params[i]->value.shape)
            throw ShapeError("weights tensor " + params[i]->name + " has an unexpected shape");
        for (auto& v : params[i]->value.data) {
            if (off + 4 > payload_bytes) throw ChecksumError("weights payload shorter than the tensor table");
            v = std::bit_cast<float>(get_u32(payload + off));
            off += 4;
        }
    }
    return model;
}

}  // namespace ctk::nn
