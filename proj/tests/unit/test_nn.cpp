#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ctk/imageio.hpp"
#include "ctk/nn/gemm.hpp"
#include "ctk/nn/ops.hpp"
#include "ctk/nn/train.hpp"

using namespace ctk;
using namespace ctk::nn;

namespace {

template <typename T>
BasicTensor<T> random_tensor(Shape s, Rng& rng) {
    BasicTensor<T> t(std::move(s));
    for (auto& v : t.data) v = static_cast<T>(rng.normal());
    return t;
}

// Scalar loss sum(y * r) for a fixed random r; its gradient wrt y is r.
double weighted_sum(const Tensor64& y, const Tensor64& r) {
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
    return s;
}

template <typename F>
double max_rel_error(Tensor64& param, const Tensor64& analytic, F loss, double eps = 1e-5) {
    double worst = 0;
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double saved = param[i];
        param[i] = saved + eps;
        const double up = loss();
        param[i] = saved - eps;
        const double down = loss();
        param[i] = saved;
        const double n = (up - down) / (2 * eps);
        const double a = analytic[i];
        worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8}));
    }
    return worst;
}

std::filesystem::path temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "ctk_unit";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("gemm matches naive triple loop") {
    Rng rng(3);
    for (auto [m, n, k] : {std::tuple{1, 1, 1}, {7, 33, 5}, {17, 70, 29}, {64, 128, 9}}) {
        std::vector<float> a(m * k), b(k * n), c(m * n, 0.5f), ref(m * n, 0.5f);
        for (auto& v : a) v = static_cast<float>(rng.normal());
        for (auto& v : b) v = static_cast<float>(rng.normal());
        gemm_acc<float>(m, n, k, a.data(), k, b.data(), n, c.data(), n);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                float acc = 0.5f;
                for (int p = 0; p < k; ++p) acc = std::fma(a[i * k + p], b[p * n + j], acc);
                ref[i * n + j] = acc;
            }
        CHECK(c == ref);
    }
}

TEST_CASE("conv2d hand example and identity kernel") {
    Tensor x({1, 3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor w({2, 2, 1, 1}, 1.0f);
    Tensor b({1}, 0.0f);
    auto y = conv2d_forward(x, w, b, 1, Padding::valid);
    CHECK(y.shape == Shape{1, 2, 2, 1});
    CHECK(y.data == std::vector<float>{12, 16, 24, 28});

    Tensor id({1, 1, 1, 1}, 1.0f);
    CHECK(conv2d_forward(x, id, b, 1, Padding::valid).data == x.data);
    CHECK_THROWS_AS(conv2d_forward(x, Tensor({3, 3, 2, 1}), b, 1, Padding::valid), ShapeError);
}

TEST_CASE("im2col conv is bit-identical to the direct loop") {
    Rng rng(11);
    for (int stride : {1, 2})
        for (auto pad : {Padding::valid, Padding::same}) {
            auto x = random_tensor<float>({2, 9, 11, 3}, rng);
            auto w = random_tensor<float>({3, 3, 3, 5}, rng);
            auto b = random_tensor<float>({5}, rng);
            auto fast = conv2d_forward(x, w, b, stride, pad);
            auto slow = conv2d_forward_reference(x, w, b, stride, pad);
            CHECK(fast.shape == slow.shape);
            CHECK(fast.data == slow.data);
        }
}

TEST_CASE("same padding keeps spatial size over stride") {
    auto g = conv_geometry(9, 11, 3, 3, 2, Padding::same);
    CHECK(g.out_h == 5);
    CHECK(g.out_w == 6);
}

TEST_CASE("conv2d backward matches finite differences") {
    Rng rng(5);
    for (int stride : {1, 2})
        for (auto pad : {Padding::valid, Padding::same}) {
            auto x = random_tensor<double>({2, 5, 6, 2}, rng);
            auto w = random_tensor<double>({3, 2, 2, 3}, rng);
            auto b = random_tensor<double>({3}, rng);
            auto y = conv2d_forward(x, w, b, stride, pad);
            auto r = random_tensor<double>(y.shape, rng);
            auto g = conv2d_backward(x, w, r, stride, pad);
            auto loss = [&] { return weighted_sum(conv2d_forward(x, w, b, stride, pad), r); };
            CHECK(max_rel_error(w, g.dw, loss) < 1e-4);
            CHECK(max_rel_error(b, g.db, loss) < 1e-4);
            CHECK(max_rel_error(x, g.dx, loss) < 1e-4);
        }
}

TEST_CASE("maxpool forward, tie routing and gradient") {
    Tensor x({1, 2, 2, 1}, {1, 2, 3, 4});
    auto p = maxpool2d_forward(x, 2, 2);
    CHECK(p.y.data == std::vector<float>{4});

    Tensor flat({1, 2, 2, 1}, 7.0f);
    auto q = maxpool2d_forward(flat, 2, 2);
    auto dx = maxpool2d_backward(Tensor({1, 1, 1, 1}, 1.0f), q.argmax, flat.shape);
    CHECK(dx.data == std::vector<float>{1, 0, 0, 0});

    Rng rng(8);
    auto xd = random_tensor<double>({2, 4, 6, 2}, rng);
    auto pd = maxpool2d_forward(xd, 2, 2);
    auto r = random_tensor<double>(pd.y.shape, rng);
    auto g = maxpool2d_backward(r, pd.argmax, xd.shape);
    CHECK(max_rel_error(xd, g, [&] { return weighted_sum(maxpool2d_forward(xd, 2, 2).y, r); }) < 1e-4);
}

TEST_CASE("dense and relu") {
    Tensor x({2, 3}, {1, -2, 3, 4, 5, -6});
    Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    CHECK(dense_forward(x, eye, Tensor({3})).data == x.data);
    CHECK(relu_forward(Tensor({3}, {-1, 0, 2})).data == std::vector<float>{0, 0, 2});
    CHECK(relu_backward(Tensor({3}, {-1, 0, 2}), Tensor({3}, 1.0f)).data == std::vector<float>{0, 0, 1});

    Rng rng(9);
    auto xd = random_tensor<double>({3, 4}, rng);
    auto w = random_tensor<double>({4, 5}, rng);
    auto b = random_tensor<double>({5}, rng);
    auto r = random_tensor<double>({3, 5}, rng);
    auto g = dense_backward(xd, w, r);
    auto loss = [&] { return weighted_sum(dense_forward(xd, w, b), r); };
    CHECK(max_rel_error(w, g.dw, loss) < 1e-4);
    CHECK(max_rel_error(b, g.db, loss) < 1e-4);
    CHECK(max_rel_error(xd, g.dx, loss) < 1e-4);
}

TEST_CASE("dropout semantics") {
    Rng rng(1);
    Tensor x({4, 5}, 2.0f);
    auto id = dropout_forward(x, 0.0, rng, true);
    CHECK(id.y.data == x.data);
    CHECK(id.mask.data == std::vector<float>(20, 1.0f));
    CHECK(dropout_forward(x, 0.7, rng, false).y.data == x.data);

    Tensor big({100000}, 1.0f);
    Rng r2(42);
    auto d = dropout_forward(big, 0.5, r2, true);
    std::size_t kept = 0;
    for (float m : d.mask.data) {
        CHECK((m == 0.0f || m == 2.0f));
        kept += m != 0.0f;
    }
    CHECK(std::abs(kept / 1e5 - 0.5) < 0.01);
}

TEST_CASE("batchnorm statistics, inference and gradients") {
    Rng rng(12);
    auto x = random_tensor<double>({6, 3, 2, 4}, rng);
    for (auto& v : x.data) v = 3 * v + 1;
    Tensor64 gamma({4}, {1.5, 0.5, 2.0, 1.0}), beta({4}, {0.1, -0.2, 0.3, 0.0});
    Tensor64 rm({4}, 0.0), rv({4}, 1.0);
    BatchNormCache<double> cache;
    auto y = batchnorm_forward(x, gamma, beta, rm, rv, true, &cache);
    const std::size_t per = y.size() / 4;
    for (int c = 0; c < 4; ++c) {
        double s = 0, ss = 0;
        for (std::size_t i = 0; i < per; ++i) s += y[i * 4 + c];
        const double mean = s / per;
        for (std::size_t i = 0; i < per; ++i) ss += (y[i * 4 + c] - mean) * (y[i * 4 + c] - mean);
        CHECK(mean == doctest::Approx(beta[c]).epsilon(1e-4));
        CHECK(std::sqrt(ss / per) == doctest::Approx(gamma[c]).epsilon(1e-4));
    }
    CHECK(rm[0] != 0.0);

    auto r = random_tensor<double>(y.shape, rng);
    auto g = batchnorm_backward(r, gamma, cache);
    auto loss = [&] {
        Tensor64 a = rm, b = rv;
        return weighted_sum(batchnorm_forward(x, gamma, beta, a, b, true, static_cast<BatchNormCache<double>*>(nullptr)), r);
    };
    CHECK(max_rel_error(gamma, g.dgamma, loss) < 1e-4);
    CHECK(max_rel_error(beta, g.dbeta, loss) < 1e-4);
    CHECK(max_rel_error(x, g.dx, loss) < 1e-4);

    Tensor64 one({1, 1, 1, 4}, 1.0);
    CHECK_THROWS_AS(batchnorm_forward(one, gamma, beta, rm, rv, true, static_cast<BatchNormCache<double>*>(nullptr)), ParamError);
    CHECK_NOTHROW(batchnorm_forward(one, gamma, beta, rm, rv, false, static_cast<BatchNormCache<double>*>(nullptr)));
}

TEST_CASE("softmax cross-entropy") {
    Tensor64 zeros({2, 3}, 0.0);
    CHECK(softmax_xent(zeros, std::vector<int>{0, 2}).loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    Tensor64 sure({1, 3}, {100, 0, 0});
    CHECK(softmax_xent(sure, std::vector<int>{0}).loss < 1e-10);
    CHECK_THROWS_AS(softmax_xent(zeros, Tensor64({2, 3}, 0.5)), ParamError);

    Rng rng(4);
    auto logits = random_tensor<double>({3, 5}, rng);
    std::vector<int> cls{1, 4, 0};
    auto res = softmax_xent(logits, cls);
    CHECK(max_rel_error(logits, res.dlogits, [&] { return softmax_xent(logits, cls).loss; }, 1e-6) < 1e-6);
    auto p = softmax(logits);
    for (int i = 0; i < 3; ++i) {
        double s = 0;
        for (int j = 0; j < 5; ++j) s += p[i * 5 + j];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("model gradient check gate") {
    CHECK(grad_check(grad_check_spec(), 42) < 1e-4);
    GradCheckOptions bad;
    bad.sabotage_layer = 1;
    CHECK(grad_check(grad_check_spec(), 42, bad) > 0.1);

    ModelSpec linear;
    linear.height = 2;
    linear.width = 2;
    linear.channels = 1;
    linear.charset = "ABC";
    linear.backbone = {LayerSpec::of(LayerKind::flatten)};
    CHECK(grad_check(linear, 7) < 1e-7);
}

TEST_CASE("predict_string arity and charset mapping") {
    auto spec = grad_check_spec();
    Model<float> m(spec, 3);
    Tensor x({1, 6, 6, 1}, 0.25f);
    auto s = predict_string(m, x);
    CHECK(s.size() == 2);
    for (char c : s) CHECK(spec.charset.find(c) != std::string::npos);
}

TEST_CASE("weights round-trip, checksum and version errors") {
    auto spec = grad_check_spec();
    Model<float> m(spec, 5);
    auto path = temp_path("w.cfw");
    save_weights(m, path);
    auto loaded = load_weights(path);
    Rng rng(2);
    auto x = random_tensor<float>({100, 6, 6, 1}, rng);
    CHECK(m.predict_classes(x) == loaded.predict_classes(x));
    auto pa = m.params(), pb = loaded.params();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.data == pb[i]->value.data);

    std::string bytes = read_file(path);
    write_file_atomic(path, bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(load_weights(path), ChecksumError);

    std::string flipped = bytes;
    flipped.back() ^= 1;
    write_file_atomic(path, flipped);
    CHECK_THROWS_AS(load_weights(path), ChecksumError);

    std::string other = bytes;
    other.replace(other.find("CFW1"), 4, "CFW9");
    write_file_atomic(path, other);
    CHECK_THROWS_AS(load_weights(path), VersionError);
}

namespace {

// Two-class toy task: bright top half versus bright bottom half.
Dataset toy_set(int n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset d;
    d.images = Tensor({n, 6, 6, 1});
    for (int i = 0; i < n; ++i) {
        const int cls = static_cast<int>(rng.below(2));
        d.labels.push_back(cls);
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 6; ++x)
                d.images[(i * 6 + y) * 6 + x] =
                    static_cast<float>(((y < 3) == (cls == 0) ? 0.8 : 0.1) + 0.1 * rng.uniform());
    }
    return d;
}

ModelSpec toy_spec() {
    ModelSpec s;
    s.height = 6;
    s.width = 6;
    s.charset = "AB";
    s.backbone = {LayerSpec::conv(4, 3), LayerSpec::of(LayerKind::relu), LayerSpec::pool(2),
                  LayerSpec::of(LayerKind::flatten)};
    return s;
}

}  // namespace

TEST_CASE("training reduces loss and is deterministic") {
    auto tr = toy_set(64, 1), va = toy_set(32, 2);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.lr = 0.01;
    Model<float> a(toy_spec(), 9), b(toy_spec(), 9);
    auto ra = train(a, tr, va, cfg);
    auto rb = train(b, tr, va, cfg);
    CHECK(ra.history.front().train_loss < ra.initial_loss);
    CHECK(history_csv(ra, 1) == history_csv(rb, 1));
    CHECK(evaluate(a, va).full_accuracy > 0.9);

    TrainConfig frozen = cfg;
    frozen.lr = 0;
    frozen.epochs = 1;
    Model<float> c(toy_spec(), 9);
    std::vector<std::vector<float>> before;
    for (auto* p : c.params()) before.push_back(p->value.data);
    train(c, tr, va, frozen);
    auto ps = c.params();
    for (std::size_t i = 0; i < ps.size(); ++i)
        if (ps[i]->trainable) CHECK(ps[i]->value.data == before[i]);

    Dataset wrong = tr;
    wrong.labels[0] = 5;
    CHECK_THROWS_AS(train(c, wrong, va, cfg), ParamError);
}
