#include <doctest.h>

#include <cmath>

#include "ctk/improc.hpp"
#include "ctk/rng.hpp"

using namespace ctk;

namespace {

// Exhaustive between-class variance search in exact integer arithmetic.
// Score(t) = (S0*N1 - S1*N0)^2 / (N0*N1), class 0 = intensities <= t.
int otsu_oracle(const GrayImage& img) {
    int best = -1;
    __int128 best_num = 0, best_den = 1;
    for (int t = 0; t < 256; ++t) {
        long long n0 = 0, n1 = 0, s0 = 0, s1 = 0;
        for (auto v : img.data) {
            if (v <= t) {
                ++n0;
                s0 += v;
            } else {
                ++n1;
                s1 += v;
            }
        }
        if (n0 == 0 || n1 == 0) continue;
        const __int128 d = static_cast<__int128>(s0) * n1 - static_cast<__int128>(s1) * n0;
        const __int128 num = d * d, den = static_cast<__int128>(n0) * n1;
        if (best < 0 || num * best_den > best_num * den) {
            best = t;
            best_num = num;
            best_den = den;
        }
    }
    return best;
}

bool subset(const BinaryImage& a, const BinaryImage& b) {
    for (std::size_t i = 0; i < a.ink.size(); ++i)
        if (a.ink[i] && !b.ink[i]) return false;
    return true;
}

BinaryImage random_mask(Rng& rng, int w, int h, int percent) {
    BinaryImage b(w, h);
    for (auto& v : b.ink) v = rng.below(100) < static_cast<std::uint64_t>(percent);
    return b;
}

}  // namespace

TEST_CASE("to_gray luma") {
    RgbImage black(3, 2, std::uint8_t(0));
    for (auto v : to_gray(black).data) CHECK(v == 0);
    RgbImage grays(256, 1);
    for (int g = 0; g < 256; ++g) grays.px(g, 0)[0] = grays.px(g, 0)[1] = grays.px(g, 0)[2] = std::uint8_t(g);
    const auto out = to_gray(grays);
    for (int g = 0; g < 256; ++g) CHECK(out.data[g] == g);
    RgbImage red(1, 1, std::vector<std::uint8_t>{255, 0, 0});
    CHECK(to_gray(red).data[0] == 76);
}

TEST_CASE("otsu examples") {
    GrayImage img(4, 2, std::vector<std::uint8_t>{50, 200, 50, 200, 200, 50, 200, 50});
    const auto r = otsu(img, Polarity::ink_above);
    CHECK(r.threshold == 50);
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(static_cast<bool>(r.binary.ink[i]) == (img.data[i] == 200));
    const auto below = otsu(img, Polarity::ink_below);
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(static_cast<bool>(below.binary.ink[i]) == (img.data[i] == 50));
    CHECK_THROWS_AS(otsu(GrayImage(5, 5, std::uint8_t(128)), Polarity::ink_below), DegenerateError);
}

TEST_CASE("otsu matches an exhaustive oracle on random images") {
    Rng rng(11);
    for (int t = 0; t < 100; ++t) {
        GrayImage img(32, 32);
        // Mix of bimodal and uniform images with heavy ties.
        const int mode = t % 3;
        for (auto& v : img.data) {
            if (mode == 0) v = static_cast<std::uint8_t>(rng.below(256));
            else if (mode == 1) v = static_cast<std::uint8_t>(rng.below(2) ? 30 + rng.below(40) : 180 + rng.below(60));
            else v = static_cast<std::uint8_t>(rng.below(4) * 60);
        }
        const auto r = otsu(img, Polarity::ink_below);
        REQUIRE(r.threshold == otsu_oracle(img));
        for (std::size_t i = 0; i < img.size(); ++i)
            REQUIRE(static_cast<bool>(r.binary.ink[i]) == (img.data[i] <= r.threshold));
    }
}

TEST_CASE("threshold_binary_inv") {
    GrayImage img(4, 1, std::vector<std::uint8_t>{0, 126, 127, 255});
    const auto b = threshold_binary_inv(img, 127);
    CHECK(b.ink == std::vector<std::uint8_t>{1, 1, 0, 0});
    CHECK(threshold_binary_inv(img, 0).count() == 0);
    CHECK(threshold_binary_inv(img, 255).ink == std::vector<std::uint8_t>{1, 1, 1, 0});
    CHECK_THROWS_AS(threshold_binary_inv(img, 256), ParamError);
    CHECK_THROWS_AS(threshold_binary_inv(img, -1), ParamError);

    Rng rng(5);
    GrayImage r(16, 16);
    for (auto& v : r.data) v = static_cast<std::uint8_t>(rng.below(256));
    std::size_t prev = 0;
    for (int t = 0; t <= 255; ++t) {
        const auto n = threshold_binary_inv(r, t).count();
        CHECK(n >= prev);
        prev = n;
    }
}

TEST_CASE("adaptive threshold") {
    GrayImage flat(9, 7, std::uint8_t(100));
    CHECK(adaptive_threshold(flat, 11, 2, Polarity::ink_below).count() == 0);
    GrayImage dot(7, 7, std::uint8_t(255));
    dot.at(3, 3) = 0;
    const auto b = adaptive_threshold(dot, 3, 0, Polarity::ink_below);
    CHECK(b.count() == 1);
    CHECK(b.at(3, 3));
    CHECK_THROWS_AS(adaptive_threshold(dot, 4, 0, Polarity::ink_below), ParamError);
    CHECK_THROWS_AS(adaptive_threshold(dot, 1, 0, Polarity::ink_below), ParamError);
}

TEST_CASE("gaussian blur") {
    const auto k = gaussian_kernel(1.0);
    REQUIRE(k.size() == 7);
    double sum = 0;
    for (double w : k) sum += w;
    CHECK(std::abs(sum - 1.0) < 1e-12);

    GrayImage flat(12, 9, std::uint8_t(77));
    CHECK(gaussian_blur(flat, 1.0) == flat);
    CHECK(gaussian_blur(flat, 2.5) == flat);

    GrayImage impulse(15, 15, std::uint8_t(0));
    impulse.at(7, 7) = 255;
    // Independent center weight: exp(0) / sum_{i=-3..3} exp(-i^2/2).
    double norm = 0;
    for (int i = -3; i <= 3; ++i) norm += std::exp(-i * i / 2.0);
    const double w0 = 1.0 / norm;
    CHECK(gaussian_blur(impulse, 1.0).at(7, 7) == static_cast<int>(std::lround(255 * w0 * w0)));
    CHECK_THROWS_AS(gaussian_blur(flat, 0.0), ParamError);
    CHECK_THROWS_AS(gaussian_blur(flat, -1.0), ParamError);
}

TEST_CASE("erode and dilate on a single pixel") {
    BinaryImage one(5, 5);
    one.set(2, 2, true);
    CHECK(erode(one).count() == 0);
    const auto d = dilate(one);
    CHECK(d.count() == 9);
    for (int y = 1; y <= 3; ++y)
        for (int x = 1; x <= 3; ++x) CHECK(d.at(x, y));
    CHECK_THROWS_AS(Kernel3x3({true, true, true, true, false, true, true, true, true}), ParamError);
}

TEST_CASE("morphology duality over all 3x3 images") {
    for (int bits = 0; bits < 512; ++bits) {
        BinaryImage x(3, 3);
        for (int i = 0; i < 9; ++i) x.ink[i] = (bits >> i) & 1;
        for (const auto& k : {Kernel3x3::box(), Kernel3x3::cross()}) {
            REQUIRE(dilate(complement(x), k, Border::background) == complement(erode(x, k, Border::ink)));
            REQUIRE(erode(complement(x), k, Border::background) == complement(dilate(x, k, Border::ink)));
        }
    }
}

TEST_CASE("morphology inclusion properties") {
    Rng rng(9);
    for (int t = 0; t < 200; ++t) {
        const auto x = random_mask(rng, 1 + rng.below(20), 1 + rng.below(20), 10 + rng.below(80));
        REQUIRE(subset(erode(x), x));
        REQUIRE(subset(x, dilate(x)));
        REQUIRE(subset(x, erode(dilate(x), Kernel3x3::box(), Border::ink)));
    }
}

TEST_CASE("resize") {
    Rng rng(2);
    GrayImage img(7, 5);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(256));
    CHECK(resize(img, 7, 5, ResizeMode::nearest) == img);
    CHECK(resize(img, 7, 5, ResizeMode::bilinear) == img);

    GrayImage checker(2, 2, std::vector<std::uint8_t>{0, 255, 255, 0});
    const auto big = resize(checker, 4, 4, ResizeMode::nearest);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) CHECK(big.at(x, y) == checker.at(x / 2, y / 2));

    GrayImage ramp(2, 1, std::vector<std::uint8_t>{0, 255});
    CHECK(resize(ramp, 3, 1, ResizeMode::bilinear).data == std::vector<std::uint8_t>{0, 128, 255});
    CHECK_THROWS_AS(resize(img, 0, 3, ResizeMode::nearest), ParamError);
}

TEST_CASE("strikethrough removal") {
    CHECK(remove_strikethrough(GrayImage(20, 20, std::uint8_t(10))).count() == 0);

    // 5 px thick vertical bar crossed by a 1 px horizontal line.
    GrayImage img(40, 21, std::uint8_t(0));
    for (int y = 0; y < 21; ++y)
        for (int x = 18; x < 23; ++x) img.at(x, y) = 255;
    for (int x = 0; x < 40; ++x) img.at(x, 10) = 255;
    const auto out = remove_strikethrough(img);
    for (int y = 2; y < 19; ++y) CHECK(out.at(20, y));
    for (int x = 0; x < 40; ++x)
        if (x < 16 || x > 24) CHECK_FALSE(out.at(x, 10));

    // The mid band [120, 200) is background by default and ink on request.
    GrayImage mid(9, 9, std::uint8_t(160));
    CHECK(remove_strikethrough(mid).count() == 0);
    StrikethroughParams p;
    p.mid_band_ink = true;
    CHECK(remove_strikethrough(mid, p).count() == 81);
    GrayImage at_high(9, 9, std::uint8_t(200));
    CHECK(remove_strikethrough(at_high).count() == 81);
}

TEST_CASE("railway preprocessing") {
    CHECK(railway_preprocess(RgbImage(30, 20, std::uint8_t(255))).count() == 0);

    Rng rng(4);
    RgbImage img(60, 30, std::uint8_t(230));
    // A 5 px thick dark bar plus isolated dark dots away from it.
    for (int y = 5; y < 25; ++y)
        for (int x = 10; x < 15; ++x) img.px(x, y)[0] = img.px(x, y)[1] = img.px(x, y)[2] = 20;
    for (int i = 0; i < 40; ++i) {
        const int x = 20 + static_cast<int>(rng.below(38)), y = 1 + static_cast<int>(rng.below(28));
        auto* p = img.px(x, y);
        p[0] = p[1] = p[2] = 0;
    }
    // Keep dots isolated: clear any 8-neighbour pairs.
    for (int y = 1; y < 29; ++y)
        for (int x = 21; x < 59; ++x)
            if (img.px(x, y)[0] == 0 && (img.px(x - 1, y)[0] == 0 || img.px(x, y - 1)[0] == 0 ||
                                         img.px(x - 1, y - 1)[0] == 0 || img.px(x + 1, y - 1)[0] == 0))
                img.px(x, y)[0] = img.px(x, y)[1] = img.px(x, y)[2] = 230;
    const auto pre = threshold_binary_inv(to_gray(img), 127);
    const auto out = railway_preprocess(img);
    for (int y = 0; y < 30; ++y)
        for (int x = 18; x < 60; ++x) CHECK_FALSE(out.at(x, y));
    const double bar_before = 5 * 20;
    std::size_t bar_after = 0;
    for (int y = 0; y < 30; ++y)
        for (int x = 0; x < 18; ++x) bar_after += out.at(x, y);
    CHECK(std::abs(bar_after - bar_before) <= 0.2 * bar_before);
    CHECK(pre.count() > out.count());
}
