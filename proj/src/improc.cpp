#include "ctk/improc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace ctk {

Kernel3x3::Kernel3x3(const std::array<bool, 9>& cells) {
    for (int i = 0; i < 9; ++i) cells_[i] = cells[i] ? 1 : 0;
    if (!cells[4]) throw ParamError("structuring element must include its center");
}

bool Kernel3x3::symmetric() const {
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
            if (at(dx, dy) != at(-dx, -dy)) return false;
    return true;
}

GrayImage to_gray(const RgbImage& img) {
    GrayImage out(img.width, img.height);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        double luma = 0.299 * img.data[3 * i] + 0.587 * img.data[3 * i + 1] + 0.114 * img.data[3 * i + 2];
        out.data[i] = static_cast<std::uint8_t>(std::clamp<long>(std::lround(luma), 0, 255));
    }
    return out;
}

namespace {

// Between-class variance up to the positive factor 1/N^2 is D^2 / (n0 * n1)
// with D = N*s0 - n0*S. Returns true when score(a) > score(b).
struct OtsuScore {
    std::int64_t d = 0;   // |N*s0 - n0*S|
    std::int64_t n0n1 = 0;
};

bool greater(const OtsuScore& a, const OtsuScore& b, bool exact) {
    if (a.n0n1 == 0) return false;
    if (b.n0n1 == 0) return true;
    if (exact) {
        using u128 = unsigned __int128;
        u128 lhs = static_cast<u128>(a.d) * static_cast<u128>(a.d) * static_cast<u128>(b.n0n1);
        u128 rhs = static_cast<u128>(b.d) * static_cast<u128>(b.d) * static_cast<u128>(a.n0n1);
        return lhs > rhs;
    }
    long double sa = static_cast<long double>(a.d) * a.d / a.n0n1;
    long double sb = static_cast<long double>(b.d) * b.d / b.n0n1;
    return sa > sb;
}

}  // namespace

ThresholdResult otsu(const GrayImage& img, Polarity polarity) {
    std::array<std::int64_t, 256> hist{};
    for (auto v : img.data) ++hist[v];
    int distinct = 0;
    for (auto h : hist) distinct += h > 0;
    if (distinct < 2) throw DegenerateError("otsu: histogram has a single intensity");

    const auto total = static_cast<std::int64_t>(img.data.size());
    std::int64_t total_moment = 0;
    for (int i = 0; i < 256; ++i) total_moment += i * hist[i];

    // 128-bit products stay exact up to ~5e5 pixels.
    const bool exact = total <= 500'000;
    std::int64_t n0 = 0;   // zeroth cumulative moment (count)
    std::int64_t s0 = 0;   // first cumulative moment
    OtsuScore best;
    int best_t = 0;
    for (int t = 0; t < 256; ++t) {
        n0 += hist[t];
        s0 += t * hist[t];
        OtsuScore cur{std::llabs(total * s0 - n0 * total_moment), n0 * (total - n0)};
        if (greater(cur, best, exact)) {
            best = cur;
            best_t = t;
        }
    }

    ThresholdResult res{best_t, BinaryImage(img.width, img.height)};
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        bool ink = polarity == Polarity::ink_below ? img.data[i] <= best_t : img.data[i] > best_t;
        res.binary.ink[i] = ink ? 1 : 0;
    }
    return res;
}

BinaryImage threshold_binary_inv(const GrayImage& img, int t) {
    if (t < 0 || t > 255) throw ParamError("threshold must be in [0, 255]");
    BinaryImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.data.size(); ++i) out.ink[i] = img.data[i] < t ? 1 : 0;
    return out;
}

BinaryImage adaptive_threshold(const GrayImage& img, int block, int c, Polarity polarity) {
    if (block < 3 || block % 2 == 0) throw ParamError("adaptive_threshold: block must be odd and >= 3");
    const int w = img.width;
    const int h = img.height;
    // integral[y][x] = sum of pixels in [0,x) x [0,y)
    std::vector<std::int64_t> integral(static_cast<std::size_t>(w + 1) * (h + 1), 0);
    auto I = [&](int x, int y) -> std::int64_t& { return integral[static_cast<std::size_t>(y) * (w + 1) + x]; };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) I(x + 1, y + 1) = img.at(x, y) + I(x, y + 1) + I(x + 1, y) - I(x, y);

    const int r = block / 2;
    BinaryImage out(w, h);
    for (int y = 0; y < h; ++y) {
        int y0 = std::max(0, y - r), y1 = std::min(h, y + r + 1);
        for (int x = 0; x < w; ++x) {
            int x0 = std::max(0, x - r), x1 = std::min(w, x + r + 1);
            std::int64_t sum = I(x1, y1) - I(x0, y1) - I(x1, y0) + I(x0, y0);
            std::int64_t count = static_cast<std::int64_t>(x1 - x0) * (y1 - y0);
            // pixel vs mean - c, scaled by count to stay in integers
            std::int64_t lhs = static_cast<std::int64_t>(img.at(x, y)) * count;
            std::int64_t rhs = sum - static_cast<std::int64_t>(c) * count;
            bool ink = polarity == Polarity::ink_below ? lhs < rhs : lhs > rhs;
            out.set(x, y, ink);
        }
    }
    return out;
}

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0)) throw ParamError("gaussian sigma must be > 0");
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * r + 1);
    double sum = 0;
    for (int i = -r; i <= r; ++i) {
        k[i + r] = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        sum += k[i + r];
    }
    for (auto& v : k) v /= sum;
    return k;
}

GrayImage gaussian_blur(const GrayImage& img, double sigma) {
    const auto k = gaussian_kernel(sigma);
    const int r = static_cast<int>(k.size() / 2);
    const int w = img.width;
    const int h = img.height;
    std::vector<double> tmp(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i) acc += k[i + r] * img.at(std::clamp(x + i, 0, w - 1), y);
            tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
    GrayImage out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
            out.at(x, y) = static_cast<std::uint8_t>(std::clamp<long>(std::lround(acc), 0, 255));
        }
    return out;
}

namespace {

template <bool Erode>
BinaryImage morph(const BinaryImage& img, const Kernel3x3& k, Border border) {
    const bool outside = border == Border::ink;
    BinaryImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            bool result = Erode;
            for (int dy = -1; dy <= 1 && result == Erode; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (!k.at(dx, dy)) continue;
                    bool v = img.inside(x + dx, y + dy) ? img.at(x + dx, y + dy) : outside;
                    if (Erode && !v) {
                        result = false;
                        break;
                    }
                    if (!Erode && v) {
                        result = true;
                        break;
                    }
                }
            out.set(x, y, result);
        }
    return out;
}

}  // namespace

BinaryImage erode(const BinaryImage& img, const Kernel3x3& k, Border border) { return morph<true>(img, k, border); }
BinaryImage dilate(const BinaryImage& img, const Kernel3x3& k, Border border) { return morph<false>(img, k, border); }

GrayImage resize(const GrayImage& img, int out_w, int out_h, ResizeMode mode) {
    if (out_w < 1 || out_h < 1) throw ParamError("resize: output dimensions must be >= 1");
    if (out_w == img.width && out_h == img.height) return img;
    const int sw = img.width;
    const int sh = img.height;
    GrayImage out(out_w, out_h);
    if (mode == ResizeMode::nearest) {
        // source index = floor((x + 0.5) * sw / out_w), in integers
        for (int y = 0; y < out_h; ++y) {
            int sy = static_cast<int>((2LL * y + 1) * sh / (2LL * out_h));
            for (int x = 0; x < out_w; ++x) {
                int sx = static_cast<int>((2LL * x + 1) * sw / (2LL * out_w));
                out.at(x, y) = img.at(sx, sy);
            }
        }
        return out;
    }
    auto coord = [](int d, int src, int dst, int& i0, int& i1, double& frac) {
        double s = (d + 0.5) * src / dst - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(src - 1));
        i0 = static_cast<int>(std::floor(s));
        i1 = std::min(i0 + 1, src - 1);
        frac = s - i0;
    };
    for (int y = 0; y < out_h; ++y) {
        int y0, y1;
        double fy;
        coord(y, sh, out_h, y0, y1, fy);
        for (int x = 0; x < out_w; ++x) {
            int x0, x1;
            double fx;
            coord(x, sw, out_w, x0, x1, fx);
            double top = img.at(x0, y0) * (1 - fx) + img.at(x1, y0) * fx;
            double bot = img.at(x0, y1) * (1 - fx) + img.at(x1, y1) * fx;
            out.at(x, y) = static_cast<std::uint8_t>(std::clamp<long>(std::lround(top * (1 - fy) + bot * fy), 0, 255));
        }
    }
    return out;
}

BinaryImage remove_strikethrough(const GrayImage& img, const StrikethroughParams& params) {
    auto blurred = gaussian_blur(img, params.sigma);
    BinaryImage out(img.width, img.height);
    for (std::size_t i = 0; i < blurred.data.size(); ++i) {
        int v = blurred.data[i];
        bool ink = v >= params.high || (params.mid_band_ink && v >= params.low);
        out.ink[i] = ink ? 1 : 0;
    }
    return out;
}

BinaryImage railway_preprocess(const RgbImage& img) {
    auto bin = threshold_binary_inv(to_gray(img), 127);
    return dilate(erode(bin));
}

}  // namespace ctk
