#pragma once

#include <array>
#include <vector>

#include "ctk/image.hpp"

namespace ctk {

/// 3x3 structuring element, row-major. Center must be set.
class Kernel3x3 {
public:
    constexpr Kernel3x3() : cells_{1, 1, 1, 1, 1, 1, 1, 1, 1} {}
    explicit Kernel3x3(const std::array<bool, 9>& cells);

    static Kernel3x3 box() { return Kernel3x3(); }
    static Kernel3x3 cross() { return Kernel3x3({false, true, false, true, true, true, false, true, false}); }

    bool at(int dx, int dy) const { return cells_[(dy + 1) * 3 + (dx + 1)] != 0; }
    bool symmetric() const;

private:
    std::array<unsigned char, 9> cells_;
};

/// Which side of a threshold is foreground.
/// ink_below: intensity <= t is ink (dark text). ink_above: intensity > t is ink.
enum class Polarity { ink_below, ink_above };

/// How erode/dilate treat pixels outside the image.
enum class Border { background, ink };

struct ThresholdResult {
    int threshold = 0;
    BinaryImage binary;
};

GrayImage to_gray(const RgbImage& img);

/// Otsu's global threshold. The threshold maximizes the between-class variance
/// w0*w1*(mu0-mu1)^2 with class 0 = intensities <= t; ties resolve to the
/// lowest t. Scores are compared in exact integer arithmetic.
ThresholdResult otsu(const GrayImage& img, Polarity polarity);

/// ink = pixel < t. t must be in [0, 255].
BinaryImage threshold_binary_inv(const GrayImage& img, int t);

/// Mean-window adaptive threshold. The window is clipped at the image border.
/// ink_below: ink iff pixel < mean - c; ink_above: ink iff pixel > mean - c.
BinaryImage adaptive_threshold(const GrayImage& img, int block, int c, Polarity polarity);

/// Normalized 1-D Gaussian weights for offsets -r..r, r = ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);
GrayImage gaussian_blur(const GrayImage& img, double sigma);

BinaryImage erode(const BinaryImage& img, const Kernel3x3& k = Kernel3x3::box(),
                  Border border = Border::background);
BinaryImage dilate(const BinaryImage& img, const Kernel3x3& k = Kernel3x3::box(),
                   Border border = Border::background);

enum class ResizeMode { nearest, bilinear };
GrayImage resize(const GrayImage& img, int out_w, int out_h, ResizeMode mode);

struct StrikethroughParams {
    double sigma = 1.0;
    int low = 120;   // blurred < low -> background
    int high = 200;  // blurred >= high -> ink
    bool mid_band_ink = false;
};

/// Blur-then-double-threshold removal of thin lines from white-on-dark text.
BinaryImage remove_strikethrough(const GrayImage& img, const StrikethroughParams& params = {});

/// to_gray -> binary inverse at 127 -> erode -> dilate (3x3 box).
BinaryImage railway_preprocess(const RgbImage& img);

}  // namespace ctk
