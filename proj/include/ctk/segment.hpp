#pragma once

#include <vector>

#include "ctk/image.hpp"

namespace ctk {

/// Character region; bounds are inclusive source coordinates.
struct Roi {
    int col_start = 0;
    int col_end = 0;
    int row_start = 0;
    int row_end = 0;
    BinaryImage pixels;  // crop of the source over the bounds

    int width() const { return col_end - col_start + 1; }
    int height() const { return row_end - row_start + 1; }
};

/// Maximal runs of ink columns, each trimmed to its first and last ink row.
/// Runs with fewer than `min_area` ink pixels are dropped as noise. `pad`
/// grows every box by that many pixels, clipped to the image.
std::vector<Roi> extract_rois(const BinaryImage& img, int min_area = 4, int pad = 0);

/// Centres the crop on a square background canvas (odd remainder right and
/// bottom), then nearest-resizes to cell x cell. Ink = 255, background = 0.
GrayImage normalize_roi(const Roi& roi, int cell);

enum class Preprocess { otsu, jam, railway };

Preprocess parse_preprocess(std::string_view s);

/// otsu: dark text on light ground; jam: strikethrough removal; railway:
/// binary inverse plus opening. A constant image yields an empty mask.
BinaryImage preprocess(const GrayImage& img, Preprocess mode);
BinaryImage preprocess(const RgbImage& img, Preprocess mode);

std::vector<GrayImage> segment_pipeline(const GrayImage& img, Preprocess mode, int cell);
std::vector<GrayImage> segment_pipeline(const RgbImage& img, Preprocess mode, int cell);

}  // namespace ctk
