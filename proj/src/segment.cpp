#include "ctk/segment.hpp"

#include <algorithm>
#include <string>

#include "ctk/improc.hpp"

namespace ctk {

std::vector<Roi> extract_rois(const BinaryImage& img, int min_area, int pad) {
    if (min_area < 0 || pad < 0) throw ParamError("min_area and pad must be >= 0");
    std::vector<int> column_ink(img.width, 0);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) column_ink[x] += img.at(x, y);

    std::vector<Roi> rois;
    int x = 0;
    while (x < img.width) {
        if (!column_ink[x]) {
            ++x;
            continue;
        }
        const int start = x;
        int area = 0;
        while (x < img.width && column_ink[x]) area += column_ink[x++];
        const int end = x - 1;
        if (area < min_area) continue;

        int top = img.height, bottom = -1;
        for (int y = 0; y < img.height; ++y)
            for (int c = start; c <= end; ++c)
                if (img.at(c, y)) {
                    top = std::min(top, y);
                    bottom = y;
                    break;
                }
        Roi r;
        r.col_start = std::max(0, start - pad);
        r.col_end = std::min(img.width - 1, end + pad);
        r.row_start = std::max(0, top - pad);
        r.row_end = std::min(img.height - 1, bottom + pad);
        r.pixels = BinaryImage(r.width(), r.height());
        for (int y = r.row_start; y <= r.row_end; ++y)
            for (int c = r.col_start; c <= r.col_end; ++c) r.pixels.set(c - r.col_start, y - r.row_start, img.at(c, y));
        rois.push_back(std::move(r));
    }
    return rois;
}

GrayImage normalize_roi(const Roi& roi, int cell) {
    if (cell < 1) throw ParamError("cell size must be >= 1");
    const auto& p = roi.pixels;
    if (p.width < 1 || p.count() == 0) throw ParamError("cannot normalize an empty ROI");
    const int side = std::max(p.width, p.height);
    const int left = (side - p.width) / 2;
    const int top = (side - p.height) / 2;
    GrayImage square(side, side, 0);
    for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x)
            if (p.at(x, y)) square.at(x + left, y + top) = 255;
    return resize(square, cell, cell, ResizeMode::nearest);
}

Preprocess parse_preprocess(std::string_view s) {
    if (s == "otsu") return Preprocess::otsu;
    if (s == "jam") return Preprocess::jam;
    if (s == "railway") return Preprocess::railway;
    throw ParamError("unknown preprocessing '" + std::string(s) + "' (expected otsu, jam or railway)");
}

BinaryImage preprocess(const GrayImage& img, Preprocess mode) {
    switch (mode) {
        case Preprocess::otsu:
            try {
                return otsu(img, Polarity::ink_below).binary;
            } catch (const DegenerateError&) {
                return BinaryImage(img.width, img.height);
            }
        case Preprocess::jam: return remove_strikethrough(img);
        case Preprocess::railway: return railway_preprocess(to_rgb(img));
    }
    return BinaryImage(img.width, img.height);
}

BinaryImage preprocess(const RgbImage& img, Preprocess mode) {
    if (mode == Preprocess::railway) return railway_preprocess(img);
    return preprocess(to_gray(img), mode);
}

namespace {

std::vector<GrayImage> cells_from(const BinaryImage& mask, int cell) {
    std::vector<GrayImage> out;
    for (const auto& r : extract_rois(mask)) out.push_back(normalize_roi(r, cell));
    return out;
}

}  // namespace

std::vector<GrayImage> segment_pipeline(const GrayImage& img, Preprocess mode, int cell) {
    return cells_from(preprocess(img, mode), cell);
}

std::vector<GrayImage> segment_pipeline(const RgbImage& img, Preprocess mode, int cell) {
    return cells_from(preprocess(img, mode), cell);
}

}  // namespace ctk
