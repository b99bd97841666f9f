#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ctk/image.hpp"

namespace ctk {

struct LabeledCell {
    GrayImage image;
    char label = 0;
};

/// Stored training cells as rows of pixel/255 features.
struct KnnModel {
    int width = 0;
    int height = 0;
    std::string charset;         // class id -> character
    std::vector<float> features; // size() rows of width*height
    std::vector<int> labels;

    int dim() const { return width * height; }
    int size() const { return static_cast<int>(labels.size()); }
};

/// Class ids follow `charset`; a label outside it is a ParamError.
KnnModel knn_fit(const std::vector<LabeledCell>& cells, const std::string& charset);

/// Majority vote of the k nearest rows by Euclidean distance (ties in
/// distance resolve to the lower row index). Vote ties go to the class with
/// the smaller summed distance, then to the lower class id.
int knn_predict_class(const KnnModel& model, const float* features, int k);
char knn_predict(const KnnModel& model, const GrayImage& cell, int k);

/// (k, accuracy) for each k in order.
std::vector<std::pair<int, double>> knn_sweep(const KnnModel& model, const std::vector<LabeledCell>& val,
                                              const std::vector<int>& ks);

/// u32 little-endian header length, JSON header, then float32 rows.
void save_knn(const KnnModel& model, const std::filesystem::path& path);
KnnModel load_knn(const std::filesystem::path& path);

std::vector<float> cell_features(const GrayImage& cell);

}  // namespace ctk
