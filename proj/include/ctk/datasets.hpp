#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ctk/capgen.hpp"
#include "ctk/knn.hpp"
#include "ctk/nn/train.hpp"
#include "ctk/segment.hpp"

// Glue between generated or on-disk images and model inputs.
namespace ctk {

/// [N,H,W,1] tensor of pixel/255; all images must share dimensions.
nn::Tensor images_to_tensor(const std::vector<GrayImage>& images);

/// Class id per character, sample-major. Unknown characters throw ParamError.
std::vector<int> encode_labels(const std::vector<std::string>& labels, const std::string& charset);

/// Whole-image multi-head set: preprocess, render the mask as 0/1 floats.
nn::Dataset multihead_dataset(const std::vector<CaptchaImage>& images, const std::vector<std::string>& labels,
                              const std::string& charset, Preprocess mode);

BinaryImage preprocess_any(const CaptchaImage& image, Preprocess mode);

struct CellHarvest {
    std::vector<LabeledCell> cells;
    int kept = 0;     // images whose ROI count matched the label length
    int skipped = 0;  // images dropped for a count mismatch
};

/// Segments every image and keeps its cells only when the ROI count equals
/// the label length, pairing cells with label characters left to right.
CellHarvest harvest_cells(const std::vector<CaptchaImage>& images, const std::vector<std::string>& labels,
                          Preprocess mode, int cell);

nn::Dataset cell_dataset(const std::vector<LabeledCell>& cells, const std::string& charset);

/// .ppm loads as RGB, anything else as PGM.
CaptchaImage load_captcha(const std::filesystem::path& path);

/// Records of one dataset directory loaded into memory.
struct LoadedSplit {
    std::vector<std::string> files;
    std::vector<std::string> labels;
    std::vector<CaptchaImage> images;
};

/// Reads `dir/manifest.jsonl` and loads the records of `split` (all records
/// when empty), in manifest order.
LoadedSplit load_split(const std::filesystem::path& dir, std::optional<Split> split);

/// Sorted distinct characters of the labels.
std::string charset_of(const std::vector<std::string>& labels);

}  // namespace ctk
