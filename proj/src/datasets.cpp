#include "ctk/datasets.hpp"

#include <algorithm>

namespace ctk {

nn::Tensor images_to_tensor(const std::vector<GrayImage>& images) {
    if (images.empty()) return nn::Tensor(nn::Shape{0, 1, 1, 1});
    const int w = images.front().width, h = images.front().height;
    nn::Tensor t(nn::Shape{static_cast<int>(images.size()), h, w, 1});
    float* out = t.ptr();
    for (const auto& img : images) {
        if (img.width != w || img.height != h) throw ShapeError("images differ in size");
        for (auto v : img.data) *out++ = static_cast<float>(v) / 255.0f;
    }
    return t;
}

std::vector<int> encode_labels(const std::vector<std::string>& labels, const std::string& charset) {
    std::vector<int> out;
    for (const auto& l : labels)
        for (char c : l) {
            const auto pos = charset.find(c);
            if (pos == std::string::npos)
                throw ParamError("label '" + l + "' has character '" + std::string(1, c) + "' outside the charset");
            out.push_back(static_cast<int>(pos));
        }
    return out;
}

BinaryImage preprocess_any(const CaptchaImage& image, Preprocess mode) {
    return std::visit([&](const auto& img) { return preprocess(img, mode); }, image);
}

nn::Dataset multihead_dataset(const std::vector<CaptchaImage>& images, const std::vector<std::string>& labels,
                              const std::string& charset, Preprocess mode) {
    if (images.size() != labels.size()) throw ShapeError("image and label counts differ");
    std::vector<GrayImage> masks;
    masks.reserve(images.size());
    for (const auto& img : images) masks.push_back(to_gray(preprocess_any(img, mode)));
    nn::Dataset d;
    d.images = images_to_tensor(masks);
    d.heads = labels.empty() ? 1 : static_cast<int>(labels.front().size());
    for (const auto& l : labels)
        if (static_cast<int>(l.size()) != d.heads) throw ParamError("labels differ in length");
    d.labels = encode_labels(labels, charset);
    return d;
}

CellHarvest harvest_cells(const std::vector<CaptchaImage>& images, const std::vector<std::string>& labels,
                          Preprocess mode, int cell) {
    if (images.size() != labels.size()) throw ShapeError("image and label counts differ");
    CellHarvest h;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto rois = extract_rois(preprocess_any(images[i], mode));
        if (rois.size() != labels[i].size()) {
            ++h.skipped;
            continue;
        }
        ++h.kept;
        for (std::size_t k = 0; k < rois.size(); ++k) h.cells.push_back({normalize_roi(rois[k], cell), labels[i][k]});
    }
    return h;
}

nn::Dataset cell_dataset(const std::vector<LabeledCell>& cells, const std::string& charset) {
    std::vector<GrayImage> images;
    std::vector<std::string> labels;
    for (const auto& c : cells) {
        images.push_back(c.image);
        labels.emplace_back(1, c.label);
    }
    nn::Dataset d;
    d.images = images_to_tensor(images);
    d.labels = encode_labels(labels, charset);
    d.heads = 1;
    return d;
}

CaptchaImage load_captcha(const std::filesystem::path& path) {
    if (path.extension() == ".ppm") return read_ppm(path);
    return read_pgm(path);
}

LoadedSplit load_split(const std::filesystem::path& dir, std::optional<Split> split) {
    const auto manifest = load_manifest(dir / "manifest.jsonl");
    LoadedSplit out;
    for (const auto& r : manifest.records) {
        if (split && r.split != *split) continue;
        out.files.push_back(r.file);
        out.labels.push_back(r.label);
        out.images.push_back(load_captcha(dir / r.file));
    }
    return out;
}

std::string charset_of(const std::vector<std::string>& labels) {
    std::string all;
    for (const auto& l : labels) all += l;
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    return all;
}

}  // namespace ctk
