#include "ctk/knn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "ctk/imageio.hpp"

namespace ctk {

std::vector<float> cell_features(const GrayImage& cell) {
    std::vector<float> f(cell.data.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(cell.data[i]) / 255.0f;
    return f;
}

KnnModel knn_fit(const std::vector<LabeledCell>& cells, const std::string& charset) {
    if (cells.empty()) throw ParamError("k-NN needs at least one training cell");
    if (charset.empty()) throw ParamError("charset must not be empty");
    KnnModel m;
    m.width = cells.front().image.width;
    m.height = cells.front().image.height;
    m.charset = charset;
    m.features.reserve(cells.size() * static_cast<std::size_t>(m.dim()));
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& c = cells[i];
        if (c.image.width != m.width || c.image.height != m.height)
            throw ShapeError("cell " + std::to_string(i) + " is " + std::to_string(c.image.width) + "x" +
                             std::to_string(c.image.height) + ", expected " + std::to_string(m.width) + "x" +
                             std::to_string(m.height));
        const auto pos = charset.find(c.label);
        if (pos == std::string::npos)
            throw ParamError(std::string("label '") + c.label + "' is not in the charset");
        auto f = cell_features(c.image);
        m.features.insert(m.features.end(), f.begin(), f.end());
        m.labels.push_back(static_cast<int>(pos));
    }
    return m;
}

int knn_predict_class(const KnnModel& model, const float* q, int k) {
    const int n = model.size();
    if (k < 1 || k > n)
        throw ParamError("k must be in 1.." + std::to_string(n) + ", got " + std::to_string(k));
    const int d = model.dim();
    std::vector<double> dist(n);
    for (int i = 0; i < n; ++i) {
        const float* row = model.features.data() + static_cast<std::size_t>(i) * d;
        double s = 0;
        for (int j = 0; j < d; ++j) {
            const double diff = static_cast<double>(row[j]) - q[j];
            s += diff * diff;
        }
        dist[i] = s;
    }
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                      [&](int a, int b) { return dist[a] != dist[b] ? dist[a] < dist[b] : a < b; });

    const int classes = static_cast<int>(model.charset.size());
    std::vector<int> votes(classes, 0);
    std::vector<double> summed(classes, 0);
    for (int i = 0; i < k; ++i) {
        const int c = model.labels[idx[i]];
        ++votes[c];
        summed[c] += std::sqrt(dist[idx[i]]);
    }
    int best = -1;
    for (int c = 0; c < classes; ++c) {
        if (!votes[c]) continue;
        if (best < 0 || votes[c] > votes[best] || (votes[c] == votes[best] && summed[c] < summed[best])) best = c;
    }
    return best;
}

char knn_predict(const KnnModel& model, const GrayImage& cell, int k) {
    if (cell.width != model.width || cell.height != model.height)
        throw ShapeError("query cell size does not match the model");
    const auto f = cell_features(cell);
    return model.charset[knn_predict_class(model, f.data(), k)];
}

std::vector<std::pair<int, double>> knn_sweep(const KnnModel& model, const std::vector<LabeledCell>& val,
                                              const std::vector<int>& ks) {
    if (val.empty()) throw ParamError("validation set is empty");
    if (ks.empty()) throw ParamError("no k values given");
    for (int k : ks)
        if (k < 1 || k > model.size()) throw ParamError("k=" + std::to_string(k) + " is out of range");
    std::vector<std::pair<int, double>> out;
    std::vector<int> correct(ks.size(), 0);
    for (const auto& c : val)
        for (std::size_t i = 0; i < ks.size(); ++i) correct[i] += knn_predict(model, c.image, ks[i]) == c.label;
    for (std::size_t i = 0; i < ks.size(); ++i)
        out.emplace_back(ks[i], static_cast<double>(correct[i]) / static_cast<double>(val.size()));
    return out;
}

void save_knn(const KnnModel& model, const std::filesystem::path& path) {
    nlohmann::ordered_json h;
    h["format"] = "KNN1";
    h["cell"] = {model.width, model.height};
    h["charset"] = model.charset;
    h["n"] = model.size();
    h["labels"] = model.labels;
    const std::string header = h.dump();
    std::string out;
    auto put32 = [&](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    };
    put32(static_cast<std::uint32_t>(header.size()));
    out += header;
    for (float f : model.features) put32(std::bit_cast<std::uint32_t>(f));
    write_file_atomic(path, out);
}

KnnModel load_knn(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    auto u = reinterpret_cast<const unsigned char*>(bytes.data());
    auto get32 = [&](std::size_t off) {
        return static_cast<std::uint32_t>(u[off]) | (static_cast<std::uint32_t>(u[off + 1]) << 8) |
               (static_cast<std::uint32_t>(u[off + 2]) << 16) | (static_cast<std::uint32_t>(u[off + 3]) << 24);
    };
    if (bytes.size() < 4) throw TruncatedError("k-NN model header", 4, bytes.size());
    const std::size_t hlen = get32(0);
    if (bytes.size() < 4 + hlen) throw TruncatedError("k-NN model header", 4 + hlen, bytes.size());
    KnnModel m;
    try {
        const auto h = nlohmann::json::parse(bytes.substr(4, hlen));
        if (h.value("format", std::string()) != "KNN1") throw VersionError("not a KNN1 model file");
        m.width = h.at("cell").at(0).get<int>();
        m.height = h.at("cell").at(1).get<int>();
        m.charset = h.at("charset").get<std::string>();
        m.labels = h.at("labels").get<std::vector<int>>();
        if (h.at("n").get<int>() != m.size()) throw ParseError("k-NN label count disagrees with n", 4);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad k-NN header: ") + e.what(), 4);
    }
    const std::size_t want = static_cast<std::size_t>(m.size()) * m.dim() * 4;
    if (bytes.size() - 4 - hlen != want) throw TruncatedError("k-NN feature rows", want, bytes.size() - 4 - hlen);
    m.features.resize(want / 4);
    for (std::size_t i = 0; i < m.features.size(); ++i) m.features[i] = std::bit_cast<float>(get32(4 + hlen + 4 * i));
    return m;
}

}  // namespace ctk
