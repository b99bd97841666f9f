#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <map>

#include "ctk/imageio.hpp"
#include "ctk/knn.hpp"
#include "ctk/rng.hpp"

using namespace ctk;

namespace {

LabeledCell cell(std::vector<std::uint8_t> px, char label) {
    const int w = static_cast<int>(px.size());
    return {GrayImage(w, 1, std::move(px)), label};
}

// Full sort of all rows by (squared distance, index), then the documented vote.
int oracle(const KnnModel& m, const std::vector<float>& q, int k) {
    std::vector<std::pair<double, int>> d;
    for (int r = 0; r < m.size(); ++r) {
        double s = 0;
        for (int j = 0; j < m.dim(); ++j) {
            const double diff = static_cast<double>(m.features[static_cast<std::size_t>(r) * m.dim() + j]) - q[j];
            s += diff * diff;
        }
        d.push_back({s, r});
    }
    std::sort(d.begin(), d.end());
    std::map<int, std::pair<int, double>> votes;  // class -> (count, summed distance)
    for (int i = 0; i < k; ++i) {
        auto& v = votes[m.labels[d[i].second]];
        ++v.first;
        v.second += std::sqrt(d[i].first);
    }
    int best = -1;
    for (const auto& [cls, v] : votes) {
        if (best < 0) {
            best = cls;
            continue;
        }
        const auto& b = votes[best];
        if (v.first > b.first || (v.first == b.first && v.second < b.second)) best = cls;
    }
    return best;
}

}  // namespace

TEST_CASE("knn toy example") {
    const auto m = knn_fit({cell({0, 0}, 'A'), cell({10, 0}, 'B'), cell({0, 10}, 'B')}, "AB");
    CHECK(m.size() == 3);
    CHECK(m.features[2] == doctest::Approx(10 / 255.0));
    const GrayImage q(2, 1, std::vector<std::uint8_t>{1, 0});
    CHECK(knn_predict(m, q, 1) == 'A');
    CHECK(knn_predict(m, q, 3) == 'B');
    CHECK_THROWS_AS(knn_predict(m, q, 0), ParamError);
    CHECK_THROWS_AS(knn_predict(m, q, 4), ParamError);
    CHECK(knn_predict(m, GrayImage(2, 1, std::vector<std::uint8_t>{10, 0}), 1) == 'B');
}

TEST_CASE("knn fit errors") {
    CHECK(knn_fit({cell({1, 2, 3}, 'A')}, "A").size() == 1);
    CHECK_THROWS_AS(knn_fit({cell({1, 2}, 'A'), cell({1, 2, 3}, 'A')}, "A"), ShapeError);
    CHECK_THROWS_AS(knn_fit({cell({1, 2}, 'Z')}, "A"), ParamError);
    CHECK_THROWS_AS(knn_fit({}, "A"), ParamError);
}

TEST_CASE("vote ties go to the smaller summed distance, then the lower class") {
    auto m = knn_fit({cell({1}, 'B'), cell({0}, 'A'), cell({100}, 'B')}, "AB");
    // Query 1 -> B at 0 (distance 0), A at 1: k=2 tie on count, B closer.
    CHECK(knn_predict(m, GrayImage(1, 1, std::vector<std::uint8_t>{1}), 2) == 'B');
    // Equidistant classes: lower class id wins.
    m = knn_fit({cell({2}, 'B'), cell({0}, 'A')}, "AB");
    CHECK(knn_predict(m, GrayImage(1, 1, std::vector<std::uint8_t>{1}), 2) == 'A');
}

TEST_CASE("knn matches a full-sort oracle") {
    Rng rng(8);
    std::vector<LabeledCell> train;
    for (int i = 0; i < 200; ++i) {
        std::vector<std::uint8_t> px(6);
        for (auto& v : px) v = static_cast<std::uint8_t>(rng.below(4) * 50);  // many distance ties
        train.push_back(cell(px, "ABCDE"[rng.below(5)]));
    }
    const auto m = knn_fit(train, "ABCDE");
    for (int t = 0; t < 200; ++t) {
        std::vector<std::uint8_t> px(6);
        for (auto& v : px) v = static_cast<std::uint8_t>(rng.below(256));
        const auto f = cell_features(GrayImage(6, 1, px));
        for (int k : {1, 3, 7}) REQUIRE(knn_predict_class(m, f.data(), k) == oracle(m, f, k));
    }
}

TEST_CASE("knn is invariant under uniform feature scaling") {
    Rng rng(12);
    KnnModel m;
    m.width = 4;
    m.height = 1;
    m.charset = "AB";
    for (int i = 0; i < 60; ++i) {
        for (int j = 0; j < 4; ++j) m.features.push_back(static_cast<float>(rng.uniform()));
        m.labels.push_back(static_cast<int>(rng.below(2)));
    }
    auto scaled = m;
    for (auto& v : scaled.features) v *= 4.0f;  // exact in binary floating point
    for (int t = 0; t < 100; ++t) {
        std::vector<float> q(4), q4(4);
        for (int j = 0; j < 4; ++j) q4[j] = 4.0f * (q[j] = static_cast<float>(rng.uniform()));
        for (int k : {1, 3, 5})
            REQUIRE(knn_predict_class(m, q.data(), k) == knn_predict_class(scaled, q4.data(), k));
    }
}

TEST_CASE("k sweep") {
    Rng rng(4);
    std::vector<LabeledCell> train;
    for (int i = 0; i < 40; ++i) {
        std::vector<std::uint8_t> px(5);
        for (auto& v : px) v = static_cast<std::uint8_t>(rng.below(256));
        train.push_back(cell(px, "XY"[i % 2]));
    }
    const auto m = knn_fit(train, "XY");
    const std::vector<LabeledCell> val(train.begin(), train.begin() + 15);
    const auto one = knn_sweep(m, val, {1});
    CHECK(one[0].second == 1.0);
    const auto rows = knn_sweep(m, val, {1, 3, 5, 7});
    REQUIRE(rows.size() == 4);
    for (const auto& [k, acc] : rows) CHECK((acc >= 0 && acc <= 1));
    CHECK_THROWS_AS(knn_sweep(m, {}, {1}), ParamError);
}

TEST_CASE("knn model file round trip") {
    const auto m = knn_fit({cell({0, 9}, 'A'), cell({10, 0}, 'B')}, "AB");
    const auto path = std::filesystem::temp_directory_path() / ("ctk_knn_" + std::to_string(::getpid()) + ".bin");
    save_knn(m, path);
    const auto back = load_knn(path);
    CHECK(back.features == m.features);
    CHECK(back.labels == m.labels);
    CHECK(back.charset == m.charset);
    CHECK(back.width == 2);
    auto bytes = read_file(path);
    write_file_atomic(path, bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(load_knn(path), Error);
}
