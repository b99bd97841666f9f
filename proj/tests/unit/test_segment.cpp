#include <doctest.h>

#include "ctk/capgen.hpp"
#include "ctk/rng.hpp"
#include "ctk/segment.hpp"

using namespace ctk;

namespace {

struct Box {
    int c0, c1, r0, r1;
    bool operator==(const Box&) const = default;
};

// Independent scan: label each column, then walk runs; area is the ink count.
std::vector<Box> oracle(const BinaryImage& img, int min_area) {
    std::vector<int> col_ink(img.width, 0);
    for (int x = 0; x < img.width; ++x)
        for (int y = 0; y < img.height; ++y) col_ink[x] += img.at(x, y);
    std::vector<Box> out;
    int x = 0;
    while (x < img.width) {
        if (!col_ink[x]) {
            ++x;
            continue;
        }
        int end = x;
        int area = 0;
        while (end < img.width && col_ink[end]) area += col_ink[end++];
        int top = img.height, bottom = -1;
        for (int y = 0; y < img.height; ++y)
            for (int c = x; c < end; ++c)
                if (img.at(c, y)) top = std::min(top, y), bottom = std::max(bottom, y);
        if (area >= min_area) out.push_back({x, end - 1, top, bottom});
        x = end;
    }
    return out;
}

std::vector<Box> boxes(const std::vector<Roi>& rois) {
    std::vector<Box> b;
    for (const auto& r : rois) b.push_back({r.col_start, r.col_end, r.row_start, r.row_end});
    return b;
}

}  // namespace

TEST_CASE("extract_rois hand examples") {
    CHECK(extract_rois(BinaryImage(10, 10)).empty());

    BinaryImage img(10, 10);
    for (int y = 1; y <= 8; ++y)
        for (int x : {2, 3, 6, 7, 8}) img.set(x, y, true);
    const auto rois = extract_rois(img);
    REQUIRE(rois.size() == 2);
    CHECK(boxes(rois) == std::vector<Box>{{2, 3, 1, 8}, {6, 8, 1, 8}});
    CHECK(rois[0].pixels.width == 2);
    CHECK(rois[0].pixels.height == 8);
    CHECK(rois[0].pixels.count() == 16);

    // Touching glyphs merge into one span.
    BinaryImage touch(10, 5);
    for (int x = 1; x <= 7; ++x) touch.set(x, x % 5, true);
    CHECK(extract_rois(touch, 1).size() == 1);

    // Specks below min_area are noise.
    BinaryImage speck(10, 5);
    speck.set(1, 1, true);
    speck.set(2, 1, true);
    CHECK(extract_rois(speck).empty());
    CHECK(extract_rois(speck, 2).size() == 1);
}

TEST_CASE("extract_rois padding clips to the image") {
    BinaryImage img(6, 6);
    img.set(0, 0, true), img.set(1, 0, true), img.set(0, 1, true), img.set(1, 1, true);
    const auto rois = extract_rois(img, 4, 2);
    REQUIRE(rois.size() == 1);
    CHECK(boxes(rois) == std::vector<Box>{{0, 3, 0, 3}});
}

TEST_CASE("extract_rois matches an independent scan on random images") {
    Rng rng(21);
    for (int t = 0; t < 1000; ++t) {
        BinaryImage img(1 + static_cast<int>(rng.below(24)), 1 + static_cast<int>(rng.below(12)));
        const auto density = rng.below(40);
        // Sparse columns so that several spans appear.
        std::vector<bool> active(img.width);
        for (int x = 0; x < img.width; ++x) active[x] = rng.below(3) != 0;
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) img.set(x, y, active[x] && rng.below(100) < density);
        const int min_area = static_cast<int>(rng.below(6));
        const auto rois = extract_rois(img, min_area);
        REQUIRE(boxes(rois) == oracle(img, min_area));

        std::size_t kept = 0;
        int last = -1;
        for (const auto& r : rois) {
            REQUIRE(r.col_start > last);
            last = r.col_end;
            REQUIRE(r.pixels.count() >= 1);
            REQUIRE(static_cast<int>(r.pixels.count()) >= min_area);
            kept += r.pixels.count();
        }
        std::size_t noise = 0;
        for (const auto& b : oracle(img, 0)) {
            std::size_t area = 0;
            for (int x = b.c0; x <= b.c1; ++x)
                for (int y = 0; y < img.height; ++y) area += img.at(x, y);
            if (static_cast<int>(area) < min_area) noise += area;
        }
        REQUIRE(kept == img.count() - noise);
    }
}

TEST_CASE("normalize_roi") {
    // A single 16x16 component maps to itself up to polarity.
    BinaryImage sq(16, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) sq.set(x, y, x == 0 || y == 15 || x == y || (x > 8 && y == 4));
    const auto r16 = extract_rois(sq, 1);
    REQUIRE(r16.size() == 1);
    const auto cell = normalize_roi(r16[0], 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) REQUIRE(cell.at(x, y) == (sq.at(x, y) ? 255 : 0));

    // 4 wide, 8 tall: 2 px pad each side, then 2x nearest upscale.
    BinaryImage tall(4, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 4; ++x) tall.set(x, y, (x + y) % 3 == 0 || x == 0);
    auto rois = extract_rois(tall, 1);
    REQUIRE(rois.size() == 1);
    REQUIRE(rois[0].width() == 4);
    REQUIRE(rois[0].height() == 8);
    const auto up = normalize_roi(rois[0], 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            const int sx = x / 2 - 2, sy = y / 2;
            const bool ink = sx >= 0 && sx < 4 && tall.at(sx, sy);
            REQUIRE(up.at(x, y) == (ink ? 255 : 0));
        }

    BinaryImage dot(3, 3);
    dot.set(1, 1, true);
    const auto one = normalize_roi(extract_rois(dot, 1)[0], 16);
    for (auto v : one.data) CHECK(v == 255);
}

TEST_CASE("segment_pipeline") {
    CHECK(segment_pipeline(GrayImage(40, 20, std::uint8_t(255)), Preprocess::otsu, 16).empty());
    CHECK(segment_pipeline(RgbImage(40, 20, std::uint8_t(255)), Preprocess::railway, 16).empty());
    CHECK(segment_pipeline(GrayImage(40, 20, std::uint8_t(0)), Preprocess::jam, 16).empty());

    const auto style = GenStyle::preset(CaptchaStyle::jam, 4);
    int ok = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng rng(seed);
        const auto img = std::get<GrayImage>(render_captcha("7301", style, rng));
        const auto cells = segment_pipeline(img, Preprocess::jam, 20);
        ok += cells.size() == 4;
        for (const auto& c : cells) REQUIRE((c.width == 20 && c.height == 20));
    }
    CHECK(ok >= 198);
    CHECK_THROWS_AS(parse_preprocess("sharpen"), ParamError);
}
