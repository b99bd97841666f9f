#include "ctk/capgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "ctk/font.hpp"
#include "ctk/improc.hpp"

namespace ctk {

namespace {

// round(tan(d/2) * 2^16) and round(sin(d) * 2^16) for d = 0..45 degrees.
constexpr std::array<std::int64_t, 46> kTanHalfQ16 = {
    0,     572,   1144,  1716,  2289,  2861,  3435,  4008,  4583,  5158,  5734,  6310,
    6888,  7467,  8047,  8628,  9210,  9794,  10380, 10967, 11556, 12146, 12739, 13333,
    13930, 14529, 15130, 15734, 16340, 16949, 17560, 18175, 18792, 19413, 20036, 20663,
    21294, 21928, 22566, 23208, 23853, 24503, 25157, 25815, 26478, 27146};
constexpr std::array<std::int64_t, 46> kSinQ16 = {
    0,     1144,  2287,  3430,  4572,  5712,  6850,  7987,  9121,  10252, 11380, 12505,
    13626, 14742, 15855, 16962, 18064, 19161, 20252, 21336, 22415, 23486, 24550, 25607,
    26656, 27697, 28729, 29753, 30767, 31772, 32768, 33754, 34729, 35693, 36647, 37590,
    38521, 39441, 40348, 41243, 42126, 42995, 43852, 44695, 45525, 46341};

// num / den rounded half away from zero; den > 0.
std::int64_t round_div(std::int64_t num, std::int64_t den) {
    return num >= 0 ? (num + den / 2) / den : -((-num + den / 2) / den);
}

constexpr std::int64_t kQ16 = 65536;

BinaryImage upscale(const BinaryImage& g, int s) {
    BinaryImage out(g.width * s, g.height * s);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) out.set(x, y, g.at(x / s, y / s));
    return out;
}

BinaryImage widen(const BinaryImage& g) {
    BinaryImage out(g.width + 2, g.height);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x)
            if (g.at(x, y))
                for (int d = 0; d <= 2; ++d) out.set(x + d, y, true);
    return out;
}

struct Placed {
    BinaryImage mask;
    int x = 0;
    int y = 0;
};

void draw_circle(RgbImage& img, int cx, int cy, int r, const std::array<std::uint8_t, 3>& color) {
    auto plot = [&](int x, int y) {
        if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
        auto* p = img.px(x, y);
        p[0] = color[0];
        p[1] = color[1];
        p[2] = color[2];
    };
    int x = r, y = 0, err = 1 - r;
    while (x >= y) {
        plot(cx + x, cy + y);
        plot(cx - x, cy + y);
        plot(cx + x, cy - y);
        plot(cx - x, cy - y);
        plot(cx + y, cy + x);
        plot(cx - y, cy + x);
        plot(cx + y, cy - x);
        plot(cx - y, cy - x);
        ++y;
        if (err < 0) {
            err += 2 * y + 1;
        } else {
            --x;
            err += 2 * (y - x) + 1;
        }
    }
}

}  // namespace

std::string_view to_string(CaptchaStyle s) {
    switch (s) {
        case CaptchaStyle::clean: return "clean";
        case CaptchaStyle::jam: return "jam";
        case CaptchaStyle::railway: return "railway";
    }
    return "clean";
}

CaptchaStyle parse_style(std::string_view s) {
    if (s == "clean") return CaptchaStyle::clean;
    if (s == "jam") return CaptchaStyle::jam;
    if (s == "railway") return CaptchaStyle::railway;
    throw ParamError("unknown style '" + std::string(s) + "' (expected clean, jam or railway)");
}

void GenStyle::validate() const {
    if (length < 1) throw ParamError("length must be >= 1");
    if (width < 1 || height < 1) throw ParamError("canvas dimensions must be >= 1");
    if (scale < 1 || scale > 8) throw ParamError("scale must be in 1..8");
    if (jitter.max_rotation < 0 || jitter.max_rotation > 45) throw ParamError("max_rotation must be in 0..45");
    if (!(jitter.max_shear >= 0 && jitter.max_shear <= 1)) throw ParamError("max_shear must be in [0, 1]");
    if (jitter.spacing < 0 || jitter.spacing_jitter < 0 || jitter.max_dy < 0)
        throw ParamError("spacing, spacing_jitter and max_dy must be >= 0");
    if (noise.dot_count < 0 || noise.circle_count < 0) throw ParamError("noise counts must be >= 0");
    if (charset.empty()) throw ParamError("charset must not be empty");
    for (std::size_t i = 0; i < charset.size(); ++i) {
        if (!font::has_glyph(charset[i]))
            throw ParamError(std::string("charset character '") + charset[i] + "' has no glyph");
        if (charset.find(charset[i]) != i)
            throw ParamError(std::string("charset repeats '") + charset[i] + "'");
    }
}

GenStyle GenStyle::preset(CaptchaStyle style, int length) {
    GenStyle s;
    s.style = style;
    s.length = length;
    switch (style) {
        case CaptchaStyle::clean:
            s.jitter = {10, 0.2, 3, 2, 3};
            s.width = 8 + length * 28 + (length - 1) * 5;
            s.height = 40;
            break;
        case CaptchaStyle::jam:
            s.charset = "0123456789";
            s.bold = true;
            s.noise.strike = true;
            s.jitter = {5, 0.1, 6, 2, 2};
            s.width = 8 + length * 24 + (length - 1) * 8;
            s.height = 36;
            break;
        case CaptchaStyle::railway:
            s.bold = true;
            s.layout = Layout::slots;
            s.noise = {120, false, 2};
            s.jitter = {6, 0.1, 0, 1, 2};
            s.width = 96;
            s.height = 32;
            break;
    }
    return s;
}

nlohmann::json to_json(const GenStyle& s) {
    return {{"style", to_string(s.style)},
            {"length", s.length},
            {"width", s.width},
            {"height", s.height},
            {"dot_count", s.noise.dot_count},
            {"strike", s.noise.strike},
            {"circle_count", s.noise.circle_count},
            {"max_rotation", s.jitter.max_rotation},
            {"max_shear", s.jitter.max_shear},
            {"spacing", s.jitter.spacing},
            {"spacing_jitter", s.jitter.spacing_jitter},
            {"max_dy", s.jitter.max_dy},
            {"scale", s.scale},
            {"bold", s.bold},
            {"layout", s.layout == Layout::slots ? "slots" : "packed"},
            {"charset", s.charset}};
}

GenStyle gen_style_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ParamError("style config must be a JSON object");
    try {
        const auto style = parse_style(j.value("style", std::string("clean")));
        GenStyle s = GenStyle::preset(style, j.value("length", 4));
        for (const auto& [key, v] : j.items()) {
            if (key == "style" || key == "length") continue;
            if (key == "width") s.width = v.get<int>();
            else if (key == "height") s.height = v.get<int>();
            else if (key == "dot_count") s.noise.dot_count = v.get<int>();
            else if (key == "strike") s.noise.strike = v.get<bool>();
            else if (key == "circle_count") s.noise.circle_count = v.get<int>();
            else if (key == "max_rotation") s.jitter.max_rotation = v.get<int>();
            else if (key == "max_shear") s.jitter.max_shear = v.get<double>();
            else if (key == "spacing") s.jitter.spacing = v.get<int>();
            else if (key == "spacing_jitter") s.jitter.spacing_jitter = v.get<int>();
            else if (key == "max_dy") s.jitter.max_dy = v.get<int>();
            else if (key == "scale") s.scale = v.get<int>();
            else if (key == "bold") s.bold = v.get<bool>();
            else if (key == "layout") {
                const auto l = v.get<std::string>();
                if (l != "slots" && l != "packed") throw ParamError("layout must be packed or slots");
                s.layout = l == "slots" ? Layout::slots : Layout::packed;
            } else if (key == "charset") s.charset = v.get<std::string>();
            else throw ParamError("unknown style key '" + key + "'");
        }
        s.validate();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ParamError(std::string("bad style config: ") + e.what());
    }
}

std::vector<std::string> balanced_labels(const std::string& charset, int length, int count, Rng& rng) {
    if (charset.empty()) throw ParamError("charset must not be empty");
    if (length < 1) throw ParamError("length must be >= 1");
    if (count < 0) throw ParamError("count must be >= 0");
    for (std::size_t i = 0; i < charset.size(); ++i)
        if (charset.find(charset[i]) != i) throw ParamError(std::string("charset repeats '") + charset[i] + "'");

    const std::size_t total = static_cast<std::size_t>(count) * length;
    const std::size_t n = charset.size();
    std::string pool;
    pool.reserve(total);
    for (char c : charset) pool.append(total / n, c);
    // The remainder goes to distinct characters picked at random.
    std::string extra = charset;
    rng.shuffle(std::span<char>(extra));
    pool.append(extra, 0, total % n);
    rng.shuffle(std::span<char>(pool));

    std::vector<std::string> labels;
    labels.reserve(count);
    for (int i = 0; i < count; ++i) labels.push_back(pool.substr(static_cast<std::size_t>(i) * length, length));
    return labels;
}

BinaryImage shear_x(const BinaryImage& img, std::int64_t f) {
    std::vector<int> off(img.height);
    for (int y = 0; y < img.height; ++y) off[y] = static_cast<int>(round_div(f * (2 * y - (img.height - 1)), 2 * kQ16));
    const auto [lo, hi] = std::minmax_element(off.begin(), off.end());
    const int min_off = *lo;
    BinaryImage out(img.width + *hi - *lo, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (img.at(x, y)) out.set(x + off[y] - min_off, y, true);
    return out;
}

BinaryImage shear_y(const BinaryImage& img, std::int64_t f) {
    std::vector<int> off(img.width);
    for (int x = 0; x < img.width; ++x) off[x] = static_cast<int>(round_div(f * (2 * x - (img.width - 1)), 2 * kQ16));
    const auto [lo, hi] = std::minmax_element(off.begin(), off.end());
    const int min_off = *lo;
    BinaryImage out(img.width, img.height + *hi - *lo);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (img.at(x, y)) out.set(x, y + off[x] - min_off, true);
    return out;
}

BinaryImage rotate(const BinaryImage& img, int degrees) {
    if (degrees < -45 || degrees > 45) throw ParamError("rotation must be within +-45 degrees");
    if (degrees == 0) return img;
    const std::int64_t sign = degrees < 0 ? -1 : 1;
    const std::int64_t a = -sign * kTanHalfQ16[std::abs(degrees)];
    const std::int64_t b = sign * kSinQ16[std::abs(degrees)];
    return shear_x(shear_y(shear_x(img, a), b), a);
}

BinaryImage crop_to_ink(const BinaryImage& img) {
    int x0 = img.width, x1 = -1, y0 = img.height, y1 = -1;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (img.at(x, y)) {
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
    if (x1 < 0) return BinaryImage(1, 1);
    BinaryImage out(x1 - x0 + 1, y1 - y0 + 1);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) out.set(x - x0, y - y0, img.at(x, y));
    return out;
}

BinaryImage transform_glyph(char c, int scale, bool bold, int rotation_deg, int shear_percent) {
    BinaryImage g = upscale(font::glyph(c), scale);
    if (bold) g = widen(g);
    if (shear_percent != 0) g = shear_x(g, round_div(static_cast<std::int64_t>(shear_percent) * kQ16, 100));
    g = rotate(g, rotation_deg);
    return crop_to_ink(g);
}

CaptchaImage render_captcha(const std::string& label, const GenStyle& style, Rng& rng) {
    style.validate();
    if (static_cast<int>(label.size()) != style.length)
        throw ParamError("label '" + label + "' has length " + std::to_string(label.size()) + ", style expects " +
                         std::to_string(style.length));
    for (char c : label)
        if (style.charset.find(c) == std::string::npos)
            throw ParamError(std::string("label character '") + c + "' is not in the style charset");

    const int max_shear = static_cast<int>(std::lround(style.jitter.max_shear * 100));
    std::vector<Placed> glyphs;
    for (char c : label) {
        const int rot = static_cast<int>(rng.range(-style.jitter.max_rotation, style.jitter.max_rotation));
        const int shear = static_cast<int>(rng.range(-max_shear, max_shear));
        glyphs.push_back({transform_glyph(c, style.scale, style.bold, rot, shear), 0, 0});
    }

    const int n = style.length;
    if (style.layout == Layout::packed) {
        std::vector<int> gaps(n - 1);
        int total = 0;
        for (int i = 0; i < n; ++i) total += glyphs[i].mask.width;
        for (auto& g : gaps) {
            g = style.jitter.spacing + static_cast<int>(rng.range(0, style.jitter.spacing_jitter));
            total += g;
        }
        if (total > style.width)
            throw ParamError("canvas width " + std::to_string(style.width) + " cannot hold glyphs needing " +
                             std::to_string(total) + " px");
        int x = (style.width - total) / 2;
        for (int i = 0; i < n; ++i) {
            glyphs[i].x = x;
            x += glyphs[i].mask.width + (i + 1 < n ? gaps[i] : 0);
        }
    } else {
        for (int i = 0; i < n; ++i) {
            const int center = ((2 * i + 1) * style.width) / (2 * n);
            const int dx = static_cast<int>(rng.range(-style.jitter.spacing_jitter, style.jitter.spacing_jitter));
            glyphs[i].x = center - glyphs[i].mask.width / 2 + dx;
        }
    }
    for (auto& g : glyphs) {
        if (g.mask.height > style.height)
            throw ParamError("canvas height " + std::to_string(style.height) + " cannot hold a " +
                             std::to_string(g.mask.height) + " px glyph");
        const int dy = static_cast<int>(rng.range(-style.jitter.max_dy, style.jitter.max_dy));
        g.y = std::clamp((style.height - g.mask.height) / 2 + dy, 0, style.height - g.mask.height);
    }

    auto paint = [&](auto&& put) {
        for (const auto& g : glyphs)
            for (int y = 0; y < g.mask.height; ++y)
                for (int x = 0; x < g.mask.width; ++x) {
                    const int cx = g.x + x, cy = g.y + y;
                    if (g.mask.at(x, y) && cx >= 0 && cx < style.width) put(&g - glyphs.data(), cx, cy);
                }
    };

    if (style.style == CaptchaStyle::railway) {
        RgbImage img(style.width, style.height);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                auto* p = img.px(x, y);
                p[0] = p[1] = p[2] = static_cast<std::uint8_t>(195 + rng.below(41));
            }
        std::vector<std::uint8_t> tone(n);
        for (auto& t : tone) t = static_cast<std::uint8_t>(30 + rng.below(61));
        paint([&](std::size_t i, int x, int y) {
            auto* p = img.px(x, y);
            p[0] = p[1] = p[2] = tone[i];
        });
        for (int i = 0; i < style.noise.circle_count; ++i) {
            const int cx = static_cast<int>(rng.below(style.width));
            const int cy = static_cast<int>(rng.below(style.height));
            const int r = static_cast<int>(rng.range(3, 10));
            std::array<std::uint8_t, 3> color{};
            for (auto& ch : color) ch = static_cast<std::uint8_t>(rng.below(128));
            draw_circle(img, cx, cy, r, color);
        }
        for (int i = 0; i < style.noise.dot_count; ++i) {
            auto* p = img.px(static_cast<int>(rng.below(style.width)), static_cast<int>(rng.below(style.height)));
            for (int ch = 0; ch < 3; ++ch) p[ch] = static_cast<std::uint8_t>(rng.below(256));
        }
        return img;
    }

    GrayImage img(style.width, style.height);
    const bool dark_ground = style.style == CaptchaStyle::jam;
    for (auto& v : img.data)
        v = static_cast<std::uint8_t>(dark_ground ? rng.below(31) : 235 + rng.below(21));
    std::vector<std::uint8_t> tone(n);
    for (auto& t : tone) t = static_cast<std::uint8_t>(dark_ground ? 255 : 20 + rng.below(41));
    paint([&](std::size_t i, int x, int y) { img.at(x, y) = tone[i]; });
    if (style.noise.strike) {
        const int row = std::clamp(style.height / 2 + static_cast<int>(rng.range(-3, 3)), 0, style.height - 1);
        for (int x = 0; x < style.width; ++x) img.at(x, row) = 255;
    }
    for (int i = 0; i < style.noise.dot_count; ++i) {
        const int x = static_cast<int>(rng.below(style.width));
        const int y = static_cast<int>(rng.below(style.height));
        img.at(x, y) = static_cast<std::uint8_t>(rng.below(256));
    }
    return img;
}

void SplitFractions::validate() const {
    for (double f : {train, val, test, unlabeled})
        if (!(f >= 0 && f <= 1)) throw ParamError("split fractions must be in [0, 1]");
    if (std::abs(train + val + test + unlabeled - 1.0) > 1e-9) throw ParamError("split fractions must sum to 1");
}

std::vector<int> SplitFractions::sizes(int count) const {
    validate();
    const std::array<double, 4> f{train, val, test, unlabeled};
    std::vector<int> out(4);
    std::array<double, 4> rem{};
    int assigned = 0;
    for (int i = 0; i < 4; ++i) {
        const double raw = f[i] * count;
        out[i] = static_cast<int>(std::floor(raw));
        rem[i] = raw - out[i];
        assigned += out[i];
    }
    std::array<int, 4> order{0, 1, 2, 3};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
    for (int k = 0; assigned < count; ++k, ++assigned) ++out[order[k % 4]];
    return out;
}

std::vector<GeneratedSample> generate_samples(const GenStyle& style, int count, const SplitFractions& fractions,
                                              std::uint64_t seed) {
    style.validate();
    if (count < 0) throw ParamError("count must be >= 0");
    const auto sizes = fractions.sizes(count);
    Rng rng(seed);
    const auto labels = balanced_labels(style.charset, style.length, count, rng);
    std::vector<Split> splits;
    const Split order[] = {Split::train, Split::val, Split::test, Split::unlabeled};
    for (int i = 0; i < 4; ++i) splits.insert(splits.end(), sizes[i], order[i]);
    rng.shuffle(std::span<Split>(splits));

    std::vector<GeneratedSample> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        Rng sample_rng = Rng::derive(seed, static_cast<std::uint64_t>(i));
        out.push_back({labels[i], splits[i], render_captcha(labels[i], style, sample_rng)});
    }
    return out;
}

DatasetManifest generate_dataset(const GenStyle& style, int count, const SplitFractions& fractions,
                                 std::uint64_t seed, const std::filesystem::path& out_dir) {
    const auto samples = generate_samples(style, count, fractions, seed);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());

    DatasetManifest manifest;
    for (int i = 0; i < count; ++i) {
        const auto& s = samples[i];
        const bool rgb = std::holds_alternative<RgbImage>(s.image);
        std::ostringstream name;
        name << s.label << '_' << std::setw(6) << std::setfill('0') << i << (rgb ? ".ppm" : ".pgm");
        if (rgb)
            write_ppm(std::get<RgbImage>(s.image), out_dir / name.str());
        else
            write_pgm(std::get<GrayImage>(s.image), out_dir / name.str());
        manifest.records.push_back({name.str(), s.split == Split::unlabeled ? "" : s.label, s.split});
    }
    save_manifest(out_dir / "manifest.jsonl", manifest);

    nlohmann::ordered_json info;
    info["style"] = to_json(style);
    info["count"] = count;
    info["seed"] = seed;
    info["fractions"] = {{"train", fractions.train},
                         {"val", fractions.val},
                         {"test", fractions.test},
                         {"unlabeled", fractions.unlabeled}};
    write_file_atomic(out_dir / "dataset.json", info.dump(2) + "\n");
    return manifest;
}

GrayImage load_gray(const std::filesystem::path& path) {
    if (path.extension() == ".ppm") return to_gray(read_ppm(path));
    return read_pgm(path);
}

}  // namespace ctk
