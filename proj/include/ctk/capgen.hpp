#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ctk/image.hpp"
#include "ctk/imageio.hpp"
#include "ctk/rng.hpp"

namespace ctk {

enum class CaptchaStyle { clean, jam, railway };

std::string_view to_string(CaptchaStyle s);
CaptchaStyle parse_style(std::string_view s);

/// packed: glyphs left to right with a guaranteed background gap.
/// slots: canvas split into `length` equal columns, one glyph centred in each
/// (neighbours may touch or overlap).
enum class Layout { packed, slots };

struct NoiseSpec {
    int dot_count = 0;
    bool strike = false;
    int circle_count = 0;
};

struct JitterSpec {
    int max_rotation = 0;     // degrees, 0..45
    double max_shear = 0;     // horizontal shear factor, resolution 0.01
    int spacing = 2;          // packed: minimum background columns between glyphs
    int spacing_jitter = 0;   // packed: extra gap 0..n; slots: horizontal offset -n..n
    int max_dy = 0;           // vertical offset -n..n
};

struct GenStyle {
    CaptchaStyle style = CaptchaStyle::clean;
    int length = 4;
    int width = 138;
    int height = 40;
    NoiseSpec noise;
    JitterSpec jitter;
    int scale = 2;       // integer upscale of the 8x12 font cell
    bool bold = false;   // widen strokes one pixel left and right
    Layout layout = Layout::packed;
    std::string charset = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

    void validate() const;

    /// Defaults per style for a given length. clean and jam are sized so the
    /// widest jittered glyphs fit with their gaps; railway is 32x96.
    static GenStyle preset(CaptchaStyle style, int length);
};

nlohmann::json to_json(const GenStyle& s);
/// Missing keys keep the preset values for the given style and length.
GenStyle gen_style_from_json(const nlohmann::json& j);

/// Labels whose pooled characters are balanced: every character of `charset`
/// appears floor(count*length/|charset|) or one more times.
std::vector<std::string> balanced_labels(const std::string& charset, int length, int count, Rng& rng);

using CaptchaImage = std::variant<GrayImage, RgbImage>;

/// Glyph mask after scale, bold, shear and rotation, cropped to its ink.
BinaryImage transform_glyph(char c, int scale, bool bold, int rotation_deg, int shear_percent);

/// Integer shear passes; `factor_q16` is the shear factor in 1/65536 units.
BinaryImage shear_x(const BinaryImage& img, std::int64_t factor_q16);
BinaryImage shear_y(const BinaryImage& img, std::int64_t factor_q16);
BinaryImage rotate(const BinaryImage& img, int degrees);
BinaryImage crop_to_ink(const BinaryImage& img);

/// Gray for clean and jam, RGB for railway.
CaptchaImage render_captcha(const std::string& label, const GenStyle& style, Rng& rng);

struct SplitFractions {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
    double unlabeled = 0;

    void validate() const;
    /// Largest-remainder sizes in train, val, test, unlabeled order.
    std::vector<int> sizes(int count) const;
};

struct GeneratedSample {
    std::string label;  // ground truth, also for unlabeled records
    Split split = Split::train;
    CaptchaImage image;
};

/// Labels from balanced_labels and a shuffled split assignment, both drawn
/// from Rng(seed); sample i renders with Rng::derive(seed, i).
std::vector<GeneratedSample> generate_samples(const GenStyle& style, int count, const SplitFractions& fractions,
                                              std::uint64_t seed);

/// Writes `<label>_<index>.pgm|ppm`, manifest.jsonl and dataset.json under
/// out_dir; the images are those of generate_samples.
DatasetManifest generate_dataset(const GenStyle& style, int count, const SplitFractions& fractions,
                                 std::uint64_t seed, const std::filesystem::path& out_dir);

/// Reads an image referenced from a manifest as gray (RGB is converted).
GrayImage load_gray(const std::filesystem::path& path);

}  // namespace ctk
