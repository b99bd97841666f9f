#include "ctk/imageio.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <json.hpp>

namespace ctk {

namespace {

struct NetpbmHeader {
    int width = 0;
    int height = 0;
    std::size_t data_offset = 0;
};

class HeaderReader {
public:
    explicit HeaderReader(std::string_view bytes) : bytes_(bytes) {}

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            char c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    int read_uint(const char* what) {
        skip_space_and_comments();
        std::size_t start = pos_;
        long long v = 0;
        while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
            v = v * 10 + (bytes_[pos_] - '0');
            if (v > 1'000'000) throw ParseError(std::string("netpbm ") + what + " too large", start);
            ++pos_;
        }
        if (pos_ == start) throw ParseError(std::string("netpbm header: expected ") + what, start);
        return static_cast<int>(v);
    }

    std::size_t pos() const { return pos_; }
    void advance(std::size_t n) { pos_ += n; }
    std::size_t size() const { return bytes_.size(); }
    char peek() const { return bytes_[pos_]; }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

NetpbmHeader parse_header(std::string_view bytes, char want) {
    if (bytes.size() < 2 || bytes[0] != 'P') throw ParseError("netpbm: bad magic", 0);
    if (bytes[1] < '1' || bytes[1] > '7') throw ParseError("netpbm: bad magic", 1);
    if (bytes[1] != want)
        throw UnsupportedError(std::string("netpbm: unsupported format P") + bytes[1] + ", expected P" + want);

    HeaderReader r(bytes);
    r.advance(2);
    if (r.pos() >= r.size() || !std::isspace(static_cast<unsigned char>(r.peek())))
        throw ParseError("netpbm: expected whitespace after magic", r.pos());
    NetpbmHeader h;
    h.width = r.read_uint("width");
    h.height = r.read_uint("height");
    std::size_t maxval_at = r.pos();
    int maxval = r.read_uint("maxval");
    if (h.width < 1 || h.height < 1) throw ParseError("netpbm: zero image dimension", maxval_at);
    if (maxval != 255) throw UnsupportedError("netpbm: maxval " + std::to_string(maxval) + " unsupported, need 255");
    if (r.pos() >= r.size() || !std::isspace(static_cast<unsigned char>(r.peek())))
        throw ParseError("netpbm: expected single whitespace after maxval", r.pos());
    r.advance(1);
    h.data_offset = r.pos();
    return h;
}

std::vector<std::uint8_t> payload(std::string_view bytes, const NetpbmHeader& h, std::size_t channels) {
    std::size_t expected = static_cast<std::size_t>(h.width) * h.height * channels;
    std::size_t actual = bytes.size() - h.data_offset;
    if (actual < expected) throw TruncatedError("netpbm: truncated pixel data", expected, actual);
    auto first = reinterpret_cast<const std::uint8_t*>(bytes.data()) + h.data_offset;
    return {first, first + expected};
}

std::string header_for(char magic, int w, int h) {
    return std::string("P") + magic + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

GrayImage decode_pgm(std::string_view bytes) {
    auto h = parse_header(bytes, '5');
    return GrayImage(h.width, h.height, payload(bytes, h, 1));
}

RgbImage decode_ppm(std::string_view bytes) {
    auto h = parse_header(bytes, '6');
    return RgbImage(h.width, h.height, payload(bytes, h, 3));
}

std::string encode_pgm(const GrayImage& img) {
    std::string out = header_for('5', img.width, img.height);
    out.append(reinterpret_cast<const char*>(img.data.data()), img.data.size());
    return out;
}

std::string encode_ppm(const RgbImage& img) {
    std::string out = header_for('6', img.width, img.height);
    out.append(reinterpret_cast<const char*>(img.data.data()), img.data.size());
    return out;
}

GrayImage read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }
RgbImage read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }

void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    auto bytes = encode_pgm(img);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void write_ppm(const RgbImage& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    auto bytes = encode_ppm(img);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
        case Split::unlabeled: return "unlabeled";
    }
    return "unlabeled";
}

Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    if (s == "unlabeled") return Split::unlabeled;
    throw ParamError("unknown split '" + std::string(s) + "'");
}

std::vector<ManifestRecord> DatasetManifest::with_split(Split s) const {
    std::vector<ManifestRecord> out;
    std::copy_if(records.begin(), records.end(), std::back_inserter(out),
                 [s](const ManifestRecord& r) { return r.split == s; });
    return out;
}

std::string serialize_record(const ManifestRecord& record) {
    nlohmann::ordered_json j;
    j["file"] = record.file;
    j["label"] = record.label;
    j["split"] = std::string(to_string(record.split));
    return j.dump();
}

namespace {

ManifestRecord parse_record(const std::string& line, std::size_t lineno) {
    auto fail = [&](const std::string& why) {
        return Error("manifest line " + std::to_string(lineno) + ": " + why);
    };
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw fail(std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("file") || !j["file"].is_string())
        throw fail("missing string field 'file'");
    ManifestRecord r;
    r.file = j["file"].get<std::string>();
    if (j.contains("label")) {
        if (!j["label"].is_string()) throw fail("field 'label' must be a string");
        r.label = j["label"].get<std::string>();
    }
    if (j.contains("split")) {
        if (!j["split"].is_string()) throw fail("field 'split' must be a string");
        try {
            r.split = parse_split(j["split"].get<std::string>());
        } catch (const ParamError& e) {
            throw fail(e.what());
        }
    }
    return r;
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    DatasetManifest m;
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto rec = parse_record(line, lineno);
        if (!seen.insert(rec.file).second)
            throw DuplicateError("manifest line " + std::to_string(lineno) + ": duplicate file " + rec.file);
        m.records.push_back(std::move(rec));
    }
    return m;
}

void append_manifest(const std::filesystem::path& path, const ManifestRecord& record) {
    if (std::filesystem::exists(path)) {
        auto existing = load_manifest(path);
        for (const auto& r : existing.records)
            if (r.file == record.file) throw DuplicateError("manifest already contains " + record.file);
    }
    std::string line = serialize_record(record) + "\n";
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot append to " + path.string());
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.flush();
    if (!out) throw IoError("short append to " + path.string());
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
    std::string body;
    for (const auto& r : manifest.records) body += serialize_record(r) + "\n";
    write_file_atomic(path, body);
}

void validate_manifest(const DatasetManifest& manifest, std::string_view charset) {
    std::set<std::string> seen;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        const auto& r = manifest.records[i];
        if (!seen.insert(r.file).second) throw DuplicateError("duplicate file " + r.file);
        if (r.split == Split::unlabeled) continue;
        if (r.label.empty()) throw ParamError("record " + std::to_string(i) + " has an empty label");
        for (char c : r.label)
            if (charset.find(c) == std::string_view::npos)
                throw ParamError("record " + std::to_string(i) + " label '" + r.label + "' has character '" +
                                 std::string(1, c) + "' outside the charset");
    }
}

}  // namespace ctk
