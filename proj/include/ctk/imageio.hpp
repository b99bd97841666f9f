#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ctk/image.hpp"

namespace ctk {

// Binary netpbm I/O. Only P5 (gray) and P6 (rgb) with maxval 255.
GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const GrayImage& img, const std::filesystem::path& path);
RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const RgbImage& img, const std::filesystem::path& path);

// In-memory variants; the file functions are thin wrappers around these.
GrayImage decode_pgm(std::string_view bytes);
RgbImage decode_ppm(std::string_view bytes);
std::string encode_pgm(const GrayImage& img);
std::string encode_ppm(const RgbImage& img);

enum class Split { train, val, test, unlabeled };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct ManifestRecord {
    std::string file;  // relative to the manifest's directory
    std::string label;
    Split split = Split::unlabeled;

    friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct DatasetManifest {
    std::vector<ManifestRecord> records;

    std::vector<ManifestRecord> with_split(Split s) const;
};

/// Reads a JSONL manifest. A missing file is an IoError; an empty file is a
/// manifest with zero records. Malformed lines raise Error naming the line;
/// a repeated file is a DuplicateError.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Appends one record as a single write. Raises DuplicateError if the file
/// path is already present. Callers serialize concurrent appends.
void append_manifest(const std::filesystem::path& path, const ManifestRecord& record);

/// Rewrites the whole manifest via write-temp-then-rename.
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

std::string serialize_record(const ManifestRecord& record);

/// Checks unique paths and that labelled records only use `charset`.
void validate_manifest(const DatasetManifest& manifest, std::string_view charset);

/// Reads a whole file as bytes.
std::string read_file(const std::filesystem::path& path);
/// Writes bytes via a temporary sibling file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace ctk
