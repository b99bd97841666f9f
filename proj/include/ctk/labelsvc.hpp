#pragma once

#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "ctk/image.hpp"
#include "ctk/imageio.hpp"

namespace ctk {

/// Uncompressed bottom-up BMP: 8-bit with a gray palette, or 24-bit BGR.
std::string encode_bmp(const GrayImage& img);
std::string encode_bmp(const RgbImage& img);

std::string base64_encode(std::string_view bytes);

/// HTTP status plus JSON body.
struct Reply {
    int status = 200;
    nlohmann::json body;
};

/// Labelling session over the unlabeled records of one dataset directory.
/// Record ids are "img_<index>" with the index into manifest.jsonl.
/// All methods are safe to call from several threads.
class LabelService {
public:
    /// length 0 accepts any non-empty label. Labels are upper-cased first
    /// when the charset has no lower-case letters.
    LabelService(std::filesystem::path dir, std::string charset, int length);

    Reply next() const;
    Reply submit(const std::string& id, const std::string& label);
    Reply skip(const std::string& id);
    Reply progress() const;
    /// BMP bytes of a record image; nullopt for an unknown id.
    std::optional<std::string> image_bmp(const std::string& id) const;

    const std::filesystem::path& manifest_path() const noexcept { return manifest_path_; }

private:
    std::optional<std::size_t> find(const std::string& id) const;
    std::string bmp_for(std::size_t index) const;
    std::string canonical(std::string label) const;

    std::filesystem::path dir_;
    std::filesystem::path manifest_path_;
    std::string charset_;
    int length_;
    bool fold_case_;
    mutable std::mutex mu_;
    DatasetManifest manifest_;
    std::deque<std::size_t> queue_;  // unlabeled record indices in serving order
};

/// The single-page labelling UI served at / when no asset directory is given.
std::string_view builtin_ui_html();

/// HTTP front end. Port 0 picks a free port. A port that cannot be bound
/// raises IoError from the constructor.
class LabelServer {
public:
    LabelServer(LabelService& service, int port, const std::string& host = "127.0.0.1",
                const std::filesystem::path& ui_dir = {});
    ~LabelServer();
    LabelServer(const LabelServer&) = delete;
    LabelServer& operator=(const LabelServer&) = delete;

    int port() const noexcept { return port_; }
    /// Serves on a background thread until stop().
    void start();
    /// Serves on the calling thread until stop() from elsewhere.
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace ctk
