#include "ctk/labelsvc.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>

#include <httplib.h>

namespace ctk {

namespace {

void put_u16(std::string& s, std::uint32_t v) {
    s.push_back(static_cast<char>(v & 0xFF));
    s.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& s, std::uint32_t v) {
    put_u16(s, v & 0xFFFF);
    put_u16(s, v >> 16);
}

// File header, BITMAPINFOHEADER and optional palette; rows follow bottom-up.
std::string bmp_header(int w, int h, int bits, int palette_entries, std::uint32_t row_bytes) {
    const std::uint32_t offset = 14 + 40 + 4 * palette_entries;
    const std::uint32_t image_bytes = row_bytes * static_cast<std::uint32_t>(h);
    std::string s;
    s.reserve(offset + image_bytes);
    s += "BM";
    put_u32(s, offset + image_bytes);
    put_u32(s, 0);
    put_u32(s, offset);
    put_u32(s, 40);
    put_u32(s, static_cast<std::uint32_t>(w));
    put_u32(s, static_cast<std::uint32_t>(h));
    put_u16(s, 1);
    put_u16(s, static_cast<std::uint32_t>(bits));
    put_u32(s, 0);  // BI_RGB
    put_u32(s, image_bytes);
    put_u32(s, 2835);  // 72 dpi
    put_u32(s, 2835);
    put_u32(s, static_cast<std::uint32_t>(palette_entries));
    put_u32(s, 0);
    for (int i = 0; i < palette_entries; ++i) {
        const char v = static_cast<char>(i);
        s += {v, v, v, 0};
    }
    return s;
}

std::uint32_t padded(std::uint32_t bytes) { return (bytes + 3) & ~3u; }

std::string id_of(std::size_t index) { return "img_" + std::to_string(index); }

std::string image_bytes(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".ppm") return encode_bmp(read_ppm(path));
    return encode_bmp(read_pgm(path));
}

}  // namespace

std::string encode_bmp(const GrayImage& img) {
    const std::uint32_t row = padded(static_cast<std::uint32_t>(img.width));
    std::string s = bmp_header(img.width, img.height, 8, 256, row);
    for (int y = img.height - 1; y >= 0; --y) {
        const auto* p = img.data.data() + static_cast<std::size_t>(y) * img.width;
        s.append(reinterpret_cast<const char*>(p), img.width);
        s.append(row - img.width, '\0');
    }
    return s;
}

std::string encode_bmp(const RgbImage& img) {
    const std::uint32_t row = padded(static_cast<std::uint32_t>(img.width) * 3);
    std::string s = bmp_header(img.width, img.height, 24, 0, row);
    for (int y = img.height - 1; y >= 0; --y) {
        for (int x = 0; x < img.width; ++x) {
            const auto* p = img.px(x, y);
            s += {static_cast<char>(p[2]), static_cast<char>(p[1]), static_cast<char>(p[0])};
        }
        s.append(row - 3 * static_cast<std::uint32_t>(img.width), '\0');
    }
    return s;
}

std::string base64_encode(std::string_view bytes) {
    static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        const std::uint32_t v = (std::uint32_t(std::uint8_t(bytes[i])) << 16) |
                                (std::uint32_t(std::uint8_t(bytes[i + 1])) << 8) | std::uint8_t(bytes[i + 2]);
        out += {kAlphabet[v >> 18], kAlphabet[(v >> 12) & 63], kAlphabet[(v >> 6) & 63], kAlphabet[v & 63]};
    }
    if (const auto rest = bytes.size() - i; rest > 0) {
        std::uint32_t v = std::uint32_t(std::uint8_t(bytes[i])) << 16;
        if (rest == 2) v |= std::uint32_t(std::uint8_t(bytes[i + 1])) << 8;
        out += kAlphabet[v >> 18];
        out += kAlphabet[(v >> 12) & 63];
        out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

LabelService::LabelService(std::filesystem::path dir, std::string charset, int length)
    : dir_(std::move(dir)), manifest_path_(dir_ / "manifest.jsonl"), charset_(std::move(charset)), length_(length) {
    if (charset_.empty()) throw ParamError("charset must not be empty");
    if (length_ < 0) throw ParamError("label length must be >= 0");
    fold_case_ = std::none_of(charset_.begin(), charset_.end(), [](unsigned char c) { return std::islower(c); });
    manifest_ = load_manifest(manifest_path_);
    for (std::size_t i = 0; i < manifest_.records.size(); ++i)
        if (manifest_.records[i].split == Split::unlabeled) queue_.push_back(i);
}

std::optional<std::size_t> LabelService::find(const std::string& id) const {
    if (id.size() <= 4 || id.compare(0, 4, "img_") != 0) return std::nullopt;
    std::size_t index = 0;
    for (std::size_t i = 4; i < id.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(id[i])) || (i == 4 && id[i] == '0' && id.size() > 5))
            return std::nullopt;
        index = index * 10 + static_cast<std::size_t>(id[i] - '0');
        if (index > manifest_.records.size()) return std::nullopt;
    }
    if (index >= manifest_.records.size()) return std::nullopt;
    return index;
}

std::string LabelService::bmp_for(std::size_t index) const {
    return image_bytes(dir_ / manifest_.records[index].file);
}

std::string LabelService::canonical(std::string label) const {
    if (fold_case_)
        for (auto& c : label) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return label;
}

Reply LabelService::next() const {
    std::lock_guard lock(mu_);
    if (queue_.empty()) return {200, {{"done", true}}};
    const auto index = queue_.front();
    const auto id = id_of(index);
    return {200,
            {{"id", id},
             {"image", "data:image/bmp;base64," + base64_encode(bmp_for(index))},
             {"image_url", "/api/image/" + id},
             {"remaining", queue_.size()}}};
}

Reply LabelService::submit(const std::string& id, const std::string& raw) {
    std::lock_guard lock(mu_);
    const auto index = find(id);
    if (!index) return {404, {{"error", "unknown id '" + id + "'"}}};
    const std::string label = canonical(raw);
    if (label.empty()) return {400, {{"error", "label is empty"}}};
    for (char c : label)
        if (charset_.find(c) == std::string::npos)
            return {400, {{"error", std::string("invalid character '") + c + "'"}, {"character", std::string(1, c)}}};
    if (length_ > 0 && static_cast<int>(label.size()) != length_)
        return {400, {{"error", "expected " + std::to_string(length_) + " characters, got " +
                                    std::to_string(label.size())}}};

    const auto& rec = manifest_.records[*index];
    if (rec.split != Split::unlabeled) {
        if (rec.label == label) return {200, {{"ok", true}, {"id", id}, {"label", label}}};
        return {409, {{"error", "'" + id + "' is already labelled '" + rec.label + "'"}}};
    }
    auto updated = manifest_;
    updated.records[*index].label = label;
    updated.records[*index].split = Split::train;
    save_manifest(manifest_path_, updated);
    manifest_ = std::move(updated);
    queue_.erase(std::find(queue_.begin(), queue_.end(), *index));
    return {200, {{"ok", true}, {"id", id}, {"label", label}}};
}

Reply LabelService::skip(const std::string& id) {
    std::lock_guard lock(mu_);
    const auto index = find(id);
    if (!index) return {404, {{"error", "unknown id '" + id + "'"}}};
    auto it = std::find(queue_.begin(), queue_.end(), *index);
    if (it == queue_.end()) return {409, {{"error", "'" + id + "' is already labelled"}}};
    queue_.erase(it);
    queue_.push_back(*index);
    return {200, {{"ok", true}, {"next", id_of(queue_.front())}}};
}

Reply LabelService::progress() const {
    std::lock_guard lock(mu_);
    const auto labeled = std::count_if(manifest_.records.begin(), manifest_.records.end(),
                                       [](const ManifestRecord& r) { return r.split != Split::unlabeled; });
    return {200, {{"labeled", labeled}, {"total", manifest_.records.size()}}};
}

std::optional<std::string> LabelService::image_bmp(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto index = find(id);
    if (!index) return std::nullopt;
    return bmp_for(*index);
}

struct LabelServer::Impl {
    httplib::Server server;
};

namespace {

void send(httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
}

// Parses {"id": ..., ["label": ...]} or answers 400.
std::optional<nlohmann::json> body_of(const httplib::Request& req, httplib::Response& res, bool want_label) {
    auto j = nlohmann::json::parse(req.body, nullptr, false);
    const bool ok = j.is_object() && j.contains("id") && j["id"].is_string() &&
                    (!want_label || (j.contains("label") && j["label"].is_string()));
    if (!ok) {
        send(res, {400, {{"error", want_label ? "expected JSON {\"id\": string, \"label\": string}"
                                              : "expected JSON {\"id\": string}"}}});
        return std::nullopt;
    }
    return j;
}

}  // namespace

LabelServer::LabelServer(LabelService& service, int port, const std::string& host,
                         const std::filesystem::path& ui_dir)
    : impl_(std::make_unique<Impl>()) {
    auto& s = impl_->server;
    // Plain SO_REUSEADDR only, so a port held by another process is an error.
    s.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    s.Get("/api/next", [&service](const httplib::Request&, httplib::Response& res) { send(res, service.next()); });
    s.Get("/api/progress",
          [&service](const httplib::Request&, httplib::Response& res) { send(res, service.progress()); });
    s.Post("/api/label", [&service](const httplib::Request& req, httplib::Response& res) {
        if (auto j = body_of(req, res, true)) send(res, service.submit((*j)["id"], (*j)["label"]));
    });
    s.Post("/api/skip", [&service](const httplib::Request& req, httplib::Response& res) {
        if (auto j = body_of(req, res, false)) send(res, service.skip((*j)["id"]));
    });
    s.Get(R"(/api/image/([A-Za-z0-9_]+))", [&service](const httplib::Request& req, httplib::Response& res) {
        if (auto bmp = service.image_bmp(req.matches[1])) {
            res.set_content(*bmp, "image/bmp");
        } else {
            send(res, {404, {{"error", "unknown id"}}});
        }
    });
    if (!ui_dir.empty()) {
        if (!s.set_mount_point("/", ui_dir.string())) throw IoError("UI directory not found: " + ui_dir.string());
    } else {
        s.Get("/", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(std::string(builtin_ui_html()), "text/html; charset=utf-8");
        });
    }
    s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        send(res, {500, {{"error", what}}});
    });

    if (port == 0) {
        port_ = s.bind_to_any_port(host);
        if (port_ < 0) throw IoError("cannot bind " + host);
    } else {
        if (!s.bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port) + " (port busy?)");
        port_ = port;
    }
}

LabelServer::~LabelServer() { stop(); }

void LabelServer::start() {
    thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void LabelServer::run() { impl_->server.listen_after_bind(); }

void LabelServer::stop() {
    impl_->server.stop();
    if (thread_.joinable()) thread_.join();
}

std::string_view builtin_ui_html() {
    return R"HTML(<!doctype html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>CAPTCHA labeller</title>
<style>
  body { font-family: sans-serif; max-width: 40em; margin: 3em auto; }
  #img { image-rendering: pixelated; width: 384px; border: 1px solid #999; }
  #entry { font-size: 1.5em; width: 10em; text-transform: uppercase; }
  #error { color: #b00; min-height: 1.2em; }
  .hidden { display: none; }
</style>
</head>
<body>
<h1>CAPTCHA labeller</h1>
<p id="progress"></p>
<div id="labelling" class="hidden">
  <p><img id="img" alt="captcha"></p>
  <p><input id="entry" autocomplete="off" autofocus>
     <button id="submit">Submit</button> <button id="skip">Skip (Esc)</button></p>
  <p id="remaining"></p>
</div>
<div id="done" class="hidden"><p>All records are labelled.</p></div>
<div id="retry" class="hidden"><p>Service unreachable. <button id="again">Retry</button></p></div>
<p id="error"></p>
<script>
let current = null, pending = false;
const $ = (id) => document.getElementById(id);
function show(screen) {
  for (const s of ["labelling", "done", "retry"]) $(s).classList.toggle("hidden", s !== screen);
}
async function api(path, body) {
  const opts = body ? { method: "POST", headers: { "Content-Type": "application/json" }, body: JSON.stringify(body) } : {};
  const r = await fetch(path, opts);
  return { status: r.status, body: await r.json() };
}
async function refreshProgress() {
  const p = await api("/api/progress");
  $("progress").textContent = p.body.labeled + " / " + p.body.total + " labelled";
}
async function loadNext() {
  try {
    const r = await api("/api/next");
    await refreshProgress();
    if (r.body.done) { current = null; show("done"); return; }
    current = r.body.id;
    $("img").src = r.body.image;
    $("remaining").textContent = r.body.remaining + " remaining";
    show("labelling");
    $("entry").focus();
  } catch (e) {
    show("retry");
  }
}
async function submit() {
  const label = $("entry").value.trim();
  if (!current || pending || !label) return;
  pending = true;
  try {
    const r = await api("/api/label", { id: current, label });
    if (r.status === 200) { $("entry").value = ""; $("error").textContent = ""; await loadNext(); }
    else $("error").textContent = r.body.error;
  } catch (e) {
    show("retry");
  } finally {
    pending = false;
  }
}
async function skip() {
  if (!current || pending) return;
  pending = true;
  try { await api("/api/skip", { id: current }); await loadNext(); }
  catch (e) { show("retry"); }
  finally { pending = false; }
}
$("entry").addEventListener("keydown", (e) => {
  if (e.key === "Enter") submit();
  if (e.key === "Escape") skip();
});
$("submit").onclick = submit;
$("skip").onclick = skip;
$("again").onclick = loadNext;
loadNext();
</script>
</body>
</html>
)HTML";
}

}  // namespace ctk
