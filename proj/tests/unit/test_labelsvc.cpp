#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <httplib.h>

#include "ctk/capgen.hpp"
#include "ctk/error.hpp"
#include "ctk/labelsvc.hpp"

using namespace ctk;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint32_t u32_at(const std::string& s, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[at + i]);
    return v;
}

// Six clean captchas, half of them waiting for labels.
fs::path fresh_dataset(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("ctk_label_" + std::to_string(::getpid())) / name;
    fs::remove_all(dir);
    generate_dataset(GenStyle::preset(CaptchaStyle::clean, 4), 6, {0.5, 0, 0, 0.5}, 7, dir);
    return dir;
}

}  // namespace

TEST_CASE("bmp encoding") {
    GrayImage g(2, 1);
    g.data = {0, 255};
    const auto b = encode_bmp(g);
    REQUIRE(b.size() == 14 + 40 + 1024 + 4);
    CHECK(b.substr(0, 2) == "BM");
    CHECK(u32_at(b, 2) == b.size());
    CHECK(u32_at(b, 10) == 1078);
    CHECK(u32_at(b, 18) == 2);
    CHECK(u32_at(b, 22) == 1);
    CHECK(static_cast<unsigned char>(b[28]) == 8);
    CHECK(static_cast<unsigned char>(b[54 + 4 * 200]) == 200);  // palette is gray
    CHECK(static_cast<unsigned char>(b[1078]) == 0);
    CHECK(static_cast<unsigned char>(b[1079]) == 255);

    RgbImage c(1, 2);
    c.px(0, 0)[0] = 10;  // top pixel: r
    c.px(0, 0)[1] = 20;
    c.px(0, 0)[2] = 30;
    c.px(0, 1)[0] = 40;
    const auto rb = encode_bmp(c);
    REQUIRE(rb.size() == 54 + 2 * 4);
    CHECK(static_cast<unsigned char>(rb[28]) == 24);
    // Bottom row first, stored as BGR.
    CHECK(static_cast<unsigned char>(rb[54 + 2]) == 40);
    CHECK(static_cast<unsigned char>(rb[58]) == 30);
    CHECK(static_cast<unsigned char>(rb[59]) == 20);
    CHECK(static_cast<unsigned char>(rb[60]) == 10);
}

TEST_CASE("base64") {
    CHECK(base64_encode("") == "");
    CHECK(base64_encode("f") == "Zg==");
    CHECK(base64_encode("fo") == "Zm8=");
    CHECK(base64_encode("foo") == "Zm9v");
    CHECK(base64_encode("foobar") == "Zm9vYmFy");
    CHECK(base64_encode(std::string("\xff\xfe", 2)) == "//4=");
}

TEST_CASE("label service workflow") {
    const auto dir = fresh_dataset("flow");
    LabelService svc(dir, "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789", 4);
    CHECK(svc.progress().body == json{{"labeled", 3}, {"total", 6}});

    auto n = svc.next();
    REQUIRE(n.status == 200);
    const std::string first = n.body["id"];
    CHECK(n.body["remaining"] == 3);
    CHECK(n.body["image"].get<std::string>().rfind("data:image/bmp;base64,Qk", 0) == 0);
    CHECK(n.body["image_url"] == "/api/image/" + first);
    CHECK(svc.image_bmp(first)->substr(0, 2) == "BM");
    CHECK(!svc.image_bmp("img_99"));

    SUBCASE("validation") {
        CHECK(svc.submit("img_99", "ABCD").status == 404);
        CHECK(svc.submit("img_0" + first.substr(4), "ABCD").status == 404);
        CHECK(svc.submit("bogus", "ABCD").status == 404);
        CHECK(svc.submit(first, "").status == 400);
        const auto bad = svc.submit(first, "AB!D");
        CHECK(bad.status == 400);
        CHECK(bad.body["character"] == "!");
        const auto shortl = svc.submit(first, "ABC");
        CHECK(shortl.status == 400);
        CHECK(shortl.body["error"] == "expected 4 characters, got 3");
        CHECK(svc.progress().body["labeled"] == 3);
    }

    SUBCASE("skip rotates the queue") {
        const auto s = svc.skip(first);
        CHECK(s.status == 200);
        CHECK(s.body["next"] != first);
        CHECK(svc.next().body["id"] == s.body["next"]);
        CHECK(svc.skip("img_99").status == 404);
    }

    SUBCASE("labels persist and are idempotent") {
        const auto ok = svc.submit(first, "ab12");
        CHECK(ok.status == 200);
        CHECK(ok.body["label"] == "AB12");
        CHECK(svc.submit(first, "AB12").status == 200);
        CHECK(svc.submit(first, "ZZZZ").status == 409);
        CHECK(svc.skip(first).status == 409);
        CHECK(svc.progress().body["labeled"] == 4);
        CHECK(svc.next().body["id"] != first);

        const auto m = load_manifest(svc.manifest_path());
        const auto index = std::stoul(first.substr(4));
        CHECK(m.records[index].label == "AB12");
        CHECK(m.records[index].split == Split::train);

        // A restarted session picks up where this one stopped.
        LabelService again(dir, "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789", 4);
        CHECK(again.progress().body["labeled"] == 4);
        CHECK(again.next().body["remaining"] == 2);

        std::set<std::string> seen{first};
        for (int i = 0; i < 2; ++i) {
            const std::string id = svc.next().body["id"];
            CHECK(seen.insert(id).second);
            CHECK(svc.submit(id, "0000").status == 200);
        }
        CHECK(svc.next().body == json{{"done", true}});
        CHECK(svc.progress().body == json{{"labeled", 6}, {"total", 6}});
    }
}

TEST_CASE("lower-case charsets keep case and length 0 accepts any length") {
    const auto dir = fresh_dataset("lower");
    LabelService svc(dir, "abc", 0);
    const std::string id = svc.next().body["id"];
    CHECK(svc.submit(id, "A").status == 400);
    CHECK(svc.submit(id, "abcab").status == 200);
    CHECK_THROWS_AS(LabelService(dir, "", 4), ParamError);
    CHECK_THROWS_AS(LabelService(dir / "missing", "A", 4), IoError);
}

TEST_CASE("http api") {
    const auto dir = fresh_dataset("http");
    LabelService svc(dir, "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789", 4);
    LabelServer server(svc, 0);
    REQUIRE(server.port() > 0);
    server.start();

    httplib::Client cli("127.0.0.1", server.port());
    auto root = cli.Get("/");
    REQUIRE(root);
    CHECK(root->status == 200);
    CHECK(root->body.find("<html") != std::string::npos);

    auto next = cli.Get("/api/next");
    REQUIRE(next);
    CHECK(next->status == 200);
    const auto body = json::parse(next->body);
    const std::string id = body["id"];

    auto img = cli.Get("/api/image/" + id);
    REQUIRE(img);
    CHECK(img->status == 200);
    CHECK(img->get_header_value("Content-Type") == "image/bmp");
    CHECK(img->body.substr(0, 2) == "BM");
    CHECK(cli.Get("/api/image/img_99")->status == 404);

    CHECK(cli.Post("/api/label", "not json", "application/json")->status == 400);
    CHECK(cli.Post("/api/label", R"({"id": 3})", "application/json")->status == 400);
    auto bad = cli.Post("/api/label", json{{"id", id}, {"label", "A?CD"}}.dump(), "application/json");
    CHECK(bad->status == 400);
    CHECK(json::parse(bad->body)["error"] == "invalid character '?'");
    auto good = cli.Post("/api/label", json{{"id", id}, {"label", "WXYZ"}}.dump(), "application/json");
    CHECK(good->status == 200);
    CHECK(cli.Post("/api/label", json{{"id", id}, {"label", "AAAA"}}.dump(), "application/json")->status == 409);
    auto skip = cli.Post("/api/skip", json{{"id", json::parse(cli.Get("/api/next")->body)["id"]}}.dump(),
                         "application/json");
    CHECK(skip->status == 200);
    const auto progress = json::parse(cli.Get("/api/progress")->body);
    CHECK(progress == json{{"labeled", 4}, {"total", 6}});

    // The bound port stays exclusive.
    CHECK_THROWS_AS(LabelServer(svc, server.port()), IoError);
    server.stop();
}

TEST_CASE("static ui directory") {
    const auto dir = fresh_dataset("ui");
    const auto ui = dir / "ui";
    fs::create_directories(ui);
    {
        std::ofstream(ui / "index.html") << "<html>custom</html>";
    }
    LabelService svc(dir, "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789", 4);
    LabelServer server(svc, 0, "127.0.0.1", ui);
    server.start();
    httplib::Client cli("127.0.0.1", server.port());
    auto root = cli.Get("/");
    REQUIRE(root);
    CHECK(root->body == "<html>custom</html>");
    CHECK(cli.Get("/api/progress")->status == 200);
}
