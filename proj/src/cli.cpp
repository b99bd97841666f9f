#include "ctk/cli.hpp"

#include <csignal>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>

#include "ctk/capgen.hpp"
#include "ctk/datasets.hpp"
#include "ctk/evalx.hpp"
#include "ctk/improc.hpp"
#include "ctk/knn.hpp"
#include "ctk/labelsvc.hpp"
#include "ctk/segment.hpp"
#include "ctk/tsne.hpp"

namespace ctk {

namespace {

namespace fs = std::filesystem;

struct Globals {
    std::uint64_t seed = 42;
    std::string out;
    std::string data;
    int threads = 1;
};

// Thrown for flag combinations CLI11 cannot express; maps to exit 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string need(const std::string& value, const char* flag) {
    if (value.empty()) throw UsageError(std::string(flag) + " is required");
    return value;
}

fs::path out_dir(const Globals& g) {
    const fs::path p = need(g.out, "--out");
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw IoError("cannot create " + p.string() + ": " + ec.message());
    return p;
}

std::vector<int> parse_int_list(const std::string& s, const char* flag) {
    std::vector<int> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stoi(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError(std::string(flag) + ": not an integer list: " + s);
        }
    }
    if (v.empty()) throw UsageError(std::string(flag) + " must not be empty");
    return v;
}

SplitFractions parse_fractions(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            v.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw UsageError("--split: not a number: " + item);
        }
    }
    if (v.size() != 3 && v.size() != 4) throw UsageError("--split expects train,val,test[,unlabeled]");
    SplitFractions f{v[0], v[1], v[2], v.size() == 4 ? v[3] : 0.0};
    f.validate();
    return f;
}

std::optional<Split> parse_split_flag(const std::string& s) {
    if (s == "all") return std::nullopt;
    return parse_split(s);
}

// Preprocessing matching the generator style recorded in dataset.json.
std::optional<Preprocess> mode_from_dataset(const fs::path& dir) {
    const auto info = dir / "dataset.json";
    if (!fs::exists(info)) return std::nullopt;
    const auto j = nlohmann::json::parse(read_file(info), nullptr, false);
    if (!j.is_object() || !j.contains("style")) return std::nullopt;
    const auto style = parse_style(j["style"].value("style", "clean"));
    switch (style) {
        case CaptchaStyle::clean: return Preprocess::otsu;
        case CaptchaStyle::jam: return Preprocess::jam;
        case CaptchaStyle::railway: return Preprocess::railway;
    }
    return std::nullopt;
}

Preprocess resolve_mode(const std::string& flag, const fs::path& dir) {
    if (!flag.empty()) return parse_preprocess(flag);
    if (auto m = mode_from_dataset(dir)) return *m;
    throw UsageError("--mode is required (no dataset.json next to the manifest)");
}

std::vector<LabeledCell> load_cells(const fs::path& dir, std::optional<Split> split) {
    const auto manifest = load_manifest(dir / "manifest.jsonl");
    std::vector<LabeledCell> cells;
    for (const auto& r : manifest.records) {
        if ((split && r.split != *split) || r.split == Split::unlabeled) continue;
        if (r.label.size() != 1) throw ParamError("cell record '" + r.file + "' needs a one-character label");
        cells.push_back({load_gray(dir / r.file), r.label[0]});
    }
    return cells;
}

std::string cells_charset(const std::vector<LabeledCell>& cells) {
    std::string s;
    for (const auto& c : cells) s += c.label;
    return charset_of({s});
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

void write_text(const fs::path& path, const std::string& text) { write_file_atomic(path, text); }

// ---- subcommands ----

struct GenerateArgs {
    std::string style = "clean";
    int length = 4;
    int count = 100;
    std::string style_file;
    std::string split = "0.8,0.1,0.1,0";
    std::optional<std::string> charset;
    std::optional<int> width, height, dots, circles, max_rotation;
    std::optional<double> max_shear;
};

int run_generate(const Globals& g, const GenerateArgs& a, std::ostream& out) {
    GenStyle style = GenStyle::preset(parse_style(a.style), a.length);
    if (!a.style_file.empty()) {
        auto j = nlohmann::json::parse(read_file(a.style_file), nullptr, false);
        if (j.is_discarded()) throw ParseError("style file is not valid JSON: " + a.style_file, 0);
        style = gen_style_from_json(j);
    }
    if (a.charset) style.charset = *a.charset;
    if (a.width) style.width = *a.width;
    if (a.height) style.height = *a.height;
    if (a.dots) style.noise.dot_count = *a.dots;
    if (a.circles) style.noise.circle_count = *a.circles;
    if (a.max_rotation) style.jitter.max_rotation = *a.max_rotation;
    if (a.max_shear) style.jitter.max_shear = *a.max_shear;
    style.validate();
    const auto dir = out_dir(g);
    const auto manifest = generate_dataset(style, a.count, parse_fractions(a.split), g.seed, dir);
    out << "records=" << manifest.records.size() << " dir=" << dir.string() << "\n";
    return 0;
}

int run_preprocess(const Globals& g, const std::string& mode_flag, std::ostream& out) {
    const fs::path data = need(g.data, "--data");
    const auto mode = resolve_mode(mode_flag, data);
    const auto dir = out_dir(g);
    const auto manifest = load_manifest(data / "manifest.jsonl");
    DatasetManifest result;
    for (const auto& r : manifest.records) {
        const auto mask = preprocess_any(load_captcha(data / r.file), mode);
        auto file = fs::path(r.file).replace_extension(".pgm").string();
        write_pgm(to_gray(mask), dir / file);
        result.records.push_back({file, r.label, r.split});
    }
    save_manifest(dir / "manifest.jsonl", result);
    out << "records=" << result.records.size() << "\n";
    return 0;
}

int run_segment(const Globals& g, const std::string& mode_flag, int cell, std::ostream& out, std::ostream& err) {
    const fs::path data = need(g.data, "--data");
    const auto mode = resolve_mode(mode_flag, data);
    if (cell < 1) throw ParamError("--cell must be >= 1");
    const auto dir = out_dir(g);
    const auto manifest = load_manifest(data / "manifest.jsonl");
    DatasetManifest result;
    int kept = 0, skipped = 0;
    for (const auto& r : manifest.records) {
        if (r.split == Split::unlabeled || r.label.empty()) continue;
        const auto cells = std::visit([&](const auto& img) { return segment_pipeline(img, mode, cell); },
                                      load_captcha(data / r.file));
        if (cells.size() != r.label.size()) {
            err << "skip " << r.file << ": " << cells.size() << " regions for label of length " << r.label.size()
                << "\n";
            ++skipped;
            continue;
        }
        ++kept;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            std::ostringstream name;
            name << r.label[i] << '_' << std::setw(6) << std::setfill('0') << result.records.size() << ".pgm";
            write_pgm(cells[i], dir / name.str());
            result.records.push_back({name.str(), std::string(1, r.label[i]), r.split});
        }
    }
    save_manifest(dir / "manifest.jsonl", result);
    out << "kept=" << kept << " skipped=" << skipped << " cells=" << result.records.size() << "\n";
    return 0;
}

int run_knn_train(const Globals& g, const std::string& split, const std::string& charset_flag, std::ostream& out) {
    const fs::path data = need(g.data, "--data");
    const auto cells = load_cells(data, parse_split_flag(split));
    if (cells.empty()) throw ParamError("no labelled cells in " + data.string());
    const auto model = knn_fit(cells, charset_flag.empty() ? cells_charset(cells) : charset_flag);
    const auto path = out_dir(g) / "knn.bin";
    save_knn(model, path);
    out << "rows=" << model.size() << " dim=" << model.dim() << " model=" << path.string() << "\n";
    return 0;
}

int run_knn_eval(const Globals& g, const std::string& model_path, const std::string& split, const std::string& ks,
                 std::ostream& out) {
    const fs::path data = need(g.data, "--data");
    const auto model = load_knn(need(model_path, "--model"));
    const auto cells = load_cells(data, parse_split_flag(split));
    const auto sweep = knn_sweep(model, cells, parse_int_list(ks, "--k"));
    std::ostringstream csv;
    csv << "k,accuracy\n";
    for (const auto& [k, acc] : sweep) csv << k << ',' << acc << "\n";
    if (!g.out.empty()) write_text(out_dir(g) / "knn_eval.csv", csv.str());
    out << csv.str();
    return 0;
}

struct TrainArgs {
    std::string arch = "auto";
    std::string mode;
    std::string charset;
    std::string optimizer = "adam";
    int epochs = 10;
    int batch = 32;
    double lr = 1e-3;
    double momentum = 0.9;
};

// Training set for the chosen architecture. Cell data (one-character labels)
// feeds the character CNN directly; whole CAPTCHAs feed the multi-head model.
struct Prepared {
    nn::ModelSpec spec;
    nn::Dataset train, val;
};

Prepared prepare(const fs::path& data, const TrainArgs& a) {
    const auto manifest = load_manifest(data / "manifest.jsonl");
    bool single = !manifest.records.empty();
    for (const auto& r : manifest.records)
        if (r.split != Split::unlabeled && r.label.size() != 1) single = false;
    std::string arch = a.arch;
    if (arch == "auto") arch = single ? "char" : "multihead";
    Prepared p;
    if (arch == "char") {
        const auto train = load_cells(data, Split::train);
        const auto val = load_cells(data, Split::val);
        if (train.empty()) throw ParamError("no training cells in " + data.string());
        std::string charset = a.charset;
        if (charset.empty()) {
            auto all = train;
            all.insert(all.end(), val.begin(), val.end());
            charset = cells_charset(all);
        }
        const auto& first = train.front().image;
        if (first.width != first.height) throw ShapeError("character cells must be square");
        p.spec = nn::char_cnn_spec(first.width, charset);
        p.train = cell_dataset(train, charset);
        p.val = cell_dataset(val, charset);
    } else if (arch == "multihead") {
        const auto mode = resolve_mode(a.mode, data);
        auto train = load_split(data, Split::train);
        auto val = load_split(data, Split::val);
        if (train.images.empty()) throw ParamError("no training records in " + data.string());
        std::string charset = a.charset;
        if (charset.empty()) {
            auto all = train.labels;
            all.insert(all.end(), val.labels.begin(), val.labels.end());
            charset = charset_of(all);
        }
        p.train = multihead_dataset(train.images, train.labels, charset, mode);
        p.val = multihead_dataset(val.images, val.labels, charset, mode);
        p.spec = nn::multihead_spec(p.train.images.dim(1), p.train.images.dim(2), p.train.heads, charset);
    } else {
        throw UsageError("--arch must be auto, char or multihead");
    }
    return p;
}

int run_train(const Globals& g, const TrainArgs& a, std::ostream& out, std::ostream& err) {
    const fs::path data = need(g.data, "--data");
    auto p = prepare(data, a);
    nn::TrainConfig cfg;
    if (a.optimizer == "adam") {
        cfg.optimizer = nn::OptimizerKind::adam;
    } else if (a.optimizer == "sgd") {
        cfg.optimizer = nn::OptimizerKind::sgd;
    } else {
        throw UsageError("--optimizer must be adam or sgd");
    }
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch;
    cfg.lr = a.lr;
    cfg.momentum = a.momentum;
    cfg.seed = g.seed;
    cfg.validate();
    const auto dir = out_dir(g);
    nn::Model<float> model(p.spec, g.seed);
    const auto result = nn::train(model, p.train, p.val, cfg, [&](const nn::EpochRecord& e) {
        err << "epoch " << e.epoch << " loss " << e.train_loss << " val_full " << e.full_accuracy << "\n";
    });
    nn::save_weights(model, dir / "model.cfw");
    write_text(dir / "history.csv", nn::history_csv(result, p.spec.heads));
    const double best = result.best_epoch ? result.history[result.best_epoch - 1].full_accuracy : 0.0;
    out << "best_epoch=" << result.best_epoch << " val_full=" << best << " weights=" << (dir / "model.cfw").string()
        << "\n";
    return 0;
}

std::string predict_image(nn::Model<float>& model, const CaptchaImage& image, std::optional<Preprocess> mode) {
    const auto& spec = model.spec();
    const int w = std::visit([](const auto& i) { return i.width; }, image);
    const int h = std::visit([](const auto& i) { return i.height; }, image);
    if (w == spec.width && h == spec.height) {
        GrayImage input = mode ? to_gray(preprocess_any(image, *mode))
                               : std::visit([](const auto& i) -> GrayImage {
                                     if constexpr (std::is_same_v<std::decay_t<decltype(i)>, RgbImage>)
                                         return to_gray(i);
                                     else
                                         return i;
                                 },
                                            image);
        return nn::predict_string(model, images_to_tensor({input}));
    }
    if (spec.heads != 1 || spec.width != spec.height)
        throw ShapeError("image is " + std::to_string(w) + "x" + std::to_string(h) + " but the model expects " +
                         std::to_string(spec.width) + "x" + std::to_string(spec.height));
    if (!mode) throw UsageError("--mode is required to segment whole images for a character model");
    const auto cells =
        std::visit([&](const auto& img) { return segment_pipeline(img, *mode, spec.width); }, image);
    std::string s;
    for (const auto& c : cells) s += nn::predict_string(model, images_to_tensor({c}));
    return s;
}

int run_predict(const Globals& g, const std::string& weights, const std::string& image_flag,
                const std::string& split, const std::string& mode_flag, std::ostream& out) {
    auto model = nn::load_weights(need(weights, "--weights"));
    if (!image_flag.empty()) {
        std::optional<Preprocess> mode;
        if (!mode_flag.empty()) mode = parse_preprocess(mode_flag);
        out << predict_image(model, load_captcha(image_flag), mode) << "\n";
        return 0;
    }
    const fs::path data = need(g.data, "--data");
    const auto mode = mode_flag.empty() ? mode_from_dataset(data) : std::optional(parse_preprocess(mode_flag));
    const auto records = load_split(data, parse_split_flag(split));
    std::ostringstream preds, truths;
    for (std::size_t i = 0; i < records.images.size(); ++i) {
        const auto p = predict_image(model, records.images[i], mode);
        preds << p << "\n";
        truths << records.labels[i] << "\n";
        out << records.files[i] << ',' << p << "\n";
    }
    if (!g.out.empty()) {
        const auto dir = out_dir(g);
        write_text(dir / "pred.txt", preds.str());
        write_text(dir / "truth.txt", truths.str());
    }
    return 0;
}

int run_eval(const Globals& g, const std::string& pred, const std::string& truth, std::ostream& out) {
    const auto report = score(read_lines(need(pred, "--pred")), read_lines(need(truth, "--truth")));
    if (!g.out.empty()) {
        const auto dir = out_dir(g);
        write_text(dir / "report.csv", report_csv(report));
        write_text(dir / "confusion.csv", confusion_csv(report));
    }
    out << "full=" << report.full_string_accuracy << " per_char=" << report.per_char_accuracy << "\n";
    return 0;
}

int run_length_study(const Globals& g, const std::string& lengths, int count, const TrainArgs& a, std::ostream& out,
                     std::ostream& err) {
    LengthStudyConfig cfg;
    cfg.lengths = parse_int_list(lengths, "--lengths");
    cfg.count = count;
    cfg.seed = g.seed;
    cfg.train.epochs = a.epochs;
    cfg.train.batch_size = a.batch;
    cfg.train.lr = a.lr;
    cfg.train.seed = g.seed;
    cfg.train.validate();
    const auto dir = out_dir(g);
    const auto rows = length_study(cfg, [&](const std::string& line) { err << line << "\n"; });
    const auto csv = length_study_csv(rows);
    write_text(dir / "length_study.csv", csv);
    out << csv;
    return 0;
}

struct EmbedArgs {
    std::string split = "all";
    int limit = 0;
    int dims = 2;
    double perplexity = 30;
    int iterations = 1000;
    double lr = 100;
};

int run_embed(const Globals& g, const EmbedArgs& a, std::ostream& out) {
    const fs::path data = need(g.data, "--data");
    const auto manifest = load_manifest(data / "manifest.jsonl");
    const auto split = parse_split_flag(a.split);
    std::vector<double> points;
    std::vector<const ManifestRecord*> used;
    int dim = -1;
    for (const auto& r : manifest.records) {
        if (split && r.split != *split) continue;
        if (a.limit > 0 && static_cast<int>(used.size()) == a.limit) break;
        const auto img = load_gray(data / r.file);
        if (dim < 0) dim = static_cast<int>(img.size());
        if (static_cast<int>(img.size()) != dim) throw ShapeError("cells differ in size: " + r.file);
        for (auto v : img.data) points.push_back(v / 255.0);
        used.push_back(&r);
    }
    tsne::EmbedConfig cfg;
    cfg.dims = a.dims;
    cfg.perplexity = a.perplexity;
    cfg.iterations = a.iterations;
    cfg.learning_rate = a.lr;
    cfg.seed = g.seed;
    const auto e = tsne::embed(points, dim, cfg);
    std::ostringstream csv;
    csv << "id,label";
    for (int d = 1; d <= e.dims; ++d) csv << ",y" << d;
    csv << "\n" << std::setprecision(9);
    for (int i = 0; i < e.n; ++i) {
        csv << fs::path(used[i]->file).stem().string() << ',' << used[i]->label;
        for (int d = 0; d < e.dims; ++d) csv << ',' << e.y[static_cast<std::size_t>(i) * e.dims + d];
        csv << "\n";
    }
    write_text(out_dir(g) / "embedding.csv", csv.str());
    out << "points=" << e.n << " initial_kl=" << (e.cost.empty() ? 0.0 : e.cost.front())
        << " final_kl=" << (e.cost.empty() ? 0.0 : e.cost.back()) << "\n";
    return 0;
}

int run_grad_check(const Globals& g, int sabotage, std::ostream& out) {
    nn::GradCheckOptions opts;
    opts.sabotage_layer = sabotage;
    const double e = nn::grad_check(nn::grad_check_spec(), g.seed, opts);
    out << "max_rel_error=" << std::setprecision(6) << e << "\n";
    return e < 1e-4 ? 0 : 1;
}

LabelServer* active_server = nullptr;

extern "C" void on_signal(int) {
    if (active_server) active_server->stop();
}

int run_label_serve(const Globals& g, const std::string& charset, int length, int port, const std::string& host,
                    const std::string& ui, std::ostream& out, std::ostream& err) {
    LabelService service(need(g.data, "--data"), charset, length);
    LabelServer server(service, port, host, ui);
    out << "listening=http://" << host << ":" << server.port() << "/" << std::endl;
    err << "labelling " << service.manifest_path().string() << "; Ctrl-C to stop\n";
    active_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    server.run();
    active_server = nullptr;
    return 0;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"CAPTCHA generation, segmentation, recognition and labelling toolkit", "ctk"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
    app.add_option("--out", g.out, "Output directory");
    app.add_option("--data", g.data, "Input dataset directory (holding manifest.jsonl)");
    app.add_option("--threads", g.threads, "Thread cap; computation is single-threaded")
        ->capture_default_str()
        ->check(CLI::Range(1, 1024));

    std::function<int()> action;

    GenerateArgs gen;
    auto* c_gen = app.add_subcommand("generate", "Render a synthetic CAPTCHA dataset into --out");
    c_gen->add_option("--style", gen.style, "clean, jam or railway")->capture_default_str();
    c_gen->add_option("--length", gen.length, "Characters per CAPTCHA")->capture_default_str();
    c_gen->add_option("--count", gen.count, "Number of images")->capture_default_str();
    c_gen->add_option("--style-file", gen.style_file, "JSON style file (replaces the preset)");
    c_gen->add_option("--split", gen.split, "train,val,test[,unlabeled] fractions")->capture_default_str();
    c_gen->add_option("--charset", gen.charset, "Override the style charset");
    c_gen->add_option("--width", gen.width, "Override the canvas width");
    c_gen->add_option("--height", gen.height, "Override the canvas height");
    c_gen->add_option("--dots", gen.dots, "Override the noise dot count");
    c_gen->add_option("--circles", gen.circles, "Override the noise circle count");
    c_gen->add_option("--max-rotation", gen.max_rotation, "Override the rotation jitter (degrees)");
    c_gen->add_option("--max-shear", gen.max_shear, "Override the shear jitter");
    c_gen->callback([&] { action = [&] { return run_generate(g, gen, out); }; });

    std::string mode;
    auto* c_pre = app.add_subcommand("preprocess", "Write binary masks of --data into --out");
    c_pre->add_option("--mode", mode, "otsu, jam or railway (default: from dataset.json)");
    c_pre->callback([&] { action = [&] { return run_preprocess(g, mode, out); }; });

    int cell = 16;
    auto* c_seg = app.add_subcommand("segment", "Cut labelled CAPTCHAs into character cells");
    c_seg->add_option("--mode", mode, "otsu, jam or railway (default: from dataset.json)");
    c_seg->add_option("--cell", cell, "Cell side in pixels")->capture_default_str();
    c_seg->callback([&] { action = [&] { return run_segment(g, mode, cell, out, err); }; });

    std::string split = "train", charset;
    auto* c_kt = app.add_subcommand("knn-train", "Store cells of --data as a k-NN model in --out/knn.bin");
    c_kt->add_option("--split", split, "train, val, test or all")->capture_default_str();
    c_kt->add_option("--charset", charset, "Class order (default: sorted labels)");
    c_kt->callback([&] { action = [&] { return run_knn_train(g, split, charset, out); }; });

    std::string model_path, ks = "1,3,5,7,9,11";
    std::string eval_split = "val";
    auto* c_ke = app.add_subcommand("knn-eval", "Accuracy of a k-NN model for each k, as CSV");
    c_ke->add_option("--model", model_path, "knn.bin from knn-train")->required();
    c_ke->add_option("--split", eval_split, "train, val, test or all")->capture_default_str();
    c_ke->add_option("--k", ks, "Comma-separated k values")->capture_default_str();
    c_ke->callback([&] { action = [&] { return run_knn_eval(g, model_path, eval_split, ks, out); }; });

    TrainArgs tr;
    auto add_train_flags = [&](CLI::App* c) {
        c->add_option("--epochs", tr.epochs, "Epoch budget")->capture_default_str();
        c->add_option("--batch", tr.batch, "Mini-batch size")->capture_default_str();
        c->add_option("--lr", tr.lr, "Learning rate")->capture_default_str();
    };
    auto* c_tr = app.add_subcommand("train", "Train a CNN on --data; writes model.cfw and history.csv");
    c_tr->add_option("--arch", tr.arch, "auto, char or multihead")->capture_default_str();
    c_tr->add_option("--mode", tr.mode, "Preprocessing for multihead (default: from dataset.json)");
    c_tr->add_option("--charset", tr.charset, "Class order (default: sorted labels)");
    c_tr->add_option("--optimizer", tr.optimizer, "adam or sgd")->capture_default_str();
    c_tr->add_option("--momentum", tr.momentum, "SGD momentum")->capture_default_str();
    add_train_flags(c_tr);
    c_tr->callback([&] { action = [&] { return run_train(g, tr, out, err); }; });

    std::string weights, image, pred_split = "test";
    auto* c_pr = app.add_subcommand("predict", "Predict strings; prints file,prediction lines");
    c_pr->add_option("--weights", weights, "model.cfw from train")->required();
    c_pr->add_option("--image", image, "Predict a single image instead of --data");
    c_pr->add_option("--split", pred_split, "train, val, test, unlabeled or all")->capture_default_str();
    c_pr->add_option("--mode", mode, "otsu, jam or railway (default: from dataset.json)");
    c_pr->callback([&] { action = [&] { return run_predict(g, weights, image, pred_split, mode, out); }; });

    std::string pred, truth;
    auto* c_ev = app.add_subcommand("eval", "Score predictions against ground truth");
    c_ev->add_option("--pred", pred, "One prediction per line")->required();
    c_ev->add_option("--truth", truth, "One label per line")->required();
    c_ev->callback([&] { action = [&] { return run_eval(g, pred, truth, out); }; });

    std::string lengths = "3,4,5";
    int study_count = 10000;
    auto* c_ls = app.add_subcommand("length-study", "Full-string accuracy against CAPTCHA length");
    c_ls->add_option("--lengths", lengths, "Ascending lengths")->capture_default_str();
    c_ls->add_option("--count", study_count, "Images per length")->capture_default_str();
    add_train_flags(c_ls);
    c_ls->callback([&] { action = [&] { return run_length_study(g, lengths, study_count, tr, out, err); }; });

    EmbedArgs em;
    auto* c_em = app.add_subcommand("embed", "t-SNE embedding of character cells; writes embedding.csv");
    c_em->add_option("--split", em.split, "train, val, test or all")->capture_default_str();
    c_em->add_option("--limit", em.limit, "Use at most this many cells (0 = all)")->capture_default_str();
    c_em->add_option("--dims", em.dims, "Output dimensions")->capture_default_str()->check(CLI::Range(1, 3));
    c_em->add_option("--perplexity", em.perplexity, "Target perplexity")->capture_default_str();
    c_em->add_option("--iters", em.iterations, "Gradient iterations")->capture_default_str();
    c_em->add_option("--lr", em.lr, "Learning rate")->capture_default_str();
    c_em->callback([&] { action = [&] { return run_embed(g, em, out); }; });

    int sabotage = -1;
    auto* c_gc = app.add_subcommand("grad-check", "Finite-difference gradient check; exit 0 iff error < 1e-4");
    c_gc->add_option("--sabotage", sabotage, "Negate the input gradient of this backbone layer")
        ->capture_default_str();
    c_gc->callback([&] { action = [&] { return run_grad_check(g, sabotage, out); }; });

    std::string serve_charset = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789", host = "127.0.0.1", ui;
    int serve_length = 0, port = 8080;
    auto* c_ls2 = app.add_subcommand("label-serve", "HTTP labelling service for unlabeled records of --data");
    c_ls2->add_option("--charset", serve_charset, "Allowed label characters")->capture_default_str();
    c_ls2->add_option("--length", serve_length, "Required label length (0 = any)")->capture_default_str();
    c_ls2->add_option("--port", port, "TCP port (0 = any free port)")->capture_default_str();
    c_ls2->add_option("--host", host, "Bind address")->capture_default_str();
    c_ls2->add_option("--ui", ui, "Serve static UI assets from this directory instead of the built-in page");
    c_ls2->callback([&] {
        action = [&] { return run_label_serve(g, serve_charset, serve_length, port, host, ui, out, err); };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        err << "run with --help for usage\n";
        return 2;
    }

    try {
        return action();
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace ctk
