#include "ctk/evalx.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "ctk/datasets.hpp"
#include "ctk/rng.hpp"

namespace ctk {

EvalReport score(const std::vector<std::string>& preds, const std::vector<std::string>& truths,
                 const std::string& charset) {
    if (preds.size() != truths.size())
        throw ShapeError("got " + std::to_string(preds.size()) + " predictions for " + std::to_string(truths.size()) +
                         " truths");
    EvalReport r;
    r.n = static_cast<int>(preds.size());
    std::size_t common_len = truths.empty() ? 0 : truths.front().size();
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].size() != truths[i].size())
            throw ShapeError("pair " + std::to_string(i) + ": prediction '" + preds[i] + "' and truth '" + truths[i] +
                             "' differ in length");
        if (truths[i].size() != common_len) common_len = 0;
    }
    if (charset.empty()) {
        std::set<char> seen;
        for (const auto* v : {&preds, &truths})
            for (const auto& s : *v) seen.insert(s.begin(), s.end());
        r.charset.assign(seen.begin(), seen.end());
    } else {
        r.charset = charset;
    }
    const std::size_t k = r.charset.size();
    r.confusion.assign(k, std::vector<long>(k, 0));
    r.per_head_accuracy.assign(common_len, 0.0);

    long positions = 0, correct = 0, full = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        bool all = true;
        for (std::size_t j = 0; j < truths[i].size(); ++j) {
            const char t = truths[i][j], p = preds[i][j];
            const bool ok = t == p;
            ++positions;
            correct += ok;
            all = all && ok;
            if (common_len) r.per_head_accuracy[j] += ok;
            const auto ti = r.charset.find(t), pi = r.charset.find(p);
            if (ti == std::string::npos)
                throw ParamError("truth character '" + std::string(1, t) + "' is outside the charset");
            if (pi != std::string::npos) ++r.confusion[ti][pi];
        }
        full += all;
    }
    r.per_char_accuracy = positions ? static_cast<double>(correct) / positions : 0;
    r.full_string_accuracy = r.n ? static_cast<double>(full) / r.n : 0;
    for (auto& a : r.per_head_accuracy) a /= r.n;
    return r;
}

double expected_full_accuracy(double p, int length) {
    if (!(p >= 0 && p <= 1)) throw ParamError("per-character accuracy must be in [0, 1]");
    if (length < 1) throw ParamError("length must be >= 1");
    return std::pow(p, length);
}

SimulationResult simulate_full_accuracy(double p, int length, int samples, std::uint64_t seed) {
    if (samples < 1) throw ParamError("samples must be >= 1");
    expected_full_accuracy(p, length);
    Rng rng(seed);
    long hits = 0;
    for (int s = 0; s < samples; ++s) {
        bool all = true;
        for (int j = 0; j < length; ++j) all = (rng.uniform() < p) && all;
        hits += all;
    }
    SimulationResult r;
    r.samples = samples;
    r.estimate = static_cast<double>(hits) / samples;
    r.standard_error = std::sqrt(r.estimate * (1 - r.estimate) / samples);
    return r;
}

std::optional<double> reference_percent(int length) {
    static constexpr double kRef[] = {80, 79, 77, 77, 75};
    if (length < 3 || length > 7) return std::nullopt;
    return kRef[length - 3];
}

std::string report_csv(const EvalReport& r) {
    std::ostringstream os;
    os.precision(9);
    os << "metric,value\n";
    os << "n," << r.n << "\n";
    os << "per_char_accuracy," << r.per_char_accuracy << "\n";
    os << "full_string_accuracy," << r.full_string_accuracy << "\n";
    for (std::size_t i = 0; i < r.per_head_accuracy.size(); ++i)
        os << "head" << i + 1 << "_accuracy," << r.per_head_accuracy[i] << "\n";
    return os.str();
}

std::string confusion_csv(const EvalReport& r) {
    std::ostringstream os;
    os << "truth\\pred";
    for (char c : r.charset) os << ',' << c;
    os << "\n";
    for (std::size_t i = 0; i < r.charset.size(); ++i) {
        os << r.charset[i];
        for (long v : r.confusion[i]) os << ',' << v;
        os << "\n";
    }
    return os.str();
}

LengthRow run_length(int length, const LengthStudyConfig& cfg, const StudyLog& log,
                     std::optional<nn::Model<float>>* trained) {
    const auto start = std::chrono::steady_clock::now();
    const GenStyle style = GenStyle::preset(CaptchaStyle::railway, length);
    const std::uint64_t data_seed = Rng::derive(cfg.seed, static_cast<std::uint64_t>(length)).next();
    auto samples = generate_samples(style, cfg.count, cfg.fractions, data_seed);

    auto subset = [&](Split s) {
        std::vector<CaptchaImage> images;
        std::vector<std::string> labels;
        for (auto& g : samples)
            if (g.split == s) {
                images.push_back(std::move(g.image));
                labels.push_back(g.label);
            }
        return multihead_dataset(images, labels, style.charset, Preprocess::railway);
    };
    const auto train_set = subset(Split::train);
    const auto val_set = subset(Split::val);
    const auto test_set = subset(Split::test);
    samples.clear();

    nn::Model<float> model(nn::multihead_spec(style.height, style.width, length, style.charset), cfg.seed);
    auto result = nn::train(model, train_set, val_set, cfg.train, [&](const nn::EpochRecord& e) {
        if (log)
            log("L=" + std::to_string(length) + " epoch " + std::to_string(e.epoch) + " loss " +
                std::to_string(e.train_loss) + " val_full " + std::to_string(e.full_accuracy));
    });
    const auto ev = nn::evaluate(model, test_set);

    LengthRow row;
    row.length = length;
    row.full_string_accuracy = ev.full_accuracy;
    row.per_char_accuracy = ev.char_accuracy;
    row.per_head_accuracy = ev.head_accuracy;
    row.best_epoch = result.best_epoch;
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (trained) trained->emplace(std::move(model));
    return row;
}

std::vector<LengthRow> length_study(const LengthStudyConfig& cfg, const StudyLog& log) {
    if (cfg.lengths.empty()) throw ParamError("no lengths given");
    if (!std::is_sorted(cfg.lengths.begin(), cfg.lengths.end()) ||
        std::adjacent_find(cfg.lengths.begin(), cfg.lengths.end()) != cfg.lengths.end())
        throw ParamError("lengths must be strictly ascending");
    std::vector<LengthRow> rows;
    for (int l : cfg.lengths) rows.push_back(run_length(l, cfg, log));
    return rows;
}

std::string length_study_csv(const std::vector<LengthRow>& rows) {
    std::ostringstream os;
    os.precision(6);
    os << "L,ours_full,ours_per_char,paper_reference_percent\n";
    // Every reference length gets a row; lengths not studied leave ours blank.
    std::set<int> lengths{3, 4, 5, 6, 7};
    for (const auto& r : rows) lengths.insert(r.length);
    for (int l : lengths) {
        os << l << ',';
        auto it = std::find_if(rows.begin(), rows.end(), [&](const LengthRow& r) { return r.length == l; });
        if (it != rows.end()) os << it->full_string_accuracy << ',' << it->per_char_accuracy;
        else os << ',';
        os << ',';
        if (auto ref = reference_percent(l)) os << *ref;
        os << "\n";
    }
    return os.str();
}

}  // namespace ctk
