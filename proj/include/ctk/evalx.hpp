#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ctk/capgen.hpp"
#include "ctk/nn/train.hpp"

namespace ctk {

struct EvalReport {
    int n = 0;
    double per_char_accuracy = 0;
    double full_string_accuracy = 0;
    std::vector<double> per_head_accuracy;  // empty when lengths vary
    std::string charset;                    // confusion axis order
    std::vector<std::vector<long>> confusion;  // [truth][pred]
};

/// Pairs must have equal lengths; the confusion axis is the sorted set of
/// characters seen unless `charset` is given.
EvalReport score(const std::vector<std::string>& preds, const std::vector<std::string>& truths,
                 const std::string& charset = {});

/// p^L.
double expected_full_accuracy(double p, int length);

struct SimulationResult {
    double estimate = 0;
    double standard_error = 0;
    int samples = 0;
};

/// Monte-Carlo full-string accuracy with independent per-position success p.
SimulationResult simulate_full_accuracy(double p, int length, int samples, std::uint64_t seed);

/// Reference percentages for L = 3..7 (80, 79, 77, 77, 75); empty otherwise.
std::optional<double> reference_percent(int length);

std::string report_csv(const EvalReport& r);
std::string confusion_csv(const EvalReport& r);

struct LengthStudyConfig {
    std::vector<int> lengths{3, 4, 5};
    int count = 10000;
    SplitFractions fractions{0.8, 0.1, 0.1, 0};
    nn::TrainConfig train;
    std::uint64_t seed = 42;
};

struct LengthRow {
    int length = 0;
    double full_string_accuracy = 0;
    double per_char_accuracy = 0;
    std::vector<double> per_head_accuracy;
    int best_epoch = 0;
    double seconds = 0;
};

using StudyLog = std::function<void(const std::string&)>;

/// For each L: fresh railway-style dataset, multi-head model with L heads,
/// identical budget; scored on the held-out test split.
std::vector<LengthRow> length_study(const LengthStudyConfig& cfg, const StudyLog& log = {});

/// Columns L, ours_full, ours_per_char, paper_reference_percent.
std::string length_study_csv(const std::vector<LengthRow>& rows);

/// Trains one multi-head railway model of the given length and evaluates it on
/// the test split; the building block of length_study.
LengthRow run_length(int length, const LengthStudyConfig& cfg, const StudyLog& log = {},
                     std::optional<nn::Model<float>>* trained = nullptr);

}  // namespace ctk
