#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ctk/nn/model.hpp"

namespace ctk::nn {

/// In-memory supervised set: images [N,H,W,C] in [0,1] and N*heads class ids.
struct Dataset {
    Tensor images;
    std::vector<int> labels;
    int heads = 1;

    int size() const { return images.rank() ? images.dim(0) : 0; }
    /// Rows [begin, end) as a batch tensor and label block.
    Tensor batch_images(const std::vector<int>& idx, std::size_t begin, std::size_t end) const;
    std::vector<int> batch_labels(const std::vector<int>& idx, std::size_t begin, std::size_t end) const;
};

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::adam;
    double lr = 1e-3;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch_size = 32;
    int epochs = 10;
    std::uint64_t seed = 42;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0;
    std::vector<double> head_accuracy;  // validation, per head
    double full_accuracy = 0;           // validation, whole string
};

struct TrainResult {
    std::vector<EpochRecord> history;
    int best_epoch = 0;  // 1-based; 0 when no epoch ran
    double initial_loss = 0;
};

class Optimizer {
public:
    Optimizer(const TrainConfig& cfg, const std::vector<Param<float>*>& params);
    void step();

private:
    TrainConfig cfg_;
    std::vector<Param<float>*> params_;
    std::vector<std::vector<float>> m_, v_;
    long step_ = 0;
};

struct Evaluation {
    std::vector<double> head_accuracy;
    double full_accuracy = 0;
    double char_accuracy = 0;
    std::vector<int> predictions;  // N*heads class ids
};

Evaluation evaluate(Model<float>& model, const Dataset& data, int batch_size = 64);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Shuffled mini-batch training; on return `model` holds the weights of the
/// epoch with the best validation full-string accuracy (earliest on ties).
TrainResult train(Model<float>& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Mean training loss over `data` in inference mode.
double mean_loss(Model<float>& model, const Dataset& data, int batch_size = 64);

std::string history_csv(const TrainResult& result, int heads);

struct GradCheckOptions {
    int batch = 4;
    double eps = 1e-5;
    int sabotage_layer = -1;  // backbone index whose dx gets negated
};

/// Central-difference check of every trainable parameter in 64-bit mode.
/// Returns max |g_a - g_n| / max(|g_a|, |g_n|, 1e-8).
double grad_check(const ModelSpec& spec, std::uint64_t seed, const GradCheckOptions& opts = {});

/// Default stack for the gradient gate: conv, batchnorm, maxpool,
/// dropout(rate 0), dense, and two softmax heads.
ModelSpec grad_check_spec();

// CFW1 weight files: u32 little-endian header length, JSON header with the
// model spec, tensor table, payload size and FNV-1a checksum, then raw
// little-endian float32 arrays in parameter order.
void save_weights(Model<float>& model, const std::filesystem::path& path);
Model<float> load_weights(const std::filesystem::path& path);

std::uint64_t fnv1a64(const void* data, std::size_t size);

}  // namespace ctk::nn
