#pragma once

#include <filesystem>
#include <functional>

#include "defocus/dataset.hpp"
#include "defocus/nn.hpp"

namespace defocus {

// Defocus-level classifier: seven 3x3 convolutions (widths 64,64,128,128,
// 256,256,512), batch-norm + ReLU after each, 2x2 max pooling after convs
// 2/4/6, dropout after each pooling stage and before the classifier head,
// global max pooling, dense to the class count. ~2.33M trainable parameters.
struct DelpNetHyper {
    double bn_momentum = 0.60;
    double dropout_pool = 0.25;
    double dropout_dense = 0.50;
};

std::vector<nn::LayerSpec> delpnet_architecture(int num_classes,
                                                const DelpNetHyper& hyper = {});

using DelpNetModel = nn::Model<float>;

DelpNetModel make_delpnet(int num_classes, uint64_t seed, const DelpNetHyper& hyper = {});

struct TrainConfig {
    double learning_rate = 6e-5;
    double lr_decay = 5e-6;  // per update: lr_t = lr / (1 + decay * step)
    int batch_size = 128;
    int epochs = 30;
    DelpNetHyper hyper;
    uint64_t seed = 1;
    bool use_bg = true;  // false trains the 11-class variant on raw level labels

    void validate() const;
};

// One optimizer update on one batch. Returns the batch loss; throws
// DivergenceError if it is not finite.
double train_step(DelpNetModel& model, nn::Adam<float>& adam, const nn::Tensor4<float>& batch,
                  const std::vector<int>& labels, long step);

struct Prediction {
    int label = 0;
    std::vector<double> probabilities;
};

// Eval-mode argmax over the softmax; ties resolve to the lower class index.
Prediction predict(DelpNetModel& model, const std::vector<float>& patch_pixels);

struct EpochLog {
    int epoch = 0;
    long step = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    DelpNetModel model;
    std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

TrainResult train_delpnet(const std::vector<LabeledPatch>& train_patches,
                          const std::vector<LabeledPatch>& val_patches, const TrainConfig& cfg,
                          const EpochCallback& on_epoch = {});

// Batched eval-mode evaluation; returns (mean loss, accuracy) against the
// label field selected by use_bg.
std::pair<double, double> evaluate_delpnet(DelpNetModel& model,
                                           const std::vector<LabeledPatch>& patches, bool use_bg,
                                           int batch_size = 128);

// Text manifest (architecture, hyperparameters, rng state) plus little-endian
// float32 parameter blob in manifest order. Round-trips bit-exactly.
void save_model(const DelpNetModel& model, const std::filesystem::path& path);
DelpNetModel load_model(const std::filesystem::path& path);

void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);

}  // namespace defocus
