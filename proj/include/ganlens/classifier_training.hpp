#pragma once

#include <filesystem>

#include <json.hpp>

#include "ganlens/corpus.hpp"
#include "ganlens/models.hpp"

namespace ganlens {

struct TrainConfig {
    int epochs = 20;
    int batch_size = 64;
    float lr = 2e-4f;
    float weight_decay = 0.0f;
    float val_fraction = 0.2f;
    std::uint64_t seed = 0;
    float label_noise = 0.0f;  // training-label flip probability
    bool augment_hflip = false;

    void validate() const;
};

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
};

struct ClassifierTrainResult {
    std::filesystem::path checkpoint;
    std::vector<EpochMetrics> curve;
    double final_train_acc = 0.0;
    double final_val_acc = 0.0;
};

// stable softmax cross-entropy against integer targets; mean over the batch.
// grad (dL/dlogits) is written when non-null.
double cross_entropy_loss(const Tensor& logits, const std::vector<int>& targets, Tensor* grad);

ClassifierTrainResult train_classifier(const CorpusDataset& corpus, const ModelConfig& model_cfg,
                                       const TrainConfig& cfg, const std::filesystem::path& out_ckpt);

struct EvalResult {
    double accuracy = 0.0;
    // rows: actual class, cols: predicted class
    long confusion[2][2] = {{0, 0}, {0, 0}};
};

EvalResult evaluate_classifier(Classifier& clf, const ImageBatch& batch);
EvalResult evaluate_classifier(Classifier& clf, const CorpusDataset& corpus);

}  // namespace ganlens
