#pragma once

#include <filesystem>
#include <vector>

#include "ganlens/corpus.hpp"
#include "ganlens/models.hpp"

namespace ganlens {

struct GanTrainConfig {
    int epochs = 1000;
    int batch_size = 64;
    float g_lr = 2e-4f;
    float d_lr = 2e-4f;
    float cls_weight = 1.0f;
    std::uint64_t seed = 0;
    int checkpoint_every = 25;   // epochs between resumable snapshots / sample grids
    bool literal_minimax = false;  // minimize log(1 - sigma(s)) instead of -log sigma(s)
    bool deterministic = false;
    int corpus_limit = 0;  // train on the first N corpus entries (0 = all)

    void validate() const;
};

struct LossReport {
    int epoch = 0;
    double d_loss_real = 0.0;
    double d_loss_fake = 0.0;
    double g_adv_loss = 0.0;
    double g_cls_loss = 0.0;
};

// -mean[log sigma(real)] - mean[log(1 - sigma(fake))]; throws NumericError on
// non-finite scores
double discriminator_loss(const Tensor& real_scores, const Tensor& fake_scores);

struct DLossParts {
    double real_term = 0.0;
    double fake_term = 0.0;
    double total() const { return real_term + fake_term; }
};
DLossParts discriminator_loss_parts(const Tensor& real_scores, const Tensor& fake_scores);

struct GeneratorLoss {
    double g_adv = 0.0;
    double g_cls = 0.0;
    double total = 0.0;
};

// g_adv: non-saturating -mean[log sigma(fake)] (or the literal minimax form);
// g_cls: -mean[log softmax[target]]; total = g_adv + cls_weight * g_cls
GeneratorLoss generator_loss(const Tensor& fake_scores, const Tensor& classifier_softmax,
                             const std::vector<int>& target_labels, float cls_weight,
                             bool literal_minimax = false);

struct GanTrainResult {
    std::filesystem::path g_checkpoint;
    std::filesystem::path d_checkpoint;
    std::vector<LossReport> losses;
    std::string classifier_hash_before;
    std::string classifier_hash_after;
    int epochs_done = 0;
    bool resumed = false;
};

// Alternating D/G updates against the frozen classifier. Writes g.ckpt,
// d.ckpt, losses.csv and samples/epoch_####.png under out_dir; snapshots
// every checkpoint_every epochs allow bit-exact resumption.
GanTrainResult train_gan(const CorpusDataset& corpus, const std::filesystem::path& classifier_ckpt,
                         const ModelConfig& model_cfg, const GanTrainConfig& cfg,
                         const std::filesystem::path& out_dir);

double sigmoidd(double x);
double softplusd(double x);  // log(1 + e^x), stable

}  // namespace ganlens
