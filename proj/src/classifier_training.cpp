#include "ganlens/classifier_training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "ganlens/errors.hpp"
#include "ganlens/rng.hpp"
#include "ganlens/util.hpp"

namespace ganlens {

namespace {

void hflip_inplace(Tensor& batch, int i) {
    const int h = batch.dim(2), w = batch.dim(3);
    float* img = batch.data() + static_cast<std::size_t>(i) * h * w;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w / 2; ++x)
            std::swap(img[y * w + x], img[y * w + (w - 1 - x)]);
}

std::vector<int> predict(Classifier& clf, const Tensor& images) {
    std::vector<int> preds;
    const int n = images.dim(0), r = images.dim(2);
    const int chunk = 256;
    for (int start = 0; start < n; start += chunk) {
        const int len = std::min(chunk, n - start);
        Tensor sub({len, 1, r, r});
        std::memcpy(sub.data(), images.data() + static_cast<std::size_t>(start) * r * r,
                    sub.numel() * sizeof(float));
        const Tensor logits = clf.forward_logits(sub, false);
        for (int i = 0; i < len; ++i) preds.push_back(logits.at(i, 1) > logits.at(i, 0) ? 1 : 0);
    }
    return preds;
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("classifier epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(lr > 0.0f)) throw ConfigError("learning rate must be > 0");
    if (!(val_fraction > 0.0f && val_fraction < 0.5f))
        throw ConfigError("validation fraction must lie in (0, 0.5)");
    if (label_noise < 0.0f || label_noise >= 1.0f) throw ConfigError("label noise must lie in [0, 1)");
    if (weight_decay < 0.0f) throw ConfigError("weight decay must be >= 0");
}

double cross_entropy_loss(const Tensor& logits, const std::vector<int>& targets, Tensor* grad) {
    if (logits.rank() != 2 || logits.dim(1) != 2) throw ShapeError("cross_entropy expects [N,2] logits");
    const int n = logits.dim(0);
    if (static_cast<int>(targets.size()) != n) throw ShapeError("cross_entropy: target count mismatch");
    if (grad) *grad = Tensor(logits.shape());
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const float a = logits.at(i, 0), b = logits.at(i, 1);
        const float m = std::max(a, b);
        const double lse = m + std::log(std::exp(a - m) + std::exp(b - m));
        const int t = targets[static_cast<std::size_t>(i)];
        if (t != 0 && t != 1) throw ValidationError("cross_entropy: target outside {0,1}");
        loss += lse - logits.at(i, t);
        if (grad) {
            const float pa = static_cast<float>(std::exp(a - lse));
            const float pb = static_cast<float>(std::exp(b - lse));
            grad->at(i, 0) = (pa - (t == 0 ? 1.0f : 0.0f)) / n;
            grad->at(i, 1) = (pb - (t == 1 ? 1.0f : 0.0f)) / n;
        }
    }
    return loss / n;
}

ClassifierTrainResult train_classifier(const CorpusDataset& corpus, const ModelConfig& model_cfg,
                                       const TrainConfig& cfg, const std::filesystem::path& out_ckpt) {
    cfg.validate();
    model_cfg.validate();
    if (corpus.resolution() != model_cfg.resolution)
        throw ShapeError("corpus resolution " + std::to_string(corpus.resolution()) +
                         " does not match model resolution " + std::to_string(model_cfg.resolution));

    int positives = 0;
    for (const auto& e : corpus.entries()) positives += e.label;
    if (positives == 0 || positives == corpus.size())
        throw ValidationError("corpus must contain both classes; got " + std::to_string(positives) + "/" +
                              std::to_string(corpus.size()) + " positives");

    // held-out split
    const auto order = corpus.shuffled_indices(mix_seed(cfg.seed, 0x5b17));
    const int n_val = std::max(1, static_cast<int>(std::lround(corpus.size() * cfg.val_fraction)));
    std::vector<int> val_idx(order.begin(), order.begin() + n_val);
    std::vector<int> train_idx(order.begin() + n_val, order.end());

    // optional label corruption, fixed once; validation labels stay clean
    std::vector<int> train_labels(train_idx.size());
    for (std::size_t i = 0; i < train_idx.size(); ++i)
        train_labels[i] = corpus.entries()[static_cast<std::size_t>(train_idx[i])].label;
    if (cfg.label_noise > 0.0f) {
        Rng noise_rng(mix_seed(cfg.seed, 0xf11b));
        for (auto& l : train_labels)
            if (noise_rng.uniform() < cfg.label_noise) l = 1 - l;
    }

    Classifier clf(model_cfg, cfg.seed);
    nn::Adam opt(clf.net().params(), {cfg.lr, 0.9f, 0.999f, 1e-8f, cfg.weight_decay});

    const ImageBatch val_batch = corpus.batch(val_idx);
    const std::vector<int> val_labels = *val_batch.labels;

    ClassifierTrainResult result;
    result.checkpoint = out_ckpt;

    std::vector<std::size_t> perm(train_idx.size());
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        Rng shuffle_rng(mix_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(perm);
        Rng aug_rng(mix_seed(cfg.seed, 2500 + static_cast<std::uint64_t>(epoch)));

        double loss_sum = 0.0;
        long correct = 0, seen = 0;
        for (std::size_t start = 0; start < perm.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const int len =
                static_cast<int>(std::min(static_cast<std::size_t>(cfg.batch_size), perm.size() - start));
            std::vector<int> ids(static_cast<std::size_t>(len));
            std::vector<int> targets(static_cast<std::size_t>(len));
            for (int i = 0; i < len; ++i) {
                ids[static_cast<std::size_t>(i)] = train_idx[perm[start + static_cast<std::size_t>(i)]];
                targets[static_cast<std::size_t>(i)] = train_labels[perm[start + static_cast<std::size_t>(i)]];
            }
            ImageBatch b = corpus.batch(ids);
            if (cfg.augment_hflip)
                for (int i = 0; i < len; ++i)
                    if (aug_rng.uniform() < 0.5) hflip_inplace(b.pixels, i);

            const Tensor logits = clf.forward_logits(b.pixels, true);
            Tensor grad;
            const double loss = cross_entropy_loss(logits, targets, &grad);
            if (!std::isfinite(loss)) throw NumericError("classifier training diverged (non-finite loss)");
            clf.net().zero_grad();
            clf.net().backward(grad);
            opt.step();

            loss_sum += loss * len;
            for (int i = 0; i < len; ++i) {
                const int pred = logits.at(i, 1) > logits.at(i, 0) ? 1 : 0;
                correct += (pred == targets[static_cast<std::size_t>(i)]);
            }
            seen += len;
        }

        const auto val_preds = predict(clf, val_batch.pixels);
        long val_correct = 0;
        for (std::size_t i = 0; i < val_preds.size(); ++i) val_correct += (val_preds[i] == val_labels[i]);

        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = loss_sum / static_cast<double>(seen);
        m.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
        m.val_acc = static_cast<double>(val_correct) / static_cast<double>(val_preds.size());
        result.curve.push_back(m);
        log_info("classifier epoch " + std::to_string(epoch) + ": loss " + std::to_string(m.train_loss) +
                 " train_acc " + std::to_string(m.train_acc) + " val_acc " + std::to_string(m.val_acc));
    }

    result.final_train_acc = result.curve.back().train_acc;
    result.final_val_acc = result.curve.back().val_acc;

    std::ostringstream csv;
    csv << "epoch,train_loss,train_acc,val_acc\n";
    for (const auto& m : result.curve)
        csv << m.epoch << "," << m.train_loss << "," << m.train_acc << "," << m.val_acc << "\n";
    write_text_file(out_ckpt.string() + ".metrics.csv", csv.str());

    CheckpointManifest manifest;
    manifest.kind = "classifier";
    manifest.config = model_cfg;
    manifest.seed = cfg.seed;
    manifest.epoch = cfg.epochs;
    manifest.metrics = {{"train_acc", result.final_train_acc},
                        {"val_acc", result.final_val_acc},
                        {"train_loss", result.curve.back().train_loss},
                        {"label_noise", cfg.label_noise}};
    save_checkpoint(out_ckpt, clf.net(), manifest);
    return result;
}

EvalResult evaluate_classifier(Classifier& clf, const ImageBatch& batch) {
    if (batch.size() == 0) throw ValidationError("evaluation batch is empty");
    if (!batch.labels) throw ValidationError("evaluation batch has no labels");
    if (batch.resolution() != clf.config().resolution)
        throw ShapeError("evaluation resolution mismatch: batch " + std::to_string(batch.resolution()) +
                         " vs model " + std::to_string(clf.config().resolution));
    const auto preds = predict(clf, batch.pixels);
    EvalResult r;
    long correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const int actual = (*batch.labels)[i];
        r.confusion[actual][preds[i]] += 1;
        correct += (preds[i] == actual);
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
    return r;
}

EvalResult evaluate_classifier(Classifier& clf, const CorpusDataset& corpus) {
    if (corpus.size() == 0) throw ValidationError("corpus is empty");
    return evaluate_classifier(clf, corpus.all());
}

}  // namespace ganlens
