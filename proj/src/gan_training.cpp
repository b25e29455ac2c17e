#include "ganlens/gan_training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ganlens/classifier_training.hpp"
#include "ganlens/errors.hpp"
#include "ganlens/image_io.hpp"
#include "ganlens/rng.hpp"
#include "ganlens/util.hpp"

namespace ganlens {

double sigmoidd(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplusd(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

void GanTrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("gan epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("gan batch size must be >= 1");
    if (!(g_lr > 0.0f) || !(d_lr > 0.0f)) throw ConfigError("learning rates must be > 0");
    if (cls_weight < 0.0f) throw ConfigError("cls_weight must be >= 0");
    if (checkpoint_every < 1) throw ConfigError("checkpoint cadence must be >= 1");
    if (corpus_limit < 0) throw ConfigError("corpus_limit must be >= 0");
}

namespace {

void check_scores(const Tensor& s, const char* what) {
    if (s.numel() == 0) throw ShapeError(std::string(what) + ": empty score vector");
    if (!s.all_finite()) throw NumericError(std::string(what) + ": non-finite scores");
}

}  // namespace

DLossParts discriminator_loss_parts(const Tensor& real_scores, const Tensor& fake_scores) {
    check_scores(real_scores, "discriminator_loss real");
    check_scores(fake_scores, "discriminator_loss fake");
    DLossParts parts;
    for (std::size_t i = 0; i < real_scores.numel(); ++i) parts.real_term += softplusd(-real_scores[i]);
    parts.real_term /= static_cast<double>(real_scores.numel());
    for (std::size_t i = 0; i < fake_scores.numel(); ++i) parts.fake_term += softplusd(fake_scores[i]);
    parts.fake_term /= static_cast<double>(fake_scores.numel());
    return parts;
}

double discriminator_loss(const Tensor& real_scores, const Tensor& fake_scores) {
    return discriminator_loss_parts(real_scores, fake_scores).total();
}

GeneratorLoss generator_loss(const Tensor& fake_scores, const Tensor& classifier_softmax,
                             const std::vector<int>& target_labels, float cls_weight,
                             bool literal_minimax) {
    check_scores(fake_scores, "generator_loss fake");
    if (cls_weight < 0.0f) throw ConfigError("cls_weight must be >= 0");
    if (classifier_softmax.rank() != 2 || classifier_softmax.dim(1) != 2)
        throw ShapeError("generator_loss expects [N,2] softmax");
    if (classifier_softmax.dim(0) != static_cast<int>(target_labels.size()))
        throw ShapeError("generator_loss: label count mismatch");

    GeneratorLoss out;
    const std::size_t n = fake_scores.numel();
    for (std::size_t i = 0; i < n; ++i)
        out.g_adv += literal_minimax ? -softplusd(fake_scores[i]) : softplusd(-fake_scores[i]);
    out.g_adv /= static_cast<double>(n);

    for (std::size_t i = 0; i < target_labels.size(); ++i) {
        const int t = target_labels[i];
        if (t != 0 && t != 1) throw ValidationError("generator_loss: label outside {0,1}");
        const double p = classifier_softmax[i * 2 + static_cast<std::size_t>(t)];
        out.g_cls += -std::log(std::max(p, 1e-30));
    }
    out.g_cls /= static_cast<double>(target_labels.size());
    out.total = out.g_adv + cls_weight * out.g_cls;
    return out;
}

namespace {

constexpr char kStateMagic[4] = {'G', 'L', 'S', 'T'};

std::string gan_config_fingerprint(const ModelConfig& mc, const GanTrainConfig& cfg, int corpus_size) {
    nlohmann::json j = mc.to_json();
    j["gan"] = {cfg.epochs,     cfg.batch_size,      cfg.g_lr, cfg.d_lr,
                cfg.cls_weight, cfg.literal_minimax, cfg.seed, cfg.corpus_limit};
    j["corpus_size"] = corpus_size;
    return sha256_hex(j.dump());
}

struct TrainState {
    int epoch_done = 0;
};

void save_state(const std::filesystem::path& path, const std::string& fingerprint, int epoch_done,
                nn::Network& g, nn::Network& d, const nn::Adam& ag, const nn::Adam& ad) {
    std::ostringstream os;
    os.write(kStateMagic, 4);
    const std::uint32_t version = 1;
    os.write(reinterpret_cast<const char*>(&version), 4);
    const std::uint32_t fp_len = static_cast<std::uint32_t>(fingerprint.size());
    os.write(reinterpret_cast<const char*>(&fp_len), 4);
    os.write(fingerprint.data(), fp_len);
    const std::uint32_t ep = static_cast<std::uint32_t>(epoch_done);
    os.write(reinterpret_cast<const char*>(&ep), 4);
    g.save(os);
    d.save(os);
    ag.save(os);
    ad.save(os);
    write_text_file(path, os.str());
}

bool load_state(const std::filesystem::path& path, const std::string& fingerprint, TrainState& st,
                nn::Network& g, nn::Network& d, nn::Adam& ag, nn::Adam& ad) {
    if (!std::filesystem::exists(path)) return false;
    std::ifstream is(path, std::ios::binary);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kStateMagic, 4) != 0) return false;
    std::uint32_t version = 0;
    is.read(reinterpret_cast<char*>(&version), 4);
    if (version != 1) return false;
    std::uint32_t fp_len = 0;
    is.read(reinterpret_cast<char*>(&fp_len), 4);
    std::string fp(fp_len, '\0');
    is.read(fp.data(), fp_len);
    if (fp != fingerprint) return false;  // different run recipe; start over
    std::uint32_t ep = 0;
    is.read(reinterpret_cast<char*>(&ep), 4);
    st.epoch_done = static_cast<int>(ep);
    g.load(is);
    d.load(is);
    ag.load(is);
    ad.load(is);
    return static_cast<bool>(is);
}

void write_losses_csv(const std::filesystem::path& path, const std::vector<LossReport>& rows) {
    std::ostringstream csv;
    csv << "epoch,d_loss_real,d_loss_fake,g_adv_loss,g_cls_loss\n";
    for (const auto& r : rows)
        csv << r.epoch << "," << r.d_loss_real << "," << r.d_loss_fake << "," << r.g_adv_loss << ","
            << r.g_cls_loss << "\n";
    write_text_file(path, csv.str());
}

std::vector<LossReport> read_losses_csv(const std::filesystem::path& path, int max_epoch) {
    std::vector<LossReport> rows;
    if (!std::filesystem::exists(path)) return rows;
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        LossReport r;
        if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf", &r.epoch, &r.d_loss_real, &r.d_loss_fake,
                        &r.g_adv_loss, &r.g_cls_loss) == 5 &&
            r.epoch < max_epoch)
            rows.push_back(r);
    }
    return rows;
}

void write_sample_grid(Generator& g, const ModelConfig& mc, std::uint64_t seed,
                       const std::filesystem::path& path) {
    const int per_class = 16;
    std::vector<int> labels(per_class, 0);
    labels.insert(labels.end(), per_class, 1);
    const Tensor z1 = sample_z1(2 * per_class, mc.d1, mix_seed(seed, 0x9a1d));
    const Tensor z2 = sample_z2(labels, mc.d2, mix_seed(seed, 0x9a1e));
    const Tensor imgs = g.forward(z1, z2, false);
    write_png(path, tile_grid(imgs, 8));
}

}  // namespace

GanTrainResult train_gan(const CorpusDataset& corpus, const std::filesystem::path& classifier_ckpt,
                         const ModelConfig& model_cfg, const GanTrainConfig& cfg,
                         const std::filesystem::path& out_dir) {
    cfg.validate();
    model_cfg.validate();

    Classifier clf = load_classifier(classifier_ckpt);
    if (clf.config().resolution != model_cfg.resolution)
        throw ConfigError("classifier checkpoint resolution " + std::to_string(clf.config().resolution) +
                          " does not match gan resolution " + std::to_string(model_cfg.resolution));
    if (corpus.resolution() != model_cfg.resolution)
        throw ShapeError("corpus resolution does not match gan config");

    GanTrainResult result;
    result.classifier_hash_before = sha256_file(classifier_ckpt);
    std::ostringstream clf_bytes_before;
    clf.net().save(clf_bytes_before);
    const std::string clf_mem_before = sha256_hex(clf_bytes_before.str());

    const int corpus_n = (cfg.corpus_limit > 0 && cfg.corpus_limit < corpus.size()) ? cfg.corpus_limit
                                                                                    : corpus.size();
    {
        int pos = 0;
        for (int i = 0; i < corpus_n; ++i) pos += corpus.entries()[static_cast<std::size_t>(i)].label;
        if (pos == 0 || pos == corpus_n)
            throw ValidationError("gan training subset must contain both classes");
    }
    const int batch = std::min(cfg.batch_size, corpus_n);
    const int steps_per_epoch = std::max(1, corpus_n / batch);

    Generator gen(model_cfg, cfg.seed);
    Discriminator dis(model_cfg, cfg.seed);
    nn::Adam adam_g(gen.net().params(), {cfg.g_lr, 0.5f, 0.999f, 1e-8f, 0.0f});
    nn::Adam adam_d(dis.net().params(), {cfg.d_lr, 0.5f, 0.999f, 1e-8f, 0.0f});

    std::filesystem::create_directories(out_dir / "samples");
    const auto state_path = out_dir / "state.bin";
    const auto losses_path = out_dir / "losses.csv";
    const std::string fingerprint = gan_config_fingerprint(model_cfg, cfg, corpus_n);

    TrainState st;
    if (load_state(state_path, fingerprint, st, gen.net(), dis.net(), adam_g, adam_d)) {
        result.resumed = true;
        result.losses = read_losses_csv(losses_path, st.epoch_done);
        log_info("gan: resuming from epoch " + std::to_string(st.epoch_done));
    } else {
        st.epoch_done = 0;
    }

    const std::string fixed_time = cfg.deterministic ? "1970-01-01T00:00:00Z" : "";

    std::vector<int> subset(static_cast<std::size_t>(corpus_n));
    for (int i = 0; i < corpus_n; ++i) subset[static_cast<std::size_t>(i)] = i;

    for (int epoch = st.epoch_done; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<int> order = subset;
        Rng shuffle_rng(mix_seed(cfg.seed, 3000 + static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        Rng zrng(mix_seed(cfg.seed, 4000 + static_cast<std::uint64_t>(epoch)));

        LossReport row;
        row.epoch = epoch;
        for (int step = 0; step < steps_per_epoch; ++step) {
            const ImageBatch real = corpus.batch(order.data() + static_cast<std::size_t>(step) * batch, batch);

            // shared z draws for this iteration
            Tensor z1({batch, model_cfg.d1});
            for (std::size_t i = 0; i < z1.numel(); ++i) z1[i] = zrng.normalf();
            std::vector<int> y(static_cast<std::size_t>(batch));
            for (auto& v : y) v = zrng.uniform() < 0.5 ? 0 : 1;
            Tensor z2({batch, model_cfg.d2});
            for (int i = 0; i < batch; ++i)
                if (y[static_cast<std::size_t>(i)] == 1) {
                    float* rowp = z2.data() + static_cast<std::size_t>(i) * model_cfg.d2;
                    for (int k = 0; k < model_cfg.d2; ++k) rowp[k] = zrng.normalf();
                }

            const Tensor fake = gen.forward(z1, z2, true);  // graph cached for the G update

            // --- discriminator update
            dis.net().zero_grad();
            const Tensor real_scores = dis.net().forward(real.pixels, true);
            Tensor gr(real_scores.shape());
            for (std::size_t i = 0; i < gr.numel(); ++i)
                gr[i] = static_cast<float>((sigmoidd(real_scores[i]) - 1.0) / batch);
            dis.net().backward(gr);
            const Tensor fake_scores = dis.net().forward(fake, true);
            Tensor gf(fake_scores.shape());
            for (std::size_t i = 0; i < gf.numel(); ++i)
                gf[i] = static_cast<float>(sigmoidd(fake_scores[i]) / batch);
            dis.net().backward(gf);
            const DLossParts dparts = discriminator_loss_parts(real_scores.reshaped({batch}),
                                                               fake_scores.reshaped({batch}));
            adam_d.step();

            // --- generator update (fresh D pass so gradients match updated D)
            const Tensor adv_scores = dis.net().forward(fake, true);
            check_scores(adv_scores, "generator adversarial scores");
            const Tensor cls_logits = clf.forward_logits(fake, false);
            Tensor cls_grad;
            const double g_cls = cross_entropy_loss(cls_logits, y, &cls_grad);

            Tensor ga(adv_scores.shape());
            for (std::size_t i = 0; i < ga.numel(); ++i)
                ga[i] = static_cast<float>((cfg.literal_minimax ? -sigmoidd(adv_scores[i])
                                                                : -sigmoidd(-adv_scores[i])) /
                                           batch);
            dis.net().zero_grad();
            const Tensor g_from_d = dis.net().backward(ga);
            clf.net().zero_grad();
            for (std::size_t i = 0; i < cls_grad.numel(); ++i) cls_grad[i] *= cfg.cls_weight;
            const Tensor g_from_c = clf.net().backward(cls_grad);

            Tensor g_total(g_from_d.shape());
            for (std::size_t i = 0; i < g_total.numel(); ++i) g_total[i] = g_from_d[i] + g_from_c[i];
            gen.net().zero_grad();
            gen.net().backward(g_total);
            adam_g.step();

            double g_adv = 0.0;
            for (int i = 0; i < batch; ++i)
                g_adv += cfg.literal_minimax ? -softplusd(adv_scores[i]) : softplusd(-adv_scores[i]);
            g_adv /= batch;

            if (!std::isfinite(dparts.total()) || !std::isfinite(g_adv) || !std::isfinite(g_cls))
                throw NumericError("gan training diverged at epoch " + std::to_string(epoch) +
                                   "; last snapshot retained in " + state_path.string());

            row.d_loss_real += dparts.real_term;
            row.d_loss_fake += dparts.fake_term;
            row.g_adv_loss += g_adv;
            row.g_cls_loss += g_cls;
        }
        row.d_loss_real /= steps_per_epoch;
        row.d_loss_fake /= steps_per_epoch;
        row.g_adv_loss /= steps_per_epoch;
        row.g_cls_loss /= steps_per_epoch;
        result.losses.push_back(row);

        const auto t1 = std::chrono::steady_clock::now();
        const double secs = std::chrono::duration<double>(t1 - t0).count();
        log_info("gan epoch " + std::to_string(epoch) + ": d_real " + std::to_string(row.d_loss_real) +
                 " d_fake " + std::to_string(row.d_loss_fake) + " g_adv " + std::to_string(row.g_adv_loss) +
                 " g_cls " + std::to_string(row.g_cls_loss) + " (" + std::to_string(secs) + "s)");

        if ((epoch + 1) % cfg.checkpoint_every == 0 || epoch + 1 == cfg.epochs) {
            save_state(state_path, fingerprint, epoch + 1, gen.net(), dis.net(), adam_g, adam_d);
            write_losses_csv(losses_path, result.losses);
            char name[32];
            std::snprintf(name, sizeof(name), "epoch_%04d.png", epoch + 1);
            write_sample_grid(gen, model_cfg, cfg.seed, out_dir / "samples" / name);
        }
    }
    result.epochs_done = cfg.epochs;
    write_losses_csv(losses_path, result.losses);

    nlohmann::json shared_metrics;
    if (!result.losses.empty()) {
        const LossReport& last = result.losses.back();
        shared_metrics = {{"d_loss_real", last.d_loss_real},
                          {"d_loss_fake", last.d_loss_fake},
                          {"g_adv_loss", last.g_adv_loss},
                          {"g_cls_loss", last.g_cls_loss}};
    }

    CheckpointManifest gm;
    gm.kind = "generator";
    gm.config = model_cfg;
    gm.seed = cfg.seed;
    gm.epoch = cfg.epochs;
    gm.metrics = shared_metrics;
    gm.metrics["classifier_checkpoint_sha256"] = result.classifier_hash_before;
    gm.created_at = fixed_time;
    result.g_checkpoint = out_dir / "g.ckpt";
    save_checkpoint(result.g_checkpoint, gen.net(), gm);

    CheckpointManifest dm = gm;
    dm.kind = "discriminator";
    result.d_checkpoint = out_dir / "d.ckpt";
    save_checkpoint(result.d_checkpoint, dis.net(), dm);

    // frozen-classifier contract
    result.classifier_hash_after = sha256_file(classifier_ckpt);
    std::ostringstream clf_bytes_after;
    clf.net().save(clf_bytes_after);
    if (result.classifier_hash_after != result.classifier_hash_before ||
        sha256_hex(clf_bytes_after.str()) != clf_mem_before)
        throw NumericError("frozen classifier contract violated: checkpoint hash changed during gan training");

    return result;
}

}  // namespace ganlens
