#include "ganlens/models.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ganlens/errors.hpp"
#include "ganlens/util.hpp"

namespace ganlens {

namespace {

constexpr float kGanInitStd = 0.02f;  // DCGAN init

int upsample_stages(int resolution) {
    int stages = 0;
    for (int r = 4; r < resolution; r *= 2) ++stages;
    return stages;
}

void check_latent(const Tensor& z, int dim, const char* what) {
    if (z.rank() != 2 || z.dim(1) != dim)
        throw ShapeError(std::string(what) + ": expected [N," + std::to_string(dim) + "], got " + z.shape_str());
    if (!z.all_finite()) throw NumericError(std::string(what) + ": non-finite entries");
}

void check_images(const Tensor& x, int resolution, const char* what) {
    if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != resolution || x.dim(3) != resolution)
        throw ShapeError(std::string(what) + ": expected [N,1," + std::to_string(resolution) + "," +
                         std::to_string(resolution) + "], got " + x.shape_str());
}

struct VggSpec {
    std::vector<int> widths;      // output channels per block
    std::vector<int> convs;       // convs per block
    int dense_hidden;
};

VggSpec vgg_spec(const ModelConfig& cfg) {
    if (cfg.classifier_preset == "vgg-small")
        return {{cfg.c_base, 2 * cfg.c_base, 4 * cfg.c_base}, {2, 2, 2}, 128};
    if (cfg.classifier_preset == "vgg16")
        return {{64, 128, 256, 512, 512}, {2, 2, 3, 3, 3}, 256};
    throw ConfigError("unknown classifier preset: " + cfg.classifier_preset);
}

}  // namespace

// ------------------------------------------------------------- ModelConfig

void ModelConfig::validate() const {
    check_resolution(resolution);
    if (d1 < 1 || d2 < 1) throw ConfigError("latent dims d1, d2 must be >= 1");
    if (g_base < 1 || d_base < 1 || c_base < 1) throw ConfigError("channel bases must be >= 1");
    if (classifier_preset != "vgg-small" && classifier_preset != "vgg16")
        throw ConfigError("unknown classifier preset: " + classifier_preset);
    if (classifier_preset == "vgg16" && resolution != 128)
        throw ConfigError("classifier preset vgg16 requires resolution 128");
}

nlohmann::json ModelConfig::to_json() const {
    return {{"resolution", resolution}, {"d1", d1},         {"d2", d2},
            {"g_base", g_base},         {"d_base", d_base}, {"c_base", c_base},
            {"classifier_preset", classifier_preset}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.resolution = j.value("resolution", c.resolution);
    c.d1 = j.value("d1", c.d1);
    c.d2 = j.value("d2", c.d2);
    c.g_base = j.value("g_base", c.g_base);
    c.d_base = j.value("d_base", c.d_base);
    c.c_base = j.value("c_base", c.c_base);
    c.classifier_preset = j.value("classifier_preset", c.classifier_preset);
    return c;
}

bool ModelConfig::compatible_with(const ModelConfig& other) const {
    return resolution == other.resolution && d1 == other.d1 && d2 == other.d2;
}

// --------------------------------------------------------------- Generator

Generator::Generator(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(mix_seed(seed, 0x6e47));
    const int stages = upsample_stages(cfg_.resolution);
    const int w0 = cfg_.g_base << (stages - 1);
    net_.add<nn::Dense>(cfg_.d1 + cfg_.d2, w0 * 4 * 4, rng, kGanInitStd);
    net_.add<nn::Reshape>(std::vector<int>{w0, 4, 4});
    net_.add<nn::BatchNorm2d>(w0);
    net_.add<nn::ReLU>();
    int w = w0;
    for (int s = 0; s < stages; ++s) {
        const bool last = s + 1 == stages;
        const int out = last ? 1 : w / 2;
        net_.add<nn::ConvTranspose2d>(w, out, 4, 2, 1, rng, kGanInitStd);
        if (!last) {
            net_.add<nn::BatchNorm2d>(out);
            net_.add<nn::ReLU>();
        }
        w = out;
    }
    net_.add<nn::Tanh>();
}

Tensor Generator::forward(const Tensor& z1, const Tensor& z2, bool train) {
    check_latent(z1, cfg_.d1, "generator z1");
    check_latent(z2, cfg_.d2, "generator z2");
    if (z1.dim(0) != z2.dim(0)) throw ShapeError("generator: z1/z2 batch sizes differ");
    const int n = z1.dim(0);
    Tensor z({n, cfg_.d1 + cfg_.d2});
    for (int i = 0; i < n; ++i) {
        std::memcpy(z.data() + static_cast<std::size_t>(i) * (cfg_.d1 + cfg_.d2),
                    z1.data() + static_cast<std::size_t>(i) * cfg_.d1, sizeof(float) * cfg_.d1);
        std::memcpy(z.data() + static_cast<std::size_t>(i) * (cfg_.d1 + cfg_.d2) + cfg_.d1,
                    z2.data() + static_cast<std::size_t>(i) * cfg_.d2, sizeof(float) * cfg_.d2);
    }
    return net_.forward(z, train);
}

Tensor Generator::forward_pair(const LatentPair& latents, bool train) {
    return forward(latents.z1.reshaped({1, latents.z1.dim(0)}), latents.z2.reshaped({1, latents.z2.dim(0)}),
                   train);
}

// ----------------------------------------------------------- Discriminator

Discriminator::Discriminator(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(mix_seed(seed, 0xd15c));
    const int stages = upsample_stages(cfg_.resolution);
    int w = cfg_.d_base;
    net_.add<nn::Conv2d>(1, w, 4, 2, 1, rng, kGanInitStd);
    net_.add<nn::LeakyReLU>(0.2f);
    for (int s = 1; s < stages; ++s) {
        net_.add<nn::Conv2d>(w, 2 * w, 4, 2, 1, rng, kGanInitStd);
        w *= 2;
        net_.add<nn::BatchNorm2d>(w);
        net_.add<nn::LeakyReLU>(0.2f);
    }
    net_.add<nn::Reshape>(std::vector<int>{w * 4 * 4});
    net_.add<nn::Dense>(w * 4 * 4, 1, rng, kGanInitStd);
}

Tensor Discriminator::forward(const Tensor& images, bool train) {
    check_images(images, cfg_.resolution, "discriminator");
    Tensor out = net_.forward(images, train);  // [N,1]
    return out.reshaped({out.dim(0)});
}

// -------------------------------------------------------------- Classifier

Classifier::Classifier(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(mix_seed(seed, 0xc1a5));
    const VggSpec spec = vgg_spec(cfg_);
    int in_ch = 1;
    int res = cfg_.resolution;
    for (std::size_t b = 0; b < spec.widths.size(); ++b) {
        const int out_ch = spec.widths[b];
        for (int k = 0; k < spec.convs[b]; ++k) {
            const float he = std::sqrt(2.0f / (static_cast<float>(in_ch) * 9.0f));
            net_.add<nn::Conv2d>(in_ch, out_ch, 3, 1, 1, rng, he);
            auto* relu = net_.add<nn::ReLU>();
            if (k + 1 == spec.convs[b]) relu->name = "conv" + std::to_string(b + 1);
            in_ch = out_ch;
        }
        net_.add<nn::MaxPool2d>();
        res /= 2;
    }
    const int flat = in_ch * res * res;
    net_.add<nn::Reshape>(std::vector<int>{flat});
    net_.add<nn::Dense>(flat, spec.dense_hidden, rng, std::sqrt(2.0f / static_cast<float>(flat)));
    net_.add<nn::ReLU>();
    net_.add<nn::Dense>(spec.dense_hidden, 2, rng, std::sqrt(1.0f / static_cast<float>(spec.dense_hidden)));
}

Tensor Classifier::forward_logits(const Tensor& images, bool train) {
    check_images(images, cfg_.resolution, "classifier");
    return net_.forward(images, train);
}

ClassifierOutput Classifier::forward(const Tensor& images) {
    ClassifierOutput out;
    out.logits = forward_logits(images, false);
    out.softmax = softmax2(out.logits);
    return out;
}

std::vector<std::string> Classifier::conv_layers() const {
    std::vector<std::string> names;
    for (int i = 0; i < net_.layer_count(); ++i)
        if (!net_.layer(i).name.empty()) names.push_back(net_.layer(i).name);
    return names;
}

std::string Classifier::last_conv_layer() const { return conv_layers().back(); }

Tensor softmax2(const Tensor& logits) {
    if (logits.rank() != 2 || logits.dim(1) != 2) throw ShapeError("softmax2 expects [N,2]");
    Tensor out(logits.shape());
    for (int i = 0; i < logits.dim(0); ++i) {
        const float a = logits.at(i, 0), b = logits.at(i, 1);
        const float m = std::max(a, b);
        const float ea = std::exp(a - m), eb = std::exp(b - m);
        out.at(i, 0) = ea / (ea + eb);
        out.at(i, 1) = eb / (ea + eb);
    }
    return out;
}

// ----------------------------------------------------------- latent draws

Tensor sample_z1(int batch, int d1, std::uint64_t seed) {
    if (batch < 1) throw ConfigError("sample_z1: batch must be >= 1");
    if (d1 < 1) throw ConfigError("sample_z1: d1 must be >= 1");
    Rng rng(mix_seed(seed, 0x7a1));
    Tensor z({batch, d1});
    for (std::size_t i = 0; i < z.numel(); ++i) z[i] = rng.normalf();
    return z;
}

Tensor sample_z2(const std::vector<int>& labels, int d2, std::uint64_t seed) {
    if (labels.empty()) throw ConfigError("sample_z2: labels must be non-empty");
    if (d2 < 1) throw ConfigError("sample_z2: d2 must be >= 1");
    Rng rng(mix_seed(seed, 0x7a2));
    Tensor z({static_cast<int>(labels.size()), d2});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 0) continue;  // class 0 rows stay exactly zero
        if (labels[i] != 1) throw ValidationError("sample_z2: label outside {0,1}");
        float* row = z.data() + i * static_cast<std::size_t>(d2);
        for (int k = 0; k < d2; ++k) row[k] = rng.normalf();
    }
    return z;
}

Tensor generator_forward(Generator& g, const Tensor& z1, const Tensor& z2) { return g.forward(z1, z2, false); }

Tensor discriminator_forward(Discriminator& d, const Tensor& images) { return d.forward(images, false); }

ClassifierOutput classifier_forward(Classifier& c, const Tensor& images) { return c.forward(images); }

// -------------------------------------------------------------- LatentPair

nlohmann::json LatentPair::to_json() const {
    nlohmann::json j;
    j["z1"] = std::vector<float>(z1.data(), z1.data() + z1.numel());
    j["z2"] = std::vector<float>(z2.data(), z2.data() + z2.numel());
    return j;
}

LatentPair LatentPair::from_json(const nlohmann::json& j) {
    const auto v1 = j.at("z1").get<std::vector<float>>();
    const auto v2 = j.at("z2").get<std::vector<float>>();
    LatentPair p;
    p.z1 = Tensor({static_cast<int>(v1.size())});
    p.z2 = Tensor({static_cast<int>(v2.size())});
    std::copy(v1.begin(), v1.end(), p.z1.data());
    std::copy(v2.begin(), v2.end(), p.z2.data());
    return p;
}

// ------------------------------------------------------------- checkpoints

nlohmann::json CheckpointManifest::to_json() const {
    return {{"kind", kind},
            {"config", config.to_json()},
            {"seed", seed},
            {"epoch", epoch},
            {"metrics", metrics},
            {"created_at", created_at},
            {"weights_sha256", weights_sha256}};
}

CheckpointManifest CheckpointManifest::from_json(const nlohmann::json& j) {
    CheckpointManifest m;
    m.kind = j.at("kind");
    m.config = ModelConfig::from_json(j.at("config"));
    m.seed = j.at("seed").get<std::uint64_t>();
    m.epoch = j.at("epoch");
    m.metrics = j.value("metrics", nlohmann::json::object());
    m.created_at = j.value("created_at", "");
    m.weights_sha256 = j.value("weights_sha256", "");
    return m;
}

void save_checkpoint(const std::filesystem::path& path, nn::Network& net, CheckpointManifest manifest) {
    std::ostringstream blob;
    net.save(blob);
    const std::string bytes = blob.str();
    manifest.weights_sha256 = sha256_hex(bytes);
    if (manifest.created_at.empty()) manifest.created_at = iso8601_now();
    write_text_file(path, bytes);
    save_json(path.string() + ".json", manifest.to_json());
}

CheckpointManifest read_manifest(const std::filesystem::path& ckpt_path) {
    return CheckpointManifest::from_json(load_json(ckpt_path.string() + ".json"));
}

namespace {

CheckpointManifest load_and_check(const std::filesystem::path& path, const char* expected_kind,
                                  const std::optional<ModelConfig>& requested) {
    if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path.string());
    CheckpointManifest m = read_manifest(path);
    if (m.kind != expected_kind)
        throw ConfigError("checkpoint " + path.string() + " is a " + m.kind + ", expected " + expected_kind);
    if (requested && !m.config.compatible_with(*requested))
        throw ConfigError("checkpoint " + path.string() + " config (resolution " +
                          std::to_string(m.config.resolution) + ", d1 " + std::to_string(m.config.d1) +
                          ", d2 " + std::to_string(m.config.d2) + ") disagrees with the requested config");
    const std::string actual = sha256_file(path);
    if (!m.weights_sha256.empty() && actual != m.weights_sha256)
        throw FormatError("checkpoint " + path.string() + " does not match its manifest hash");
    return m;
}

void load_net(const std::filesystem::path& path, nn::Network& net) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    net.load(in);
}

}  // namespace

Classifier load_classifier(const std::filesystem::path& path, std::optional<ModelConfig> requested) {
    const CheckpointManifest m = load_and_check(path, "classifier", requested);
    Classifier c(m.config, m.seed);
    load_net(path, c.net());
    return c;
}

Generator load_generator(const std::filesystem::path& path, std::optional<ModelConfig> requested) {
    const CheckpointManifest m = load_and_check(path, "generator", requested);
    Generator g(m.config, m.seed);
    load_net(path, g.net());
    return g;
}

Discriminator load_discriminator(const std::filesystem::path& path, std::optional<ModelConfig> requested) {
    const CheckpointManifest m = load_and_check(path, "discriminator", requested);
    Discriminator d(m.config, m.seed);
    load_net(path, d.net());
    return d;
}

}  // namespace ganlens
