#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ganlens/corpus.hpp"
#include "ganlens/nn.hpp"
#include "ganlens/tensor.hpp"

namespace ganlens {

// z1 carries structure, z2 carries class content; z2 == 0 encodes class 0.
struct LatentPair {
    Tensor z1;  // [d1]
    Tensor z2;  // [d2]

    nlohmann::json to_json() const;
    static LatentPair from_json(const nlohmann::json& j);
};

struct ClassifierOutput {
    Tensor logits;   // [N,2]
    Tensor softmax;  // [N,2]
};

struct ModelConfig {
    int resolution = 64;
    int d1 = 64;
    int d2 = 32;
    int g_base = 8;  // channel width scale per stage
    int d_base = 8;
    int c_base = 8;
    std::string classifier_preset = "vgg-small";  // or "vgg16" (128x128 only)

    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
    bool compatible_with(const ModelConfig& other) const;
};

class Generator {
public:
    Generator(ModelConfig cfg, std::uint64_t seed);

    // [N,d1] + [N,d2] -> [N,1,R,R]; inference mode is pure
    Tensor forward(const Tensor& z1, const Tensor& z2, bool train = false);
    Tensor forward_pair(const LatentPair& latents, bool train = false);  // [1,1,R,R]

    nn::Network& net() { return net_; }
    const ModelConfig& config() const { return cfg_; }

private:
    ModelConfig cfg_;
    nn::Network net_;
};

class Discriminator {
public:
    Discriminator(ModelConfig cfg, std::uint64_t seed);

    // [N,1,R,R] -> raw real/fake scores [N]
    Tensor forward(const Tensor& images, bool train = false);

    nn::Network& net() { return net_; }
    const ModelConfig& config() const { return cfg_; }

private:
    ModelConfig cfg_;
    nn::Network net_;
};

class Classifier {
public:
    Classifier(ModelConfig cfg, std::uint64_t seed);

    ClassifierOutput forward(const Tensor& images);            // inference
    Tensor forward_logits(const Tensor& images, bool train);   // training path

    // convolutional tap names usable for grad-cam ("conv1".."convN")
    std::vector<std::string> conv_layers() const;
    std::string last_conv_layer() const;

    nn::Network& net() { return net_; }
    const ModelConfig& config() const { return cfg_; }

private:
    ModelConfig cfg_;
    nn::Network net_;
};

Tensor softmax2(const Tensor& logits);  // [N,2] -> [N,2], numerically stable

Tensor sample_z1(int batch, int d1, std::uint64_t seed);
Tensor sample_z2(const std::vector<int>& labels, int d2, std::uint64_t seed);

// spec'd wrappers
Tensor generator_forward(Generator& g, const Tensor& z1, const Tensor& z2);
Tensor discriminator_forward(Discriminator& d, const Tensor& images);
ClassifierOutput classifier_forward(Classifier& c, const Tensor& images);

// checkpoint = weights blob + sidecar JSON manifest (<path>.json)
struct CheckpointManifest {
    std::string kind;  // classifier | generator | discriminator
    ModelConfig config;
    std::uint64_t seed = 0;
    int epoch = 0;
    nlohmann::json metrics;
    std::string created_at;
    std::string weights_sha256;

    nlohmann::json to_json() const;
    static CheckpointManifest from_json(const nlohmann::json& j);
};

void save_checkpoint(const std::filesystem::path& path, nn::Network& net, CheckpointManifest manifest);
CheckpointManifest read_manifest(const std::filesystem::path& ckpt_path);

// requested.has_value(): manifest must agree on resolution and latent dims
Classifier load_classifier(const std::filesystem::path& path, std::optional<ModelConfig> requested = {});
Generator load_generator(const std::filesystem::path& path, std::optional<ModelConfig> requested = {});
Discriminator load_discriminator(const std::filesystem::path& path, std::optional<ModelConfig> requested = {});

}  // namespace ganlens
