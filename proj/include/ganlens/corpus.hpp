#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ganlens/image_io.hpp"
#include "ganlens/tensor.hpp"

namespace ganlens {

// Batch of grayscale images in [-1,1], NCHW, optional binary labels.
struct ImageBatch {
    Tensor pixels;  // [N,1,H,W]
    std::optional<std::vector<int>> labels;

    int size() const { return pixels.rank() == 4 ? pixels.dim(0) : 0; }
    int resolution() const { return pixels.rank() == 4 ? pixels.dim(2) : 0; }
    void validate() const;  // throws ShapeError / ValidationError
};

struct EllipseParams {
    double cx, cy;      // center, normalized image coords
    double ax, ay;      // semi-axes
    double rot;         // radians
};

struct StructureParams {
    EllipseParams left, right;
    double noise_amp;                  // boundary modulation amplitude
    double noise_phase[3];             // phases of harmonics 2,3,5
    double body_level;                 // tissue intensity outside the lungs
    double grad_x, grad_y, vignette;   // slow background shading
};

struct BlobParams {
    double cx, cy;     // center, inside the lung interior
    double radius;     // normalized units
    double peak;       // added intensity, [0.2, 0.8]
    double falloff;    // soft-edge exponent
};

// Full recipe for one image. Same spec + resolution => bit-identical render.
struct SceneSpec {
    std::uint64_t seed = 0;
    int class_label = 0;
    StructureParams structure{};
    std::vector<BlobParams> opacities;

    nlohmann::json to_json() const;
    static SceneSpec from_json(const nlohmann::json& j);
};

// Lung interior intensity; constant across the corpus so the masked-mean
// statistic is a clean class separator.
inline constexpr float kLungLevel = 0.22f;

inline constexpr const char* kGeneratorVersion = "synth-1";

void check_resolution(int resolution);  // {32,64,128} else ConfigError

// Samples a SceneSpec. The structure stream depends only on `seed`, so the
// class-0 and class-1 specs for one seed share identical geometry.
SceneSpec sample_scene(std::uint64_t seed, int class_label);

// Renders to u8 and maps to [-1,1]; returned tensor is [1,1,R,R] and equals
// the PNG round-trip exactly.
Tensor render_scene(const SceneSpec& spec, int resolution);

std::pair<Tensor, SceneSpec> generate_sample(std::uint64_t seed, int class_label, int resolution);

// Interior mask: 1 where the pixel is strictly inside the (eroded) lung
// boundary, excluding the anti-aliased edge ring. [R,R] of 0/1.
std::vector<std::uint8_t> lung_mask(const SceneSpec& spec, int resolution);

bool point_in_lung(const StructureParams& s, double x, double y, double erode);

struct CorpusManifest {
    std::string generator_version;
    std::uint64_t seed = 0;
    int count = 0;
    int resolution = 0;
    double positive_fraction = 0.0;
    int positives = 0;
    int negatives = 0;

    nlohmann::json to_json() const;
    static CorpusManifest from_json(const nlohmann::json& j);
};

CorpusManifest build_corpus(int count, double positive_fraction, std::uint64_t seed, int resolution,
                            const std::filesystem::path& out_dir);

struct CorpusEntry {
    std::string path;  // relative to the corpus dir
    int label = 0;
    std::uint64_t seed = 0;
};

// Iterable handle over a corpus directory; images load lazily and cache as u8.
class CorpusDataset {
public:
    explicit CorpusDataset(const std::filesystem::path& dir);

    int size() const { return static_cast<int>(entries_.size()); }
    int resolution() const { return manifest_.resolution; }
    const CorpusManifest& manifest() const { return manifest_; }
    const std::vector<CorpusEntry>& entries() const { return entries_; }

    // deterministic shuffle of [0, size)
    std::vector<int> shuffled_indices(std::uint64_t shuffle_seed) const;

    ImageBatch batch(const std::vector<int>& indices) const;
    ImageBatch batch(const int* indices, int n) const;
    ImageBatch all() const;

private:
    std::filesystem::path dir_;
    CorpusManifest manifest_;
    std::vector<CorpusEntry> entries_;
    mutable std::vector<GrayImage> cache_;
    mutable std::vector<std::uint8_t> cached_;
};

CorpusDataset load_corpus(const std::filesystem::path& dir);

}  // namespace ganlens
