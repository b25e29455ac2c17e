#include "ganlens/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "ganlens/errors.hpp"
#include "ganlens/rng.hpp"
#include "ganlens/util.hpp"

namespace ganlens {

namespace {

constexpr int kHarmonics[3] = {2, 3, 5};
constexpr double kErode = 0.94;   // interior mask boundary, in units of the modulated radius
constexpr double kAAWidth = 0.8;  // anti-alias half-width in pixels

bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

// modulated elliptical distance: <1 inside, 1 on the boundary
double lung_distance(const EllipseParams& e, double noise_amp, const double* phases, double x, double y) {
    const double dx = x - e.cx, dy = y - e.cy;
    const double c = std::cos(e.rot), s = std::sin(e.rot);
    const double lx = dx * c + dy * s;
    const double ly = -dx * s + dy * c;
    const double d = std::sqrt((lx / e.ax) * (lx / e.ax) + (ly / e.ay) * (ly / e.ay));
    const double theta = std::atan2(ly, lx);
    double m = 1.0;
    for (int k = 0; k < 3; ++k) m += noise_amp * std::sin(kHarmonics[k] * theta + phases[k]);
    return d / m;
}

double min_lung_distance(const StructureParams& s, double x, double y) {
    return std::min(lung_distance(s.left, s.noise_amp, s.noise_phase, x, y),
                    lung_distance(s.right, s.noise_amp, s.noise_phase, x, y));
}

double body_shade(const StructureParams& s, double x, double y) {
    const double rho2 = (x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5);
    return s.body_level + s.grad_x * (x - 0.5) + s.grad_y * (y - 0.5) + s.vignette * (rho2 - 0.25);
}

}  // namespace

void ImageBatch::validate() const {
    if (pixels.rank() != 4 || pixels.dim(1) != 1) throw ShapeError("ImageBatch pixels must be [N,1,H,W]");
    const int h = pixels.dim(2), w = pixels.dim(3);
    if (h != w) throw ShapeError("ImageBatch requires H == W");
    if (!power_of_two(h)) throw ValidationError("ImageBatch resolution must be a power of two");
    if (pixels.min() < -1.0f || pixels.max() > 1.0f)
        throw ValidationError("ImageBatch pixel values must lie in [-1, 1]");
    if (labels) {
        if (static_cast<int>(labels->size()) != pixels.dim(0))
            throw ValidationError("ImageBatch labels length must equal batch size");
        for (int l : *labels)
            if (l != 0 && l != 1) throw ValidationError("ImageBatch labels must be 0 or 1");
    }
}

void check_resolution(int resolution) {
    if (resolution != 32 && resolution != 64 && resolution != 128)
        throw ConfigError("unsupported resolution " + std::to_string(resolution) + " (expected 32, 64 or 128)");
}

nlohmann::json SceneSpec::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["class_label"] = class_label;
    auto ell = [](const EllipseParams& e) {
        return nlohmann::json{{"cx", e.cx}, {"cy", e.cy}, {"ax", e.ax}, {"ay", e.ay}, {"rot", e.rot}};
    };
    j["structure"] = {
        {"left", ell(structure.left)},
        {"right", ell(structure.right)},
        {"noise_amp", structure.noise_amp},
        {"noise_phase", {structure.noise_phase[0], structure.noise_phase[1], structure.noise_phase[2]}},
        {"body_level", structure.body_level},
        {"grad_x", structure.grad_x},
        {"grad_y", structure.grad_y},
        {"vignette", structure.vignette},
    };
    j["opacities"] = nlohmann::json::array();
    for (const auto& b : opacities)
        j["opacities"].push_back({{"cx", b.cx}, {"cy", b.cy}, {"radius", b.radius}, {"peak", b.peak}, {"falloff", b.falloff}});
    return j;
}

SceneSpec SceneSpec::from_json(const nlohmann::json& j) {
    SceneSpec s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.class_label = j.at("class_label").get<int>();
    auto ell = [](const nlohmann::json& e) {
        return EllipseParams{e.at("cx"), e.at("cy"), e.at("ax"), e.at("ay"), e.at("rot")};
    };
    const auto& st = j.at("structure");
    s.structure.left = ell(st.at("left"));
    s.structure.right = ell(st.at("right"));
    s.structure.noise_amp = st.at("noise_amp");
    for (int k = 0; k < 3; ++k) s.structure.noise_phase[k] = st.at("noise_phase").at(k);
    s.structure.body_level = st.at("body_level");
    s.structure.grad_x = st.at("grad_x");
    s.structure.grad_y = st.at("grad_y");
    s.structure.vignette = st.at("vignette");
    for (const auto& b : j.at("opacities"))
        s.opacities.push_back({b.at("cx"), b.at("cy"), b.at("radius"), b.at("peak"), b.at("falloff")});
    return s;
}

bool point_in_lung(const StructureParams& s, double x, double y, double erode) {
    return min_lung_distance(s, x, y) <= erode;
}

SceneSpec sample_scene(std::uint64_t seed, int class_label) {
    if (class_label != 0 && class_label != 1)
        throw ConfigError("class_label must be 0 or 1, got " + std::to_string(class_label));
    SceneSpec spec;
    spec.seed = seed;
    spec.class_label = class_label;

    // structure stream: identical for both classes of the same seed
    Rng srng(mix_seed(seed, 0x5747));
    StructureParams& st = spec.structure;
    const double cy = 0.52 + srng.uniform(-0.03, 0.03);
    const double off = 0.235 + srng.uniform(-0.02, 0.02);
    st.left = {0.5 - off, cy + srng.uniform(-0.015, 0.015), srng.uniform(0.13, 0.175),
               srng.uniform(0.26, 0.33), srng.uniform(0.06, 0.16)};
    st.right = {0.5 + off, cy + srng.uniform(-0.015, 0.015), srng.uniform(0.13, 0.175),
                srng.uniform(0.26, 0.33), -srng.uniform(0.06, 0.16)};
    st.noise_amp = srng.uniform(0.008, 0.022);
    for (int k = 0; k < 3; ++k) st.noise_phase[k] = srng.uniform(0.0, 2.0 * M_PI);
    st.body_level = 0.55 + srng.uniform(-0.04, 0.04);
    st.grad_x = srng.uniform(-0.05, 0.05);
    st.grad_y = srng.uniform(-0.05, 0.05);
    st.vignette = srng.uniform(-0.10, 0.02);

    if (class_label == 1) {
        // opacity stream: independent of the structure stream
        Rng orng(mix_seed(seed, 0xB10B));
        const int n_blobs = 1 + static_cast<int>(orng.uniform_int(4));
        for (int b = 0; b < n_blobs; ++b) {
            BlobParams blob;
            // rejection-sample a center well inside one lung
            for (;;) {
                const bool left = orng.uniform() < 0.5;
                const EllipseParams& e = left ? st.left : st.right;
                const double t = std::sqrt(orng.uniform());
                const double phi = orng.uniform(0.0, 2.0 * M_PI);
                const double ex = 0.75 * t * std::cos(phi) * e.ax;
                const double ey = 0.75 * t * std::sin(phi) * e.ay;
                const double c = std::cos(e.rot), s = std::sin(e.rot);
                blob.cx = e.cx + ex * c - ey * s;
                blob.cy = e.cy + ex * s + ey * c;
                if (point_in_lung(st, blob.cx, blob.cy, 0.80)) break;
            }
            blob.radius = orng.uniform(0.05, 0.11);
            blob.peak = orng.uniform(0.2, 0.8);
            blob.falloff = orng.uniform(1.5, 3.0);
            spec.opacities.push_back(blob);
        }
    }
    return spec;
}

Tensor render_scene(const SceneSpec& spec, int resolution) {
    check_resolution(resolution);
    const int R = resolution;
    const StructureParams& st = spec.structure;
    Tensor img({1, 1, R, R});
    for (int py = 0; py < R; ++py) {
        const double y = (py + 0.5) / R;
        for (int px = 0; px < R; ++px) {
            const double x = (px + 0.5) / R;
            const double d = min_lung_distance(st, x, y);
            // signed distance from boundary, roughly in pixels
            const double sd = (d - 1.0) * 0.5 * (st.left.ax + st.left.ay) * R;
            const double t = std::clamp(0.5 - sd / (2.0 * kAAWidth), 0.0, 1.0);
            double v = body_shade(st, x, y) * (1.0 - t) + kLungLevel * t;
            for (const auto& blob : spec.opacities) {
                const double bd = std::hypot(x - blob.cx, y - blob.cy);
                if (bd < blob.radius) {
                    const double u = 1.0 - (bd / blob.radius) * (bd / blob.radius);
                    v += blob.peak * std::pow(u, blob.falloff) * t;
                }
            }
            const int q = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            img.at(0, 0, py, px) = static_cast<float>(q) / 255.0f * 2.0f - 1.0f;
        }
    }
    return img;
}

std::pair<Tensor, SceneSpec> generate_sample(std::uint64_t seed, int class_label, int resolution) {
    check_resolution(resolution);
    SceneSpec spec = sample_scene(seed, class_label);
    return {render_scene(spec, resolution), spec};
}

std::vector<std::uint8_t> lung_mask(const SceneSpec& spec, int resolution) {
    check_resolution(resolution);
    const int R = resolution;
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(R) * R, 0);
    for (int py = 0; py < R; ++py) {
        const double y = (py + 0.5) / R;
        for (int px = 0; px < R; ++px) {
            const double x = (px + 0.5) / R;
            if (point_in_lung(spec.structure, x, y, kErode)) mask[static_cast<std::size_t>(py) * R + px] = 1;
        }
    }
    return mask;
}

nlohmann::json CorpusManifest::to_json() const {
    return {
        {"generator_version", generator_version}, {"seed", seed},
        {"count", count},                         {"resolution", resolution},
        {"positive_fraction", positive_fraction}, {"positives", positives},
        {"negatives", negatives},
    };
}

CorpusManifest CorpusManifest::from_json(const nlohmann::json& j) {
    CorpusManifest m;
    m.generator_version = j.at("generator_version");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.count = j.at("count");
    m.resolution = j.at("resolution");
    m.positive_fraction = j.at("positive_fraction");
    m.positives = j.at("positives");
    m.negatives = j.at("negatives");
    return m;
}

CorpusManifest build_corpus(int count, double positive_fraction, std::uint64_t seed, int resolution,
                            const std::filesystem::path& out_dir) {
    check_resolution(resolution);
    if (count < 2) throw ConfigError("corpus count must be >= 2");
    if (!(positive_fraction > 0.0 && positive_fraction < 1.0))
        throw ConfigError("positive_fraction must lie strictly between 0 and 1");

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create corpus directory " + out_dir.string() + ": " + ec.message());

    const int n_pos = static_cast<int>(std::lround(count * positive_fraction));
    std::vector<int> labels(static_cast<std::size_t>(count), 0);
    std::fill(labels.begin(), labels.begin() + n_pos, 1);
    Rng label_rng(mix_seed(seed, 0xC0DE));
    label_rng.shuffle(labels);

    std::string index;
    for (int i = 0; i < count; ++i) {
        const std::uint64_t sample_seed = mix_seed(seed, 1000 + static_cast<std::uint64_t>(i));
        const SceneSpec spec = sample_scene(sample_seed, labels[static_cast<std::size_t>(i)]);
        const Tensor img = render_scene(spec, resolution);
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05d.png", i);
        write_png(out_dir / name, tensor_to_gray(img));
        nlohmann::json line = {{"path", name}, {"label", labels[static_cast<std::size_t>(i)]}, {"seed", sample_seed}};
        index += line.dump() + "\n";
    }
    write_text_file(out_dir / "index.jsonl", index);

    CorpusManifest m;
    m.generator_version = kGeneratorVersion;
    m.seed = seed;
    m.count = count;
    m.resolution = resolution;
    m.positive_fraction = positive_fraction;
    m.positives = n_pos;
    m.negatives = count - n_pos;
    save_json(out_dir / "manifest.json", m.to_json());
    return m;
}

CorpusDataset::CorpusDataset(const std::filesystem::path& dir) : dir_(dir) {
    const auto index_path = dir / "index.jsonl";
    if (!std::filesystem::exists(index_path)) throw FormatError("missing index file: " + index_path.string());
    manifest_ = CorpusManifest::from_json(load_json(dir / "manifest.json"));

    std::ifstream in(index_path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            entries_.push_back({j.at("path").get<std::string>(), j.at("label").get<int>(),
                                j.at("seed").get<std::uint64_t>()});
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("corrupt index entry at " + index_path.string() + ":" +
                              std::to_string(line_no) + ": " + e.what());
        }
        if (entries_.back().label != 0 && entries_.back().label != 1)
            throw FormatError("corrupt index entry at " + index_path.string() + ":" +
                              std::to_string(line_no) + ": label out of {0,1}");
    }
    cache_.resize(entries_.size());
    cached_.assign(entries_.size(), 0);
}

std::vector<int> CorpusDataset::shuffled_indices(std::uint64_t shuffle_seed) const {
    std::vector<int> idx(entries_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    Rng rng(mix_seed(shuffle_seed, 0x1D0));
    rng.shuffle(idx);
    return idx;
}

ImageBatch CorpusDataset::batch(const int* indices, int n) const {
    const int R = manifest_.resolution;
    ImageBatch b;
    b.pixels = Tensor({n, 1, R, R});
    b.labels = std::vector<int>(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int idx = indices[i];
        if (idx < 0 || idx >= size()) throw ShapeError("corpus index out of range");
        const auto& e = entries_[static_cast<std::size_t>(idx)];
        if (!cached_[static_cast<std::size_t>(idx)]) {
            GrayImage img = read_png(dir_ / e.path);
            if (img.width != R || img.height != R)
                throw FormatError("corpus image " + e.path + " has resolution " + std::to_string(img.width) +
                                  ", manifest says " + std::to_string(R));
            cache_[static_cast<std::size_t>(idx)] = std::move(img);
            cached_[static_cast<std::size_t>(idx)] = 1;
        }
        const GrayImage& img = cache_[static_cast<std::size_t>(idx)];
        float* dst = b.pixels.data() + static_cast<std::size_t>(i) * R * R;
        for (std::size_t k = 0; k < img.pixels.size(); ++k)
            dst[k] = static_cast<float>(img.pixels[k]) / 255.0f * 2.0f - 1.0f;
        (*b.labels)[static_cast<std::size_t>(i)] = e.label;
    }
    return b;
}

ImageBatch CorpusDataset::batch(const std::vector<int>& indices) const {
    return batch(indices.data(), static_cast<int>(indices.size()));
}

ImageBatch CorpusDataset::all() const {
    std::vector<int> idx(entries_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    return batch(idx);
}

CorpusDataset load_corpus(const std::filesystem::path& dir) { return CorpusDataset(dir); }

}  // namespace ganlens
