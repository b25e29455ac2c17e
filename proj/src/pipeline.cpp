#include "ganlens/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "ganlens/errors.hpp"
#include "ganlens/evaluation.hpp"
#include "ganlens/image_io.hpp"
#include "ganlens/rng.hpp"
#include "ganlens/traversal.hpp"
#include "ganlens/util.hpp"

namespace ganlens {

namespace {

constexpr std::uint64_t kStageSeedBase = 7000;

bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

// ------------------------------------------------------------- validation

struct Checker {
    const nlohmann::json& root;
    std::vector<std::string> violations;

    const nlohmann::json* get(const nlohmann::json& obj, const std::string& key) {
        auto it = obj.find(key);
        return it == obj.end() ? nullptr : &*it;
    }

    void check_int(const nlohmann::json& obj, const std::string& path, const std::string& key, long lo,
                   long hi) {
        const auto* v = get(obj, key);
        if (!v) return;
        if (!v->is_number_integer()) {
            violations.push_back(path + key + ": expected an integer");
            return;
        }
        const long x = v->get<long>();
        if (x < lo || x > hi)
            violations.push_back(path + key + ": " + std::to_string(x) + " outside [" + std::to_string(lo) +
                                 ", " + std::to_string(hi) + "]");
    }

    void check_num(const nlohmann::json& obj, const std::string& path, const std::string& key, double lo,
                   double hi, bool lo_open = false, bool hi_open = false) {
        const auto* v = get(obj, key);
        if (!v) return;
        if (!v->is_number()) {
            violations.push_back(path + key + ": expected a number");
            return;
        }
        const double x = v->get<double>();
        const bool bad_lo = lo_open ? x <= lo : x < lo;
        const bool bad_hi = hi_open ? x >= hi : x > hi;
        if (bad_lo || bad_hi)
            violations.push_back(path + key + ": " + std::to_string(x) + " outside " +
                                 (lo_open ? "(" : "[") + std::to_string(lo) + ", " + std::to_string(hi) +
                                 (hi_open ? ")" : "]"));
    }

    void check_bool(const nlohmann::json& obj, const std::string& path, const std::string& key) {
        const auto* v = get(obj, key);
        if (v && !v->is_boolean()) violations.push_back(path + key + ": expected a boolean");
    }

    void check_string(const nlohmann::json& obj, const std::string& path, const std::string& key,
                      const std::vector<std::string>& allowed = {}) {
        const auto* v = get(obj, key);
        if (!v) return;
        if (!v->is_string()) {
            violations.push_back(path + key + ": expected a string");
            return;
        }
        if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), v->get<std::string>()) == allowed.end())
            violations.push_back(path + key + ": unsupported value '" + v->get<std::string>() + "'");
    }

    void check_known_keys(const nlohmann::json& obj, const std::string& path,
                          const std::vector<std::string>& known) {
        if (!obj.is_object()) return;
        for (auto it = obj.begin(); it != obj.end(); ++it)
            if (std::find(known.begin(), known.end(), it.key()) == known.end())
                violations.push_back(path + it.key() + ": unknown field");
    }
};

}  // namespace

std::vector<std::string> validate_config(const nlohmann::json& cfg) {
    Checker c{cfg, {}};
    if (!cfg.is_object()) {
        c.violations.push_back("config root must be a JSON object");
        return c.violations;
    }
    c.check_known_keys(cfg, "", {"profile", "seed", "deterministic", "resolution", "model", "corpus",
                                 "classifier", "gan", "inversion", "traversal", "evaluation"});
    c.check_string(cfg, "", "profile");
    c.check_int(cfg, "", "seed", 0, std::numeric_limits<long>::max());
    c.check_bool(cfg, "", "deterministic");

    if (const auto* v = c.get(cfg, "resolution")) {
        if (!v->is_number_integer()) {
            c.violations.push_back("resolution: expected an integer");
        } else {
            const int r = v->get<int>();
            if (!power_of_two(r))
                c.violations.push_back("resolution: " + std::to_string(r) + " is not a power of two");
            else if (r != 32 && r != 64 && r != 128)
                c.violations.push_back("resolution: " + std::to_string(r) + " not in {32, 64, 128}");
        }
    }

    int resolution = cfg.value("resolution", 64);
    if (const auto* m = c.get(cfg, "model")) {
        c.check_known_keys(*m, "model.", {"d1", "d2", "g_base", "d_base", "c_base", "classifier_preset"});
        c.check_int(*m, "model.", "d1", 1, 4096);
        c.check_int(*m, "model.", "d2", 1, 4096);
        c.check_int(*m, "model.", "g_base", 1, 1024);
        c.check_int(*m, "model.", "d_base", 1, 1024);
        c.check_int(*m, "model.", "c_base", 1, 1024);
        c.check_string(*m, "model.", "classifier_preset", {"vgg-small", "vgg16"});
        if (m->value("classifier_preset", "vgg-small") == std::string("vgg16") && resolution != 128)
            c.violations.push_back("model.classifier_preset: vgg16 requires resolution 128");
    }
    if (const auto* o = c.get(cfg, "corpus")) {
        c.check_known_keys(*o, "corpus.", {"count", "positive_fraction"});
        c.check_int(*o, "corpus.", "count", 2, 10000000);
        c.check_num(*o, "corpus.", "positive_fraction", 0.0, 1.0, true, true);
    }
    if (const auto* o = c.get(cfg, "classifier")) {
        c.check_known_keys(*o, "classifier.",
                           {"epochs", "batch_size", "lr", "weight_decay", "val_fraction", "label_noise",
                            "augment_hflip"});
        c.check_int(*o, "classifier.", "epochs", 1, 1000000);
        c.check_int(*o, "classifier.", "batch_size", 1, 1 << 20);
        c.check_num(*o, "classifier.", "lr", 0.0, 1e9, true);
        c.check_num(*o, "classifier.", "weight_decay", 0.0, 1e9);
        c.check_num(*o, "classifier.", "val_fraction", 0.0, 0.5, true, true);
        c.check_num(*o, "classifier.", "label_noise", 0.0, 1.0, false, true);
        c.check_bool(*o, "classifier.", "augment_hflip");
    }
    if (const auto* o = c.get(cfg, "gan")) {
        c.check_known_keys(*o, "gan.",
                           {"epochs", "batch_size", "g_lr", "d_lr", "cls_weight", "checkpoint_every",
                            "literal_minimax", "corpus_limit"});
        c.check_int(*o, "gan.", "epochs", 1, 1000000);
        c.check_int(*o, "gan.", "batch_size", 1, 1 << 20);
        c.check_num(*o, "gan.", "g_lr", 0.0, 1e9, true);
        c.check_num(*o, "gan.", "d_lr", 0.0, 1e9, true);
        c.check_num(*o, "gan.", "cls_weight", 0.0, 1e9);
        c.check_int(*o, "gan.", "checkpoint_every", 1, 1000000);
        c.check_bool(*o, "gan.", "literal_minimax");
        c.check_int(*o, "gan.", "corpus_limit", 0, 10000000);
    }
    if (const auto* o = c.get(cfg, "inversion")) {
        c.check_known_keys(*o, "inversion.",
                           {"steps", "restarts", "lr", "mse_weight", "bce_weight", "targets",
                            "hard_label_bce"});
        c.check_int(*o, "inversion.", "steps", 1, 1000000);
        c.check_int(*o, "inversion.", "restarts", 1, 10000);
        c.check_num(*o, "inversion.", "lr", 0.0, 1e9, true);
        c.check_num(*o, "inversion.", "mse_weight", 0.0, 1e9);
        c.check_num(*o, "inversion.", "bce_weight", 0.0, 1e9);
        c.check_int(*o, "inversion.", "targets", 1, 100000);
        c.check_bool(*o, "inversion.", "hard_label_bce");
    }
    if (const auto* o = c.get(cfg, "traversal")) {
        c.check_known_keys(*o, "traversal.", {"steps", "gradcam_layer"});
        c.check_int(*o, "traversal.", "steps", 1, 100000);
        c.check_string(*o, "traversal.", "gradcam_layer");
    }
    if (const auto* o = c.get(cfg, "evaluation")) {
        c.check_known_keys(*o, "evaluation.", {"repetitions", "pairs"});
        c.check_int(*o, "evaluation.", "repetitions", 1, 10000000);
        c.check_int(*o, "evaluation.", "pairs", 1, 10000000);
    }
    return c.violations;
}

std::vector<std::string> validate_config_file(const std::filesystem::path& path) {
    return validate_config(load_json(path));
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
    PipelineConfig p;
    p.profile = j.value("profile", p.profile);
    p.seed = j.value("seed", p.seed);
    p.deterministic = j.value("deterministic", p.deterministic);
    p.model = ModelConfig::from_json(j.value("model", nlohmann::json::object()));
    p.model.resolution = j.value("resolution", 64);
    if (const auto it = j.find("corpus"); it != j.end()) {
        p.corpus_count = it->value("count", p.corpus_count);
        p.positive_fraction = it->value("positive_fraction", p.positive_fraction);
    }
    if (const auto it = j.find("classifier"); it != j.end()) {
        p.classifier.epochs = it->value("epochs", p.classifier.epochs);
        p.classifier.batch_size = it->value("batch_size", p.classifier.batch_size);
        p.classifier.lr = it->value("lr", p.classifier.lr);
        p.classifier.weight_decay = it->value("weight_decay", p.classifier.weight_decay);
        p.classifier.val_fraction = it->value("val_fraction", p.classifier.val_fraction);
        p.classifier.label_noise = it->value("label_noise", p.classifier.label_noise);
        p.classifier.augment_hflip = it->value("augment_hflip", p.classifier.augment_hflip);
    }
    if (const auto it = j.find("gan"); it != j.end()) {
        p.gan.epochs = it->value("epochs", p.gan.epochs);
        p.gan.batch_size = it->value("batch_size", p.gan.batch_size);
        p.gan.g_lr = it->value("g_lr", p.gan.g_lr);
        p.gan.d_lr = it->value("d_lr", p.gan.d_lr);
        p.gan.cls_weight = it->value("cls_weight", p.gan.cls_weight);
        p.gan.checkpoint_every = it->value("checkpoint_every", p.gan.checkpoint_every);
        p.gan.literal_minimax = it->value("literal_minimax", p.gan.literal_minimax);
        p.gan.corpus_limit = it->value("corpus_limit", p.gan.corpus_limit);
    }
    p.gan.deterministic = p.deterministic;
    if (const auto it = j.find("inversion"); it != j.end()) {
        p.inversion.steps = it->value("steps", p.inversion.steps);
        p.inversion.restarts = it->value("restarts", p.inversion.restarts);
        p.inversion.lr = it->value("lr", p.inversion.lr);
        p.inversion.mse_weight = it->value("mse_weight", p.inversion.mse_weight);
        p.inversion.bce_weight = it->value("bce_weight", p.inversion.bce_weight);
        p.inversion.hard_label_bce = it->value("hard_label_bce", p.inversion.hard_label_bce);
        p.inversion_targets = it->value("targets", p.inversion_targets);
    }
    if (const auto it = j.find("traversal"); it != j.end()) {
        p.traversal_steps = it->value("steps", p.traversal_steps);
        p.gradcam_layer = it->value("gradcam_layer", p.gradcam_layer);
    }
    if (const auto it = j.find("evaluation"); it != j.end()) {
        p.eval_repetitions = it->value("repetitions", p.eval_repetitions);
        p.eval_pairs = it->value("pairs", p.eval_pairs);
    }
    return p;
}

nlohmann::json PipelineConfig::to_json() const {
    return {
        {"profile", profile},
        {"seed", seed},
        {"deterministic", deterministic},
        {"resolution", model.resolution},
        {"model", model.to_json()},
        {"corpus", {{"count", corpus_count}, {"positive_fraction", positive_fraction}}},
        {"classifier",
         {{"epochs", classifier.epochs},
          {"batch_size", classifier.batch_size},
          {"lr", classifier.lr},
          {"weight_decay", classifier.weight_decay},
          {"val_fraction", classifier.val_fraction},
          {"label_noise", classifier.label_noise},
          {"augment_hflip", classifier.augment_hflip}}},
        {"gan",
         {{"epochs", gan.epochs},
          {"batch_size", gan.batch_size},
          {"g_lr", gan.g_lr},
          {"d_lr", gan.d_lr},
          {"cls_weight", gan.cls_weight},
          {"checkpoint_every", gan.checkpoint_every},
          {"literal_minimax", gan.literal_minimax},
          {"corpus_limit", gan.corpus_limit}}},
        {"inversion",
         {{"steps", inversion.steps},
          {"restarts", inversion.restarts},
          {"lr", inversion.lr},
          {"mse_weight", inversion.mse_weight},
          {"bce_weight", inversion.bce_weight},
          {"hard_label_bce", inversion.hard_label_bce},
          {"targets", inversion_targets}}},
        {"traversal", {{"steps", traversal_steps}, {"gradcam_layer", gradcam_layer}}},
        {"evaluation", {{"repetitions", eval_repetitions}, {"pairs", eval_pairs}}},
    };
}

std::uint64_t stage_seed(std::uint64_t master, int stage_index) {
    return mix_seed(master, kStageSeedBase + static_cast<std::uint64_t>(stage_index));
}

nlohmann::json StageRecord::to_json() const {
    return {{"name", name},     {"seed", seed},     {"cached", cached},
            {"duration_s", duration_s}, {"inputs", inputs}, {"outputs", outputs}};
}

nlohmann::json RunManifest::to_json() const {
    nlohmann::json j{{"tool_version", tool_version},
                     {"master_seed", master_seed},
                     {"status", status},
                     {"created_at", created_at},
                     {"config", config_echo},
                     {"stages", nlohmann::json::array()}};
    if (!failed_stage.empty()) {
        j["failed_stage"] = failed_stage;
        j["error"] = error;
    }
    for (const auto& s : stages) j["stages"].push_back(s.to_json());
    return j;
}

namespace {

// aggregate hash over files matching "<dir>/*<suffix>", sorted by name
std::string hash_glob(const std::filesystem::path& workdir, const std::string& rel_glob) {
    const auto star = rel_glob.find('*');
    const std::filesystem::path dir = workdir / rel_glob.substr(0, star);
    const std::string suffix = rel_glob.substr(star + 1);
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(dir))
        for (const auto& e : std::filesystem::directory_iterator(dir)) {
            const std::string name = e.path().filename().string();
            if (e.is_regular_file() && name.size() >= suffix.size() &&
                name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
                files.push_back(e.path());
        }
    std::sort(files.begin(), files.end());
    std::string acc;
    for (const auto& f : files) acc += f.filename().string() + ":" + sha256_file(f) + "\n";
    return sha256_hex(acc);
}

std::string hash_output(const std::filesystem::path& workdir, const std::string& rel) {
    if (rel.find('*') != std::string::npos) return hash_glob(workdir, rel);
    const auto p = workdir / rel;
    if (!std::filesystem::exists(p)) throw IoError("expected artifact missing: " + p.string());
    return sha256_file(p);
}

struct LockFile {
    std::filesystem::path path;
    explicit LockFile(const std::filesystem::path& workdir) : path(workdir / ".lock") {
        std::filesystem::create_directories(workdir);
        if (std::filesystem::exists(path))
            throw IoError("workdir is locked by another pipeline run (" + path.string() +
                          "); remove the stale .lock to proceed");
        std::ofstream out(path);
        out << "ganlens\n";
    }
    ~LockFile() {
        std::error_code ec;
        std::filesystem::remove(path, ec);
    }
};

class StageRunner {
public:
    StageRunner(std::filesystem::path workdir, RunManifest& manifest)
        : workdir_(std::move(workdir)), manifest_(manifest) {
        std::filesystem::create_directories(workdir_ / "stages");
    }

    // fn must create every path listed in `outputs` (relative, '*' = aggregate)
    void run(const std::string& name, std::uint64_t seed, const nlohmann::json& fingerprint_src,
             const std::vector<std::string>& outputs, const std::function<void()>& fn,
             const std::map<std::string, std::string>& inputs) {
        StageRecord rec;
        rec.name = name;
        rec.seed = seed;
        rec.inputs = inputs;
        const std::string input_hash = sha256_hex(fingerprint_src.dump());
        const auto state_path = workdir_ / "stages" / (name + ".json");

        const auto t0 = std::chrono::steady_clock::now();
        bool cached = false;
        if (std::filesystem::exists(state_path)) {
            try {
                const auto st = load_json(state_path);
                if (st.value("input_hash", "") == input_hash) {
                    cached = true;
                    const auto& outs = st.at("outputs");
                    for (auto it = outs.begin(); it != outs.end(); ++it) {
                        if (hash_output(workdir_, it.key()) != it.value().get<std::string>()) {
                            cached = false;
                            break;
                        }
                        rec.outputs[it.key()] = it.value();
                    }
                }
            } catch (const std::exception&) {
                cached = false;
            }
        }

        if (!cached) {
            rec.outputs.clear();
            log_info("stage " + name + ": running");
            fn();
            for (const auto& rel : outputs) rec.outputs[rel] = hash_output(workdir_, rel);
            nlohmann::json st{{"input_hash", input_hash}, {"outputs", rec.outputs}};
            save_json(state_path, st);
        } else {
            log_info("stage " + name + ": cached, skipping");
        }
        rec.cached = cached;
        rec.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        manifest_.stages.push_back(rec);
    }

    std::string last_output(const std::string& stage, const std::string& rel) const {
        for (const auto& s : manifest_.stages)
            if (s.name == stage) {
                const auto it = s.outputs.find(rel);
                if (it != s.outputs.end()) return it->second;
            }
        throw IoError("stage output not recorded: " + stage + "/" + rel);
    }

    const std::filesystem::path& workdir() const { return workdir_; }

private:
    std::filesystem::path workdir_;
    RunManifest& manifest_;
};

void write_inversion_artifacts(const std::filesystem::path& dir, const Tensor& original,
                               const InversionResult& inv) {
    std::filesystem::create_directories(dir);
    write_png(dir / "original.png", tensor_to_gray(original));
    write_png(dir / "recon.png", tensor_to_gray(inv.reconstruction));
    nlohmann::json j = inv.latents.to_json();
    j["final_loss"] = inv.final_loss;
    j["mse"] = inv.mse_term;
    j["bce"] = inv.bce_term;
    j["bce_floor"] = inv.bce_floor;
    j["loss_above_floor"] = inv.loss_above_floor;
    j["classifier_match"] = inv.classifier_match;
    j["best_restart"] = inv.best_restart;
    j["restarts_diverged"] = inv.restarts_diverged;
    j["psnr_db"] = psnr_db(inv.reconstruction, original);
    save_json(dir / "latents.json", j);
    std::ostringstream csv;
    csv << "step,total,mse,bce\n";
    for (const auto& s : inv.trajectory) csv << s.step << "," << s.total << "," << s.mse << "," << s.bce << "\n";
    write_text_file(dir / "loss_curve.csv", csv.str());
}

}  // namespace

RunManifest run_pipeline(const std::filesystem::path& config_path, const std::filesystem::path& workdir) {
    const nlohmann::json raw = load_json(config_path);
    const auto violations = validate_config(raw);
    if (!violations.empty()) {
        std::string msg = "invalid pipeline config:";
        for (const auto& v : violations) msg += "\n  - " + v;
        throw ConfigError(msg);
    }
    const PipelineConfig cfg = PipelineConfig::from_json(raw);
    cfg.model.validate();

    LockFile lock(workdir);

    RunManifest manifest;
    manifest.tool_version = GANLENS_VERSION;
    manifest.master_seed = cfg.seed;
    manifest.config_echo = cfg.to_json();
    manifest.created_at = cfg.deterministic ? "1970-01-01T00:00:00Z" : iso8601_now();
    manifest.status = "partial";

    StageRunner runner(workdir, manifest);
    const std::string fixed_time = cfg.deterministic ? "1970-01-01T00:00:00Z" : "";

    auto finalize = [&](const std::string& failed, const std::string& error) {
        manifest.status = failed.empty() ? "complete" : "partial";
        manifest.failed_stage = failed;
        manifest.error = error;
        save_json(workdir / "run_manifest.json", manifest.to_json());
    };

    int stage_idx = 0;
    std::string current_stage;
    try {
        // ----- corpus
        current_stage = kStageNames[0];
        const std::uint64_t seed0 = stage_seed(cfg.seed, stage_idx++);
        runner.run(
            current_stage, seed0,
            {{"count", cfg.corpus_count},
             {"positive_fraction", cfg.positive_fraction},
             {"resolution", cfg.model.resolution},
             {"seed", seed0},
             {"generator_version", kGeneratorVersion}},
            {"corpus/manifest.json", "corpus/index.jsonl", "corpus/*.png"},
            [&] {
                build_corpus(cfg.corpus_count, cfg.positive_fraction, seed0, cfg.model.resolution,
                             runner.workdir() / "corpus");
            },
            {});

        // ----- classifier
        current_stage = kStageNames[1];
        const std::uint64_t seed1 = stage_seed(cfg.seed, stage_idx++);
        TrainConfig tc = cfg.classifier;
        tc.seed = seed1;
        runner.run(
            current_stage, seed1,
            {{"classifier",
              {tc.epochs, tc.batch_size, tc.lr, tc.weight_decay, tc.val_fraction, tc.label_noise,
               tc.augment_hflip}},
             {"model", cfg.model.to_json()},
             {"seed", seed1},
             {"deterministic", cfg.deterministic},
             {"corpus", runner.last_output("corpus", "corpus/*.png")}},
            {"classifier/c.ckpt", "classifier/c.ckpt.json", "classifier/c.ckpt.metrics.csv"},
            [&] {
                const CorpusDataset corpus = load_corpus(runner.workdir() / "corpus");
                train_classifier(corpus, cfg.model, tc, runner.workdir() / "classifier" / "c.ckpt");
                if (cfg.deterministic) {
                    // pin the manifest timestamp for bit-reproducible artifacts
                    auto m = load_json(runner.workdir() / "classifier" / "c.ckpt.json");
                    m["created_at"] = "1970-01-01T00:00:00Z";
                    save_json(runner.workdir() / "classifier" / "c.ckpt.json", m);
                }
            },
            {{"corpus", runner.last_output("corpus", "corpus/*.png")}});

        // ----- gan
        current_stage = kStageNames[2];
        const std::uint64_t seed2 = stage_seed(cfg.seed, stage_idx++);
        GanTrainConfig gc = cfg.gan;
        gc.seed = seed2;
        const std::string classifier_hash = runner.last_output("classifier", "classifier/c.ckpt");
        runner.run(
            current_stage, seed2,
            {{"gan",
              {gc.epochs, gc.batch_size, gc.g_lr, gc.d_lr, gc.cls_weight, gc.checkpoint_every,
               gc.literal_minimax, gc.corpus_limit}},
             {"model", cfg.model.to_json()},
             {"seed", seed2},
             {"deterministic", cfg.deterministic},
             {"corpus", runner.last_output("corpus", "corpus/*.png")},
             {"classifier", classifier_hash}},
            {"gan/g.ckpt", "gan/g.ckpt.json", "gan/d.ckpt", "gan/d.ckpt.json", "gan/losses.csv"},
            [&] {
                const CorpusDataset corpus = load_corpus(runner.workdir() / "corpus");
                const GanTrainResult r = train_gan(corpus, runner.workdir() / "classifier" / "c.ckpt",
                                                   cfg.model, gc, runner.workdir() / "gan");
                if (r.classifier_hash_before != r.classifier_hash_after)
                    throw NumericError("frozen classifier contract violated");
            },
            {{"corpus", runner.last_output("corpus", "corpus/*.png")}, {"classifier", classifier_hash}});

        // ----- invert
        current_stage = kStageNames[3];
        const std::uint64_t seed3 = stage_seed(cfg.seed, stage_idx++);
        std::vector<std::string> invert_outputs;
        for (int t = 0; t < cfg.inversion_targets; ++t) {
            char dir[32];
            std::snprintf(dir, sizeof(dir), "invert/target_%02d", t);
            for (const char* f : {"latents.json", "recon.png", "original.png", "loss_curve.csv"})
                invert_outputs.push_back(std::string(dir) + "/" + f);
        }
        runner.run(
            current_stage, seed3,
            {{"inversion",
              {cfg.inversion.steps, cfg.inversion.restarts, cfg.inversion.lr, cfg.inversion.mse_weight,
               cfg.inversion.bce_weight, cfg.inversion.hard_label_bce, cfg.inversion_targets}},
             {"seed", seed3},
             {"g", runner.last_output("gan", "gan/g.ckpt")},
             {"classifier", classifier_hash},
             {"corpus", runner.last_output("corpus", "corpus/index.jsonl")}},
            invert_outputs,
            [&] {
                const CorpusDataset corpus = load_corpus(runner.workdir() / "corpus");
                Generator gen = load_generator(runner.workdir() / "gan" / "g.ckpt");
                Classifier clf = load_classifier(runner.workdir() / "classifier" / "c.ckpt");
                int done = 0;
                for (int i = 0; i < corpus.size() && done < cfg.inversion_targets; ++i) {
                    if (corpus.entries()[static_cast<std::size_t>(i)].label != 1) continue;
                    const ImageBatch b = corpus.batch(std::vector<int>{i});
                    InversionConfig ic = cfg.inversion;
                    ic.seed = mix_seed(seed3, static_cast<std::uint64_t>(done));
                    const InversionResult inv = invert(b.pixels, gen, clf, ic);
                    char dir[32];
                    std::snprintf(dir, sizeof(dir), "target_%02d", done);
                    write_inversion_artifacts(runner.workdir() / "invert" / dir, b.pixels, inv);
                    ++done;
                }
                if (done < cfg.inversion_targets)
                    throw ValidationError("corpus has fewer positive images than inversion targets");
            },
            {{"g", runner.last_output("gan", "gan/g.ckpt")}, {"classifier", classifier_hash}});

        // ----- traverse
        current_stage = kStageNames[4];
        const std::uint64_t seed4 = stage_seed(cfg.seed, stage_idx++);
        std::vector<std::string> traverse_outputs;
        for (int t = 0; t < cfg.inversion_targets; ++t) {
            char dir[32];
            std::snprintf(dir, sizeof(dir), "traverse/target_%02d", t);
            for (const char* f : {"report.json", "trace.csv", "diff_map.png", "gradcam.png", "strip.png"})
                traverse_outputs.push_back(std::string(dir) + "/" + f);
            traverse_outputs.push_back(std::string(dir) + "/trace/*.png");
        }
        nlohmann::json invert_hashes;
        for (const auto& o : invert_outputs)
            if (o.find("latents.json") != std::string::npos)
                invert_hashes[o] = runner.last_output("invert", o);
        runner.run(
            current_stage, seed4,
            {{"traversal", {cfg.traversal_steps, cfg.gradcam_layer}},
             {"g", runner.last_output("gan", "gan/g.ckpt")},
             {"classifier", classifier_hash},
             {"latents", invert_hashes}},
            traverse_outputs,
            [&] {
                Generator gen = load_generator(runner.workdir() / "gan" / "g.ckpt");
                Classifier clf = load_classifier(runner.workdir() / "classifier" / "c.ckpt");
                for (int t = 0; t < cfg.inversion_targets; ++t) {
                    char dir[32];
                    std::snprintf(dir, sizeof(dir), "target_%02d", t);
                    const auto lat = LatentPair::from_json(
                        load_json(runner.workdir() / "invert" / dir / "latents.json"));
                    const InterpolationTrace trace =
                        traverse(lat.z1, lat.z2, cfg.traversal_steps, gen, clf);
                    const Tensor original =
                        gray_to_tensor(read_png(runner.workdir() / "invert" / dir / "original.png"));
                    const SaliencyMap cam = grad_cam(clf, original, 1, cfg.gradcam_layer);
                    compare_report(trace, cam, runner.workdir() / "traverse" / dir);
                }
            },
            {{"g", runner.last_output("gan", "gan/g.ckpt")}, {"classifier", classifier_hash}});

        // ----- evaluate
        current_stage = kStageNames[5];
        const std::uint64_t seed5 = stage_seed(cfg.seed, stage_idx++);
        runner.run(
            current_stage, seed5,
            {{"evaluation", {cfg.eval_repetitions, cfg.eval_pairs, cfg.traversal_steps}},
             {"seed", seed5},
             {"deterministic", cfg.deterministic},
             {"g", runner.last_output("gan", "gan/g.ckpt")},
             {"classifier", classifier_hash}},
            {"evaluate/report.json"},
            [&] {
                Generator gen = load_generator(runner.workdir() / "gan" / "g.ckpt");
                Classifier clf = load_classifier(runner.workdir() / "classifier" / "c.ckpt");
                ExperimentReport report;
                ConsistencyConfig cc;
                cc.repetitions = cfg.eval_repetitions;
                cc.seed = seed5;
                report.consistency = consistency_experiment(gen, clf, cc);
                report.monotonicity =
                    monotonicity_suite(gen, clf, cfg.eval_pairs, cfg.traversal_steps, mix_seed(seed5, 1));
                report.config_echo = {{"repetitions", cfg.eval_repetitions},
                                      {"pairs", cfg.eval_pairs},
                                      {"steps", cfg.traversal_steps},
                                      {"seed", seed5}};
                report.generator_sha256 = runner.last_output("gan", "gan/g.ckpt");
                report.classifier_sha256 = classifier_hash;
                report.timestamp = cfg.deterministic ? "1970-01-01T00:00:00Z" : iso8601_now();
                report.validate();
                save_json(runner.workdir() / "evaluate" / "report.json", report.to_json());
            },
            {{"g", runner.last_output("gan", "gan/g.ckpt")}, {"classifier", classifier_hash}});
    } catch (const std::exception& e) {
        finalize(current_stage, e.what());
        throw StageFailure(current_stage, e.what());
    }

    finalize("", "");
    return manifest;
}

std::vector<std::string> verify_manifest(const std::filesystem::path& workdir) {
    std::vector<std::string> mismatches;
    const auto j = load_json(workdir / "run_manifest.json");
    for (const auto& stage : j.at("stages")) {
        for (auto it = stage.at("outputs").begin(); it != stage.at("outputs").end(); ++it) {
            try {
                if (hash_output(workdir, it.key()) != it.value().get<std::string>())
                    mismatches.push_back(stage.at("name").get<std::string>() + ": " + it.key());
            } catch (const std::exception&) {
                mismatches.push_back(stage.at("name").get<std::string>() + ": " + it.key() + " (missing)");
            }
        }
    }
    return mismatches;
}

}  // namespace ganlens
