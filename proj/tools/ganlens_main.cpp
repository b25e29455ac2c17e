// ganlens command line: synthetic corpus generation, classifier/GAN training,
// latent inversion, z2 traversal and the evaluation protocols, plus the
// end-to-end pipeline driver.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "ganlens/classifier_training.hpp"
#include "ganlens/corpus.hpp"
#include "ganlens/errors.hpp"
#include "ganlens/evaluation.hpp"
#include "ganlens/gan_training.hpp"
#include "ganlens/image_io.hpp"
#include "ganlens/inversion.hpp"
#include "ganlens/models.hpp"
#include "ganlens/pipeline.hpp"
#include "ganlens/traversal.hpp"
#include "ganlens/util.hpp"

namespace fs = std::filesystem;
using namespace ganlens;

namespace {

void save_inversion_outputs(const fs::path& out_dir, const Tensor& original, const InversionResult& inv) {
    fs::create_directories(out_dir);
    write_png(out_dir / "recon.png", tensor_to_gray(inv.reconstruction));
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
    save_json(out_dir / "latents.json", j);
    std::string csv = "step,total,mse,bce\n";
    for (const auto& s : inv.trajectory)
        csv += std::to_string(s.step) + "," + std::to_string(s.total) + "," + std::to_string(s.mse) + "," +
               std::to_string(s.bce) + "\n";
    write_text_file(out_dir / "loss_curve.csv", csv);
}

void add_model_options(CLI::App* cmd, ModelConfig& mc) {
    cmd->add_option("--resolution", mc.resolution, "image resolution (32, 64 or 128)");
    cmd->add_option("--d1", mc.d1, "structural latent dimension");
    cmd->add_option("--d2", mc.d2, "class latent dimension");
    cmd->add_option("--g-base", mc.g_base, "generator channel base");
    cmd->add_option("--d-base", mc.d_base, "discriminator channel base");
    cmd->add_option("--c-base", mc.c_base, "classifier channel base");
    cmd->add_option("--preset", mc.classifier_preset, "classifier preset (vgg-small, vgg16)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GAN-based classifier explanation pipeline on a synthetic lung corpus"};
    app.require_subcommand(1);

    // ---- synth
    auto* synth = app.add_subcommand("synth", "generate the synthetic corpus");
    std::string synth_out;
    int synth_count = 2000, synth_res = 64;
    double synth_pf = 0.5;
    std::uint64_t synth_seed = 0;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--count", synth_count, "number of images");
    synth->add_option("--positive-fraction", synth_pf, "fraction of class-1 images");
    synth->add_option("--seed", synth_seed, "corpus seed");
    synth->add_option("--resolution", synth_res, "image resolution");

    // ---- train-classifier
    auto* trc = app.add_subcommand("train-classifier", "train the frozen classifier");
    std::string trc_corpus, trc_out;
    TrainConfig trc_cfg;
    ModelConfig trc_model;
    trc->add_option("--corpus", trc_corpus, "corpus directory")->required();
    trc->add_option("--out", trc_out, "checkpoint path")->required();
    trc->add_option("--epochs", trc_cfg.epochs, "training epochs");
    trc->add_option("--batch", trc_cfg.batch_size, "batch size");
    trc->add_option("--lr", trc_cfg.lr, "learning rate");
    trc->add_option("--weight-decay", trc_cfg.weight_decay, "L2 penalty");
    trc->add_option("--val-fraction", trc_cfg.val_fraction, "held-out fraction");
    trc->add_option("--seed", trc_cfg.seed, "training seed");
    trc->add_option("--label-noise", trc_cfg.label_noise, "training label flip probability");
    trc->add_flag("--hflip", trc_cfg.augment_hflip, "horizontal flip augmentation");
    add_model_options(trc, trc_model);

    // ---- train-gan
    auto* trg = app.add_subcommand("train-gan", "train G and D against the frozen classifier");
    std::string trg_corpus, trg_clf, trg_out;
    GanTrainConfig trg_cfg;
    ModelConfig trg_model;
    trg->add_option("--corpus", trg_corpus, "corpus directory")->required();
    trg->add_option("--classifier", trg_clf, "classifier checkpoint")->required();
    trg->add_option("--out", trg_out, "output directory")->required();
    trg->add_option("--epochs", trg_cfg.epochs, "training epochs");
    trg->add_option("--batch", trg_cfg.batch_size, "batch size");
    trg->add_option("--g-lr", trg_cfg.g_lr, "generator learning rate");
    trg->add_option("--d-lr", trg_cfg.d_lr, "discriminator learning rate");
    trg->add_option("--cls-weight", trg_cfg.cls_weight, "classifier feedback weight");
    trg->add_option("--seed", trg_cfg.seed, "training seed");
    trg->add_option("--checkpoint-every", trg_cfg.checkpoint_every, "snapshot cadence in epochs");
    trg->add_option("--corpus-limit", trg_cfg.corpus_limit, "train on the first N corpus images");
    trg->add_flag("--literal-minimax", trg_cfg.literal_minimax,
                  "use the literal log(1-sigma) generator objective");
    trg->add_flag("--deterministic", trg_cfg.deterministic, "pin timestamps for bit-reproducible artifacts");
    add_model_options(trg, trg_model);

    // ---- invert
    auto* inv = app.add_subcommand("invert", "reconstruct latents for an image");
    std::string inv_image, inv_g, inv_c, inv_out;
    InversionConfig inv_cfg;
    inv->add_option("--image", inv_image, "target image (png)")->required();
    inv->add_option("--g", inv_g, "generator checkpoint")->required();
    inv->add_option("--c", inv_c, "classifier checkpoint")->required();
    inv->add_option("--out", inv_out, "output directory")->required();
    inv->add_option("--steps", inv_cfg.steps, "descent steps per restart");
    inv->add_option("--restarts", inv_cfg.restarts, "independent restarts");
    inv->add_option("--lr", inv_cfg.lr, "descent learning rate");
    inv->add_option("--mse-w", inv_cfg.mse_weight, "pixel term weight");
    inv->add_option("--bce-w", inv_cfg.bce_weight, "classifier term weight");
    inv->add_option("--seed", inv_cfg.seed, "restart init seed");
    inv->add_flag("--hard-label", inv_cfg.hard_label_bce, "BCE against the hard label of C(x)");

    // ---- traverse
    auto* trav = app.add_subcommand("traverse", "interpolate along z2 and compare saliency");
    std::string trav_latents, trav_g, trav_c, trav_out, trav_layer = "last_conv";
    int trav_steps = 10;
    trav->add_option("--latents", trav_latents, "latents.json from invert")->required();
    trav->add_option("--g", trav_g, "generator checkpoint")->required();
    trav->add_option("--c", trav_c, "classifier checkpoint")->required();
    trav->add_option("--steps", trav_steps, "interpolation steps N");
    trav->add_option("--out", trav_out, "output directory")->required();
    trav->add_option("--gradcam-layer", trav_layer, "classifier conv tap for grad-cam");
    std::string trav_original;
    trav->add_option("--original", trav_original, "image for the grad-cam panel (default: G endpoint)");

    // ---- evaluate
    auto* eval = app.add_subcommand("evaluate", "class-consistency and monotonicity protocols");
    std::string eval_g, eval_c, eval_out = "report.json";
    int eval_reps = 1000, eval_pairs = 100, eval_steps = 10;
    std::uint64_t eval_seed = 0;
    eval->add_option("--g", eval_g, "generator checkpoint")->required();
    eval->add_option("--c", eval_c, "classifier checkpoint")->required();
    eval->add_option("--reps", eval_reps, "consistency repetitions");
    eval->add_option("--pairs", eval_pairs, "monotonicity traversals");
    eval->add_option("--steps", eval_steps, "traversal steps N");
    eval->add_option("--seed", eval_seed, "evaluation seed");
    eval->add_option("--out", eval_out, "report path");

    // ---- pipeline
    auto* pipe = app.add_subcommand("pipeline", "end-to-end runs");
    pipe->require_subcommand(1);
    auto* pipe_run = pipe->add_subcommand("run", "execute all stages");
    std::string pipe_cfg, pipe_workdir;
    pipe_run->add_option("--config", pipe_cfg, "pipeline config (json)")->required();
    pipe_run->add_option("--workdir", pipe_workdir, "working directory")->required();
    auto* pipe_val = pipe->add_subcommand("validate", "validate a config");
    std::string pipeval_cfg;
    pipe_val->add_option("--config", pipeval_cfg, "pipeline config (json)")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            const CorpusManifest m = build_corpus(synth_count, synth_pf, synth_seed, synth_res, synth_out);
            std::cout << "corpus: " << m.count << " images (" << m.positives << " positive) at "
                      << m.resolution << "x" << m.resolution << " in " << synth_out << "\n";
        } else if (*trc) {
            const CorpusDataset corpus = load_corpus(trc_corpus);
            trc_model.resolution = corpus.resolution();
            const auto r = train_classifier(corpus, trc_model, trc_cfg, trc_out);
            std::cout << "classifier: train_acc " << r.final_train_acc << " val_acc " << r.final_val_acc
                      << " -> " << trc_out << "\n";
        } else if (*trg) {
            const CorpusDataset corpus = load_corpus(trg_corpus);
            trg_model.resolution = corpus.resolution();
            const auto r = train_gan(corpus, trg_clf, trg_model, trg_cfg, trg_out);
            std::cout << "gan: " << r.epochs_done << " epochs -> " << r.g_checkpoint.string() << ", "
                      << r.d_checkpoint.string() << "\n";
        } else if (*inv) {
            Generator g = load_generator(inv_g);
            Classifier c = load_classifier(inv_c);
            const Tensor target = gray_to_tensor(read_png(inv_image));
            const InversionResult r = invert(target, g, c, inv_cfg);
            save_inversion_outputs(inv_out, target, r);
            std::cout << "inversion: loss " << r.final_loss << " (above floor " << r.loss_above_floor
                      << "), psnr " << psnr_db(r.reconstruction, target) << " dB, match "
                      << (r.classifier_match ? "yes" : "no") << "\n";
        } else if (*trav) {
            Generator g = load_generator(trav_g);
            Classifier c = load_classifier(trav_c);
            const LatentPair lat = LatentPair::from_json(load_json(trav_latents));
            const InterpolationTrace trace = traverse(lat.z1, lat.z2, trav_steps, g, c);
            const Tensor cam_target =
                trav_original.empty() ? trace.steps.back().image : gray_to_tensor(read_png(trav_original));
            const SaliencyMap cam = grad_cam(c, cam_target, 1, trav_layer);
            const CompareReport rep = compare_report(trace, cam, trav_out);
            std::cout << "traversal: " << trace.steps.size() << " frames, diff/cam correlation "
                      << rep.summary["diff_cam_correlation"] << " -> " << trav_out << "\n";
        } else if (*eval) {
            Generator g = load_generator(eval_g);
            Classifier c = load_classifier(eval_c);
            ExperimentReport report;
            ConsistencyConfig cc;
            cc.repetitions = eval_reps;
            cc.seed = eval_seed;
            report.consistency = consistency_experiment(g, c, cc);
            report.monotonicity = monotonicity_suite(g, c, eval_pairs, eval_steps, mix_seed(eval_seed, 1));
            report.config_echo = {{"repetitions", eval_reps}, {"pairs", eval_pairs}, {"steps", eval_steps},
                                  {"seed", eval_seed}};
            report.generator_sha256 = sha256_file(eval_g);
            report.classifier_sha256 = sha256_file(eval_c);
            report.timestamp = iso8601_now();
            report.validate();
            save_json(eval_out, report.to_json());
            std::cout << "evaluate: consistency " << report.consistency.accuracy_mean << " +- "
                      << report.consistency.accuracy_std << ", monotone fraction "
                      << report.monotonicity.strict_fraction << ", spearman "
                      << report.monotonicity.mean_spearman << " -> " << eval_out << "\n";
        } else if (*pipe_val) {
            const auto violations = validate_config_file(pipeval_cfg);
            if (violations.empty()) {
                std::cout << "ok\n";
            } else {
                for (const auto& v : violations) std::cout << "violation: " << v << "\n";
                return 1;
            }
        } else if (*pipe_run) {
            const RunManifest m = run_pipeline(pipe_cfg, pipe_workdir);
            std::cout << "pipeline " << m.status << ": " << m.stages.size() << " stages";
            int cached = 0;
            for (const auto& s : m.stages) cached += s.cached;
            std::cout << " (" << cached << " cached) -> " << pipe_workdir << "\n";
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const StageFailure& e) {
        std::cerr << "stage '" << e.stage << "' failed: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
