#include "ganlens/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "ganlens/errors.hpp"
#include "ganlens/rng.hpp"
#include "ganlens/util.hpp"

namespace ganlens {

namespace {

constexpr double kProbClamp = 1e-7;
constexpr double kEarlyStopDelta = 1e-6;
constexpr int kEarlyStopWindow = 25;

double binary_ce(double target_p, double q) {
    q = std::clamp(q, kProbClamp, 1.0 - kProbClamp);
    return -(target_p * std::log(q) + (1.0 - target_p) * std::log(1.0 - q));
}

double entropy(double p) {
    if (p <= 0.0 || p >= 1.0) return 0.0;
    return -(p * std::log(p) + (1.0 - p) * std::log(1.0 - p));
}

struct LatentVec {
    Tensor z1, z2;  // [1,d1], [1,d2]
};

}  // namespace

void InversionConfig::validate() const {
    if (steps < 1) throw ConfigError("inversion steps must be >= 1");
    if (!(lr > 0.0f)) throw ConfigError("inversion learning rate must be > 0");
    if (mse_weight < 0.0f || bce_weight < 0.0f) throw ConfigError("inversion weights must be >= 0");
    if (restarts < 1) throw ConfigError("inversion restarts must be >= 1");
}

InversionLoss inversion_loss(const Tensor& z1, const Tensor& z2, const Tensor& target_image,
                             Classifier& classifier, Generator& generator, float mse_weight,
                             float bce_weight, bool hard_label) {
    if (mse_weight < 0.0f || bce_weight < 0.0f) throw ConfigError("inversion weights must be >= 0");
    const Tensor z1m = z1.rank() == 1 ? z1.reshaped({1, z1.dim(0)}) : z1;
    const Tensor z2m = z2.rank() == 1 ? z2.reshaped({1, z2.dim(0)}) : z2;
    const Tensor recon = generator.forward(z1m, z2m, false);
    check_same_shape(recon, target_image, "inversion_loss");

    InversionLoss out;
    for (std::size_t i = 0; i < recon.numel(); ++i) {
        const double d = static_cast<double>(recon[i]) - target_image[i];
        out.mse += d * d;
    }
    out.mse /= static_cast<double>(recon.numel());

    const double p_target_soft = classifier.forward(target_image).softmax.at(0, 1);
    const double p_target = hard_label ? (p_target_soft > 0.5 ? 1.0 : 0.0) : p_target_soft;
    const double q = classifier.forward(recon).softmax.at(0, 1);
    out.bce = binary_ce(p_target, q);
    out.total = mse_weight * out.mse + bce_weight * out.bce;
    return out;
}

InversionResult invert(const Tensor& target_image, Generator& generator, Classifier& classifier,
                       const InversionConfig& cfg) {
    cfg.validate();
    const ModelConfig& mc = generator.config();
    if (target_image.rank() != 4 || target_image.dim(0) != 1 || target_image.dim(1) != 1 ||
        target_image.dim(2) != mc.resolution)
        throw ShapeError("invert: target must be [1,1," + std::to_string(mc.resolution) + "," +
                         std::to_string(mc.resolution) + "], got " + target_image.shape_str());

    const ClassifierOutput target_out = classifier.forward(target_image);
    const double p_target_soft = target_out.softmax.at(0, 1);
    const double p_target = cfg.hard_label_bce ? (p_target_soft > 0.5 ? 1.0 : 0.0) : p_target_soft;
    const int target_argmax = p_target_soft > 0.5 ? 1 : 0;
    const double floor = cfg.hard_label_bce ? 0.0 : entropy(p_target);

    struct Best {
        double total = std::numeric_limits<double>::infinity();
        double mse = 0.0, bce = 0.0;
        LatentVec z;
        int restart = -1;
        std::vector<InversionStep> trajectory;
    } best;

    int diverged = 0;
    const std::size_t pix = target_image.numel();

    for (int restart = 0; restart < cfg.restarts; ++restart) {
        Rng rng(mix_seed(cfg.seed, 0x1470 + static_cast<std::uint64_t>(restart)));
        LatentVec z{Tensor({1, mc.d1}), Tensor({1, mc.d2})};
        for (std::size_t i = 0; i < z.z1.numel(); ++i) z.z1[i] = rng.normalf();
        for (std::size_t i = 0; i < z.z2.numel(); ++i) z.z2[i] = rng.normalf();

        // Adam over the latent vector
        Tensor m({1, mc.d1 + mc.d2}), v({1, mc.d1 + mc.d2});
        const float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;

        double restart_best = std::numeric_limits<double>::infinity();
        LatentVec restart_best_z = z;
        double restart_best_mse = 0.0, restart_best_bce = 0.0;
        int since_improve = 0;
        std::vector<InversionStep> traj;
        bool bad = false;

        for (int step = 0; step < cfg.steps; ++step) {
            const Tensor recon = generator.forward(z.z1, z.z2, false);

            double mse = 0.0;
            Tensor grecon(recon.shape());
            for (std::size_t i = 0; i < pix; ++i) {
                const double d = static_cast<double>(recon[i]) - target_image[i];
                mse += d * d;
                grecon[i] = static_cast<float>(cfg.mse_weight * 2.0 * d / static_cast<double>(pix));
            }
            mse /= static_cast<double>(pix);

            const Tensor logits = classifier.forward_logits(recon, false);
            const Tensor probs = softmax2(logits);
            const double q = probs.at(0, 1);
            const double bce = binary_ce(p_target, q);
            const double total = cfg.mse_weight * mse + cfg.bce_weight * bce;

            if (!std::isfinite(total)) {
                bad = true;
                break;
            }
            traj.push_back({step, total, mse, bce});
            if (total < restart_best - kEarlyStopDelta) {
                since_improve = 0;
            } else if (++since_improve >= kEarlyStopWindow) {
                if (total < restart_best) {
                    restart_best = total;
                    restart_best_mse = mse;
                    restart_best_bce = bce;
                    restart_best_z = z;
                }
                break;
            }
            if (total < restart_best) {
                restart_best = total;
                restart_best_mse = mse;
                restart_best_bce = bce;
                restart_best_z = z;
            }

            // d bce / d logits for the 2-way softmax positive probability
            const double qc = std::clamp(q, kProbClamp, 1.0 - kProbClamp);
            const float dl = static_cast<float>(cfg.bce_weight * (qc - p_target));
            Tensor glogits({1, 2});
            glogits.at(0, 0) = -dl;
            glogits.at(0, 1) = dl;
            classifier.net().zero_grad();
            const Tensor g_from_c = classifier.net().backward(glogits);
            for (std::size_t i = 0; i < pix; ++i) grecon[i] += g_from_c[i];

            generator.net().zero_grad();
            const Tensor gz = generator.net().backward(grecon);  // [1, d1+d2]

            const std::int64_t t = step + 1;
            const float bc1 = 1.0f - std::pow(b1, static_cast<float>(t));
            const float bc2 = 1.0f - std::pow(b2, static_cast<float>(t));
            for (int i = 0; i < mc.d1 + mc.d2; ++i) {
                const float g = gz[static_cast<std::size_t>(i)];
                m[static_cast<std::size_t>(i)] = b1 * m[static_cast<std::size_t>(i)] + (1 - b1) * g;
                v[static_cast<std::size_t>(i)] = b2 * v[static_cast<std::size_t>(i)] + (1 - b2) * g * g;
                const float upd = cfg.lr * (m[static_cast<std::size_t>(i)] / bc1) /
                                  (std::sqrt(v[static_cast<std::size_t>(i)] / bc2) + eps);
                if (i < mc.d1)
                    z.z1[static_cast<std::size_t>(i)] -= upd;
                else
                    z.z2[static_cast<std::size_t>(i - mc.d1)] -= upd;
            }
        }

        if (bad || !std::isfinite(restart_best)) {
            ++diverged;
            continue;
        }
        if (restart_best < best.total) {
            best.total = restart_best;
            best.mse = restart_best_mse;
            best.bce = restart_best_bce;
            best.z = restart_best_z;
            best.restart = restart;
            best.trajectory = std::move(traj);
        }
    }

    if (best.restart < 0) throw NumericError("inversion failed: all restarts diverged");

    InversionResult res;
    res.latents.z1 = best.z.z1.reshaped({mc.d1});
    res.latents.z2 = best.z.z2.reshaped({mc.d2});
    res.final_loss = best.total;
    res.mse_term = best.mse;
    res.bce_term = best.bce;
    res.bce_floor = floor;
    res.loss_above_floor = best.total - cfg.bce_weight * floor;
    res.reconstruction = generator.forward(best.z.z1, best.z.z2, false);
    const int recon_argmax = classifier.forward(res.reconstruction).softmax.at(0, 1) > 0.5 ? 1 : 0;
    res.classifier_match = recon_argmax == target_argmax;
    res.best_restart = best.restart;
    res.restarts_diverged = diverged;
    res.trajectory = std::move(best.trajectory);
    return res;
}

LatentPair negate(const LatentPair& latents) {
    LatentPair out;
    out.z1 = latents.z1;
    out.z2 = Tensor({latents.z2.dim(0)});
    return out;
}

double psnr_db(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "psnr");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.numel());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(4.0 / mse);
}

}  // namespace ganlens
