#pragma once

#include <vector>

#include "ganlens/models.hpp"

namespace ganlens {

struct InversionConfig {
    int steps = 500;
    float lr = 0.05f;
    float mse_weight = 1.0f;
    float bce_weight = 0.1f;
    int restarts = 8;
    std::uint64_t seed = 0;
    bool hard_label_bce = false;  // BCE against argmax C(x) instead of the soft probability

    void validate() const;
};

struct InversionLoss {
    double total = 0.0;
    double mse = 0.0;
    double bce = 0.0;
};

// MSE(G(z1,z2), x) + BCE(C(G(z1,z2))_pos, C(x)_pos), weighted; z1/z2 are [d]
// vectors. Soft-target BCE bottoms out at the entropy of C(x)_pos.
InversionLoss inversion_loss(const Tensor& z1, const Tensor& z2, const Tensor& target_image,
                             Classifier& classifier, Generator& generator, float mse_weight,
                             float bce_weight, bool hard_label = false);

struct InversionStep {
    int step = 0;
    double total = 0.0;
    double mse = 0.0;
    double bce = 0.0;
};

struct InversionResult {
    LatentPair latents;
    double final_loss = 0.0;  // mse_weight*mse + bce_weight*bce at the best iterate
    double mse_term = 0.0;
    double bce_term = 0.0;
    double bce_floor = 0.0;        // entropy of the target's positive probability
    double loss_above_floor = 0.0;  // final_loss - bce_weight*bce_floor
    Tensor reconstruction;          // G(z1,z2), recomputed at the returned latents
    bool classifier_match = false;
    int best_restart = 0;
    int restarts_diverged = 0;
    std::vector<InversionStep> trajectory;  // winning restart
};

// Multi-restart gradient descent on the latent pair; returns the lowest-loss
// iterate across restarts (ties broken by restart index).
InversionResult invert(const Tensor& target_image, Generator& generator, Classifier& classifier,
                       const InversionConfig& cfg);

// z2 <- 0, z1 preserved bitwise
LatentPair negate(const LatentPair& latents);

double psnr_db(const Tensor& a, const Tensor& b);  // peak 2.0 for [-1,1] images

}  // namespace ganlens
