#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

#include "ganlens/models.hpp"

namespace ganlens {

struct ConsistencyConfig {
    int repetitions = 1000;
    int negatives_per_rep = 1;
    int positives_per_rep = 3;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ConsistencyResult {
    double accuracy_mean = 0.0;
    double accuracy_std = 0.0;  // sample std over repetitions
    double accuracy_se = 0.0;   // std / sqrt(repetitions)
    double pooled_accuracy = 0.0;
    double negative_accuracy = 0.0;
    double positive_accuracy = 0.0;
    int repetitions = 0;
};

struct MonotonicityResult {
    double strict_fraction = 0.0;  // non-decreasing sequences (1e-4 per-step tolerance)
    double mean_spearman = 0.0;    // over pairs with a defined rank correlation
    int undefined_count = 0;       // constant traces, excluded from the mean
    int pairs = 0;
    int steps = 0;
};

// Per repetition: one shared z1, one z2=0 negative and positives_per_rep
// normal draws, all classified; per-rep accuracy aggregated as mean +- std.
ConsistencyResult consistency_experiment(Generator& generator, Classifier& classifier,
                                         const ConsistencyConfig& cfg);

// test seam: predictions come from `labeler(images, intended)` instead of C
using Labeler = std::function<std::vector<int>(const Tensor& images, const std::vector<int>& intended)>;
ConsistencyResult consistency_experiment_with(Generator& generator, const Labeler& labeler,
                                              const ConsistencyConfig& cfg);

MonotonicityResult monotonicity_suite(Generator& generator, Classifier& classifier, int pairs,
                                      int n_steps, std::uint64_t seed);

// per-sequence primitives (the suite is built on these)
bool non_decreasing(const std::vector<double>& seq, double tolerance = 1e-4);
std::optional<double> spearman_vs_index(const std::vector<double>& seq);

struct ExperimentReport {
    ConsistencyResult consistency;
    MonotonicityResult monotonicity;
    nlohmann::json config_echo;
    std::string generator_sha256;
    std::string classifier_sha256;
    std::string timestamp;

    nlohmann::json to_json() const;

    void validate() const;
};

}  // namespace ganlens
