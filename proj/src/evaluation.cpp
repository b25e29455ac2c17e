#include "ganlens/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ganlens/errors.hpp"
#include "ganlens/rng.hpp"

namespace ganlens {

void ConsistencyConfig::validate() const {
    if (repetitions < 1) throw ConfigError("consistency repetitions must be >= 1");
    if (negatives_per_rep < 1 || positives_per_rep < 0)
        throw ConfigError("per-repetition sample counts are out of range");
}

namespace {

ConsistencyResult run_consistency(Generator& generator, const Labeler& labeler,
                                  const ConsistencyConfig& cfg) {
    cfg.validate();
    const ModelConfig& mc = generator.config();
    const int per_rep = cfg.negatives_per_rep + cfg.positives_per_rep;

    std::vector<int> intended(static_cast<std::size_t>(per_rep), 1);
    std::fill(intended.begin(), intended.begin() + cfg.negatives_per_rep, 0);

    double acc_sum = 0.0, acc_sq = 0.0;
    long pooled_correct = 0;
    long neg_correct = 0, pos_correct = 0, neg_total = 0, pos_total = 0;

    for (int rep = 0; rep < cfg.repetitions; ++rep) {
        Rng rng(mix_seed(cfg.seed, 5000 + static_cast<std::uint64_t>(rep)));

        // one structural vector shared by all samples of this repetition
        Tensor z1({per_rep, mc.d1});
        for (int k = 0; k < mc.d1; ++k) {
            const float v = rng.normalf();
            for (int i = 0; i < per_rep; ++i) z1.at(i, k) = v;
        }
        Tensor z2({per_rep, mc.d2});
        for (int i = cfg.negatives_per_rep; i < per_rep; ++i)
            for (int k = 0; k < mc.d2; ++k) z2.at(i, k) = rng.normalf();

        const Tensor images = generator.forward(z1, z2, false);
        const std::vector<int> preds = labeler(images, intended);
        if (preds.size() != intended.size()) throw ShapeError("labeler returned a wrong-sized prediction vector");

        int correct = 0;
        for (int i = 0; i < per_rep; ++i) {
            const bool ok = preds[static_cast<std::size_t>(i)] == intended[static_cast<std::size_t>(i)];
            correct += ok;
            if (intended[static_cast<std::size_t>(i)] == 0) {
                ++neg_total;
                neg_correct += ok;
            } else {
                ++pos_total;
                pos_correct += ok;
            }
        }
        const double acc = static_cast<double>(correct) / per_rep;
        acc_sum += acc;
        acc_sq += acc * acc;
        pooled_correct += correct;
    }

    ConsistencyResult r;
    r.repetitions = cfg.repetitions;
    r.accuracy_mean = acc_sum / cfg.repetitions;
    const double var = cfg.repetitions > 1
                           ? std::max(0.0, (acc_sq - cfg.repetitions * r.accuracy_mean * r.accuracy_mean) /
                                               (cfg.repetitions - 1))
                           : 0.0;
    r.accuracy_std = std::sqrt(var);
    r.accuracy_se = r.accuracy_std / std::sqrt(static_cast<double>(cfg.repetitions));
    r.pooled_accuracy = static_cast<double>(pooled_correct) / (static_cast<double>(cfg.repetitions) * per_rep);
    r.negative_accuracy = neg_total ? static_cast<double>(neg_correct) / neg_total : 0.0;
    r.positive_accuracy = pos_total ? static_cast<double>(pos_correct) / pos_total : 0.0;
    return r;
}

}  // namespace

ConsistencyResult consistency_experiment_with(Generator& generator, const Labeler& labeler,
                                              const ConsistencyConfig& cfg) {
    return run_consistency(generator, labeler, cfg);
}

ConsistencyResult consistency_experiment(Generator& generator, Classifier& classifier,
                                         const ConsistencyConfig& cfg) {
    if (!classifier.config().compatible_with(generator.config()))
        throw ConfigError("consistency experiment: classifier/generator configs are incompatible");
    Labeler labeler = [&classifier](const Tensor& images, const std::vector<int>&) {
        const ClassifierOutput out = classifier.forward(images);
        std::vector<int> preds(static_cast<std::size_t>(images.dim(0)));
        for (int i = 0; i < images.dim(0); ++i)
            preds[static_cast<std::size_t>(i)] = out.softmax.at(i, 1) > 0.5 ? 1 : 0;
        return preds;
    };
    return run_consistency(generator, labeler, cfg);
}

bool non_decreasing(const std::vector<double>& seq, double tolerance) {
    for (std::size_t i = 1; i < seq.size(); ++i)
        if (seq[i] < seq[i - 1] - tolerance) return false;
    return true;
}

std::optional<double> spearman_vs_index(const std::vector<double>& seq) {
    const std::size_t n = seq.size();
    if (n < 2) return std::nullopt;

    // average ranks with tie handling
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return seq[a] < seq[b]; });
    std::vector<double> rank(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && seq[order[j + 1]] == seq[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }

    const double mean_rank = (static_cast<double>(n) + 1.0) / 2.0;
    double cov = 0.0, var_x = 0.0, var_y = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double dx = static_cast<double>(k) + 1.0 - mean_rank;
        const double dy = rank[k] - mean_rank;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if (var_y == 0.0) return std::nullopt;  // constant sequence
    return cov / std::sqrt(var_x * var_y);
}

MonotonicityResult monotonicity_suite(Generator& generator, Classifier& classifier, int pairs,
                                      int n_steps, std::uint64_t seed) {
    if (pairs < 1) throw ConfigError("monotonicity suite requires pairs >= 1");
    if (n_steps < 1) throw ConfigError("monotonicity suite requires N >= 1");
    const ModelConfig& mc = generator.config();

    MonotonicityResult res;
    res.pairs = pairs;
    res.steps = n_steps;
    int strict = 0;
    double spearman_sum = 0.0;
    int spearman_n = 0;

    for (int p = 0; p < pairs; ++p) {
        Rng rng(mix_seed(seed, 6000 + static_cast<std::uint64_t>(p)));
        Tensor z1({1, mc.d1}), z2({1, mc.d2});
        for (std::size_t k = 0; k < z1.numel(); ++k) z1[k] = rng.normalf();
        for (std::size_t k = 0; k < z2.numel(); ++k) z2[k] = rng.normalf();

        // batch all steps of the traversal through one forward
        const int rows = n_steps + 1;
        Tensor z1b({rows, mc.d1}), z2b({rows, mc.d2});
        for (int r = 0; r < rows; ++r) {
            const float coeff = static_cast<float>(r) / n_steps;
            for (int k = 0; k < mc.d1; ++k) z1b.at(r, k) = z1[static_cast<std::size_t>(k)];
            for (int k = 0; k < mc.d2; ++k) z2b.at(r, k) = coeff * z2[static_cast<std::size_t>(k)];
        }
        const Tensor images = generator.forward(z1b, z2b, false);
        const ClassifierOutput out = classifier.forward(images);
        std::vector<double> p_pos(static_cast<std::size_t>(rows));
        for (int r = 0; r < rows; ++r) p_pos[static_cast<std::size_t>(r)] = out.softmax.at(r, 1);

        strict += non_decreasing(p_pos);
        if (const auto rho = spearman_vs_index(p_pos)) {
            spearman_sum += *rho;
            ++spearman_n;
        } else {
            ++res.undefined_count;
        }
    }

    res.strict_fraction = static_cast<double>(strict) / pairs;
    res.mean_spearman = spearman_n ? spearman_sum / spearman_n : 0.0;
    return res;
}

nlohmann::json ExperimentReport::to_json() const {
    return {
        {"consistency",
         {{"accuracy_mean", consistency.accuracy_mean},
          {"accuracy_std", consistency.accuracy_std},
          {"accuracy_se", consistency.accuracy_se},
          {"pooled_accuracy", consistency.pooled_accuracy},
          {"per_class",
           {{"negative", consistency.negative_accuracy}, {"positive", consistency.positive_accuracy}}},
          {"repetitions", consistency.repetitions}}},
        {"monotonicity",
         {{"strict_fraction", monotonicity.strict_fraction},
          {"mean_spearman", monotonicity.mean_spearman},
          {"undefined_count", monotonicity.undefined_count},
          {"pairs", monotonicity.pairs},
          {"steps", monotonicity.steps}}},
        {"config", config_echo},
        {"checkpoint_hashes", {{"generator", generator_sha256}, {"classifier", classifier_sha256}}},
        {"timestamp", timestamp},
    };
}

void ExperimentReport::validate() const {
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in01(consistency.accuracy_mean) || consistency.accuracy_std < 0.0)
        throw ValidationError("consistency statistics out of range");
    if (!in01(monotonicity.strict_fraction)) throw ValidationError("strict_fraction out of range");
}

}  // namespace ganlens
