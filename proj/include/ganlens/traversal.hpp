#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ganlens/models.hpp"

namespace ganlens {

struct TraceStep {
    int n = 0;
    double coefficient = 0.0;  // n / N
    Tensor image;              // [1,1,R,R]
    double p_neg = 0.0;
    double p_pos = 0.0;
};

// Walk G(z1, (n/N) * z2) for n = 0..N with the classifier's softmax per step.
struct InterpolationTrace {
    std::vector<TraceStep> steps;
    Tensor z1;           // fixed structural vector [d1]
    Tensor z2_terminal;  // [d2]

    void validate() const;
};

InterpolationTrace traverse(const Tensor& z1, const Tensor& z2, int n_steps, Generator& generator,
                            Classifier& classifier);

struct SaliencyMap {
    Tensor values;     // [H,W] in [0,1], max-normalized
    std::string kind;  // pixel_diff | grad_cam
};

SaliencyMap pixel_diff(const Tensor& first_image, const Tensor& last_image);

// Channel weights are the spatial means of d(target logit)/d(feature map) at
// the named conv tap; map = relu(weighted sum), upsampled and max-normalized.
SaliencyMap grad_cam(Classifier& classifier, const Tensor& image, int target_class,
                     const std::string& layer = "last_conv");

// Pearson correlation of two equally-shaped maps; identical maps give 1
double spatial_correlation(const SaliencyMap& a, const SaliencyMap& b);

std::pair<int, int> argmax_yx(const Tensor& hw);

// region used for the "most active" outline: connected component of
// values >= 0.5 containing the argmax
std::vector<std::uint8_t> active_region(const Tensor& hw, float threshold = 0.5f);

struct CompareReport {
    nlohmann::json summary;
    std::filesystem::path report_path;
};

// Writes trace/step_##.png, trace.csv, diff_map.png, gradcam.png, strip.png
// and report.json under out_dir.
CompareReport compare_report(const InterpolationTrace& trace, const SaliencyMap& grad_cam_map,
                             const std::filesystem::path& out_dir);

}  // namespace ganlens
