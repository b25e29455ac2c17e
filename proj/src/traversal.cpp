#include "ganlens/traversal.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "ganlens/errors.hpp"
#include "ganlens/util.hpp"

namespace ganlens {

void InterpolationTrace::validate() const {
    if (steps.empty()) throw ValidationError("trace has no steps");
    if (steps.front().coefficient != 0.0) throw ValidationError("trace must start at coefficient 0");
    for (std::size_t i = 1; i < steps.size(); ++i)
        if (!(steps[i].coefficient > steps[i - 1].coefficient))
            throw ValidationError("trace coefficients must be strictly increasing");
    for (const auto& s : steps) {
        const double sum = s.p_neg + s.p_pos;
        if (std::abs(sum - 1.0) > 1e-6) throw ValidationError("trace softmax rows must sum to 1");
    }
}

InterpolationTrace traverse(const Tensor& z1, const Tensor& z2, int n_steps, Generator& generator,
                            Classifier& classifier) {
    if (n_steps < 1) throw ConfigError("traversal requires N >= 1");
    const ModelConfig& mc = generator.config();
    if (z1.numel() != static_cast<std::size_t>(mc.d1) || z2.numel() != static_cast<std::size_t>(mc.d2))
        throw ShapeError("traverse: latent dims do not match the generator config");

    InterpolationTrace trace;
    trace.z1 = z1.reshaped({mc.d1});
    trace.z2_terminal = z2.reshaped({mc.d2});

    const Tensor z1m = z1.reshaped({1, mc.d1});
    for (int n = 0; n <= n_steps; ++n) {
        const double coeff = static_cast<double>(n) / n_steps;
        Tensor z2m({1, mc.d2});
        for (int k = 0; k < mc.d2; ++k)
            z2m[static_cast<std::size_t>(k)] = static_cast<float>(coeff) * trace.z2_terminal[static_cast<std::size_t>(k)];
        TraceStep step;
        step.n = n;
        step.coefficient = coeff;
        step.image = generator.forward(z1m, z2m, false);
        const ClassifierOutput out = classifier.forward(step.image);
        step.p_neg = out.softmax.at(0, 0);
        step.p_pos = out.softmax.at(0, 1);
        trace.steps.push_back(std::move(step));
    }
    return trace;
}

namespace {

Tensor to_hw(const Tensor& t) {
    if (t.rank() == 2) return t;
    if (t.rank() == 4 && t.dim(0) == 1 && t.dim(1) == 1) return t.reshaped({t.dim(2), t.dim(3)});
    if (t.rank() == 3 && t.dim(0) == 1) return t.reshaped({t.dim(1), t.dim(2)});
    throw ShapeError("expected a single-channel image, got " + t.shape_str());
}

void max_normalize(Tensor& hw) {
    const float mx = hw.max();
    if (mx > 0.0f)
        for (std::size_t i = 0; i < hw.numel(); ++i) hw[i] /= mx;
}

}  // namespace

SaliencyMap pixel_diff(const Tensor& first_image, const Tensor& last_image) {
    const Tensor a = to_hw(first_image), b = to_hw(last_image);
    check_same_shape(a, b, "pixel_diff");
    SaliencyMap map;
    map.kind = "pixel_diff";
    map.values = Tensor(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) map.values[i] = std::abs(b[i] - a[i]);
    max_normalize(map.values);
    return map;
}

SaliencyMap grad_cam(Classifier& classifier, const Tensor& image, int target_class,
                     const std::string& layer) {
    if (target_class != 0 && target_class != 1) throw ConfigError("grad_cam target class must be 0 or 1");
    const std::string resolved = layer == "last_conv" ? classifier.last_conv_layer() : layer;
    nn::Network& net = classifier.net();
    const int tap = net.find_layer(resolved);
    if (tap < 0) throw ConfigError("unknown grad-cam layer '" + layer + "'");

    std::vector<Tensor> acts;
    const Tensor logits = net.forward_collect(image, false, &acts);
    if (logits.rank() != 2 || logits.dim(0) != 1) throw ShapeError("grad_cam expects a single image");

    Tensor glogits({1, 2});
    glogits.at(0, target_class) = 1.0f;  // d(target logit) / d(logits)
    net.zero_grad();
    const Tensor gfeat = net.backward(glogits, tap + 1);  // gradient at the tap output

    const Tensor& feat = acts[static_cast<std::size_t>(tap)];
    if (feat.rank() != 4) throw ShapeError("grad-cam layer must produce feature maps");
    const int ch = feat.dim(1), h = feat.dim(2), w = feat.dim(3);

    Tensor cam({h, w});
    for (int c = 0; c < ch; ++c) {
        double wsum = 0.0;
        const float* g = gfeat.data() + static_cast<std::size_t>(c) * h * w;
        for (int i = 0; i < h * w; ++i) wsum += g[i];
        const float alpha = static_cast<float>(wsum / (h * w));
        const float* a = feat.data() + static_cast<std::size_t>(c) * h * w;
        for (int i = 0; i < h * w; ++i) cam[static_cast<std::size_t>(i)] += alpha * a[i];
    }
    for (std::size_t i = 0; i < cam.numel(); ++i) cam[i] = std::max(cam[i], 0.0f);

    SaliencyMap map;
    map.kind = "grad_cam";
    map.values = bilinear_resize(cam, image.dim(2), image.dim(3));
    for (std::size_t i = 0; i < map.values.numel(); ++i) map.values[i] = std::max(map.values[i], 0.0f);
    max_normalize(map.values);
    return map;
}

double spatial_correlation(const SaliencyMap& a, const SaliencyMap& b) {
    check_same_shape(a.values, b.values, "spatial_correlation");
    const std::size_t n = a.values.numel();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a.values[i];
        mb += b.values[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    bool identical = true;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a.values[i] - ma, db = b.values[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
        identical = identical && a.values[i] == b.values[i];
    }
    if (saa == 0.0 || sbb == 0.0) return identical ? 1.0 : 0.0;
    return sab / std::sqrt(saa * sbb);
}

std::pair<int, int> argmax_yx(const Tensor& hw) {
    if (hw.rank() != 2) throw ShapeError("argmax_yx expects [H,W]");
    std::size_t best = 0;
    for (std::size_t i = 1; i < hw.numel(); ++i)
        if (hw[i] > hw[best]) best = i;
    const int w = hw.dim(1);
    return {static_cast<int>(best) / w, static_cast<int>(best) % w};
}

std::vector<std::uint8_t> active_region(const Tensor& hw, float threshold) {
    const int h = hw.dim(0), w = hw.dim(1);
    std::vector<std::uint8_t> region(static_cast<std::size_t>(h) * w, 0);
    const auto [ay, ax] = argmax_yx(hw);
    if (hw.at(ay, ax) <= 0.0f) return region;  // all-zero map has no active region
    std::deque<std::pair<int, int>> queue{{ay, ax}};
    region[static_cast<std::size_t>(ay) * w + ax] = 1;
    while (!queue.empty()) {
        const auto [y, x] = queue.front();
        queue.pop_front();
        const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
            const int ny = y + dy[k], nx = x + dx[k];
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            const std::size_t idx = static_cast<std::size_t>(ny) * w + nx;
            if (region[idx] || hw.at(ny, nx) < threshold) continue;
            region[idx] = 1;
            queue.push_back({ny, nx});
        }
    }
    return region;
}

CompareReport compare_report(const InterpolationTrace& trace, const SaliencyMap& grad_cam_map,
                             const std::filesystem::path& out_dir) {
    trace.validate();
    std::filesystem::create_directories(out_dir / "trace");

    std::ostringstream csv;
    csv << "n,coefficient,p_neg,p_pos\n";
    for (const auto& s : trace.steps) {
        char name[32];
        std::snprintf(name, sizeof(name), "step_%02d.png", s.n);
        write_png(out_dir / "trace" / name, tensor_to_gray(s.image));
        csv << s.n << "," << s.coefficient << "," << s.p_neg << "," << s.p_pos << "\n";
    }
    write_text_file(out_dir / "trace.csv", csv.str());

    const SaliencyMap diff = pixel_diff(trace.steps.front().image, trace.steps.back().image);

    // diff panel with the most active region outlined
    GrayImage diff_png = unit_map_to_gray(diff.values);
    draw_outline(diff_png, active_region(diff.values), 255);
    write_png(out_dir / "diff_map.png", diff_png);
    write_png(out_dir / "gradcam.png", unit_map_to_gray(grad_cam_map.values));

    // strip: every interpolation frame captioned with p_pos, then both maps
    std::vector<GrayImage> tiles;
    const int caption_h = 10;
    for (const auto& s : trace.steps) {
        GrayImage tile = tensor_to_gray(s.image);
        GrayImage framed;
        framed.height = tile.height + caption_h;
        framed.width = tile.width;
        framed.pixels.assign(static_cast<std::size_t>(framed.height) * framed.width, 0);
        for (int y = 0; y < tile.height; ++y)
            std::copy_n(&tile.at(y, 0), tile.width, &framed.at(y, 0));
        char caption[16];
        std::snprintf(caption, sizeof(caption), "p=%.2f", s.p_pos);
        draw_text(framed, tile.height + 1, 1, caption, 255);
        tiles.push_back(std::move(framed));
    }
    {
        GrayImage d2 = diff_png;
        GrayImage c2 = unit_map_to_gray(grad_cam_map.values);
        GrayImage fd, fc;
        fd.height = d2.height + caption_h;
        fd.width = d2.width;
        fd.pixels.assign(static_cast<std::size_t>(fd.height) * fd.width, 0);
        for (int y = 0; y < d2.height; ++y) std::copy_n(&d2.at(y, 0), d2.width, &fd.at(y, 0));
        draw_text(fd, d2.height + 1, 1, "diff", 255);
        fc.height = c2.height + caption_h;
        fc.width = c2.width;
        fc.pixels.assign(static_cast<std::size_t>(fc.height) * fc.width, 0);
        for (int y = 0; y < c2.height; ++y) std::copy_n(&c2.at(y, 0), c2.width, &fc.at(y, 0));
        draw_text(fc, c2.height + 1, 1, "cam", 255);
        tiles.push_back(std::move(fd));
        tiles.push_back(std::move(fc));
    }
    write_png(out_dir / "strip.png", hstack(tiles, 2, 32));

    const auto [dy, dx] = argmax_yx(diff.values);
    const auto [cy, cx] = argmax_yx(grad_cam_map.values);
    CompareReport rep;
    rep.summary = {
        {"n_steps", static_cast<int>(trace.steps.size()) - 1},
        {"lambda", trace.steps.size() > 1 ? trace.steps[1].coefficient : 0.0},
        {"softmax_trace", nlohmann::json::array()},
        {"diff_cam_correlation", spatial_correlation(diff, grad_cam_map)},
        {"diff_argmax", {dy, dx}},
        {"grad_cam_argmax", {cy, cx}},
    };
    for (const auto& s : trace.steps)
        rep.summary["softmax_trace"].push_back(
            {{"n", s.n}, {"coefficient", s.coefficient}, {"p_neg", s.p_neg}, {"p_pos", s.p_pos}});
    rep.report_path = out_dir / "report.json";
    save_json(rep.report_path, rep.summary);
    return rep;
}

}  // namespace ganlens
