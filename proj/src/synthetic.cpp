#include "gbdt2nn/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "gbdt2nn/errors.hpp"
#include "gbdt2nn/gbdt.hpp"
#include "gbdt2nn/rng.hpp"

namespace gbdt2nn {

namespace {

double step_signal(std::span<const double> x, double shift) {
    auto on = [](bool b) { return b ? 1.0 : 0.0; };
    double y = 2.0 * on(x[0] > shift);
    y += 1.5 * on(x[1] > 0.3 + shift) * on(x[2] < 0.0);
    y -= 1.2 * on(x[3] > -0.5 + shift);
    y += 0.8 * on(x[4] > 0.2) * on(x[0] <= shift);
    y += 0.6 * on(x[5] > 0.0 - shift);
    y -= 0.4 * on(x[6] > 0.5) * on(x[7] > 0.0);
    return y;
}

Dataset make_dataset(std::size_t n_samples, std::size_t n_features, Task task, std::uint64_t seed, double noise,
                     double shift) {
    if (n_features < 8) throw UsageError("the synthetic tree dataset needs at least 8 features");
    Rng rng(seed);
    Dataset d;
    d.task = task;
    d.n_samples = n_samples;
    d.n_features = n_features;
    for (std::size_t j = 0; j < n_features; ++j) d.feature_names.push_back("f" + std::to_string(j));
    d.features.resize(n_samples * n_features);
    d.labels.resize(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        for (std::size_t j = 0; j < n_features; ++j) d.features[i * n_features + j] = rng.uniform(-1.0, 1.0);
        const double s = step_signal(d.row(i), shift);
        if (task == Task::Regression) {
            d.labels[i] = s + noise * rng.normal();
        } else {
            // Signal is roughly centred at 1.7; slope 2 keeps the Bayes AUC high but below 1.
            const double p = sigmoid(2.0 * (s - 1.7));
            d.labels[i] = rng.uniform() < p ? 1.0 : 0.0;
        }
    }
    d.validate();
    return d;
}

using Stroke = std::vector<std::array<double, 2>>;

Stroke arc(double cx, double cy, double rx, double ry, double a0, double a1, int steps = 16) {
    Stroke s;
    for (int i = 0; i <= steps; ++i) {
        const double a = a0 + (a1 - a0) * i / steps;
        s.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
    }
    return s;
}

// Glyphs in a unit box, y down.
std::vector<Stroke> glyph(int digit) {
    constexpr double pi = std::numbers::pi;
    switch (digit) {
        case 0: return {arc(0.5, 0.5, 0.28, 0.4, 0.0, 2.0 * pi, 24)};
        case 1: return {{{0.42, 0.22}, {0.55, 0.1}, {0.55, 0.9}}};
        case 2: return {arc(0.5, 0.33, 0.26, 0.23, -pi, 0.2), {{0.74, 0.4}, {0.25, 0.9}, {0.78, 0.9}}};
        case 3: return {arc(0.48, 0.3, 0.25, 0.2, -0.8 * pi, 0.5 * pi), arc(0.48, 0.7, 0.27, 0.2, -0.5 * pi, 0.8 * pi)};
        case 4: return {{{0.62, 0.1}, {0.22, 0.62}, {0.8, 0.62}}, {{0.62, 0.3}, {0.62, 0.92}}};
        case 5: return {{{0.75, 0.12}, {0.32, 0.12}, {0.3, 0.46}}, arc(0.48, 0.66, 0.27, 0.24, -0.75 * pi, 0.8 * pi)};
        case 6: return {arc(0.62, 0.45, 0.32, 0.38, -0.6 * pi, -1.05 * pi), arc(0.5, 0.68, 0.22, 0.2, 0.0, 2.0 * pi)};
        case 7: return {{{0.22, 0.12}, {0.78, 0.12}, {0.42, 0.92}}};
        case 8: return {arc(0.5, 0.3, 0.2, 0.19, 0.0, 2.0 * pi), arc(0.5, 0.7, 0.25, 0.21, 0.0, 2.0 * pi)};
        default: return {arc(0.5, 0.32, 0.22, 0.21, 0.0, 2.0 * pi), {{0.72, 0.32}, {0.66, 0.92}}};
    }
}

double segment_distance(double px, double py, const std::array<double, 2>& a, const std::array<double, 2>& b) {
    const double vx = b[0] - a[0];
    const double vy = b[1] - a[1];
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0.0 ? ((px - a[0]) * vx + (py - a[1]) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = px - (a[0] + t * vx);
    const double dy = py - (a[1] + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

Dataset make_tree_dataset(std::size_t n_samples, std::size_t n_features, Task task, std::uint64_t seed, double noise) {
    return make_dataset(n_samples, n_features, task, seed, noise, 0.0);
}

Dataset make_drifted_tree_dataset(std::size_t n_samples, std::size_t n_features, Task task, std::uint64_t seed,
                                  double shift) {
    return make_dataset(n_samples, n_features, task, seed, 0.1, shift);
}

DigitImages make_digit_images(std::size_t n_images, std::uint64_t seed) {
    Rng rng(seed);
    DigitImages out;
    out.pixels.assign(n_images * out.rows * out.cols, 0);
    out.labels.resize(n_images);
    for (std::size_t n = 0; n < n_images; ++n) {
        const int digit = static_cast<int>(rng.below(10));
        out.labels[n] = static_cast<std::uint8_t>(digit);
        // Glyph box mapped into a 20x20 area centred in the image, jittered.
        const double scale = 18.0 + rng.uniform(-2.0, 2.0);
        const double angle = rng.uniform(-0.2, 0.2);
        const double shear = rng.uniform(-0.2, 0.2);
        const double ox = 14.0 + rng.uniform(-1.5, 1.5);
        const double oy = 14.0 + rng.uniform(-1.5, 1.5);
        const double thickness = rng.uniform(0.9, 1.6);
        const double ca = std::cos(angle);
        const double sa = std::sin(angle);

        std::vector<Stroke> strokes = glyph(digit);
        for (auto& s : strokes) {
            for (auto& p : s) {
                const double u = (p[0] - 0.5) + shear * (p[1] - 0.5) + rng.uniform(-0.015, 0.015);
                const double v = (p[1] - 0.5) + rng.uniform(-0.015, 0.015);
                p = {ox + scale * (ca * u - sa * v), oy + scale * (sa * u + ca * v)};
            }
        }
        auto* img = out.pixels.data() + n * out.rows * out.cols;
        for (std::size_t r = 0; r < out.rows; ++r) {
            for (std::size_t c = 0; c < out.cols; ++c) {
                const double px = static_cast<double>(c) + 0.5;
                const double py = static_cast<double>(r) + 0.5;
                double dist = 1e9;
                for (const auto& s : strokes) {
                    for (std::size_t i = 0; i + 1 < s.size(); ++i) dist = std::min(dist, segment_distance(px, py, s[i], s[i + 1]));
                }
                const double ink = std::clamp(1.0 - (dist - thickness) / 0.8, 0.0, 1.0);
                img[r * out.cols + c] = static_cast<std::uint8_t>(std::lround(255.0 * ink));
            }
        }
    }
    return out;
}

}  // namespace gbdt2nn
