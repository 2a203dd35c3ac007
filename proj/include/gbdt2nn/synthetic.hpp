#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "gbdt2nn/dataset.hpp"

namespace gbdt2nn {

/// Tabular data whose target is a sum of axis-aligned step interactions over
/// the first few features (the rest are distractors), uniform in [-1, 1].
/// Classification draws Bernoulli labels from a logistic of the same signal.
Dataset make_tree_dataset(std::size_t n_samples, std::size_t n_features, Task task, std::uint64_t seed,
                          double noise = 0.1);

/// Drifted copy of the generator: same signal with shifted step locations, for online updates.
Dataset make_drifted_tree_dataset(std::size_t n_samples, std::size_t n_features, Task task, std::uint64_t seed,
                                  double shift);

/// 28x28 grayscale stroke-rendered digits with random affine jitter.
struct DigitImages {
    std::size_t rows = 28;
    std::size_t cols = 28;
    std::vector<std::uint8_t> pixels;  // n * rows * cols
    std::vector<std::uint8_t> labels;  // 0..9
};

DigitImages make_digit_images(std::size_t n_images, std::uint64_t seed);

}  // namespace gbdt2nn
