#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gbdt2nn/gbdt.hpp"

namespace gbdt2nn {

/// Per-feature contributions for one sample plus the bias (root expectation).
struct AttributionVector {
    std::vector<double> values;
    double bias = 0.0;

    double total() const;
};

/// Path walk: each split adds child expectation minus parent expectation to
/// its feature. bias + sum(values) == leaf_prediction(t, x).
AttributionVector attribute_tree(const Tree& t, std::span<const double> x, std::size_t n_features);

/// learning_rate-scaled sum over all trees, bias includes base_score.
/// bias + sum(values) == predict(m, x).
AttributionVector attribute_ensemble(const GbdtModel& m, std::span<const double> x);

/// learning_rate-scaled sum over a subset of trees, without base_score.
AttributionVector attribute_group(const GbdtModel& m, std::span<const std::size_t> tree_indices,
                                  std::span<const double> x);

/// Teacher attributions for every row of d.
std::vector<AttributionVector> attribute_dataset(const GbdtModel& m, const Dataset& d);

/// CSV with header `<feature names...>,bias`, one row per sample.
void write_attributions_csv(const std::filesystem::path& path, std::span<const std::string> feature_names,
                            std::span<const AttributionVector> rows);

struct AttributionTable {
    std::vector<std::string> feature_names;
    std::vector<AttributionVector> rows;
};

AttributionTable read_attributions_csv(const std::filesystem::path& path);

}  // namespace gbdt2nn
