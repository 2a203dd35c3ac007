#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gbdt2nn {

enum class Task { Classification, Regression };

std::string to_string(Task task);
Task parse_task(const std::string& name);

/// Dense sample matrix plus labels. Immutable once validated.
struct Dataset {
    std::size_t n_samples = 0;
    std::size_t n_features = 0;
    std::vector<double> features;  // row-major, n_samples * n_features
    std::vector<double> labels;
    std::vector<std::string> feature_names;
    Task task = Task::Regression;

    std::span<const double> row(std::size_t i) const {
        return {features.data() + i * n_features, n_features};
    }
    double at(std::size_t i, std::size_t j) const { return features[i * n_features + j]; }

    /// Throws DataError if any structural invariant is broken.
    void validate() const;

    /// Rows selected by `indices`, in that order.
    Dataset subset(std::span<const std::size_t> indices) const;
};

struct SplitSpec {
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
    bool shuffle = true;
};

/// Reads a header-first numeric CSV. Empty / NA / NaN / ? cells are imputed
/// with the median of the column's present values.
Dataset load_csv(const std::filesystem::path& path, const std::string& label_column, Task task);

/// Labels >= threshold become 1, the rest 0; task becomes Classification.
Dataset binarize_label(const Dataset& d, double threshold);

/// One-vs-rest task over IDX3 images / IDX1 labels; pixels scaled to [0,1].
Dataset load_idx_binary_digit(const std::filesystem::path& images_path,
                              const std::filesystem::path& labels_path, int digit);

/// Writers for IDX files (used by the synthetic digit generator and fixtures).
void write_idx_images(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                      std::span<const std::uint8_t> pixels);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

/// Partition into train/test of sizes floor(f*n) and the remainder.
std::pair<Dataset, Dataset> split(const Dataset& d, const SplitSpec& s);

/// Index form of split, for callers that need the row mapping.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n_samples,
                                                                            const SplitSpec& s);

void write_dataset_csv(const std::filesystem::path& path, const Dataset& d, const std::string& label_column);

/// Binary dataset cache ("G2DS" container, version 1); bit-exact round trip.
void save_dataset(const std::filesystem::path& path, const Dataset& d);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace gbdt2nn
