#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gbdt2nn/dataset.hpp"

namespace gbdt2nn {

enum class Objective { LogisticBinary, SquaredError };

std::string to_string(Objective objective);

enum class NodeKind : std::uint8_t { Internal, Leaf };

struct TreeNode {
    NodeKind kind = NodeKind::Leaf;
    int feature_index = -1;  // Internal only
    double threshold = 0.0;  // Internal only; x <= threshold goes left
    int left = -1;
    int right = -1;
    double leaf_value = 0.0;  // Leaf only
    // Mean fitted tree output over the training samples routed here. On a
    // leaf this is the leaf value; on an internal node it is the
    // count-weighted mean of its children.
    double node_expected_value = 0.0;
    std::size_t sample_count = 0;
};

/// Binary regression tree; nodes[0] is the root.
struct Tree {
    std::vector<TreeNode> nodes;
    std::vector<int> leaf_ids;          // node indices of the leaves, ascending
    std::vector<double> leaf_values;    // q_t, aligned with leaf_ids
    std::vector<int> used_features;     // sorted distinct split features, I_t
    std::vector<int> leaf_position;     // node index -> position in leaf_ids, -1 for internal

    std::size_t n_leaves() const { return leaf_ids.size(); }
    int max_feature_index() const { return used_features.empty() ? -1 : used_features.back(); }

    /// Rebuilds leaf_ids / leaf_values / used_features / leaf_position from
    /// nodes and checks the structural invariants.
    void finalize();

    /// Node index of the leaf x reaches.
    int reach(std::span<const double> x) const;
};

/// Position of the reached leaf within leaf_ids (the hot index of L_t(x)).
std::size_t leaf_position(const Tree& t, std::span<const double> x);

/// One-hot leaf indicator L_t(x).
std::vector<double> leaf_index(const Tree& t, std::span<const double> x);

/// p_t(x): value of the reached leaf.
double leaf_prediction(const Tree& t, std::span<const double> x);

struct GbdtConfig {
    int n_trees = 100;
    int max_leaves = 32;
    int min_samples_leaf = 20;
    double learning_rate = 0.1;
    double min_gain = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct GbdtModel {
    std::vector<Tree> trees;
    double learning_rate = 0.1;
    double base_score = 0.0;
    Task task = Task::Regression;
    Objective objective = Objective::SquaredError;
    std::size_t n_features = 0;
    GbdtConfig config;
};

/// Trains the ensemble. If `round_loss` is non-null it receives the training
/// objective after each boosting round (index 0 = base_score only).
GbdtModel fit_gbdt(const Dataset& d, const GbdtConfig& c, std::vector<double>* round_loss = nullptr);

/// Raw score: base_score + learning_rate * sum of reached leaf values.
double predict(const GbdtModel& m, std::span<const double> x);
double predict_proba(const GbdtModel& m, std::span<const double> x);
std::vector<double> predict_all(const GbdtModel& m, const Dataset& d);

/// Training objective of raw scores against labels (log-loss or half-free MSE).
double objective_loss(Objective objective, std::span<const double> labels, std::span<const double> raw_scores);

double sigmoid(double z);

/// Union of used_features over the given trees, ascending.
std::vector<int> group_used_features(const GbdtModel& m, std::span<const std::size_t> tree_indices);

void write_gbdt(std::ostream& out, const GbdtModel& m);
GbdtModel read_gbdt(std::istream& in);
void save_gbdt(const std::filesystem::path& path, const GbdtModel& m);
GbdtModel load_gbdt(const std::filesystem::path& path);

}  // namespace gbdt2nn
