#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "gbdt2nn/dataset.hpp"
#include "gbdt2nn/gbdt.hpp"
#include "gbdt2nn/mlp.hpp"

namespace gbdt2nn {

/// A subset of teacher trees distilled by one network.
struct TreeGroup {
    std::vector<std::size_t> tree_indices;
    std::vector<int> selected_features;  // union of the members' used_features
    std::size_t total_leaf_dim = 0;      // sum of member leaf counts
};

/// Scalar output layer w1 . h + b1 on top of a group embedding.
struct PredictionHead {
    Vector weight;
    double bias = 0.0;

    double apply(const Vector& embedding) const { return weight.dot(embedding) + bias; }
};

/// Leaf embedding H: concatenated one-hot leaf indicators -> d_embed, plus its head.
struct GroupEmbeddingNet {
    Mlp embed;  // single Identity layer, input width total_leaf_dim
    PredictionHead head;
    double final_loss = 0.0;
};

/// Structure network: x[selected_features] -> embedding.
struct GroupDistillNet {
    Mlp net;
    std::vector<int> selected_features;
};

struct StudentGroup {
    TreeGroup group;
    GroupDistillNet distill;
    PredictionHead head;
};

struct Gbdt2nnModel {
    std::vector<StudentGroup> groups;
    double base_score = 0.0;
    double learning_rate = 0.1;
    Task task = Task::Regression;
    Objective objective = Objective::SquaredError;
    std::size_t n_features = 0;
    std::size_t d_embed = 0;
};

struct DistillConfig {
    int n_groups = 0;  // 0 selects ceil(n_trees / 20)
    int d_embed = 20;
    std::vector<std::size_t> hidden{100, 100};
    TrainConfig embed_train{.epochs = 30, .batch_size = 128, .learning_rate = 1e-2};
    TrainConfig distill_train{.epochs = 40, .batch_size = 64, .learning_rate = 3e-3};
    std::uint64_t seed = 0;

    int resolved_groups(std::size_t n_trees) const;
    void validate(std::size_t n_trees) const;
};

/// Seeded permutation of tree indices cut into k near-equal contiguous chunks.
std::vector<TreeGroup> group_trees(const GbdtModel& m, const DistillConfig& c);

/// Per-sample column indices of the active one-hot entries of the group's
/// concatenated leaf vector (|T| entries per sample).
std::vector<std::vector<std::size_t>> group_leaf_codes(const GbdtModel& m, const TreeGroup& g, const Dataset& d);

/// Dense concatenated one-hot leaf vector for one sample.
std::vector<double> group_leaf_vector(const GbdtModel& m, const TreeGroup& g, std::span<const double> x);

/// learning_rate * sum of member leaf predictions, per sample.
std::vector<double> group_leaf_target(const GbdtModel& m, const TreeGroup& g, const Dataset& d);

/// Embedding H(x) for every sample, (n x d_embed).
Matrix embed_dataset(const GbdtModel& m, const TreeGroup& g, const GroupEmbeddingNet& e, const Dataset& d);

struct EmbeddingHistory {
    std::vector<double> prediction_loss;      // per epoch, mean over groups
    std::vector<double> interpretation_loss;  // per epoch, joint only
    std::vector<double> total_loss;
};

/// Snapshot handed to an observer after every optimizer step of the embedding stage.
struct EmbeddingStepInfo {
    std::uint64_t step = 0;
    std::span<const GroupEmbeddingNet> nets;
    double max_abs_head_grad = 0.0;    // over all w1 / b1 gradients of this step
    double max_abs_interp_grad = 0.0;  // over w2 / b2; 0 when there is no attribution term
};

using EmbeddingStepObserver = std::function<void(const EmbeddingStepInfo&)>;

/// Two-view embedding objective:
///   lambda * mean_j MSE(head_j(H_j), lr * sum p_t)  +  (1 - lambda) * MSE(G w2 + b2, targets)
/// The baseline stage is lambda = 1 with no attribution targets.
struct EmbeddingObjective {
    double lambda = 1.0;
    const Matrix* attribution_targets = nullptr;  // n x n_outputs, rows aligned with the dataset
};

struct EmbeddingStageResult {
    std::vector<GroupEmbeddingNet> nets;
    Matrix interp_weight;  // (k * d_embed) x n_outputs, empty without attribution targets
    Vector interp_bias;
    EmbeddingHistory history;
};

/// Trains every group's embedding net (and optionally an attribution head)
/// on shared mini-batches with one Adam/SGD state.
EmbeddingStageResult train_embedding_stage(const GbdtModel& m, std::span<const TreeGroup> groups, const Dataset& d,
                                           const DistillConfig& c, const EmbeddingObjective& objective,
                                           const EmbeddingStepObserver& observer = {});

/// Baseline leaf-embedding stage for all groups at once, sharing mini-batches.
std::vector<GroupEmbeddingNet> fit_group_embeddings(const GbdtModel& m, std::span<const TreeGroup> groups,
                                                    const Dataset& d, const DistillConfig& c,
                                                    EmbeddingHistory* history = nullptr,
                                                    const EmbeddingStepObserver& observer = {});

GroupEmbeddingNet fit_group_embedding(const GbdtModel& m, const TreeGroup& g, const Dataset& d, const DistillConfig& c);

/// Called after each structure-distillation epoch with the epoch number (1-based).
using EpochCallback = std::function<void(int epoch, std::span<const GroupDistillNet> nets)>;

struct StructureHistory {
    std::vector<std::vector<double>> group_loss;  // [group][epoch]
};

/// Trains each group's structure net on x[I_T] against its fixed embedding targets.
std::vector<GroupDistillNet> fit_group_structures(const GbdtModel& m, std::span<const TreeGroup> groups,
                                                  std::span<const GroupEmbeddingNet> embeddings, const Dataset& d,
                                                  const DistillConfig& c, StructureHistory* history = nullptr,
                                                  const EpochCallback& on_epoch = {});

GroupDistillNet fit_group_structure(const TreeGroup& g, const GroupEmbeddingNet& e, const GbdtModel& m,
                                    const Dataset& d, const DistillConfig& c);

Gbdt2nnModel assemble(const GbdtModel& m, std::span<const TreeGroup> groups, std::span<const GroupDistillNet> nets,
                      std::span<const PredictionHead> heads);

/// Structure-net output for one group on a full feature vector.
Vector group_embedding(const StudentGroup& g, std::span<const double> x);

/// base_score + sum over groups of head(net(x[I_T])).
double student_predict(const Gbdt2nnModel& s, std::span<const double> x);
double student_predict_proba(const Gbdt2nnModel& s, std::span<const double> x);
std::vector<double> student_predict_all(const Gbdt2nnModel& s, const Dataset& d);

/// Batch structure-net outputs of every group, each (n x d_embed).
std::vector<Matrix> student_group_embeddings(const Gbdt2nnModel& s, const Dataset& d);

/// Task loss of raw scores: BCE-with-logits for classification, MSE for regression.
double task_loss(Task task, std::span<const double> labels, std::span<const double> raw_scores);

/// Fine-tunes the structure nets end-to-end on the task loss; heads stay fixed.
/// `epoch_loss`, if given, receives the mean batch loss of each epoch.
Gbdt2nnModel online_update(const Gbdt2nnModel& s, const Dataset& batch, const TrainConfig& c,
                           std::vector<double>* epoch_loss = nullptr);

/// Whole baseline pipeline: group, embed, distill, assemble.
struct DistillResult {
    Gbdt2nnModel student;
    std::vector<TreeGroup> groups;
    std::vector<GroupEmbeddingNet> embeddings;
    EmbeddingHistory embedding_history;
    StructureHistory structure_history;
};

/// Structure distillation against given embeddings, then assembly.
Gbdt2nnModel distill_from_embeddings(const GbdtModel& m, std::span<const TreeGroup> groups,
                                     std::span<const GroupEmbeddingNet> embeddings, const Dataset& d,
                                     const DistillConfig& c, StructureHistory* history = nullptr,
                                     const EpochCallback& on_epoch = {});

DistillResult distill(const GbdtModel& m, const Dataset& d, const DistillConfig& c,
                      const EpochCallback& on_epoch = {});

Matrix feature_matrix(const Dataset& d, std::span<const int> columns);

void write_student(std::ostream& out, const Gbdt2nnModel& s);
Gbdt2nnModel read_student(std::istream& in);
void save_student(const std::filesystem::path& path, const Gbdt2nnModel& s);
Gbdt2nnModel load_student(const std::filesystem::path& path);

}  // namespace gbdt2nn
