#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "gbdt2nn/distillation.hpp"
#include "gbdt2nn/saabas.hpp"

namespace gbdt2nn {

/// Affine map from concatenated group embeddings G_x to attribution space:
/// phi(x) = weight^T G_x + bias, weight is (k * d_embed) x n_features.
struct InterpretationHead {
    Matrix weight;
    Vector bias;

    bool fitted() const { return weight.size() > 0 && bias.size() == weight.cols(); }
};

enum class HeadFitMethod { ClosedForm, Gradient };

struct HeadFitConfig {
    HeadFitMethod method = HeadFitMethod::ClosedForm;
    double ridge = 1e-6;  // penalty on the mean squared error objective
    TrainConfig train{.epochs = 200, .batch_size = 128, .learning_rate = 1e-2};
};

/// Features some group net reads (the universe F); attribution targets are
/// restricted to it.
std::vector<int> attribution_universe(const Gbdt2nnModel& s);

/// Teacher attribution values (bias excluded) with columns outside `universe` zeroed, n x n_features.
Matrix attribution_targets(const GbdtModel& teacher, const Dataset& d, std::span<const int> universe);

/// G_x: group embeddings concatenated in group order.
Vector concat_embeddings(const Gbdt2nnModel& s, std::span<const double> x);
Matrix concat_embeddings(const Gbdt2nnModel& s, const Dataset& d);

/// Least-squares affine fit targets ~ inputs * weight + bias.
InterpretationHead fit_affine_head(const Matrix& inputs, const Matrix& targets, const HeadFitConfig& c = {});

/// Independent method: fit the head on the trained student's embeddings
/// against the teacher's Saabas attributions.
InterpretationHead fit_interpretation_head(const Gbdt2nnModel& s, const Dataset& d, const GbdtModel& teacher,
                                           const HeadFitConfig& c = {});

/// Student with both heads on one shared set of structure nets.
struct MixedModel {
    Gbdt2nnModel student;
    InterpretationHead interp_head;
};

struct MixedOutput {
    double raw_score = 0.0;
    AttributionVector attribution;
};

/// One forward pass through the structure nets feeding both heads.
MixedOutput mixed_forward(const MixedModel& mm, std::span<const double> x);

/// weight^T G_x + bias; the bias field of the result is 0.
AttributionVector explain(const MixedModel& mm, std::span<const double> x);
std::vector<AttributionVector> explain_dataset(const MixedModel& mm, const Dataset& d);

struct JointConfig {
    double lambda_tradeoff = 0.7;
    DistillConfig distill;  // n_groups, d_embed, embed_train and structure settings

    void validate(std::size_t n_trees) const;
};

struct JointResult {
    std::vector<GroupEmbeddingNet> embeddings;
    InterpretationHead interp_head;
    EmbeddingHistory history;
};

/// Two-view embedding training over all groups at once.
JointResult fit_joint(const GbdtModel& teacher, std::span<const TreeGroup> groups, const Dataset& d,
                      const JointConfig& jc, const EmbeddingStepObserver& observer = {});

struct JointDistillResult {
    MixedModel model;
    std::vector<TreeGroup> groups;
    JointResult joint;
    StructureHistory structure_history;
};

/// Joint embeddings followed by the usual structure distillation.
JointDistillResult joint_distill(const GbdtModel& teacher, const Dataset& d, const JointConfig& jc,
                                 const EpochCallback& on_epoch = {});

void save_mixed(const std::filesystem::path& path, const MixedModel& mm);
MixedModel load_mixed(const std::filesystem::path& path);

}  // namespace gbdt2nn
