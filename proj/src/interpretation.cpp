#include "gbdt2nn/interpretation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "gbdt2nn/binary_io.hpp"
#include "gbdt2nn/errors.hpp"
#include "gbdt2nn/log.hpp"

namespace gbdt2nn {

namespace {

constexpr std::uint32_t kMixedVersion = 1;

void zero_outside_universe(InterpretationHead& head, std::span<const int> universe) {
    std::vector<char> keep(static_cast<std::size_t>(head.weight.cols()), 0);
    for (int f : universe) keep[static_cast<std::size_t>(f)] = 1;
    for (Eigen::Index c = 0; c < head.weight.cols(); ++c) {
        if (keep[static_cast<std::size_t>(c)]) continue;
        head.weight.col(c).setZero();
        head.bias[c] = 0.0;
    }
}

}  // namespace

std::vector<int> attribution_universe(const Gbdt2nnModel& s) {
    std::set<int> features;
    for (const auto& g : s.groups) features.insert(g.distill.selected_features.begin(), g.distill.selected_features.end());
    return {features.begin(), features.end()};
}

Matrix attribution_targets(const GbdtModel& teacher, const Dataset& d, std::span<const int> universe) {
    std::vector<char> keep(d.n_features, 0);
    for (int f : universe) keep.at(static_cast<std::size_t>(f)) = 1;
    Matrix t = Matrix::Zero(static_cast<Eigen::Index>(d.n_samples), static_cast<Eigen::Index>(d.n_features));
    for (std::size_t i = 0; i < d.n_samples; ++i) {
        const auto a = attribute_ensemble(teacher, d.row(i));
        for (std::size_t f = 0; f < d.n_features; ++f) {
            if (keep[f]) t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = a.values[f];
        }
    }
    return t;
}

Vector concat_embeddings(const Gbdt2nnModel& s, std::span<const double> x) {
    if (x.size() != s.n_features) throw UsageError("input dimension does not match the student");
    Vector g(static_cast<Eigen::Index>(s.groups.size() * s.d_embed));
    for (std::size_t j = 0; j < s.groups.size(); ++j) {
        g.segment(static_cast<Eigen::Index>(j * s.d_embed), static_cast<Eigen::Index>(s.d_embed)) =
            group_embedding(s.groups[j], x);
    }
    return g;
}

Matrix concat_embeddings(const Gbdt2nnModel& s, const Dataset& d) {
    const auto parts = student_group_embeddings(s, d);
    Matrix g(static_cast<Eigen::Index>(d.n_samples), static_cast<Eigen::Index>(s.groups.size() * s.d_embed));
    for (std::size_t j = 0; j < parts.size(); ++j) {
        g.middleCols(static_cast<Eigen::Index>(j * s.d_embed), static_cast<Eigen::Index>(s.d_embed)) = parts[j];
    }
    return g;
}

InterpretationHead fit_affine_head(const Matrix& inputs, const Matrix& targets, const HeadFitConfig& c) {
    if (inputs.rows() != targets.rows() || inputs.rows() == 0) throw UsageError("head fit needs matching, non-empty inputs and targets");
    InterpretationHead head;

    if (c.method == HeadFitMethod::Gradient) {
        Mlp lin = Mlp::create(static_cast<std::size_t>(inputs.cols()), {}, static_cast<std::size_t>(targets.cols()),
                              Activation::Identity, c.train.seed);
        TrainConfig tc = c.train;
        tc.loss = Loss::Mse;
        train(lin, inputs, targets, tc);
        head.weight = lin.layer(0).weight.transpose();
        head.bias = lin.layer(0).bias;
        return head;
    }

    const double n = static_cast<double>(inputs.rows());
    const Eigen::RowVectorXd in_mean = inputs.colwise().mean();
    const Eigen::RowVectorXd out_mean = targets.colwise().mean();
    const Matrix xc = inputs.rowwise() - in_mean;
    const Matrix yc = targets.rowwise() - out_mean;
    const Matrix gram = xc.transpose() * xc / n;
    const Matrix rhs = xc.transpose() * yc / n;

    double ridge = c.ridge;
    for (int attempt = 0; attempt < 8; ++attempt) {
        Matrix a = gram;
        a.diagonal().array() += ridge;
        Eigen::LDLT<Matrix> ldlt(a);
        const Vector pivots = ldlt.vectorD();
        const bool definite = pivots.size() == 0 || pivots.minCoeff() > 1e-13 * std::max(1.0, pivots.maxCoeff());
        if (ldlt.info() == Eigen::Success && definite) {
            Matrix w = ldlt.solve(rhs);
            if (w.allFinite() && (a * w - rhs).norm() <= 1e-6 * (rhs.norm() + 1.0)) {
                head.weight = std::move(w);
                head.bias = (out_mean - in_mean * head.weight).transpose();
                return head;
            }
        }
        const double next = ridge > 0.0 ? ridge * 100.0 : 1e-8;
        log_warning("normal equations ill-conditioned at ridge " + std::to_string(ridge) + ", retrying with " +
                    std::to_string(next));
        ridge = next;
    }
    throw NumericalError("interpretation head solve failed even with ridge fallback");
}

InterpretationHead fit_interpretation_head(const Gbdt2nnModel& s, const Dataset& d, const GbdtModel& teacher,
                                           const HeadFitConfig& c) {
    if (teacher.n_features != s.n_features) throw UsageError("teacher and student feature counts differ");
    const auto universe = attribution_universe(s);
    const Matrix g = concat_embeddings(s, d);
    const Matrix targets = attribution_targets(teacher, d, universe);
    auto head = fit_affine_head(g, targets, c);
    zero_outside_universe(head, universe);
    return head;
}

MixedOutput mixed_forward(const MixedModel& mm, std::span<const double> x) {
    const auto& s = mm.student;
    if (!mm.interp_head.fitted()) throw UsageError("interpretation head is not fitted");
    if (static_cast<std::size_t>(mm.interp_head.weight.rows()) != s.groups.size() * s.d_embed) {
        throw UsageError("interpretation head width does not match the student embeddings");
    }
    const Vector g = concat_embeddings(s, x);
    MixedOutput out;
    out.raw_score = s.base_score;
    for (std::size_t j = 0; j < s.groups.size(); ++j) {
        out.raw_score += s.groups[j].head.apply(g.segment(static_cast<Eigen::Index>(j * s.d_embed), static_cast<Eigen::Index>(s.d_embed)));
    }
    const Vector phi = mm.interp_head.weight.transpose() * g + mm.interp_head.bias;
    out.attribution.values.assign(phi.data(), phi.data() + phi.size());
    return out;
}

AttributionVector explain(const MixedModel& mm, std::span<const double> x) { return mixed_forward(mm, x).attribution; }

std::vector<AttributionVector> explain_dataset(const MixedModel& mm, const Dataset& d) {
    if (!mm.interp_head.fitted()) throw UsageError("interpretation head is not fitted");
    const Matrix g = concat_embeddings(mm.student, d);
    Matrix phi = g * mm.interp_head.weight;
    phi.rowwise() += mm.interp_head.bias.transpose();
    std::vector<AttributionVector> out(d.n_samples);
    for (std::size_t i = 0; i < d.n_samples; ++i) {
        out[i].values.resize(static_cast<std::size_t>(phi.cols()));
        for (Eigen::Index c = 0; c < phi.cols(); ++c) out[i].values[static_cast<std::size_t>(c)] = phi(static_cast<Eigen::Index>(i), c);
    }
    return out;
}

void JointConfig::validate(std::size_t n_trees) const {
    if (!(lambda_tradeoff >= 0.0 && lambda_tradeoff <= 1.0)) throw UsageError("lambda must be in [0, 1]");
    distill.validate(n_trees);
}

JointResult fit_joint(const GbdtModel& teacher, std::span<const TreeGroup> groups, const Dataset& d,
                      const JointConfig& jc, const EmbeddingStepObserver& observer) {
    jc.validate(teacher.trees.size());
    std::set<int> features;
    for (const auto& g : groups) features.insert(g.selected_features.begin(), g.selected_features.end());
    const std::vector<int> universe(features.begin(), features.end());
    const Matrix targets = attribution_targets(teacher, d, universe);

    EmbeddingObjective objective;
    objective.lambda = jc.lambda_tradeoff;
    objective.attribution_targets = &targets;
    auto stage = train_embedding_stage(teacher, groups, d, jc.distill, objective, observer);

    JointResult r;
    r.embeddings = std::move(stage.nets);
    r.interp_head.weight = std::move(stage.interp_weight);
    r.interp_head.bias = std::move(stage.interp_bias);
    zero_outside_universe(r.interp_head, universe);
    r.history = std::move(stage.history);
    return r;
}

JointDistillResult joint_distill(const GbdtModel& teacher, const Dataset& d, const JointConfig& jc,
                                 const EpochCallback& on_epoch) {
    JointDistillResult r;
    r.groups = group_trees(teacher, jc.distill);
    r.joint = fit_joint(teacher, r.groups, d, jc);
    r.model.student = distill_from_embeddings(teacher, r.groups, r.joint.embeddings, d, jc.distill,
                                              &r.structure_history, on_epoch);
    r.model.interp_head = r.joint.interp_head;
    return r;
}

void save_mixed(const std::filesystem::path& path, const MixedModel& mm) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    io::Writer w(out);
    w.magic("G2MX", kMixedVersion);
    write_student(out, mm.student);
    w.u64(static_cast<std::uint64_t>(mm.interp_head.weight.rows()));
    w.u64(static_cast<std::uint64_t>(mm.interp_head.weight.cols()));
    for (Eigen::Index i = 0; i < mm.interp_head.weight.size(); ++i) w.f64(mm.interp_head.weight.data()[i]);
    for (Eigen::Index i = 0; i < mm.interp_head.bias.size(); ++i) w.f64(mm.interp_head.bias[i]);
}

MixedModel load_mixed(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open mixed model: " + path.string());
    io::Reader r(in);
    r.magic("G2MX", kMixedVersion);
    MixedModel mm;
    mm.student = read_student(in);
    const auto rows = static_cast<Eigen::Index>(r.checked_size(r.u64()));
    const auto cols = static_cast<Eigen::Index>(r.checked_size(r.u64()));
    if (static_cast<std::size_t>(rows) != mm.student.groups.size() * mm.student.d_embed ||
        static_cast<std::size_t>(cols) != mm.student.n_features) {
        throw DataError("interpretation head shape does not match the student");
    }
    mm.interp_head.weight.resize(rows, cols);
    for (Eigen::Index i = 0; i < mm.interp_head.weight.size(); ++i) mm.interp_head.weight.data()[i] = r.f64();
    mm.interp_head.bias.resize(cols);
    for (Eigen::Index i = 0; i < cols; ++i) mm.interp_head.bias[i] = r.f64();
    return mm;
}

}  // namespace gbdt2nn
