#include "gbdt2nn/distillation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>

#include "gbdt2nn/binary_io.hpp"
#include "gbdt2nn/errors.hpp"
#include "gbdt2nn/log.hpp"
#include "gbdt2nn/rng.hpp"

namespace gbdt2nn {

namespace {

constexpr std::uint32_t kStudentVersion = 1;

// Stream ids for mix_seed so every random component draws independently.
constexpr std::uint64_t kGroupingStream = 1;
constexpr std::uint64_t kEmbedInitStream = 100;
constexpr std::uint64_t kHeadInitStream = 10'000;
constexpr std::uint64_t kStructInitStream = 20'000;
constexpr std::uint64_t kStructShuffleStream = 30'000;

PredictionHead init_head(std::size_t d_embed, std::uint64_t seed) {
    Rng rng(seed);
    const double limit = std::sqrt(6.0 / static_cast<double>(d_embed + 1));
    PredictionHead head;
    head.weight.resize(static_cast<Eigen::Index>(d_embed));
    for (Eigen::Index i = 0; i < head.weight.size(); ++i) head.weight[i] = rng.uniform(-limit, limit);
    return head;
}

double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

void write_head(io::Writer& w, const PredictionHead& h) {
    w.u64(static_cast<std::uint64_t>(h.weight.size()));
    for (Eigen::Index i = 0; i < h.weight.size(); ++i) w.f64(h.weight[i]);
    w.f64(h.bias);
}

PredictionHead read_head(io::Reader& r) {
    PredictionHead h;
    h.weight.resize(static_cast<Eigen::Index>(r.checked_size(r.u64())));
    for (Eigen::Index i = 0; i < h.weight.size(); ++i) h.weight[i] = r.f64();
    h.bias = r.f64();
    return h;
}

}  // namespace

int DistillConfig::resolved_groups(std::size_t n_trees) const {
    if (n_groups > 0) return n_groups;
    return std::max(1, static_cast<int>((n_trees + 19) / 20));
}

void DistillConfig::validate(std::size_t n_trees) const {
    const int k = resolved_groups(n_trees);
    if (n_groups < 0) throw UsageError("n_groups must be >= 0 (0 = automatic)");
    if (static_cast<std::size_t>(k) > n_trees) {
        throw UsageError("n_groups (" + std::to_string(k) + ") exceeds the number of trees (" + std::to_string(n_trees) + ")");
    }
    if (d_embed < 1) throw UsageError("d_embed must be >= 1");
    embed_train.validate();
    distill_train.validate();
}

std::vector<TreeGroup> group_trees(const GbdtModel& m, const DistillConfig& c) {
    const std::size_t n_trees = m.trees.size();
    if (n_trees == 0) throw UsageError("cannot group an ensemble without trees");
    c.validate(n_trees);
    const auto k = static_cast<std::size_t>(c.resolved_groups(n_trees));

    std::vector<std::size_t> order(n_trees);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(c.seed, kGroupingStream));
    rng.shuffle(std::span<std::size_t>(order));

    std::vector<TreeGroup> groups(k);
    const std::size_t base = n_trees / k;
    const std::size_t extra = n_trees % k;
    std::size_t pos = 0;
    for (std::size_t j = 0; j < k; ++j) {
        const std::size_t size = base + (j < extra ? 1 : 0);
        auto& g = groups[j];
        g.tree_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                              order.begin() + static_cast<std::ptrdiff_t>(pos + size));
        pos += size;
        g.selected_features = group_used_features(m, g.tree_indices);
        for (auto t : g.tree_indices) g.total_leaf_dim += m.trees[t].n_leaves();
    }
    return groups;
}

std::vector<std::vector<std::size_t>> group_leaf_codes(const GbdtModel& m, const TreeGroup& g, const Dataset& d) {
    std::vector<std::vector<std::size_t>> codes(d.n_samples, std::vector<std::size_t>(g.tree_indices.size()));
    for (std::size_t i = 0; i < d.n_samples; ++i) {
        const auto x = d.row(i);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < g.tree_indices.size(); ++k) {
            const auto& t = m.trees[g.tree_indices[k]];
            codes[i][k] = offset + leaf_position(t, x);
            offset += t.n_leaves();
        }
    }
    return codes;
}

std::vector<double> group_leaf_vector(const GbdtModel& m, const TreeGroup& g, std::span<const double> x) {
    std::vector<double> v;
    v.reserve(g.total_leaf_dim);
    for (auto t : g.tree_indices) {
        const auto one_hot = leaf_index(m.trees[t], x);
        v.insert(v.end(), one_hot.begin(), one_hot.end());
    }
    return v;
}

std::vector<double> group_leaf_target(const GbdtModel& m, const TreeGroup& g, const Dataset& d) {
    std::vector<double> target(d.n_samples);
    for (std::size_t i = 0; i < d.n_samples; ++i) {
        double sum = 0.0;
        for (auto t : g.tree_indices) sum += leaf_prediction(m.trees[t], d.row(i));
        target[i] = m.learning_rate * sum;
    }
    return target;
}

Matrix embed_dataset(const GbdtModel& m, const TreeGroup& g, const GroupEmbeddingNet& e, const Dataset& d) {
    const auto codes = group_leaf_codes(m, g, d);
    const auto& layer = e.embed.layer(0);
    Matrix out(static_cast<Eigen::Index>(d.n_samples), layer.weight.rows());
    for (std::size_t i = 0; i < d.n_samples; ++i) {
        Vector h = layer.bias;
        for (auto col : codes[i]) h += layer.weight.col(static_cast<Eigen::Index>(col));
        out.row(static_cast<Eigen::Index>(i)) = h.transpose();
    }
    return out;
}

EmbeddingStageResult train_embedding_stage(const GbdtModel& m, std::span<const TreeGroup> groups, const Dataset& d,
                                           const DistillConfig& c, const EmbeddingObjective& objective,
                                           const EmbeddingStepObserver& observer) {
    if (groups.empty()) throw UsageError("embedding stage needs at least one group");
    if (d.n_samples == 0) throw UsageError("embedding stage needs training samples");
    if (!(objective.lambda >= 0.0 && objective.lambda <= 1.0)) throw UsageError("lambda must be in [0, 1]");
    if (c.d_embed < 1) throw UsageError("d_embed must be >= 1");
    const TrainConfig& tc = c.embed_train;
    tc.validate();

    const std::size_t k = groups.size();
    const auto d_embed = static_cast<std::size_t>(c.d_embed);
    const auto n = d.n_samples;
    const Matrix* attr = objective.attribution_targets;
    if (attr && static_cast<std::size_t>(attr->rows()) != n) throw UsageError("attribution targets do not match the dataset");

    EmbeddingStageResult result;
    std::vector<std::vector<std::vector<std::size_t>>> codes;
    std::vector<std::vector<double>> targets;
    for (std::size_t j = 0; j < k; ++j) {
        if (groups[j].tree_indices.empty()) throw UsageError("empty tree group");
        codes.push_back(group_leaf_codes(m, groups[j], d));
        targets.push_back(group_leaf_target(m, groups[j], d));
        GroupEmbeddingNet net;
        net.embed = Mlp::create(groups[j].total_leaf_dim, {}, d_embed, Activation::Identity,
                                mix_seed(c.seed, kEmbedInitStream + j));
        net.head = init_head(d_embed, mix_seed(c.seed, kHeadInitStream + j));
        result.nets.push_back(std::move(net));
    }
    const auto n_out = attr ? attr->cols() : Eigen::Index{0};
    if (attr) {
        result.interp_weight = Matrix::Zero(static_cast<Eigen::Index>(k * d_embed), n_out);
        result.interp_bias = Vector::Zero(n_out);
    }

    // Gradient buffers, one per parameter tensor, in optimizer order.
    std::vector<Matrix> g_embed_w(k);
    std::vector<Vector> g_embed_b(k);
    std::vector<Vector> g_head_w(k);
    std::vector<double> g_head_b(k, 0.0);
    Matrix g_interp_w;
    Vector g_interp_b;
    std::vector<ParamRef> refs;
    for (std::size_t j = 0; j < k; ++j) {
        auto& layer = result.nets[j].embed.layer(0);
        g_embed_w[j] = Matrix::Zero(layer.weight.rows(), layer.weight.cols());
        g_embed_b[j] = Vector::Zero(layer.bias.size());
        g_head_w[j] = Vector::Zero(static_cast<Eigen::Index>(d_embed));
        auto& head = result.nets[j].head;
        refs.push_back({{layer.weight.data(), static_cast<std::size_t>(layer.weight.size())},
                        {g_embed_w[j].data(), static_cast<std::size_t>(g_embed_w[j].size())}});
        refs.push_back({{layer.bias.data(), static_cast<std::size_t>(layer.bias.size())},
                        {g_embed_b[j].data(), static_cast<std::size_t>(g_embed_b[j].size())}});
        refs.push_back({{head.weight.data(), d_embed}, {g_head_w[j].data(), d_embed}});
        refs.push_back({{&head.bias, 1}, {&g_head_b[j], 1}});
    }
    if (attr) {
        g_interp_w = Matrix::Zero(result.interp_weight.rows(), result.interp_weight.cols());
        g_interp_b = Vector::Zero(n_out);
        refs.push_back({{result.interp_weight.data(), static_cast<std::size_t>(result.interp_weight.size())},
                        {g_interp_w.data(), static_cast<std::size_t>(g_interp_w.size())}});
        refs.push_back({{result.interp_bias.data(), static_cast<std::size_t>(n_out)},
                        {g_interp_b.data(), static_cast<std::size_t>(n_out)}});
    }

    Optimizer optimizer(tc);
    const double lambda = objective.lambda;
    const double pred_weight = lambda / static_cast<double>(k);
    const double interp_weight = 1.0 - lambda;
    const auto batch = static_cast<std::size_t>(tc.batch_size);
    std::vector<std::size_t> order(n);
    std::vector<Matrix> h(k);
    std::vector<Matrix> d_h(k);

    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(mix_seed(tc.seed, static_cast<std::uint64_t>(epoch)));
        rng.shuffle(std::span<std::size_t>(order));
        double pred_sum = 0.0;
        double interp_sum = 0.0;

        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t b = std::min(batch, n - start);
            const std::span<const std::size_t> rows(order.data() + start, b);
            const double bd = static_cast<double>(b);

            double pred_loss = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                const auto& layer = result.nets[j].embed.layer(0);
                const auto& head = result.nets[j].head;
                h[j].resize(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(d_embed));
                for (std::size_t r = 0; r < b; ++r) {
                    Vector hr = layer.bias;
                    for (auto col : codes[j][rows[r]]) hr += layer.weight.col(static_cast<Eigen::Index>(col));
                    h[j].row(static_cast<Eigen::Index>(r)) = hr.transpose();
                }
                Vector residual = h[j] * head.weight;
                for (std::size_t r = 0; r < b; ++r) residual[static_cast<Eigen::Index>(r)] += head.bias - targets[j][rows[r]];
                const double loss_j = residual.squaredNorm() / bd;
                pred_loss += loss_j;

                const Vector d_pred = (pred_weight * 2.0 / bd) * residual;
                g_head_w[j] = h[j].transpose() * d_pred;
                g_head_b[j] = d_pred.sum();
                d_h[j] = d_pred * head.weight.transpose();
            }
            pred_loss /= static_cast<double>(k);

            double interp_loss = 0.0;
            if (attr) {
                Matrix p = Matrix::Zero(static_cast<Eigen::Index>(b), n_out);
                for (std::size_t j = 0; j < k; ++j) {
                    p += h[j] * result.interp_weight.middleRows(static_cast<Eigen::Index>(j * d_embed), static_cast<Eigen::Index>(d_embed));
                }
                p.rowwise() += result.interp_bias.transpose();
                const Matrix target = gather_rows(*attr, rows);
                const Matrix diff = p - target;
                const double denom = bd * static_cast<double>(n_out);
                interp_loss = diff.squaredNorm() / denom;
                const Matrix d_p = (interp_weight * 2.0 / denom) * diff;
                g_interp_b = d_p.colwise().sum().transpose();
                for (std::size_t j = 0; j < k; ++j) {
                    const auto block = result.interp_weight.middleRows(static_cast<Eigen::Index>(j * d_embed), static_cast<Eigen::Index>(d_embed));
                    g_interp_w.middleRows(static_cast<Eigen::Index>(j * d_embed), static_cast<Eigen::Index>(d_embed)) = h[j].transpose() * d_p;
                    d_h[j] += d_p * block.transpose();
                }
            }

            const double total = lambda * pred_loss + interp_weight * interp_loss;
            if (!std::isfinite(total)) {
                throw NumericalError("non-finite embedding loss in epoch " + std::to_string(epoch + 1));
            }
            pred_sum += pred_loss * bd;
            interp_sum += interp_loss * bd;

            for (std::size_t j = 0; j < k; ++j) {
                g_embed_w[j].setZero();
                for (std::size_t r = 0; r < b; ++r) {
                    for (auto col : codes[j][rows[r]]) {
                        g_embed_w[j].col(static_cast<Eigen::Index>(col)) += d_h[j].row(static_cast<Eigen::Index>(r)).transpose();
                    }
                }
                g_embed_b[j] = d_h[j].colwise().sum().transpose();
            }

            optimizer.step(refs);

            if (observer) {
                EmbeddingStepInfo info;
                info.step = optimizer.steps();
                info.nets = result.nets;
                for (std::size_t j = 0; j < k; ++j) {
                    info.max_abs_head_grad = std::max({info.max_abs_head_grad, max_abs({g_head_w[j].data(), d_embed}),
                                                       std::abs(g_head_b[j])});
                }
                if (attr) {
                    info.max_abs_interp_grad = std::max(
                        max_abs({g_interp_w.data(), static_cast<std::size_t>(g_interp_w.size())}),
                        max_abs({g_interp_b.data(), static_cast<std::size_t>(g_interp_b.size())}));
                }
                observer(info);
            }
        }
        const double nd = static_cast<double>(n);
        result.history.prediction_loss.push_back(pred_sum / nd);
        result.history.interpretation_loss.push_back(interp_sum / nd);
        result.history.total_loss.push_back((lambda * pred_sum + interp_weight * interp_sum) / nd);
    }

    // Final per-group fit on the whole training set.
    for (std::size_t j = 0; j < k; ++j) {
        const Matrix emb = embed_dataset(m, groups[j], result.nets[j], d);
        Vector residual = emb * result.nets[j].head.weight;
        for (std::size_t i = 0; i < n; ++i) residual[static_cast<Eigen::Index>(i)] += result.nets[j].head.bias - targets[j][i];
        result.nets[j].final_loss = residual.squaredNorm() / static_cast<double>(n);
    }
    return result;
}

std::vector<GroupEmbeddingNet> fit_group_embeddings(const GbdtModel& m, std::span<const TreeGroup> groups,
                                                    const Dataset& d, const DistillConfig& c,
                                                    EmbeddingHistory* history, const EmbeddingStepObserver& observer) {
    auto result = train_embedding_stage(m, groups, d, c, EmbeddingObjective{}, observer);
    if (history) *history = std::move(result.history);
    return std::move(result.nets);
}

GroupEmbeddingNet fit_group_embedding(const GbdtModel& m, const TreeGroup& g, const Dataset& d, const DistillConfig& c) {
    return fit_group_embeddings(m, std::span<const TreeGroup>(&g, 1), d, c).front();
}

Matrix feature_matrix(const Dataset& d, std::span<const int> columns) {
    Matrix x(static_cast<Eigen::Index>(d.n_samples), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t i = 0; i < d.n_samples; ++i) {
        for (std::size_t c = 0; c < columns.size(); ++c) {
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = d.at(i, static_cast<std::size_t>(columns[c]));
        }
    }
    return x;
}

std::vector<GroupDistillNet> fit_group_structures(const GbdtModel& m, std::span<const TreeGroup> groups,
                                                  std::span<const GroupEmbeddingNet> embeddings, const Dataset& d,
                                                  const DistillConfig& c, StructureHistory* history,
                                                  const EpochCallback& on_epoch) {
    if (groups.size() != embeddings.size()) throw UsageError("one embedding net per group is required");
    c.distill_train.validate();
    const std::size_t k = groups.size();

    std::vector<GroupDistillNet> nets(k);
    std::vector<Matrix> inputs(k);
    std::vector<Matrix> targets(k);
    std::vector<std::unique_ptr<MlpTrainer>> trainers;
    for (std::size_t j = 0; j < k; ++j) {
        const auto& g = groups[j];
        if (g.selected_features.empty()) {
            log_warning("group " + std::to_string(j) + " has no split features; its structure net is a constant");
        }
        nets[j].selected_features = g.selected_features;
        const auto d_embed = static_cast<std::size_t>(embeddings[j].embed.output_dim());
        nets[j].net = Mlp::create(g.selected_features.size(),
                                  g.selected_features.empty() ? std::span<const std::size_t>{} : std::span<const std::size_t>(c.hidden),
                                  d_embed, Activation::Identity, mix_seed(c.seed, kStructInitStream + j));
        inputs[j] = feature_matrix(d, g.selected_features);
        targets[j] = embed_dataset(m, g, embeddings[j], d);
    }
    std::vector<double> constant_loss(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        if (groups[j].selected_features.empty()) {
            // No inputs: the least-squares constant is the target mean.
            nets[j].net.layer(0).bias = targets[j].colwise().mean().transpose();
            const Matrix out = nets[j].net.forward(inputs[j]);
            constant_loss[j] = loss_value(Loss::Mse, out, targets[j]);
            trainers.push_back(nullptr);
            continue;
        }
        TrainConfig tc = c.distill_train;
        tc.seed = mix_seed(c.distill_train.seed, kStructShuffleStream + j);
        trainers.push_back(std::make_unique<MlpTrainer>(nets[j].net, inputs[j], targets[j], tc));
    }
    if (history) history->group_loss.assign(k, {});

    for (int epoch = 1; epoch <= c.distill_train.epochs; ++epoch) {
        for (std::size_t j = 0; j < k; ++j) {
            const double loss = trainers[j] ? trainers[j]->run_epoch() : constant_loss[j];
            if (history) history->group_loss[j].push_back(loss);
        }
        if (on_epoch) on_epoch(epoch, nets);
    }
    return nets;
}

GroupDistillNet fit_group_structure(const TreeGroup& g, const GroupEmbeddingNet& e, const GbdtModel& m,
                                    const Dataset& d, const DistillConfig& c) {
    return fit_group_structures(m, std::span<const TreeGroup>(&g, 1), std::span<const GroupEmbeddingNet>(&e, 1), d, c)
        .front();
}

Gbdt2nnModel assemble(const GbdtModel& m, std::span<const TreeGroup> groups, std::span<const GroupDistillNet> nets,
                      std::span<const PredictionHead> heads) {
    if (groups.empty()) throw UsageError("a student needs at least one group");
    if (groups.size() != nets.size() || groups.size() != heads.size()) {
        throw UsageError("group, structure-net and head counts differ");
    }
    Gbdt2nnModel s;
    s.base_score = m.base_score;
    s.learning_rate = m.learning_rate;
    s.task = m.task;
    s.objective = m.objective;
    s.n_features = m.n_features;
    s.d_embed = nets.front().net.output_dim();
    for (std::size_t j = 0; j < groups.size(); ++j) {
        if (nets[j].net.output_dim() != s.d_embed || static_cast<std::size_t>(heads[j].weight.size()) != s.d_embed) {
            throw UsageError("inconsistent embedding width across groups");
        }
        if (nets[j].net.input_dim() != groups[j].selected_features.size()) {
            throw UsageError("structure net input width differs from the group's selected features");
        }
        s.groups.push_back({groups[j], nets[j], heads[j]});
    }
    return s;
}

Vector group_embedding(const StudentGroup& g, std::span<const double> x) {
    std::vector<double> sub;
    sub.reserve(g.distill.selected_features.size());
    for (int f : g.distill.selected_features) sub.push_back(x[static_cast<std::size_t>(f)]);
    return g.distill.net.forward(sub);
}

double student_predict(const Gbdt2nnModel& s, std::span<const double> x) {
    if (x.size() != s.n_features) {
        throw UsageError("input has " + std::to_string(x.size()) + " features, student expects " + std::to_string(s.n_features));
    }
    double score = s.base_score;
    for (const auto& g : s.groups) score += g.head.apply(group_embedding(g, x));
    return score;
}

double student_predict_proba(const Gbdt2nnModel& s, std::span<const double> x) {
    return sigmoid(student_predict(s, x));
}

std::vector<Matrix> student_group_embeddings(const Gbdt2nnModel& s, const Dataset& d) {
    if (d.n_features != s.n_features) throw UsageError("dataset width does not match the student");
    std::vector<Matrix> out;
    for (const auto& g : s.groups) out.push_back(g.distill.net.forward(feature_matrix(d, g.distill.selected_features)));
    return out;
}

std::vector<double> student_predict_all(const Gbdt2nnModel& s, const Dataset& d) {
    const auto embeddings = student_group_embeddings(s, d);
    Vector score = Vector::Constant(static_cast<Eigen::Index>(d.n_samples), s.base_score);
    for (std::size_t j = 0; j < s.groups.size(); ++j) {
        score += embeddings[j] * s.groups[j].head.weight;
        score.array() += s.groups[j].head.bias;
    }
    return {score.data(), score.data() + score.size()};
}

double task_loss(Task task, std::span<const double> labels, std::span<const double> raw_scores) {
    return objective_loss(task == Task::Classification ? Objective::LogisticBinary : Objective::SquaredError, labels,
                          raw_scores);
}

Gbdt2nnModel online_update(const Gbdt2nnModel& s, const Dataset& batch, const TrainConfig& c,
                           std::vector<double>* epoch_loss) {
    c.validate();
    if (batch.task != s.task) throw UsageError("online_update batch task differs from the model task");
    if (batch.n_features != s.n_features) throw UsageError("online_update batch width differs from the model");
    Gbdt2nnModel out = s;
    if (c.epochs == 0 || batch.n_samples == 0) return out;

    const std::size_t k = out.groups.size();
    const Loss loss = s.task == Task::Classification ? Loss::BceWithLogits : Loss::Mse;
    std::vector<Matrix> inputs;
    for (const auto& g : out.groups) inputs.push_back(feature_matrix(batch, g.distill.selected_features));
    Matrix labels(static_cast<Eigen::Index>(batch.n_samples), 1);
    for (std::size_t i = 0; i < batch.n_samples; ++i) labels(static_cast<Eigen::Index>(i), 0) = batch.labels[i];

    std::vector<MlpGradients> grads(k);
    std::vector<ForwardCache> caches(k);
    for (std::size_t j = 0; j < k; ++j) grads[j] = zero_gradients(out.groups[j].distill.net);
    std::vector<ParamRef> refs;
    for (std::size_t j = 0; j < k; ++j) {
        auto r = param_refs(out.groups[j].distill.net, grads[j]);
        refs.insert(refs.end(), r.begin(), r.end());
    }
    Optimizer optimizer(c);

    const std::size_t n = batch.n_samples;
    const auto bs = static_cast<std::size_t>(c.batch_size);
    std::vector<std::size_t> order(n);
    std::vector<Matrix> emb(k);
    if (epoch_loss) epoch_loss->clear();
    for (int epoch = 0; epoch < c.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(mix_seed(c.seed, static_cast<std::uint64_t>(epoch)));
        rng.shuffle(std::span<std::size_t>(order));
        double sum = 0.0;
        for (std::size_t start = 0; start < n; start += bs) {
            const std::span<const std::size_t> rows(order.data() + start, std::min(bs, n - start));
            Matrix score = Matrix::Constant(static_cast<Eigen::Index>(rows.size()), 1, out.base_score);
            for (std::size_t j = 0; j < k; ++j) {
                emb[j] = out.groups[j].distill.net.forward(gather_rows(inputs[j], rows), caches[j]);
                score.col(0) += emb[j] * out.groups[j].head.weight;
                score.array() += out.groups[j].head.bias;
            }
            const Matrix y = gather_rows(labels, rows);
            const double l = loss_value(loss, score, y);
            if (!std::isfinite(l)) throw NumericalError("non-finite loss in online update epoch " + std::to_string(epoch + 1));
            sum += l * static_cast<double>(rows.size());
            const Matrix d_score = loss_gradient(loss, score, y);
            for (std::size_t j = 0; j < k; ++j) {
                const Matrix d_emb = d_score * out.groups[j].head.weight.transpose();
                out.groups[j].distill.net.backward(caches[j], d_emb, grads[j]);
            }
            optimizer.step(refs);
        }
        if (epoch_loss) epoch_loss->push_back(sum / static_cast<double>(n));
    }
    return out;
}

Gbdt2nnModel distill_from_embeddings(const GbdtModel& m, std::span<const TreeGroup> groups,
                                     std::span<const GroupEmbeddingNet> embeddings, const Dataset& d,
                                     const DistillConfig& c, StructureHistory* history, const EpochCallback& on_epoch) {
    const auto nets = fit_group_structures(m, groups, embeddings, d, c, history, on_epoch);
    std::vector<PredictionHead> heads;
    for (const auto& e : embeddings) heads.push_back(e.head);
    return assemble(m, groups, nets, heads);
}

DistillResult distill(const GbdtModel& m, const Dataset& d, const DistillConfig& c, const EpochCallback& on_epoch) {
    DistillResult r;
    r.groups = group_trees(m, c);
    r.embeddings = fit_group_embeddings(m, r.groups, d, c, &r.embedding_history);
    r.student = distill_from_embeddings(m, r.groups, r.embeddings, d, c, &r.structure_history, on_epoch);
    return r;
}

void write_student(std::ostream& out, const Gbdt2nnModel& s) {
    io::Writer w(out);
    w.magic("G2NN", kStudentVersion);
    w.f64(s.base_score);
    w.f64(s.learning_rate);
    w.u8(s.task == Task::Classification ? 0 : 1);
    w.u8(s.objective == Objective::LogisticBinary ? 0 : 1);
    w.u64(s.n_features);
    w.u64(s.d_embed);
    w.u64(s.groups.size());
    for (const auto& g : s.groups) {
        w.u64(g.group.tree_indices.size());
        for (auto t : g.group.tree_indices) w.u64(t);
        w.u64(g.group.selected_features.size());
        for (int f : g.group.selected_features) w.i64(f);
        w.u64(g.group.total_leaf_dim);
        g.distill.net.write(w);
        write_head(w, g.head);
    }
}

Gbdt2nnModel read_student(std::istream& in) {
    io::Reader r(in);
    r.magic("G2NN", kStudentVersion);
    Gbdt2nnModel s;
    s.base_score = r.f64();
    s.learning_rate = r.f64();
    s.task = r.u8() == 0 ? Task::Classification : Task::Regression;
    s.objective = r.u8() == 0 ? Objective::LogisticBinary : Objective::SquaredError;
    s.n_features = r.checked_size(r.u64());
    s.d_embed = r.checked_size(r.u64());
    const auto n_groups = r.checked_size(r.u64());
    for (std::size_t j = 0; j < n_groups; ++j) {
        StudentGroup g;
        g.group.tree_indices.resize(r.checked_size(r.u64()));
        for (auto& t : g.group.tree_indices) t = r.checked_size(r.u64());
        g.group.selected_features.resize(r.checked_size(r.u64()));
        for (auto& f : g.group.selected_features) {
            f = static_cast<int>(r.i64());
            if (f < 0 || static_cast<std::size_t>(f) >= s.n_features) throw DataError("selected feature out of range");
        }
        g.group.total_leaf_dim = r.checked_size(r.u64());
        g.distill.net = Mlp::read(r);
        g.distill.selected_features = g.group.selected_features;
        g.head = read_head(r);
        if (g.distill.net.input_dim() != g.group.selected_features.size() || g.distill.net.output_dim() != s.d_embed ||
            static_cast<std::size_t>(g.head.weight.size()) != s.d_embed) {
            throw DataError("inconsistent group shapes in student container");
        }
        s.groups.push_back(std::move(g));
    }
    return s;
}

void save_student(const std::filesystem::path& path, const Gbdt2nnModel& s) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    write_student(out, s);
}

Gbdt2nnModel load_student(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open student model: " + path.string());
    return read_student(in);
}

}  // namespace gbdt2nn
