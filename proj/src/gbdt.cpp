#include "gbdt2nn/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "gbdt2nn/binary_io.hpp"
#include "gbdt2nn/errors.hpp"

namespace gbdt2nn {

namespace {

constexpr std::uint32_t kGbdtVersion = 1;

struct SplitCandidate {
    bool valid = false;
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
};

// A leaf that may still be split, together with its samples sorted by every feature.
struct OpenLeaf {
    int node = -1;
    std::vector<std::vector<std::uint32_t>> sorted;
    SplitCandidate best;
};

class TreeGrower {
public:
    TreeGrower(const Dataset& d, const GbdtConfig& c, const std::vector<std::vector<std::uint32_t>>& presorted,
               const std::vector<double>& residual, const std::vector<double>& hessian, Objective objective)
        : d_(d), c_(c), presorted_(presorted), residual_(residual), hessian_(hessian), objective_(objective),
          goes_left_(d.n_samples, 0) {}

    Tree grow() {
        Tree tree;
        tree.nodes.emplace_back();
        tree.nodes[0].sample_count = d_.n_samples;

        std::vector<OpenLeaf> open;
        OpenLeaf root{0, presorted_, {}};
        root.best = best_split(root.sorted);
        open.push_back(std::move(root));
        std::vector<OpenLeaf> closed;

        std::size_t n_leaves = 1;
        while (n_leaves < static_cast<std::size_t>(c_.max_leaves)) {
            // Highest gain first; equal gains resolve to the older (lower id) node.
            auto pick = open.end();
            for (auto it = open.begin(); it != open.end(); ++it) {
                if (!it->best.valid) continue;
                if (pick == open.end() || it->best.gain > pick->best.gain) pick = it;
            }
            if (pick == open.end()) break;

            OpenLeaf leaf = std::move(*pick);
            open.erase(pick);
            auto [left, right] = apply_split(tree, leaf);
            left.best = best_split(left.sorted);
            right.best = best_split(right.sorted);
            open.push_back(std::move(left));
            open.push_back(std::move(right));
            ++n_leaves;
        }

        for (auto& leaf : open) set_leaf_value(tree, leaf);
        fill_expected_values(tree);
        tree.finalize();
        return tree;
    }

private:
    SplitCandidate best_split(const std::vector<std::vector<std::uint32_t>>& sorted) const {
        SplitCandidate best;
        const auto& any = sorted.front();
        const std::size_t n = any.size();
        const auto min_leaf = static_cast<std::size_t>(std::max(1, c_.min_samples_leaf));
        if (n < 2 * min_leaf) return best;

        double total = 0.0;
        double total_sq = 0.0;
        for (auto i : any) {
            total += residual_[i];
            total_sq += residual_[i] * residual_[i];
        }
        const double parent_score = total * total / static_cast<double>(n);
        // Floating noise on a constant residual vector must not count as gain.
        const double floor_gain = std::max(c_.min_gain, 1e-12 * total_sq);

        for (std::size_t f = 0; f < d_.n_features; ++f) {
            const auto& order = sorted[f];
            double left_sum = 0.0;
            for (std::size_t pos = 0; pos + 1 < n; ++pos) {
                const auto i = order[pos];
                left_sum += residual_[i];
                const std::size_t n_left = pos + 1;
                const std::size_t n_right = n - n_left;
                if (n_left < min_leaf) continue;
                if (n_right < min_leaf) break;
                const double v = d_.at(i, f);
                const double next = d_.at(order[pos + 1], f);
                if (!(v < next)) continue;
                const double right_sum = total - left_sum;
                const double gain = left_sum * left_sum / static_cast<double>(n_left) +
                                    right_sum * right_sum / static_cast<double>(n_right) - parent_score;
                if (!(gain > floor_gain)) continue;
                if (!best.valid || gain > best.gain) {
                    double threshold = 0.5 * (v + next);
                    if (!(threshold < next)) threshold = v;
                    best = {true, gain, static_cast<int>(f), threshold};
                }
            }
        }
        return best;
    }

    std::pair<OpenLeaf, OpenLeaf> apply_split(Tree& tree, OpenLeaf& leaf) {
        const auto& split = leaf.best;
        const int left_id = static_cast<int>(tree.nodes.size());
        const int right_id = left_id + 1;
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        auto& node = tree.nodes[static_cast<std::size_t>(leaf.node)];
        node.kind = NodeKind::Internal;
        node.feature_index = split.feature;
        node.threshold = split.threshold;
        node.left = left_id;
        node.right = right_id;

        for (auto i : leaf.sorted.front()) goes_left_[i] = d_.at(i, static_cast<std::size_t>(split.feature)) <= split.threshold;

        OpenLeaf left{left_id, std::vector<std::vector<std::uint32_t>>(d_.n_features), {}};
        OpenLeaf right{right_id, std::vector<std::vector<std::uint32_t>>(d_.n_features), {}};
        for (std::size_t f = 0; f < d_.n_features; ++f) {
            auto& l = left.sorted[f];
            auto& r = right.sorted[f];
            for (auto i : leaf.sorted[f]) (goes_left_[i] ? l : r).push_back(i);
        }
        tree.nodes[static_cast<std::size_t>(left_id)].sample_count = left.sorted.front().size();
        tree.nodes[static_cast<std::size_t>(right_id)].sample_count = right.sorted.front().size();
        leaf.sorted.clear();
        return {std::move(left), std::move(right)};
    }

    void set_leaf_value(Tree& tree, const OpenLeaf& leaf) const {
        double g = 0.0;
        double h = 0.0;
        for (auto i : leaf.sorted.front()) {
            g += residual_[i];
            h += hessian_[i];
        }
        auto& node = tree.nodes[static_cast<std::size_t>(leaf.node)];
        node.kind = NodeKind::Leaf;
        if (objective_ == Objective::SquaredError) {
            node.leaf_value = g / static_cast<double>(leaf.sorted.front().size());
        } else {
            node.leaf_value = g / std::max(h, 1e-12);
        }
    }

    const Dataset& d_;
    const GbdtConfig& c_;
    const std::vector<std::vector<std::uint32_t>>& presorted_;
    const std::vector<double>& residual_;
    const std::vector<double>& hessian_;
    Objective objective_;
    std::vector<char> goes_left_;

public:
    static void fill_expected_values(Tree& tree) {
        // Children are always appended after their parent, so a reverse sweep is bottom-up.
        for (auto k = tree.nodes.size(); k-- > 0;) {
            auto& node = tree.nodes[k];
            if (node.kind == NodeKind::Leaf) {
                node.node_expected_value = node.leaf_value;
                continue;
            }
            const auto& l = tree.nodes[static_cast<std::size_t>(node.left)];
            const auto& r = tree.nodes[static_cast<std::size_t>(node.right)];
            const double total = static_cast<double>(l.sample_count + r.sample_count);
            node.node_expected_value = total > 0.0
                ? (static_cast<double>(l.sample_count) * l.node_expected_value +
                   static_cast<double>(r.sample_count) * r.node_expected_value) / total
                : 0.5 * (l.node_expected_value + r.node_expected_value);
        }
    }
};

Tree single_leaf_tree(std::size_t n_samples) {
    Tree t;
    TreeNode leaf;
    leaf.sample_count = n_samples;
    t.nodes.push_back(leaf);
    t.finalize();
    return t;
}

}  // namespace

std::string to_string(Objective objective) {
    return objective == Objective::LogisticBinary ? "logistic_binary" : "squared_error";
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void Tree::finalize() {
    if (nodes.empty()) throw DataError("tree has no nodes");
    leaf_ids.clear();
    leaf_values.clear();
    leaf_position.assign(nodes.size(), -1);
    std::set<int> features;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const auto& node = nodes[k];
        if (node.kind == NodeKind::Leaf) {
            if (node.left != -1 || node.right != -1) throw DataError("leaf node with children");
            leaf_position[k] = static_cast<int>(leaf_ids.size());
            leaf_ids.push_back(static_cast<int>(k));
            leaf_values.push_back(node.leaf_value);
            continue;
        }
        const auto n = static_cast<int>(nodes.size());
        if (node.left <= static_cast<int>(k) || node.right <= static_cast<int>(k) || node.left >= n || node.right >= n) {
            throw DataError("internal node with invalid child indices");
        }
        if (node.feature_index < 0) throw DataError("internal node without a split feature");
        features.insert(node.feature_index);
    }
    used_features.assign(features.begin(), features.end());
}

int Tree::reach(std::span<const double> x) const {
    int k = 0;
    while (nodes[static_cast<std::size_t>(k)].kind == NodeKind::Internal) {
        const auto& node = nodes[static_cast<std::size_t>(k)];
        const auto f = static_cast<std::size_t>(node.feature_index);
        if (f >= x.size()) throw UsageError("feature index " + std::to_string(f) + " out of range for input of size " + std::to_string(x.size()));
        k = x[f] <= node.threshold ? node.left : node.right;
    }
    return k;
}

std::size_t leaf_position(const Tree& t, std::span<const double> x) {
    return static_cast<std::size_t>(t.leaf_position[static_cast<std::size_t>(t.reach(x))]);
}

std::vector<double> leaf_index(const Tree& t, std::span<const double> x) {
    std::vector<double> one_hot(t.n_leaves(), 0.0);
    one_hot[leaf_position(t, x)] = 1.0;
    return one_hot;
}

double leaf_prediction(const Tree& t, std::span<const double> x) {
    return t.nodes[static_cast<std::size_t>(t.reach(x))].leaf_value;
}

void GbdtConfig::validate() const {
    if (n_trees < 1) throw UsageError("n_trees must be >= 1");
    if (max_leaves < 2) throw UsageError("max_leaves must be >= 2");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw UsageError("learning_rate must be in (0, 1]");
    if (min_samples_leaf < 1) throw UsageError("min_samples_leaf must be >= 1");
    if (!(min_gain >= 0.0)) throw UsageError("min_gain must be >= 0");
}

double objective_loss(Objective objective, std::span<const double> labels, std::span<const double> raw_scores) {
    double sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double z = raw_scores[i];
        if (objective == Objective::SquaredError) {
            const double e = labels[i] - z;
            sum += e * e;
        } else {
            // log(1 + exp(z)) - y z, computed stably
            const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
            sum += softplus - labels[i] * z;
        }
    }
    return sum / static_cast<double>(labels.size());
}

GbdtModel fit_gbdt(const Dataset& d, const GbdtConfig& c, std::vector<double>* round_loss) {
    c.validate();
    d.validate();
    if (d.n_samples == 0) throw UsageError("cannot train on an empty dataset");

    GbdtModel m;
    m.config = c;
    m.learning_rate = c.learning_rate;
    m.task = d.task;
    m.objective = d.task == Task::Classification ? Objective::LogisticBinary : Objective::SquaredError;
    m.n_features = d.n_features;

    const std::size_t n = d.n_samples;
    const double label_mean = std::accumulate(d.labels.begin(), d.labels.end(), 0.0) / static_cast<double>(n);
    if (m.objective == Objective::SquaredError) {
        m.base_score = label_mean;
    } else {
        const double p = std::clamp(label_mean, 1e-6, 1.0 - 1e-6);
        m.base_score = std::log(p / (1.0 - p));
    }

    std::vector<double> raw(n, m.base_score);
    if (round_loss) {
        round_loss->clear();
        round_loss->push_back(objective_loss(m.objective, d.labels, raw));
    }

    const bool constant_labels =
        std::all_of(d.labels.begin(), d.labels.end(), [&](double y) { return y == d.labels.front(); });
    if (constant_labels) {
        for (int t = 0; t < c.n_trees; ++t) {
            m.trees.push_back(single_leaf_tree(n));
            if (round_loss) round_loss->push_back(round_loss->back());
        }
        return m;
    }

    std::vector<std::vector<std::uint32_t>> presorted(d.n_features);
    for (std::size_t f = 0; f < d.n_features; ++f) {
        auto& order = presorted[f];
        order.resize(n);
        std::iota(order.begin(), order.end(), 0u);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::uint32_t a, std::uint32_t b) { return d.at(a, f) < d.at(b, f); });
    }

    std::vector<double> residual(n);
    std::vector<double> hessian(n, 1.0);
    for (int t = 0; t < c.n_trees; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            if (m.objective == Objective::SquaredError) {
                residual[i] = d.labels[i] - raw[i];
            } else {
                const double p = sigmoid(raw[i]);
                residual[i] = d.labels[i] - p;
                hessian[i] = p * (1.0 - p);
            }
        }
        TreeGrower grower(d, c, presorted, residual, hessian, m.objective);
        Tree tree = grower.grow();
        for (std::size_t i = 0; i < n; ++i) raw[i] += m.learning_rate * leaf_prediction(tree, d.row(i));
        m.trees.push_back(std::move(tree));
        if (round_loss) round_loss->push_back(objective_loss(m.objective, d.labels, raw));
    }
    return m;
}

double predict(const GbdtModel& m, std::span<const double> x) {
    if (x.size() != m.n_features) {
        throw UsageError("input has " + std::to_string(x.size()) + " features, model expects " +
                         std::to_string(m.n_features));
    }
    double sum = 0.0;
    for (const auto& t : m.trees) sum += leaf_prediction(t, x);
    return m.base_score + m.learning_rate * sum;
}

double predict_proba(const GbdtModel& m, std::span<const double> x) { return sigmoid(predict(m, x)); }

std::vector<double> predict_all(const GbdtModel& m, const Dataset& d) {
    std::vector<double> out(d.n_samples);
    for (std::size_t i = 0; i < d.n_samples; ++i) out[i] = predict(m, d.row(i));
    return out;
}

std::vector<int> group_used_features(const GbdtModel& m, std::span<const std::size_t> tree_indices) {
    if (tree_indices.empty()) throw UsageError("group_used_features needs a non-empty tree subset");
    std::set<int> features;
    for (auto t : tree_indices) {
        if (t >= m.trees.size()) throw UsageError("tree index out of range");
        features.insert(m.trees[t].used_features.begin(), m.trees[t].used_features.end());
    }
    return {features.begin(), features.end()};
}

void write_gbdt(std::ostream& out, const GbdtModel& m) {
    io::Writer w(out);
    w.magic("G2GB", kGbdtVersion);
    w.i64(m.config.n_trees);
    w.i64(m.config.max_leaves);
    w.i64(m.config.min_samples_leaf);
    w.f64(m.config.learning_rate);
    w.f64(m.config.min_gain);
    w.u64(m.config.seed);
    w.f64(m.learning_rate);
    w.f64(m.base_score);
    w.u8(m.task == Task::Classification ? 0 : 1);
    w.u8(m.objective == Objective::LogisticBinary ? 0 : 1);
    w.u64(m.n_features);
    w.u64(m.trees.size());
    for (const auto& t : m.trees) {
        w.u64(t.nodes.size());
        for (const auto& node : t.nodes) {
            w.u8(node.kind == NodeKind::Leaf ? 1 : 0);
            w.i64(node.feature_index);
            w.f64(node.threshold);
            w.i64(node.left);
            w.i64(node.right);
            w.f64(node.leaf_value);
            w.f64(node.node_expected_value);
            w.u64(node.sample_count);
        }
    }
}

GbdtModel read_gbdt(std::istream& in) {
    io::Reader r(in);
    r.magic("G2GB", kGbdtVersion);
    GbdtModel m;
    m.config.n_trees = static_cast<int>(r.i64());
    m.config.max_leaves = static_cast<int>(r.i64());
    m.config.min_samples_leaf = static_cast<int>(r.i64());
    m.config.learning_rate = r.f64();
    m.config.min_gain = r.f64();
    m.config.seed = r.u64();
    m.learning_rate = r.f64();
    m.base_score = r.f64();
    m.task = r.u8() == 0 ? Task::Classification : Task::Regression;
    m.objective = r.u8() == 0 ? Objective::LogisticBinary : Objective::SquaredError;
    m.n_features = r.checked_size(r.u64());
    const auto n_trees = r.checked_size(r.u64());
    m.trees.resize(n_trees);
    for (auto& t : m.trees) {
        t.nodes.resize(r.checked_size(r.u64()));
        for (auto& node : t.nodes) {
            node.kind = r.u8() == 1 ? NodeKind::Leaf : NodeKind::Internal;
            node.feature_index = static_cast<int>(r.i64());
            node.threshold = r.f64();
            node.left = static_cast<int>(r.i64());
            node.right = static_cast<int>(r.i64());
            node.leaf_value = r.f64();
            node.node_expected_value = r.f64();
            node.sample_count = r.checked_size(r.u64());
        }
        t.finalize();
        if (t.max_feature_index() >= static_cast<int>(m.n_features)) throw DataError("tree uses a feature beyond n_features");
    }
    return m;
}

void save_gbdt(const std::filesystem::path& path, const GbdtModel& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    write_gbdt(out, m);
}

GbdtModel load_gbdt(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open teacher model: " + path.string());
    return read_gbdt(in);
}

}  // namespace gbdt2nn
