#include "gbdt2nn/saabas.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gbdt2nn/errors.hpp"

namespace gbdt2nn {

double AttributionVector::total() const {
    return bias + std::accumulate(values.begin(), values.end(), 0.0);
}

namespace {

// Adds scale * (per-tree Saabas contributions) into out, returns scale * root expectation.
double accumulate_tree(const Tree& t, std::span<const double> x, double scale, std::vector<double>& out) {
    std::size_t k = 0;
    while (t.nodes[k].kind == NodeKind::Internal) {
        const auto& node = t.nodes[k];
        const auto f = static_cast<std::size_t>(node.feature_index);
        if (f >= x.size()) throw UsageError("feature index out of range during attribution");
        const auto next = static_cast<std::size_t>(x[f] <= node.threshold ? node.left : node.right);
        out[f] += scale * (t.nodes[next].node_expected_value - node.node_expected_value);
        k = next;
    }
    return scale * t.nodes.front().node_expected_value;
}

}  // namespace

AttributionVector attribute_tree(const Tree& t, std::span<const double> x, std::size_t n_features) {
    if (t.nodes.empty()) throw UsageError("attribute_tree on an empty tree");
    if (t.max_feature_index() >= static_cast<int>(n_features)) throw UsageError("tree uses features beyond n_features");
    AttributionVector a;
    a.values.assign(n_features, 0.0);
    a.bias = accumulate_tree(t, x, 1.0, a.values);
    return a;
}

AttributionVector attribute_group(const GbdtModel& m, std::span<const std::size_t> tree_indices,
                                  std::span<const double> x) {
    if (tree_indices.empty()) throw UsageError("attribute_group needs a non-empty tree subset");
    if (x.size() != m.n_features) throw UsageError("input dimension does not match the model");
    AttributionVector a;
    a.values.assign(m.n_features, 0.0);
    for (auto t : tree_indices) {
        if (t >= m.trees.size()) throw UsageError("tree index out of range");
        a.bias += accumulate_tree(m.trees[t], x, m.learning_rate, a.values);
    }
    return a;
}

AttributionVector attribute_ensemble(const GbdtModel& m, std::span<const double> x) {
    if (x.size() != m.n_features) throw UsageError("input dimension does not match the model");
    AttributionVector a;
    a.values.assign(m.n_features, 0.0);
    a.bias = m.base_score;
    for (const auto& t : m.trees) a.bias += accumulate_tree(t, x, m.learning_rate, a.values);
    return a;
}

std::vector<AttributionVector> attribute_dataset(const GbdtModel& m, const Dataset& d) {
    std::vector<AttributionVector> out;
    out.reserve(d.n_samples);
    for (std::size_t i = 0; i < d.n_samples; ++i) out.push_back(attribute_ensemble(m, d.row(i)));
    return out;
}

void write_attributions_csv(const std::filesystem::path& path, std::span<const std::string> feature_names,
                            std::span<const AttributionVector> rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& name : feature_names) out << name << ',';
    out << "bias\n";
    char buf[32];
    auto put = [&](double v) {
        const int len = std::snprintf(buf, sizeof buf, "%.17g", v);
        out.write(buf, len);
    };
    for (const auto& row : rows) {
        if (row.values.size() != feature_names.size()) throw UsageError("attribution width does not match feature names");
        for (double v : row.values) {
            put(v);
            out << ',';
        }
        put(row.bias);
        out << '\n';
    }
}

AttributionTable read_attributions_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open attribution CSV: " + path.string());
    AttributionTable table;
    std::string line;
    if (!std::getline(in, line)) throw DataError("attribution CSV has no header: " + path.string());
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) table.feature_names.push_back(cell);
    }
    if (table.feature_names.empty() || table.feature_names.back() != "bias") {
        throw DataError("attribution CSV must end with a 'bias' column: " + path.string());
    }
    table.feature_names.pop_back();
    const auto width = table.feature_names.size();
    std::size_t row_no = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++row_no;
        AttributionVector a;
        a.values.reserve(width);
        std::size_t start = 0;
        for (std::size_t c = 0; c <= width; ++c) {
            const auto comma = line.find(',', start);
            const auto end = comma == std::string::npos ? line.size() : comma;
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(line.data() + start, line.data() + end, v);
            if (ec != std::errc() || ptr != line.data() + end) {
                throw DataError("bad number in attribution CSV row " + std::to_string(row_no));
            }
            if (c < width) a.values.push_back(v); else a.bias = v;
            if (comma == std::string::npos) {
                if (c != width) throw DataError("short row " + std::to_string(row_no) + " in attribution CSV");
                break;
            }
            if (c == width) throw DataError("long row " + std::to_string(row_no) + " in attribution CSV");
            start = comma + 1;
        }
        table.rows.push_back(std::move(a));
    }
    return table;
}

}  // namespace gbdt2nn
