#include "gbdt2nn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gbdt2nn/errors.hpp"

namespace gbdt2nn {

namespace {

std::vector<std::size_t> magnitude_order(const AttributionVector& a) {
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < a.values.size(); ++j) {
        if (a.values[j] != 0.0) order.push_back(j);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return std::abs(a.values[x]) > std::abs(a.values[y]);
    });
    return order;
}

void check_pair(const AttributionVector& teacher, const AttributionVector& student, std::size_t k) {
    if (k < 1) throw UsageError("k must be >= 1");
    if (teacher.values.size() != student.values.size()) {
        throw UsageError("attribution dimension mismatch: " + std::to_string(teacher.values.size()) + " vs " +
                         std::to_string(student.values.size()));
    }
}

std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

RankedFeatures topk(const AttributionVector& a, std::size_t k) {
    if (k < 1) throw UsageError("k must be >= 1");
    RankedFeatures r;
    r.features = magnitude_order(a);
    if (r.features.size() > k) r.features.resize(k);
    for (auto j : r.features) r.magnitudes.push_back(std::abs(a.values[j]));
    return r;
}

double coverage_ck(const AttributionVector& teacher, const AttributionVector& student, std::size_t k,
                   std::span<const int> universe) {
    check_pair(teacher, student, k);
    std::vector<char> in_universe(teacher.values.size(), universe.empty() ? 1 : 0);
    for (int f : universe) in_universe.at(static_cast<std::size_t>(f)) = 1;
    const auto t = topk(teacher, k).features;
    const auto s = topk(student, k).features;
    std::size_t hits = 0;
    for (auto j : t) {
        if (in_universe[j] && std::find(s.begin(), s.end(), j) != s.end()) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(k);
}

double ndcg_at_k(const AttributionVector& teacher, const AttributionVector& student, std::size_t k) {
    check_pair(teacher, student, k);
    const auto teacher_order = magnitude_order(teacher);
    std::vector<double> relevance(teacher.values.size(), 0.0);
    for (std::size_t rank = 0; rank < teacher_order.size() && rank < k; ++rank) {
        relevance[teacher_order[rank]] = static_cast<double>(k - rank);
    }

    double ideal = 0.0;
    for (std::size_t i = 0; i < k && i < teacher_order.size(); ++i) {
        ideal += static_cast<double>(k - i) / std::log2(static_cast<double>(i) + 2.0);
    }
    if (ideal == 0.0) return 1.0;

    const auto candidate = topk(student, k).features;
    double dcg = 0.0;
    for (std::size_t i = 0; i < candidate.size(); ++i) {
        dcg += relevance[candidate[i]] / std::log2(static_cast<double>(i) + 2.0);
    }
    return dcg / ideal;
}

double auc(std::span<const double> labels, std::span<const double> scores) {
    if (labels.size() != scores.size()) throw UsageError("auc: labels and scores differ in length");
    const std::size_t n = labels.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Sum of mid-ranks (1-based) of the positives.
    double positive_rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t r = i; r < j; ++r) {
            if (labels[order[r]] > 0.5) {
                positive_rank_sum += mid_rank;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw UsageError("auc needs both classes present");
    const double np = static_cast<double>(n_pos);
    return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

double mse(std::span<const double> targets, std::span<const double> predictions) {
    if (targets.size() != predictions.size()) throw UsageError("mse: length mismatch");
    if (targets.empty()) throw UsageError("mse: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const double e = targets[i] - predictions[i];
        sum += e * e;
    }
    return sum / static_cast<double>(targets.size());
}

SampleMetrics sample_metrics(const AttributionVector& teacher, const AttributionVector& student,
                             std::span<const std::size_t> ks, std::span<const int> universe) {
    SampleMetrics m;
    for (auto k : ks) {
        m.ndcg[k] = ndcg_at_k(teacher, student, k);
        m.coverage[k] = coverage_ck(teacher, student, k, universe);
    }
    return m;
}

MetricsReport aggregate(std::span<const SampleMetrics> samples) {
    if (samples.empty()) throw UsageError("aggregate needs at least one sample");
    MetricsReport r;
    r.n_samples = samples.size();
    for (const auto& s : samples) {
        for (const auto& [k, v] : s.ndcg) r.ndcg_at[k] += v;
        for (const auto& [k, v] : s.coverage) r.coverage_at[k] += v;
    }
    const double n = static_cast<double>(samples.size());
    for (auto& [k, v] : r.ndcg_at) v /= n;
    for (auto& [k, v] : r.coverage_at) v /= n;
    return r;
}

MetricsReport compare_attributions(std::span<const AttributionVector> teacher, std::span<const AttributionVector> student,
                                   std::span<const std::size_t> ks, std::span<const int> universe) {
    if (teacher.size() != student.size()) throw UsageError("teacher and student attribution counts differ");
    std::vector<SampleMetrics> per_sample;
    per_sample.reserve(teacher.size());
    for (std::size_t i = 0; i < teacher.size(); ++i) per_sample.push_back(sample_metrics(teacher[i], student[i], ks, universe));
    return aggregate(per_sample);
}

void write_report(const std::filesystem::path& path, const MetricsReport& r) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "metric,k,value\n";
    for (const auto& [k, v] : r.ndcg_at) out << "ndcg," << k << ',' << format_value(v) << '\n';
    for (const auto& [k, v] : r.coverage_at) out << "coverage," << k << ',' << format_value(v) << '\n';
    if (r.auc) out << "auc,," << format_value(*r.auc) << '\n';
    if (r.mse) out << "mse,," << format_value(*r.mse) << '\n';
    out << "n_samples,," << r.n_samples << '\n';
}

MetricsReport read_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open metrics report: " + path.string());
    MetricsReport r;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string metric, k, value;
        std::getline(ss, metric, ',');
        std::getline(ss, k, ',');
        std::getline(ss, value, ',');
        const double v = std::stod(value);
        if (metric == "ndcg") r.ndcg_at[std::stoul(k)] = v;
        else if (metric == "coverage") r.coverage_at[std::stoul(k)] = v;
        else if (metric == "auc") r.auc = v;
        else if (metric == "mse") r.mse = v;
        else if (metric == "n_samples") r.n_samples = static_cast<std::size_t>(v);
        else throw DataError("unknown metric '" + metric + "' in report");
    }
    return r;
}

void write_curve_csv(const std::filesystem::path& path, std::span<const CurvePoint> points) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "epoch,split,metric,value\n";
    for (const auto& p : points) out << p.epoch << ',' << p.split << ',' << p.metric << ',' << format_value(p.value) << '\n';
}

}  // namespace gbdt2nn
