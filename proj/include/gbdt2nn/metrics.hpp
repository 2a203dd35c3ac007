#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gbdt2nn/saabas.hpp"

namespace gbdt2nn {

/// Feature indices by descending |attribution|, ties by ascending index.
/// Exact zeros never appear.
struct RankedFeatures {
    std::vector<std::size_t> features;
    std::vector<double> magnitudes;
};

RankedFeatures topk(const AttributionVector& a, std::size_t k);

/// |topk(teacher) ∩ topk(student) ∩ universe| / k. An empty universe means all features.
double coverage_ck(const AttributionVector& teacher, const AttributionVector& student, std::size_t k,
                   std::span<const int> universe = {});

/// NDCG of the student's top-k, graded by teacher rank: rel(j) = max(0, k - rank_teacher(j)),
/// rank 0-based; features the teacher gives exactly zero have relevance 0. IDCG = 0 gives 1.
double ndcg_at_k(const AttributionVector& teacher, const AttributionVector& student, std::size_t k);

/// Mann-Whitney AUC with half credit for ties.
double auc(std::span<const double> labels, std::span<const double> scores);

double mse(std::span<const double> targets, std::span<const double> predictions);

struct SampleMetrics {
    std::map<std::size_t, double> ndcg;
    std::map<std::size_t, double> coverage;
};

struct MetricsReport {
    std::map<std::size_t, double> ndcg_at;
    std::map<std::size_t, double> coverage_at;
    std::optional<double> auc;
    std::optional<double> mse;
    std::size_t n_samples = 0;
};

SampleMetrics sample_metrics(const AttributionVector& teacher, const AttributionVector& student,
                             std::span<const std::size_t> ks, std::span<const int> universe = {});

/// Arithmetic means per metric and k.
MetricsReport aggregate(std::span<const SampleMetrics> samples);

MetricsReport compare_attributions(std::span<const AttributionVector> teacher, std::span<const AttributionVector> student,
                                   std::span<const std::size_t> ks, std::span<const int> universe = {});

/// Text format, one `metric,k,value` line per entry (k empty for auc/mse/n_samples).
void write_report(const std::filesystem::path& path, const MetricsReport& r);
MetricsReport read_report(const std::filesystem::path& path);

struct CurvePoint {
    int epoch = 0;
    std::string split;
    std::string metric;
    double value = 0.0;
};

/// Epoch-loss curve as CSV with header `epoch,split,metric,value`.
void write_curve_csv(const std::filesystem::path& path, std::span<const CurvePoint> points);

}  // namespace gbdt2nn
