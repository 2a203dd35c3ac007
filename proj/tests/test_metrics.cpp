#include <doctest.h>

#include <cmath>

#include "gbdt2nn/errors.hpp"
#include "gbdt2nn/metrics.hpp"
#include "gbdt2nn/rng.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace gbdt2nn;

namespace {

AttributionVector av(std::vector<double> v) { return {std::move(v), 0.0}; }

}  // namespace

TEST_CASE("topk ordering, ties and zeros") {
    CHECK(topk(av({0, 3, -5}), 2).features == std::vector<std::size_t>{2, 1});
    CHECK(topk(av({0, 2, 0, 0, -2}), 2).features == std::vector<std::size_t>{1, 4});
    CHECK(topk(av({0, 0, 0}), 3).features.empty());
    CHECK(topk(av({0, 1, 0}), 3).features == std::vector<std::size_t>{1});
    CHECK_THROWS_AS(topk(av({1}), 0), UsageError);
}

TEST_CASE("coverage_ck") {
    const auto a = av({4, 3, 2, 1});
    CHECK(coverage_ck(a, a, 3) == 1.0);
    CHECK(coverage_ck(av({1, 1, 0, 0}), av({0, 0, 1, 1}), 2) == 0.0);
    CHECK(coverage_ck(av({3, 2, 0, 0}), av({3, 0, 2, 0}), 2) == 0.5);
    // Denominator stays k even when fewer features are nonzero.
    CHECK(coverage_ck(av({1, 0, 0}), av({1, 0, 0}), 2) == 0.5);
    const std::vector<int> universe{1, 2};
    CHECK(coverage_ck(av({3, 2, 0}), av({3, 2, 0}), 2, universe) == 0.5);
    CHECK_THROWS_AS(coverage_ck(av({1}), av({1, 2}), 1), UsageError);
}

TEST_CASE("ndcg_at_k worked examples") {
    const auto teacher = av({2, 1});
    CHECK(ndcg_at_k(teacher, teacher, 2) == 1.0);
    CHECK(ndcg_at_k(av({0, 0}), av({1, 2}), 2) == 1.0);
    const double expected = (1.0 / std::log2(2.0) + 2.0 / std::log2(3.0)) / (2.0 / std::log2(2.0) + 1.0 / std::log2(3.0));
    CHECK(ndcg_at_k(teacher, av({1, 2}), 2) == expected);
    CHECK(expected == doctest::Approx(0.859719).epsilon(1e-6));
}

TEST_CASE("ndcg_at_k agrees exactly with the permutation oracle") {
    Rng rng(77);
    int cases = 0;
    for (std::size_t n = 1; n <= 6; ++n) {
        for (int rep = 0; rep < 60; ++rep) {
            std::vector<double> t(n), s(n);
            // Small integer magnitudes force ties and zeros.
            for (auto& v : t) v = static_cast<double>(static_cast<int>(rng.below(7)) - 3);
            for (auto& v : s) v = static_cast<double>(static_cast<int>(rng.below(7)) - 3);
            for (std::size_t k = 1; k <= 3; ++k) {
                REQUIRE(ndcg_at_k(av(t), av(s), k) == oracle::ndcg(av(t), av(s), k));
                ++cases;
            }
        }
    }
    CHECK(cases == 6 * 60 * 3);
}

TEST_CASE("metrics are invariant under positive rescaling and self-agreement") {
    Rng rng(5);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> t(8), s(8);
        for (auto& v : t) v = rng.normal();
        for (auto& v : s) v = rng.normal();
        const double c1 = 0.5 + 3.0 * rng.uniform(), c2 = 0.5 + 3.0 * rng.uniform();
        std::vector<double> ts = t, ss = s;
        for (auto& v : ts) v *= c1;
        for (auto& v : ss) v *= c2;
        for (std::size_t k : {1u, 3u, 5u}) {
            CHECK(ndcg_at_k(av(t), av(s), k) == ndcg_at_k(av(ts), av(ss), k));
            CHECK(coverage_ck(av(t), av(s), k) == coverage_ck(av(ts), av(ss), k));
            CHECK(ndcg_at_k(av(t), av(t), k) == 1.0);
            CHECK(coverage_ck(av(t), av(t), k) == 1.0);
            const double v = ndcg_at_k(av(t), av(s), k);
            CHECK((v >= 0.0 && v <= 1.0));
        }
    }
}

TEST_CASE("auc examples and pair-enumeration oracle") {
    const std::vector<double> scores{0.1, 0.4, 0.35, 0.8};
    // Negatives {0.1, 0.4}, positives {0.35, 0.8}: 3 of 4 pairs ordered.
    const std::vector<double> three_of_four{0, 0, 1, 1};
    CHECK(auc(three_of_four, scores) == 0.75);
    CHECK(oracle::auc(three_of_four, scores) == 0.75);
    // Alternating labels put both positives above both negatives.
    const std::vector<double> labels{0, 1, 0, 1};
    CHECK(auc(labels, scores) == 1.0);
    const std::vector<double> separated{0.1, 0.9, 0.2, 0.8};
    CHECK(auc(labels, separated) == 1.0);
    const std::vector<double> flat{0.3, 0.3, 0.3, 0.3};
    CHECK(auc(labels, flat) == 0.5);
    const std::vector<double> one_class{1, 1};
    const std::vector<double> two{0.1, 0.2};
    CHECK_THROWS_AS(auc(one_class, two), UsageError);

    Rng rng(31);
    for (std::size_t n = 2; n <= 200; n += 9) {
        std::vector<double> y(n), s(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = i < 1 ? 0.0 : (i < 2 ? 1.0 : static_cast<double>(rng.below(2)));
            s[i] = static_cast<double>(rng.below(20)) / 4.0;  // many ties
        }
        CHECK(std::abs(auc(y, s) - oracle::auc(y, s)) < 1e-12);
    }
}

TEST_CASE("mse") {
    const std::vector<double> a{1, 2, 3};
    CHECK(mse(a, a) == 0.0);
    const std::vector<double> z{0, 0}, o{1, 1};
    CHECK(mse(z, o) == 1.0);
    const std::vector<double> b{1, 2, 4};
    CHECK(mse(a, b) == doctest::Approx(1.0 / 3.0));
    CHECK_THROWS_AS(mse(a, z), UsageError);
    CHECK_THROWS_AS(mse(std::span<const double>{}, std::span<const double>{}), UsageError);
}

TEST_CASE("aggregate and report files") {
    SampleMetrics s0, s1;
    s0.coverage[1] = 0.0;
    s0.ndcg[1] = 0.0;
    s1.coverage[1] = 1.0;
    s1.ndcg[1] = 1.0;
    const std::vector<SampleMetrics> both{s0, s1};
    const auto r = aggregate(both);
    CHECK(r.coverage_at.at(1) == 0.5);
    CHECK(r.n_samples == 2);
    const std::vector<SampleMetrics> single{s1};
    CHECK(aggregate(single).ndcg_at.at(1) == 1.0);
    CHECK_THROWS_AS(aggregate(std::span<const SampleMetrics>{}), UsageError);

    MetricsReport full = r;
    full.auc = 0.75;
    full.mse = 0.125;
    const auto dir = test_support::scratch_dir("report");
    write_report(dir / "m.txt", full);
    const auto back = read_report(dir / "m.txt");
    CHECK(back.coverage_at == full.coverage_at);
    CHECK(back.ndcg_at == full.ndcg_at);
    CHECK(back.auc == full.auc);
    CHECK(back.mse == full.mse);
    CHECK(back.n_samples == 2);

    const std::vector<CurvePoint> curve{{1, "test", "auc", 0.5}, {2, "test", "auc", 0.75}};
    write_curve_csv(dir / "c.csv", curve);
    CHECK(test_support::slurp(dir / "c.csv") == "epoch,split,metric,value\n1,test,auc,0.5\n2,test,auc,0.75\n");
}
