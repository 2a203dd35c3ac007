#include <doctest.h>

#include <cmath>
#include <cstring>
#include <string>

#include "gbdt2nn/errors.hpp"
#include "gbdt2nn/interpretation.hpp"
#include "gbdt2nn/log.hpp"
#include "gbdt2nn/metrics.hpp"
#include "gbdt2nn/rng.hpp"
#include "gbdt2nn/synthetic.hpp"
#include "support.hpp"

using namespace gbdt2nn;

namespace {

struct Quiet {
    Quiet() { set_log_sink(nullptr); }
    ~Quiet() { set_log_sink({}); }
};

struct Fixture {
    Dataset train;
    Dataset test;
    GbdtModel teacher;
    DistillResult distilled;
};

const Fixture& fixture() {
    static const Fixture f = [] {
        Quiet quiet;
        Fixture x;
        const auto d = make_tree_dataset(2000, 12, Task::Regression, 23);
        std::tie(x.train, x.test) = split(d, SplitSpec{});
        GbdtConfig gc;
        gc.n_trees = 40;
        x.teacher = fit_gbdt(x.train, gc);
        DistillConfig c;
        c.n_groups = 2;
        c.d_embed = 8;
        c.distill_train.epochs = 20;
        x.distilled = distill(x.teacher, x.train, c);
        return x;
    }();
    return f;
}

std::vector<double> snapshot(std::span<const GroupEmbeddingNet> nets) {
    std::vector<double> p;
    for (const auto& n : nets) {
        const auto e = n.embed.parameters();
        p.insert(p.end(), e.begin(), e.end());
        p.insert(p.end(), n.head.weight.data(), n.head.weight.data() + n.head.weight.size());
        p.push_back(n.head.bias);
    }
    return p;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("concat_embeddings ordering") {
    const auto& s = fixture().distilled.student;
    const auto x = fixture().test.row(3);
    const Vector g = concat_embeddings(s, x);
    REQUIRE(g.size() == 16);
    const Vector g0 = group_embedding(s.groups[0], x);
    const Vector g1 = group_embedding(s.groups[1], x);
    CHECK(g.head(8) == g0);
    CHECK(g.tail(8) == g1);

    const Matrix all = concat_embeddings(s, fixture().test);
    CHECK(all.row(3).transpose().isApprox(g, 1e-14));

    auto swapped = s;
    std::swap(swapped.groups[0], swapped.groups[1]);
    const Vector gs = concat_embeddings(swapped, x);
    CHECK(gs.head(8) == g1);
    CHECK(gs.tail(8) == g0);

    Gbdt2nnModel one = s;
    one.groups.resize(1);
    CHECK(concat_embeddings(one, x) == g0);
}

TEST_CASE("fit_affine_head closed form") {
    Rng rng(2);
    const Eigen::Index n = 300;
    Matrix g(n, 5);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < 5; ++j) g(i, j) = rng.normal();
    }
    SUBCASE("zero targets give a zero head") {
        const auto h = fit_affine_head(g, Matrix::Zero(n, 3));
        CHECK(h.weight.cwiseAbs().maxCoeff() < 1e-12);
        CHECK(h.bias.cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("constant inputs and targets are absorbed by the bias") {
        Quiet quiet;
        const Matrix c = Matrix::Constant(n, 5, 0.3);
        Matrix t(n, 2);
        t.col(0).setConstant(1.25);
        t.col(1).setConstant(-4.0);
        const auto h = fit_affine_head(c, t);
        CHECK(h.bias[0] == doctest::Approx(1.25).epsilon(1e-12));
        CHECK(h.bias[1] == doctest::Approx(-4.0).epsilon(1e-12));
        const Matrix pred = (c * h.weight).rowwise() + h.bias.transpose();
        CHECK((pred - t).cwiseAbs().maxCoeff() < 1e-9);
    }
    SUBCASE("an exact linear map is recovered") {
        Matrix w(5, 3);
        for (Eigen::Index i = 0; i < 15; ++i) w.data()[i] = rng.normal();
        Vector b(3);
        b << 0.5, -1.0, 2.0;
        const Matrix t = (g * w).rowwise() + b.transpose();
        const auto h = fit_affine_head(g, t);
        const Matrix pred = (g * h.weight).rowwise() + h.bias.transpose();
        CHECK(loss_value(Loss::Mse, pred, t) < 1e-6);

        HeadFitConfig gc;
        gc.method = HeadFitMethod::Gradient;
        gc.train.epochs = 400;
        const auto hg = fit_affine_head(g, t, gc);
        const Matrix pg = (g * hg.weight).rowwise() + hg.bias.transpose();
        CHECK(loss_value(Loss::Mse, pg, t) < 1e-4);
    }
    SUBCASE("singular normal equations engage the logged ridge fallback") {
        std::vector<std::string> warnings;
        set_log_sink([&](LogLevel level, const std::string& m) {
            if (level == LogLevel::Warning) warnings.push_back(m);
        });
        Matrix dup(n, 4);
        dup.leftCols(2) = g.leftCols(2);
        dup.rightCols(2) = g.leftCols(2);
        const Matrix t = dup.col(0) * 2.0;
        HeadFitConfig c;
        c.ridge = 0.0;
        const auto h = fit_affine_head(dup, t, c);
        set_log_sink({});
        CHECK(!warnings.empty());
        CHECK(h.weight.allFinite());
        const Matrix pred = (dup * h.weight).rowwise() + h.bias.transpose();
        CHECK(loss_value(Loss::Mse, pred, t) < 1e-6);
    }
}

TEST_CASE("independent head: universe, explain affinity and the mixed forward pass") {
    const auto& f = fixture();
    const auto& s = f.distilled.student;
    MixedModel mm{s, fit_interpretation_head(s, f.train, f.teacher)};
    const auto universe = attribution_universe(s);
    std::vector<bool> in(12, false);
    for (int j : universe) in[static_cast<std::size_t>(j)] = true;
    for (std::size_t j = 0; j < 12; ++j) {
        if (!in[j]) {
            CHECK(mm.interp_head.weight.col(static_cast<Eigen::Index>(j)).isZero());
            CHECK(mm.interp_head.bias[static_cast<Eigen::Index>(j)] == 0.0);
        }
    }

    const auto x = f.test.row(0), x2 = f.test.row(1);
    const auto a = explain(mm, x);
    CHECK(a.bias == 0.0);
    CHECK(explain(mm, x).values == a.values);
    const auto out = mixed_forward(mm, x);
    CHECK(out.raw_score == student_predict(s, x));
    CHECK(out.attribution.values == a.values);

    const Vector diff = mm.interp_head.weight.transpose() * (concat_embeddings(s, x) - concat_embeddings(s, x2));
    const auto b = explain(mm, x2);
    for (std::size_t j = 0; j < 12; ++j) CHECK(a.values[j] - b.values[j] == doctest::Approx(diff[static_cast<Eigen::Index>(j)]).epsilon(1e-10));

    MixedModel scaled = mm;
    scaled.interp_head.weight *= 3.0;
    scaled.interp_head.bias *= 3.0;
    const auto sa = explain(scaled, x);
    for (std::size_t j = 0; j < 12; ++j) CHECK(sa.values[j] == doctest::Approx(3.0 * a.values[j]));

    MixedModel zero = mm;
    zero.interp_head.weight.setZero();
    zero.interp_head.bias.setZero();
    for (double v : explain(zero, x).values) CHECK(v == 0.0);

    MixedModel unfitted{s, {}};
    CHECK_THROWS_AS(explain(unfitted, x), UsageError);

    const auto teacher_rows = attribute_dataset(f.teacher, f.test);
    const auto student_rows = explain_dataset(mm, f.test);
    const std::vector<std::size_t> ks{5};
    CHECK(compare_attributions(teacher_rows, student_rows, ks).ndcg_at.at(5) >= 0.8);
}

TEST_CASE("zero teacher attributions give a zero head") {
    Quiet quiet;
    const auto& f = fixture();
    GbdtModel flat = f.teacher;
    for (auto& t : flat.trees) {
        for (auto& node : t.nodes) {
            node.leaf_value = 0.0;
            node.node_expected_value = 0.0;
        }
        t.finalize();
    }
    const auto h = fit_interpretation_head(f.distilled.student, f.train, flat);
    CHECK(h.weight.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(h.bias.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("joint objective reductions") {
    Quiet quiet;
    const auto& f = fixture();
    DistillConfig c;
    c.n_groups = 3;
    c.d_embed = 6;
    c.embed_train.epochs = 3;
    c.seed = 5;
    c.embed_train.seed = 5;
    const auto groups = group_trees(f.teacher, c);

    std::vector<std::vector<double>> base, joint;
    fit_group_embeddings(f.teacher, groups, f.train, c, nullptr,
                         [&](const EmbeddingStepInfo& s) { base.push_back(snapshot(s.nets)); });
    double interp_grad = 0.0;
    fit_joint(f.teacher, groups, f.train, JointConfig{1.0, c}, [&](const EmbeddingStepInfo& s) {
        joint.push_back(snapshot(s.nets));
        interp_grad = std::max(interp_grad, s.max_abs_interp_grad);
    });
    REQUIRE(base.size() == joint.size());
    REQUIRE(!base.empty());
    bool identical = true;
    for (std::size_t i = 0; i < base.size(); ++i) identical = identical && bit_equal(base[i], joint[i]);
    CHECK(identical);
    CHECK(interp_grad == 0.0);

    double head_grad = 0.0;
    std::size_t steps = 0;
    const auto zero = fit_joint(f.teacher, groups, f.train, JointConfig{0.0, c}, [&](const EmbeddingStepInfo& s) {
        head_grad = std::max(head_grad, s.max_abs_head_grad);
        ++steps;
    });
    CHECK(steps == base.size());
    CHECK(head_grad < 1e-15);
    CHECK(zero.history.interpretation_loss.back() < zero.history.interpretation_loss.front());

    CHECK_THROWS_AS(fit_joint(f.teacher, groups, f.train, JointConfig{1.5, c}), UsageError);
    CHECK_THROWS_AS(fit_joint(f.teacher, groups, f.train, JointConfig{-0.1, c}), UsageError);
}

TEST_CASE("online update keeps the interpretation head usable and unchanged") {
    Quiet quiet;
    const auto& f = fixture();
    MixedModel mm{f.distilled.student, fit_interpretation_head(f.distilled.student, f.train, f.teacher)};
    const auto before = mm.interp_head;
    const auto drift = make_drifted_tree_dataset(500, 12, Task::Regression, 3, 0.25);
    TrainConfig tc;
    tc.epochs = 3;
    mm.student = online_update(mm.student, drift, tc);
    CHECK(mm.interp_head.weight == before.weight);
    CHECK(mm.interp_head.bias == before.bias);
    CHECK(explain(mm, drift.row(0)).values.size() == 12);
}

TEST_CASE("mixed container round-trips bit-exactly") {
    const auto& f = fixture();
    MixedModel mm{f.distilled.student, fit_interpretation_head(f.distilled.student, f.train, f.teacher)};
    const auto dir = test_support::scratch_dir("mixed_io");
    save_mixed(dir / "m.g2mx", mm);
    const auto back = load_mixed(dir / "m.g2mx");
    for (std::size_t i = 0; i < 50; ++i) {
        const auto a = mixed_forward(mm, f.test.row(i));
        const auto b = mixed_forward(back, f.test.row(i));
        CHECK(std::memcmp(&a.raw_score, &b.raw_score, sizeof(double)) == 0);
        CHECK(std::memcmp(a.attribution.values.data(), b.attribution.values.data(), 12 * sizeof(double)) == 0);
    }
    save_mixed(dir / "m2.g2mx", back);
    CHECK(test_support::slurp(dir / "m.g2mx") == test_support::slurp(dir / "m2.g2mx"));
}
