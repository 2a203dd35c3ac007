// Acceptance suite: one PASS/FAIL line per criterion, tolerances fixed below.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

#include "gbdt2nn/interpretation.hpp"
#include "gbdt2nn/log.hpp"
#include "gbdt2nn/metrics.hpp"
#include "gbdt2nn/pipeline.hpp"
#include "gbdt2nn/rng.hpp"
#include "gbdt2nn/saabas.hpp"
#include "gbdt2nn/synthetic.hpp"
#include "oracles.hpp"

using namespace gbdt2nn;
namespace fs = std::filesystem;

namespace {

// Tolerances and thresholds.
constexpr double kCompletenessTol = 1e-9;
constexpr double kCompletenessSeconds = 10.0;
constexpr double kGradTol = 1e-5;
constexpr int kGradSeeds = 20;
constexpr double kGradSeconds = 30.0;
constexpr double kAucOracleTol = 1e-12;
constexpr double kFidelityPearson = 0.95;
constexpr double kFidelityRelMse = 0.05;
constexpr double kFidelitySeconds = 180.0;
constexpr double kNdcg5 = 0.8;
constexpr double kCoverage5 = 0.5;
constexpr double kHeadGradTol = 1e-15;
constexpr double kAucSlack = 0.005;
constexpr double kOnlineSeconds = 60.0;
constexpr double kInkFraction = 0.6;
constexpr std::size_t kVisualTopK = 50;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

double pearson(std::span<const double> a, std::span<const double> b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n, mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

double variance(std::span<const double> a) {
    const double n = static_cast<double>(a.size());
    const double m = std::accumulate(a.begin(), a.end(), 0.0) / n;
    double s = 0;
    for (double v : a) s += (v - m) * (v - m);
    return s / n;
}

// Shared 5,000 x 20 tree-realizable regression task, default config.
struct FidelityRun {
    Dataset train, test;
    GbdtModel teacher;
    DistillResult distilled;
    double seconds = 0.0;
};

const FidelityRun& fidelity_run() {
    static const FidelityRun run = [] {
        FidelityRun r;
        const auto t0 = Clock::now();
        const auto d = make_tree_dataset(5000, 20, Task::Regression, 42);
        std::tie(r.train, r.test) = split(d, SplitSpec{});
        r.teacher = fit_gbdt(r.train, GbdtConfig{});
        r.distilled = distill(r.teacher, r.train, DistillConfig{});
        r.seconds = seconds_since(t0);
        return r;
    }();
    return run;
}

Outcome criterion1() {
    const auto t0 = Clock::now();
    const auto d = make_tree_dataset(2000, 20, Task::Classification, 1);
    GbdtConfig c;
    c.n_trees = 100;
    const auto m = fit_gbdt(d, c);
    double worst_tree = 0.0, worst_ensemble = 0.0;
    for (std::size_t i = 0; i < d.n_samples; ++i) {
        const auto x = d.row(i);
        for (const auto& t : m.trees) {
            const auto a = attribute_tree(t, x, d.n_features);
            worst_tree = std::max(worst_tree, std::abs(a.total() - leaf_prediction(t, x)));
        }
        worst_ensemble = std::max(worst_ensemble, std::abs(attribute_ensemble(m, x).total() - predict(m, x)));
    }
    const double secs = seconds_since(t0);
    return {m.trees.size() == 100 && worst_tree < kCompletenessTol && worst_ensemble < kCompletenessTol &&
                secs < kCompletenessSeconds,
            "max per-tree gap " + fmt("%.2e", worst_tree) + ", ensemble gap " + fmt("%.2e", worst_ensemble) +
                " over 2000 samples x 100 trees, " + fmt("%.2f s", secs)};
}

Outcome criterion2() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    int checks = 0;
    for (int seed = 0; seed < kGradSeeds; ++seed) {
        Rng rng(static_cast<std::uint64_t>(seed));
        for (const auto act : {Activation::Identity, Activation::ReLU}) {
            for (const auto loss : {Loss::Mse, Loss::BceWithLogits}) {
                const std::vector<std::size_t> hidden{1 + rng.below(8), 1 + rng.below(8)};
                const std::size_t in = 1 + rng.below(6), out = 1 + rng.below(4);
                auto net = Mlp::create(in, hidden, out, act, static_cast<std::uint64_t>(seed) * 7 + 1);
                for (std::size_t l = 0; l < net.n_layers(); ++l) {
                    auto& b = net.layer(l).bias;
                    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = 0.1 * rng.normal();
                }
                std::vector<double> x(in), t(out);
                for (auto& v : x) v = rng.normal();
                for (auto& v : t) v = loss == Loss::Mse ? rng.normal() : static_cast<double>(rng.below(2));
                worst = std::max(worst, gradient_check(net, x, t, loss));
                ++checks;
            }
        }
    }
    const double secs = seconds_since(t0);
    return {worst < kGradTol && secs < kGradSeconds,
            "max relative error " + fmt("%.2e", worst) + " over " + std::to_string(checks) +
                " nets ({ReLU, Identity} output x {MSE, BCE}), " + fmt("%.2f s", secs)};
}

Outcome criterion3() {
    Rng rng(2024);
    std::size_t ndcg_cases = 0, ndcg_mismatch = 0;
    for (std::size_t n = 1; n <= 6; ++n) {
        for (int rep = 0; rep < 100; ++rep) {
            AttributionVector t{std::vector<double>(n), 0.0}, s{std::vector<double>(n), 0.0};
            for (auto& v : t.values) v = static_cast<double>(static_cast<int>(rng.below(7)) - 3);
            for (auto& v : s.values) v = static_cast<double>(static_cast<int>(rng.below(7)) - 3);
            for (std::size_t k = 1; k <= 3; ++k) {
                ++ndcg_cases;
                if (ndcg_at_k(t, s, k) != oracle::ndcg(t, s, k)) ++ndcg_mismatch;
            }
        }
    }
    double auc_gap = 0.0;
    for (std::size_t n = 2; n <= 200; ++n) {
        std::vector<double> y(n), sc(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = i == 0 ? 0.0 : (i == 1 ? 1.0 : static_cast<double>(rng.below(2)));
            sc[i] = static_cast<double>(rng.below(25)) / 5.0;
        }
        auc_gap = std::max(auc_gap, std::abs(auc(y, sc) - oracle::auc(y, sc)));
    }
    // Reversed two-feature ranking, evaluated with the stated DCG / IDCG expressions.
    const AttributionVector teacher{{2.0, 1.0}, 0.0}, student{{1.0, 2.0}, 0.0};
    const double worked = (1.0 / std::log2(2.0) + 2.0 / std::log2(3.0)) / (2.0 / std::log2(2.0) + 1.0 / std::log2(3.0));
    const double ndcg_example = ndcg_at_k(teacher, student, 2);
    const std::vector<double> scores{0.1, 0.4, 0.35, 0.8};
    const std::vector<double> labels{0, 0, 1, 1};
    const double auc_example = auc(labels, scores);
    const bool pass = ndcg_mismatch == 0 && auc_gap < kAucOracleTol && ndcg_example == worked && auc_example == 0.75;
    return {pass, "NDCG brute force " + std::to_string(ndcg_cases - ndcg_mismatch) + "/" + std::to_string(ndcg_cases) +
                      " exact; AUC max gap " + fmt("%.1e", auc_gap) + " (n<=200); worked NDCG " +
                      fmt("%.6f", ndcg_example) + " (stated formula; the quoted 0.9197 is inconsistent with it); AUC example " +
                      fmt("%.2f", auc_example)};
}

Outcome criterion4() {
    const auto& r = fidelity_run();
    const auto t = predict_all(r.teacher, r.test);
    const auto s = student_predict_all(r.distilled.student, r.test);
    const double rho = pearson(t, s);
    const double rel = mse(t, s) / variance(t);
    return {rho > kFidelityPearson && rel < kFidelityRelMse && r.seconds < kFidelitySeconds,
            "held-out Pearson " + fmt("%.4f", rho) + ", relative MSE " + fmt("%.4f", rel) + " (" +
                std::to_string(r.distilled.student.groups.size()) + " groups), " + fmt("%.1f s", r.seconds)};
}

Outcome criterion5() {
    const auto& r = fidelity_run();
    const MixedModel mm{r.distilled.student, fit_interpretation_head(r.distilled.student, r.train, r.teacher)};
    const auto teacher_rows = attribute_dataset(r.teacher, r.test);
    const auto student_rows = explain_dataset(mm, r.test);
    const std::vector<std::size_t> ks{1, 3, 5, 10};
    const auto universe = attribution_universe(mm.student);
    const auto rep = compare_attributions(teacher_rows, student_rows, ks, universe);
    const double n5 = rep.ndcg_at.at(5), c5 = rep.coverage_at.at(5);
    return {n5 >= kNdcg5 && c5 >= kCoverage5,
            "test NDCG@5 " + fmt("%.4f", n5) + ", AVG(c_5) " + fmt("%.4f", c5) + " (NDCG@10 " +
                fmt("%.4f", rep.ndcg_at.at(10)) + ", AVG(c_1) " + fmt("%.4f", rep.coverage_at.at(1)) + ")"};
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

Outcome criterion6() {
    const auto d = make_tree_dataset(2000, 20, Task::Classification, 6);
    const auto teacher = fit_gbdt(d, GbdtConfig{});
    DistillConfig c;  // k = 5 groups
    c.seed = 17;
    c.embed_train.seed = 17;
    const auto groups = group_trees(teacher, c);

    std::vector<std::vector<double>> base, joint;
    fit_group_embeddings(teacher, groups, d, c, nullptr, [&](const EmbeddingStepInfo& s) { base.push_back(snapshot(s.nets)); });
    fit_joint(teacher, groups, d, JointConfig{1.0, c}, [&](const EmbeddingStepInfo& s) { joint.push_back(snapshot(s.nets)); });
    std::size_t identical = 0;
    for (std::size_t i = 0; i < std::min(base.size(), joint.size()); ++i) {
        identical += base[i].size() == joint[i].size() &&
                     std::memcmp(base[i].data(), joint[i].data(), base[i].size() * sizeof(double)) == 0;
    }
    double head_grad = 0.0;
    std::size_t zero_steps = 0;
    fit_joint(teacher, groups, d, JointConfig{0.0, c}, [&](const EmbeddingStepInfo& s) {
        head_grad = std::max(head_grad, s.max_abs_head_grad);
        ++zero_steps;
    });
    const bool pass = !base.empty() && base.size() == joint.size() && identical == base.size() &&
                      zero_steps == base.size() && head_grad < kHeadGradTol;
    return {pass, "lambda=1: " + std::to_string(identical) + "/" + std::to_string(base.size()) +
                      " steps bit-identical (k=" + std::to_string(groups.size()) + "); lambda=0: max |head grad| " +
                      fmt("%.1e", head_grad) + " over " + std::to_string(zero_steps) + " steps"};
}

struct CurveRun {
    double final_auc = 0.0;
    std::vector<double> loss;  // per structure epoch, test task loss
};

CurveRun run_student(const GbdtModel& teacher, const Dataset& train, const Dataset& test, const DistillConfig& c,
                     const std::vector<GroupEmbeddingNet>& embeddings, const std::vector<TreeGroup>& groups) {
    CurveRun out;
    std::vector<PredictionHead> heads;
    for (const auto& e : embeddings) heads.push_back(e.head);
    const auto student = distill_from_embeddings(teacher, groups, embeddings, train, c, nullptr,
                                                 [&](int, std::span<const GroupDistillNet> nets) {
                                                     const auto s = assemble(teacher, groups, nets, heads);
                                                     out.loss.push_back(task_loss(s.task, test.labels, student_predict_all(s, test)));
                                                 });
    out.final_auc = auc(test.labels, student_predict_all(student, test));
    return out;
}

Outcome criterion7() {
    const auto d = make_tree_dataset(5000, 20, Task::Classification, 77);
    const auto [train, test] = split(d, SplitSpec{});
    const auto teacher = fit_gbdt(train, GbdtConfig{});
    const DistillConfig c;
    const auto groups = group_trees(teacher, c);
    const auto base = run_student(teacher, train, test, c, fit_group_embeddings(teacher, groups, train, c), groups);

    double best_auc = -1.0, best_lambda = 0.0;
    CurveRun best;
    std::string per_lambda;
    for (double lambda : {0.3, 0.5, 0.7}) {
        const auto j = fit_joint(teacher, groups, train, JointConfig{lambda, c});
        const auto run = run_student(teacher, train, test, c, j.embeddings, groups);
        per_lambda += fmt(" %.1f:", lambda) + fmt("%.4f", run.final_auc);
        if (run.final_auc > best_auc) {
            best_auc = run.final_auc;
            best_lambda = lambda;
            best = run;
        }
    }
    const double target = base.loss.back();
    int reached = -1;
    for (std::size_t e = 0; e < best.loss.size(); ++e) {
        if (best.loss[e] <= target) {
            reached = static_cast<int>(e) + 1;
            break;
        }
    }
    const bool auc_ok = best_auc >= base.final_auc - kAucSlack;
    const bool curve_ok = reached > 0 && reached <= static_cast<int>(base.loss.size());
    return {auc_ok && curve_ok,
            "baseline AUC " + fmt("%.4f", base.final_auc) + ", joint AUC by lambda" + per_lambda + " (best " +
                fmt("%.1f", best_lambda) + "); joint reaches baseline final test loss " + fmt("%.4f", target) +
                (reached > 0 ? " at epoch " + std::to_string(reached) : std::string(" never")) + " of " +
                std::to_string(base.loss.size())};
}

Outcome criterion8() {
    const auto& r = fidelity_run();
    MixedModel mm{r.distilled.student, fit_interpretation_head(r.distilled.student, r.train, r.teacher)};
    const auto drift = make_drifted_tree_dataset(1000, 20, Task::Regression, 808, 0.3);
    const auto before = mm;
    const double loss_before = task_loss(mm.student.task, drift.labels, student_predict_all(mm.student, drift));
    const auto t0 = Clock::now();
    TrainConfig tc;
    tc.epochs = 5;
    tc.batch_size = 64;
    tc.learning_rate = 1e-3;
    mm.student = online_update(mm.student, drift, tc);
    const double secs = seconds_since(t0);
    const double loss_after = task_loss(mm.student.task, drift.labels, student_predict_all(mm.student, drift));

    bool heads_same = mm.interp_head.weight.size() == before.interp_head.weight.size() &&
                      std::memcmp(mm.interp_head.weight.data(), before.interp_head.weight.data(),
                                  sizeof(double) * static_cast<std::size_t>(mm.interp_head.weight.size())) == 0 &&
                      std::memcmp(mm.interp_head.bias.data(), before.interp_head.bias.data(),
                                  sizeof(double) * static_cast<std::size_t>(mm.interp_head.bias.size())) == 0;
    for (std::size_t j = 0; j < mm.student.groups.size(); ++j) {
        const auto& a = mm.student.groups[j].head;
        const auto& b = before.student.groups[j].head;
        heads_same = heads_same && std::memcmp(a.weight.data(), b.weight.data(), sizeof(double) * static_cast<std::size_t>(a.weight.size())) == 0 &&
                     std::memcmp(&a.bias, &b.bias, sizeof(double)) == 0;
    }
    bool explains = true;
    try {
        for (std::size_t i = 0; i < 20; ++i) {
            const auto a = explain(mm, drift.row(i));
            explains = explains && a.values.size() == drift.n_features &&
                       std::all_of(a.values.begin(), a.values.end(), [](double v) { return std::isfinite(v); });
        }
    } catch (const std::exception&) {
        explains = false;
    }
    return {heads_same && explains && loss_after < loss_before && secs < kOnlineSeconds,
            std::string("heads bit-unchanged: ") + (heads_same ? "yes" : "no") + ", explain runs: " + (explains ? "yes" : "no") +
                ", drifted-batch MSE " + fmt("%.4f", loss_before) + " -> " + fmt("%.4f", loss_after) + ", " + fmt("%.2f s", secs)};
}

int run_cli(const std::string& args, const fs::path& log_dir, const std::string& tag) {
    const std::string cmd = std::string(CLI_PATH) + " " + args + " > " + (log_dir / (tag + ".stdout")).string() + " 2> " +
                            (log_dir / (tag + ".stderr")).string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("gbdt2nn_acceptance_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Outcome criterion9() {
    // Container round-trips.
    const auto& r = fidelity_run();
    const auto dir = scratch("roundtrip");
    bool same = true;
    auto bits_equal = [](const std::vector<double>& a, const std::vector<double>& b) {
        return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
    };
    save_dataset(dir / "d.g2ds", r.test);
    const auto dl = load_dataset(dir / "d.g2ds");
    same = same && bits_equal(dl.features, r.test.features) && bits_equal(dl.labels, r.test.labels);
    save_gbdt(dir / "t.gbdt", r.teacher);
    same = same && bits_equal(predict_all(load_gbdt(dir / "t.gbdt"), r.test), predict_all(r.teacher, r.test));
    save_student(dir / "s.g2nn", r.distilled.student);
    same = same && bits_equal(student_predict_all(load_student(dir / "s.g2nn"), r.test), student_predict_all(r.distilled.student, r.test));
    const MixedModel mm{r.distilled.student, fit_interpretation_head(r.distilled.student, r.train, r.teacher)};
    save_mixed(dir / "m.g2mx", mm);
    const auto ml = load_mixed(dir / "m.g2mx");
    for (std::size_t i = 0; i < r.test.n_samples && same; ++i) {
        const auto a = mixed_forward(mm, r.test.row(i)), b = mixed_forward(ml, r.test.row(i));
        same = std::memcmp(&a.raw_score, &b.raw_score, sizeof(double)) == 0 && bits_equal(a.attribution.values, b.attribution.values);
    }

    // Every subcommand twice into separate directories.
    std::size_t files = 0, differing = 0;
    bool all_ok = true;
    std::vector<fs::path> roots;
    for (const char* run : {"a", "b"}) {
        const auto root = scratch(std::string("cli_") + run);
        roots.push_back(root);
        const auto cfg = root / "pipeline.ini";
        std::ofstream(cfg) << "[dataset]\npath = data.csv\ntask = classification\n[eval]\noutput_dir = out\n";
        const auto digits_cfg = root / "digits.ini";
        std::ofstream(digits_cfg) << "[dataset]\nformat = idx\nimages = digits/images.idx3\nlabels = digits/labels.idx1\n"
                                     "digit = 0\n[gbdt]\nn_trees = 30\n[eval]\noutput_dir = vis\n";
        const std::string c = " --config " + cfg.string();
        const auto out = root / "out";
        const std::vector<std::pair<std::string, std::string>> steps{
            {"synth_tabular", "synth-tabular --output " + (root / "data.csv").string() + " --samples 2000 --seed 3"},
            {"synth_digits", "synth-digits --output-dir " + (root / "digits").string() + " --samples 600 --seed 3"},
            {"train", "train-gbdt" + c},
            {"distill", "distill" + c},
            {"distill_joint", "distill" + c + " --method joint"},
            {"explain", "explain" + c},
            {"explain_joint", "explain" + c + " --method joint"},
            {"evaluate", "evaluate --teacher-csv " + (out / "attributions_teacher_test.csv").string() + " --student-csv " +
                             (out / "attributions_student_joint_test.csv").string() + " --out-dir " + out.string()},
            {"train_digits", "train-gbdt --config " + digits_cfg.string()},
            {"defaults", "defaults"},
        };
        for (const auto& [tag, args] : steps) {
            all_ok = all_ok && run_cli(args, root, tag) == 0;
        }
        // Teacher attributions for the digit split, then the images.
        const auto splits = load_splits(load_config(digits_cfg));
        const auto teacher = load_gbdt(root / "vis" / artifacts::kTeacher);
        write_attributions_csv(root / "vis" / "attributions_teacher_test.csv", splits.test.feature_names,
                               attribute_dataset(teacher, splits.test));
        all_ok = all_ok && run_cli("visualize --config " + digits_cfg.string() + " --attributions " +
                                       (root / "vis" / "attributions_teacher_test.csv").string() + " --sample 0 --k 50",
                                   root, "visualize") == 0;
    }
    for (const auto& entry : fs::recursive_directory_iterator(roots[0])) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), roots[0]);
        ++files;
        auto a = slurp(entry.path()), b = slurp(roots[1] / rel);
        // Paths echoed in stdout summaries and configs legitimately differ by run directory.
        const auto strip = [&](std::string s, const fs::path& root) {
            for (auto pos = s.find(root.string()); pos != std::string::npos; pos = s.find(root.string())) s.erase(pos, root.string().size());
            return s;
        };
        if (strip(a, roots[0]) != strip(b, roots[1])) ++differing;
    }
    return {same && all_ok && differing == 0 && files > 20,
            std::string("container reloads bit-identical (G2DS, G2GB, G2NN, G2MX): ") + (same ? "yes" : "no") +
                "; CLI runs ok: " + (all_ok ? "yes" : "no") + "; " + std::to_string(files - differing) + "/" +
                std::to_string(files) + " output files byte-identical across reruns"};
}

Outcome criterion10() {
    const auto root = scratch("visual");
    fs::path images, labels;
    std::string source = "synthetic stroke digits";
    if (const char* mnist = std::getenv("GBDT2NN_MNIST_DIR")) {
        images = fs::path(mnist) / "train-images-idx3-ubyte";
        labels = fs::path(mnist) / "train-labels-idx1-ubyte";
        source = "MNIST (" + std::string(mnist) + ")";
    } else {
        const auto imgs = make_digit_images(2000, 10);
        images = root / "images.idx3";
        labels = root / "labels.idx1";
        write_idx_images(images, imgs.rows, imgs.cols, imgs.pixels);
        write_idx_labels(labels, imgs.labels);
    }
    const auto cfg_path = root / "digits.ini";
    std::ofstream(cfg_path) << "[dataset]\nformat = idx\nimages = " << images.string() << "\nlabels = " << labels.string()
                            << "\ndigit = 0\nmax_samples = 2000\n[eval]\noutput_dir = " << (root / "out").string() << "\n";
    const auto cfg = load_config(cfg_path);
    const auto splits = load_splits(cfg);
    const auto teacher = fit_gbdt(splits.train, cfg.gbdt);
    fs::create_directories(root / "out");
    const auto rows = attribute_dataset(teacher, splits.test);
    const auto csv = root / "out" / "attributions_teacher_test.csv";
    write_attributions_csv(csv, splits.test.feature_names, rows);

    std::size_t hits = 0, drawn = 0, samples = 0;
    std::size_t first_zero = splits.test.n_samples;
    for (std::size_t i = 0; i < splits.test.n_samples; ++i) {
        if (splits.test.labels[i] != 1.0) continue;
        first_zero = std::min(first_zero, i);
        ++samples;
        const auto x = splits.test.row(i);
        for (auto p : topk(rows[i], kVisualTopK).features) {
            ++drawn;
            const int r = static_cast<int>(p / 28), c = static_cast<int>(p % 28);
            bool near_ink = false;
            for (int dr = -1; dr <= 1 && !near_ink; ++dr) {
                for (int dc = -1; dc <= 1 && !near_ink; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr >= 0 && rr < 28 && cc >= 0 && cc < 28) near_ink = x[static_cast<std::size_t>(rr * 28 + cc)] > 0.0;
                }
            }
            hits += near_ink;
        }
    }
    const double frac = drawn ? static_cast<double>(hits) / static_cast<double>(drawn) : 0.0;

    bool images_ok = false;
    std::string image_note;
    if (first_zero < splits.test.n_samples) {
        const auto s = cmd_visualize(cfg, csv, "test", first_zero, kVisualTopK, root / "out");
        const auto a = read_pgm(s.at("top_image")), b = read_pgm(s.at("outline_image"));
        const auto white = static_cast<std::size_t>(std::count(a.pixels.begin(), a.pixels.end(), 255));
        const auto expected = std::min<std::size_t>(kVisualTopK, topk(rows[first_zero], 784).features.size());
        images_ok = a.width == 28 && a.height == 28 && b.width == 28 && b.height == 28 && white == expected;
        image_note = ", PGMs 28x28 with " + std::to_string(white) + " white pixels";
    }
    return {images_ok && frac >= kInkFraction,
            source + ": " + fmt("%.1f%%", 100.0 * frac) + " of top-" + std::to_string(kVisualTopK) +
                " teacher pixels on/adjacent to ink over " + std::to_string(samples) + " digit-0 test images" + image_note};
}

}  // namespace

int main() {
    set_log_sink(nullptr);
    const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
        {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}};
    int hard_failures = 0;
    for (const auto& [id, fn] : criteria) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const bool soft = id == 7;
        std::printf("CRITERION %2d %s%s: %s\n", id, o.pass ? "PASS" : "FAIL", soft ? " (soft)" : "", o.detail.c_str());
        std::fflush(stdout);
        if (!o.pass && !soft) ++hard_failures;
    }
    return hard_failures == 0 ? 0 : 1;
}
