// gbdt2nn: teacher training, distillation, explanation, evaluation and visualization.

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <iostream>
#include <optional>

#include "gbdt2nn/errors.hpp"
#include "gbdt2nn/pipeline.hpp"
#include "gbdt2nn/synthetic.hpp"

namespace fs = std::filesystem;
using namespace gbdt2nn;

namespace {

void print_summary(const Summary& s) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : s) {
        long long i = 0;
        double d = 0.0;
        const char* end = v.data() + v.size();
        if (auto r = std::from_chars(v.data(), end, i); !v.empty() && r.ec == std::errc{} && r.ptr == end) {
            j[k] = i;
        } else if (auto r2 = std::from_chars(v.data(), end, d); !v.empty() && r2.ec == std::errc{} && r2.ptr == end) {
            j[k] = d;
        } else {
            j[k] = v;
        }
    }
    std::cout << j.dump() << std::endl;
}

struct Common {
    std::string config;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* app, Common& c, bool need_config) {
    auto* opt = app->add_option("--config", c.config, "pipeline config file");
    if (need_config) opt->required()->check(CLI::ExistingFile);
    app->add_option("--out-dir", c.out_dir, "output directory (default: eval.output_dir)");
    app->add_option("--seed", c.seed, "override every seed in the config");
}

PipelineConfig config_of(const Common& c) {
    auto cfg = load_config(c.config);
    if (c.seed) cfg.override_seed(*c.seed);
    return cfg;
}

fs::path out_of(const Common& c, const PipelineConfig& cfg) {
    return c.out_dir.empty() ? cfg.eval.output_dir : fs::path(c.out_dir);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distill gradient-boosted trees into interpretable neural networks"};
    app.require_subcommand(1);

    Common train_c, distill_c, explain_c, visualize_c;
    std::string teacher_path, student_path, split_name, attribution_csv, teacher_csv, student_csv, method;
    std::string eval_out = ".";
    std::vector<std::size_t> ks;
    std::size_t sample_id = 0, k = 50;

    auto* train = app.add_subcommand("train-gbdt", "fit the teacher ensemble");
    add_common(train, train_c, true);

    auto* dist = app.add_subcommand("distill", "distill the teacher into a student network");
    add_common(dist, distill_c, true);
    dist->add_option("--teacher", teacher_path, "teacher model (default: <out-dir>/teacher.gbdt)");
    dist->add_option("--method", method, "override interpret.method")->check(CLI::IsMember({"independent", "joint"}));

    auto* expl = app.add_subcommand("explain", "write teacher and student attribution CSVs");
    add_common(expl, explain_c, true);
    expl->add_option("--teacher", teacher_path, "teacher model (default: <out-dir>/teacher.gbdt)");
    expl->add_option("--student", student_path, "student model (default: chosen by interpret.method)");
    expl->add_option("--split", split_name, "train or test (default: eval.split)")->check(CLI::IsMember({"train", "test"}));
    expl->add_option("--method", method, "override interpret.method")->check(CLI::IsMember({"independent", "joint"}));

    auto* eval = app.add_subcommand("evaluate", "compare teacher and student attribution CSVs");
    eval->add_option("--teacher-csv", teacher_csv, "teacher attribution CSV")->required();
    eval->add_option("--student-csv", student_csv, "student attribution CSV")->required();
    eval->add_option("--k", ks, "cutoffs (default 1 3 5 10)")->delimiter(',');
    eval->add_option("--out-dir", eval_out, "output directory");

    auto* vis = app.add_subcommand("visualize", "render top-k pixel importance images");
    add_common(vis, visualize_c, true);
    vis->add_option("--attributions", attribution_csv, "attribution CSV for the split")->required();
    vis->add_option("--split", split_name, "train or test (default: eval.split)")->check(CLI::IsMember({"train", "test"}));
    vis->add_option("--sample", sample_id, "row of the split to render");
    vis->add_option("--k", k, "number of pixels to draw")->check(CLI::PositiveNumber);

    std::string synth_out;
    std::size_t synth_n = 2000, synth_f = 20;
    std::uint64_t synth_seed = 0;
    std::string synth_task = "classification";
    auto* st = app.add_subcommand("synth-tabular", "write a synthetic tree-realizable CSV");
    st->add_option("--output", synth_out, "CSV path")->required();
    st->add_option("--samples", synth_n, "row count");
    st->add_option("--features", synth_f, "feature count (>= 8)");
    st->add_option("--task", synth_task, "classification or regression")->check(CLI::IsMember({"classification", "regression"}));
    st->add_option("--seed", synth_seed, "generator seed");

    std::string digits_dir;
    auto* sd = app.add_subcommand("synth-digits", "write synthetic 28x28 digits as IDX files");
    sd->add_option("--output-dir", digits_dir, "directory for images.idx3 / labels.idx1")->required();
    sd->add_option("--samples", synth_n, "image count");
    sd->add_option("--seed", synth_seed, "generator seed");

    app.add_subcommand("defaults", "print the reference config with every default");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*train) {
            const auto cfg = config_of(train_c);
            print_summary(cmd_train_gbdt(cfg, out_of(train_c, cfg)));
        } else if (*dist) {
            auto cfg = config_of(distill_c);
            if (!method.empty()) cfg.interpret.method = method == "joint" ? InterpretMethod::Joint : InterpretMethod::Independent;
            const auto out = out_of(distill_c, cfg);
            print_summary(cmd_distill(cfg, teacher_path.empty() ? out / artifacts::kTeacher : fs::path(teacher_path), out));
        } else if (*expl) {
            auto cfg = config_of(explain_c);
            if (!method.empty()) cfg.interpret.method = method == "joint" ? InterpretMethod::Joint : InterpretMethod::Independent;
            const auto out = out_of(explain_c, cfg);
            fs::path student = student_path;
            if (student.empty()) {
                student = out / (cfg.interpret.method == InterpretMethod::Joint ? artifacts::kStudentJoint
                                                                                : artifacts::kStudentBaseline);
            }
            print_summary(cmd_explain(cfg, student, teacher_path.empty() ? out / artifacts::kTeacher : fs::path(teacher_path),
                                      split_name.empty() ? cfg.eval.split : split_name, out));
        } else if (*eval) {
            if (ks.empty()) ks = {1, 3, 5, 10};
            print_summary(cmd_evaluate(teacher_csv, student_csv, ks, eval_out));
        } else if (*vis) {
            const auto cfg = config_of(visualize_c);
            print_summary(cmd_visualize(cfg, attribution_csv, split_name.empty() ? cfg.eval.split : split_name, sample_id, k,
                                        out_of(visualize_c, cfg)));
        } else if (*st) {
            const auto d = make_tree_dataset(synth_n, synth_f, parse_task(synth_task), synth_seed);
            if (fs::path(synth_out).has_parent_path()) fs::create_directories(fs::path(synth_out).parent_path());
            write_dataset_csv(synth_out, d, "label");
            print_summary({{"command", "synth-tabular"}, {"output", synth_out}, {"rows", std::to_string(d.n_samples)}});
        } else if (*sd) {
            const auto imgs = make_digit_images(synth_n, synth_seed);
            fs::create_directories(digits_dir);
            const fs::path dir(digits_dir);
            write_idx_images(dir / "images.idx3", imgs.rows, imgs.cols, imgs.pixels);
            write_idx_labels(dir / "labels.idx1", imgs.labels);
            print_summary({{"command", "synth-digits"}, {"images", (dir / "images.idx3").string()},
                           {"labels", (dir / "labels.idx1").string()}, {"count", std::to_string(imgs.labels.size())}});
        } else {
            std::cout << default_config_text();
        }
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return 3;
    } catch (const std::filesystem::filesystem_error& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
