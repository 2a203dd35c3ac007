#include "gbdt2nn/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gbdt2nn/errors.hpp"
#include "gbdt2nn/log.hpp"
#include "gbdt2nn/metrics.hpp"
#include "gbdt2nn/saabas.hpp"

namespace gbdt2nn {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    std::string out = s.substr(b, e - b + 1);
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
    return out;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "' expects a number, got '" + v + "'");
    }
}

long long to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "' expects an integer, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw UsageError("config key '" + key + "' expects true/false, got '" + v + "'");
}

std::vector<std::size_t> to_size_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        const auto n = to_int(key, item);
        if (n < 1) throw UsageError("config key '" + key + "' expects positive integers");
        out.push_back(static_cast<std::size_t>(n));
    }
    return out;
}

OptimizerKind to_optimizer(const std::string& key, const std::string& v) {
    if (v == "adam") return OptimizerKind::Adam;
    if (v == "sgd") return OptimizerKind::Sgd;
    throw UsageError("config key '" + key + "' expects adam or sgd");
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& v) {
    std::filesystem::path p(v);
    if (p.is_relative() && !base.empty()) p = base / p;
    return p.lexically_normal();
}

void apply_key(PipelineConfig& c, const std::string& section, const std::string& key, const std::string& v,
               const std::filesystem::path& base) {
    const std::string full = section + "." + key;
    auto& ds = c.dataset;
    auto& g = c.gbdt;
    auto& di = c.distill;
    auto& in = c.interpret;
    auto& ev = c.eval;
    if (section == "dataset") {
        if (key == "format") {
            if (v == "csv") ds.format = DatasetFormat::Csv;
            else if (v == "idx") ds.format = DatasetFormat::Idx;
            else if (v == "cache") ds.format = DatasetFormat::Cache;
            else throw UsageError("dataset.format must be csv, idx or cache");
        } else if (key == "path") ds.path = resolve(base, v);
        else if (key == "images") ds.images_path = resolve(base, v);
        else if (key == "labels") ds.labels_path = resolve(base, v);
        else if (key == "label_column") ds.label_column = v;
        else if (key == "task") ds.task = parse_task(v);
        else if (key == "threshold") ds.threshold = to_double(full, v);
        else if (key == "digit") ds.digit = static_cast<int>(to_int(full, v));
        else if (key == "max_samples") ds.max_samples = static_cast<std::size_t>(to_int(full, v));
        else if (key == "train_fraction") ds.split.train_fraction = to_double(full, v);
        else if (key == "split_seed") ds.split.seed = static_cast<std::uint64_t>(to_int(full, v));
        else if (key == "shuffle") ds.split.shuffle = to_bool(full, v);
        else throw UsageError("unknown config key '" + full + "'");
    } else if (section == "gbdt") {
        if (key == "n_trees") g.n_trees = static_cast<int>(to_int(full, v));
        else if (key == "max_leaves") g.max_leaves = static_cast<int>(to_int(full, v));
        else if (key == "min_samples_leaf") g.min_samples_leaf = static_cast<int>(to_int(full, v));
        else if (key == "learning_rate") g.learning_rate = to_double(full, v);
        else if (key == "min_gain") g.min_gain = to_double(full, v);
        else if (key == "seed") g.seed = static_cast<std::uint64_t>(to_int(full, v));
        else throw UsageError("unknown config key '" + full + "'");
    } else if (section == "distill") {
        if (key == "n_groups") di.n_groups = static_cast<int>(to_int(full, v));
        else if (key == "d_embed") di.d_embed = static_cast<int>(to_int(full, v));
        else if (key == "hidden") di.hidden = to_size_list(full, v);
        else if (key == "seed") di.seed = static_cast<std::uint64_t>(to_int(full, v));
        else if (key == "embed_epochs") di.embed_train.epochs = static_cast<int>(to_int(full, v));
        else if (key == "embed_batch_size") di.embed_train.batch_size = static_cast<int>(to_int(full, v));
        else if (key == "embed_learning_rate") di.embed_train.learning_rate = to_double(full, v);
        else if (key == "embed_optimizer") di.embed_train.optimizer = to_optimizer(full, v);
        else if (key == "distill_epochs") di.distill_train.epochs = static_cast<int>(to_int(full, v));
        else if (key == "distill_batch_size") di.distill_train.batch_size = static_cast<int>(to_int(full, v));
        else if (key == "distill_learning_rate") di.distill_train.learning_rate = to_double(full, v);
        else if (key == "distill_optimizer") di.distill_train.optimizer = to_optimizer(full, v);
        else throw UsageError("unknown config key '" + full + "'");
    } else if (section == "interpret") {
        if (key == "method") {
            if (v == "independent") in.method = InterpretMethod::Independent;
            else if (v == "joint") in.method = InterpretMethod::Joint;
            else throw UsageError("interpret.method must be independent or joint");
        } else if (key == "lambda") in.lambda = to_double(full, v);
        else if (key == "head_fit") {
            if (v == "closed_form") in.head.method = HeadFitMethod::ClosedForm;
            else if (v == "gradient") in.head.method = HeadFitMethod::Gradient;
            else throw UsageError("interpret.head_fit must be closed_form or gradient");
        } else if (key == "ridge") in.head.ridge = to_double(full, v);
        else throw UsageError("unknown config key '" + full + "'");
    } else if (section == "eval") {
        if (key == "k") ev.ks = to_size_list(full, v);
        else if (key == "split") ev.split = v;
        else if (key == "output_dir") ev.output_dir = resolve(base, v);
        else throw UsageError("unknown config key '" + full + "'");
    } else {
        throw UsageError("unknown config section '[" + section + "]'");
    }
}

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void require_file(const std::filesystem::path& p, const std::string& what) {
    if (p.empty()) throw UsageError(what + " path is not configured");
    if (!std::filesystem::exists(p)) throw DataError(what + " not found: " + p.string());
}

// 4-byte container tag of a model file.
std::string container_tag(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open model file: " + p.string());
    std::string tag(4, '\0');
    in.read(tag.data(), 4);
    return tag;
}

double pearson(std::span<const double> a, std::span<const double> b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return saa > 0.0 && sbb > 0.0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

}  // namespace

std::string method_name(InterpretMethod m) { return m == InterpretMethod::Joint ? "joint" : "independent"; }

void PipelineConfig::override_seed(std::uint64_t seed) {
    dataset.split.seed = seed;
    gbdt.seed = seed;
    distill.seed = seed;
    distill.embed_train.seed = seed;
    distill.distill_train.seed = seed;
    interpret.head.train.seed = seed;
}

void PipelineConfig::validate() const {
    gbdt.validate();
    distill.validate(static_cast<std::size_t>(gbdt.n_trees));
    interpret.head.train.validate();
    if (!(interpret.lambda >= 0.0 && interpret.lambda <= 1.0)) throw UsageError("interpret.lambda must be in [0, 1]");
    if (eval.ks.empty()) throw UsageError("eval.k must list at least one positive k");
    if (eval.split != "train" && eval.split != "test") throw UsageError("eval.split must be train or test");
    if (!(dataset.split.train_fraction > 0.0 && dataset.split.train_fraction < 1.0)) {
        throw UsageError("dataset.train_fraction must be strictly between 0 and 1");
    }
}

PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    PipelineConfig c;
    std::stringstream ss(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw UsageError("malformed section header on config line " + std::to_string(line_no));
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw UsageError("expected key = value on config line " + std::to_string(line_no));
        if (section.empty()) throw UsageError("config key outside of a section on line " + std::to_string(line_no));
        apply_key(c, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), base_dir);
    }
    c.validate();
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path.parent_path());
}

std::string default_config_text() {
    const PipelineConfig c;
    std::ostringstream o;
    o << "# gbdt2nn pipeline configuration; every key shown at its default.\n"
         "# Relative paths are resolved against this file's directory.\n\n"
         "[dataset]\n"
         "format = csv              # csv | idx | cache\n"
         "path =                    # csv or cache file\n"
         "images =                  # idx3 images (format = idx)\n"
         "labels =                  # idx1 labels (format = idx)\n"
         "label_column = " << c.dataset.label_column << "\n"
         "task = regression         # regression | classification\n"
         "# threshold = 1400        # binarize labels: >= threshold -> 1\n"
         "digit = " << c.dataset.digit << "                 # positive class for idx one-vs-rest\n"
         "max_samples = 0           # 0 keeps every row, otherwise the first N\n"
         "train_fraction = " << c.dataset.split.train_fraction << "\n"
         "split_seed = " << c.dataset.split.seed << "\n"
         "shuffle = true\n\n"
         "[gbdt]\n"
         "n_trees = " << c.gbdt.n_trees << "\n"
         "max_leaves = " << c.gbdt.max_leaves << "\n"
         "min_samples_leaf = " << c.gbdt.min_samples_leaf << "\n"
         "learning_rate = " << c.gbdt.learning_rate << "\n"
         "min_gain = " << c.gbdt.min_gain << "\n"
         "seed = " << c.gbdt.seed << "\n\n"
         "[distill]\n"
         "n_groups = 0              # 0 = ceil(n_trees / 20)\n"
         "d_embed = " << c.distill.d_embed << "\n"
         "hidden = 100, 100\n"
         "seed = " << c.distill.seed << "\n"
         "embed_epochs = " << c.distill.embed_train.epochs << "\n"
         "embed_batch_size = " << c.distill.embed_train.batch_size << "\n"
         "embed_learning_rate = " << c.distill.embed_train.learning_rate << "\n"
         "embed_optimizer = adam\n"
         "distill_epochs = " << c.distill.distill_train.epochs << "\n"
         "distill_batch_size = " << c.distill.distill_train.batch_size << "\n"
         "distill_learning_rate = " << c.distill.distill_train.learning_rate << "\n"
         "distill_optimizer = adam\n\n"
         "[interpret]\n"
         "method = independent      # independent | joint\n"
         "lambda = " << c.interpret.lambda << "\n"
         "head_fit = closed_form    # closed_form | gradient\n"
         "ridge = " << c.interpret.head.ridge << "\n\n"
         "[eval]\n"
         "k = 1, 3, 5, 10\n"
         "split = test              # test | train\n"
         "output_dir = out\n";
    return o.str();
}

const Dataset& LoadedSplits::by_name(const std::string& split) const {
    if (split == "train") return train;
    if (split == "test") return test;
    throw UsageError("unknown split '" + split + "' (expected train or test)");
}

LoadedSplits load_splits(const PipelineConfig& c) {
    const auto& ds = c.dataset;
    Dataset d;
    switch (ds.format) {
        case DatasetFormat::Csv:
            require_file(ds.path, "dataset");
            d = load_csv(ds.path, ds.label_column, ds.task);
            break;
        case DatasetFormat::Cache:
            require_file(ds.path, "dataset cache");
            d = load_dataset(ds.path);
            break;
        case DatasetFormat::Idx:
            require_file(ds.images_path, "IDX images file");
            require_file(ds.labels_path, "IDX labels file");
            d = load_idx_binary_digit(ds.images_path, ds.labels_path, ds.digit);
            break;
    }
    if (ds.threshold) d = binarize_label(d, *ds.threshold);
    if (ds.max_samples > 0 && ds.max_samples < d.n_samples) {
        std::vector<std::size_t> head(ds.max_samples);
        std::iota(head.begin(), head.end(), std::size_t{0});
        d = d.subset(head);
    }
    auto [train, test] = split(d, ds.split);
    return {std::move(train), std::move(test)};
}

Summary cmd_train_gbdt(const PipelineConfig& c, const std::filesystem::path& out_dir) {
    const auto splits = load_splits(c);
    ensure_dir(out_dir);
    std::vector<double> round_loss;
    const auto model = fit_gbdt(splits.train, c.gbdt, &round_loss);
    const auto model_path = out_dir / artifacts::kTeacher;
    save_gbdt(model_path, model);

    std::ofstream log(out_dir / artifacts::kTeacherLog);
    log << "round,train_loss\n";
    for (std::size_t r = 0; r < round_loss.size(); ++r) log << r << ',' << fmt(round_loss[r]) << '\n';

    const auto test_scores = predict_all(model, splits.test);
    Summary s{{"command", "train-gbdt"},
              {"model", model_path.string()},
              {"n_trees", std::to_string(model.trees.size())},
              {"train_loss", fmt(round_loss.back())},
              {"test_loss", fmt(task_loss(model.task, splits.test.labels, test_scores))}};
    log_info("teacher trained: " + std::to_string(model.trees.size()) + " trees, final train loss " + fmt(round_loss.back()));
    return s;
}

Summary cmd_distill(const PipelineConfig& c, const std::filesystem::path& teacher_path,
                    const std::filesystem::path& out_dir) {
    require_file(teacher_path, "teacher model");
    const auto teacher = load_gbdt(teacher_path);
    const auto splits = load_splits(c);
    if (splits.train.n_features != teacher.n_features) throw DataError("dataset width does not match the teacher");
    ensure_dir(out_dir);

    const auto method = c.interpret.method;
    const std::string tag = method_name(method);
    std::vector<CurvePoint> curve;
    const bool classification = teacher.task == Task::Classification;
    auto record_epoch = [&](int epoch, const std::vector<TreeGroup>& groups, std::span<const GroupDistillNet> nets,
                            std::span<const GroupEmbeddingNet> embeddings) {
        std::vector<PredictionHead> heads;
        for (const auto& e : embeddings) heads.push_back(e.head);
        const auto student = assemble(teacher, groups, nets, heads);
        const auto scores = student_predict_all(student, splits.test);
        curve.push_back({epoch, "test", "task_loss", task_loss(student.task, splits.test.labels, scores)});
        const bool both = classification && std::any_of(splits.test.labels.begin(), splits.test.labels.end(), [](double y) { return y == 1.0; }) &&
                          std::any_of(splits.test.labels.begin(), splits.test.labels.end(), [](double y) { return y == 0.0; });
        if (both) curve.push_back({epoch, "test", "auc", auc(splits.test.labels, scores)});
        if (!classification) curve.push_back({epoch, "test", "mse", mse(splits.test.labels, scores)});
    };

    Gbdt2nnModel student;
    std::vector<TreeGroup> groups;
    std::vector<GroupEmbeddingNet> embeddings;
    EmbeddingHistory embed_history;
    StructureHistory struct_history;
    std::filesystem::path model_path;

    groups = group_trees(teacher, c.distill);
    if (method == InterpretMethod::Independent) {
        embeddings = fit_group_embeddings(teacher, groups, splits.train, c.distill, &embed_history);
    } else {
        JointConfig jc{c.interpret.lambda, c.distill};
        auto joint = fit_joint(teacher, groups, splits.train, jc);
        embeddings = std::move(joint.embeddings);
        embed_history = std::move(joint.history);
        MixedModel mm;
        mm.interp_head = std::move(joint.interp_head);
        student = distill_from_embeddings(teacher, groups, embeddings, splits.train, c.distill, &struct_history,
                                          [&](int e, std::span<const GroupDistillNet> nets) { record_epoch(e, groups, nets, embeddings); });
        mm.student = student;
        model_path = out_dir / artifacts::kStudentJoint;
        save_mixed(model_path, mm);
    }
    if (method == InterpretMethod::Independent) {
        student = distill_from_embeddings(teacher, groups, embeddings, splits.train, c.distill, &struct_history,
                                          [&](int e, std::span<const GroupDistillNet> nets) { record_epoch(e, groups, nets, embeddings); });
        model_path = out_dir / artifacts::kStudentBaseline;
        save_student(model_path, student);
    }

    {
        std::ofstream log(out_dir / (tag == "joint" ? std::string("distill_log_joint.csv") : std::string(artifacts::kDistillLog)));
        log << "stage,group,epoch,loss\n";
        for (std::size_t e = 0; e < embed_history.prediction_loss.size(); ++e) {
            log << "embedding_prediction,all," << e + 1 << ',' << fmt(embed_history.prediction_loss[e]) << '\n';
            if (method == InterpretMethod::Joint) {
                log << "embedding_interpretation,all," << e + 1 << ',' << fmt(embed_history.interpretation_loss[e]) << '\n';
            }
        }
        for (std::size_t j = 0; j < embeddings.size(); ++j) {
            log << "embedding_final," << j << ",0," << fmt(embeddings[j].final_loss) << '\n';
        }
        for (std::size_t j = 0; j < struct_history.group_loss.size(); ++j) {
            for (std::size_t e = 0; e < struct_history.group_loss[j].size(); ++e) {
                log << "structure," << j << ',' << e + 1 << ',' << fmt(struct_history.group_loss[j][e]) << '\n';
            }
        }
    }
    write_curve_csv(out_dir / ("curve_" + tag + ".csv"), curve);

    const auto teacher_train = predict_all(teacher, splits.train);
    const auto teacher_test = predict_all(teacher, splits.test);
    const auto student_train = student_predict_all(student, splits.train);
    const auto student_test = student_predict_all(student, splits.test);
    const double fidelity_train = mse(teacher_train, student_train);
    const double fidelity_test = mse(teacher_test, student_test);
    {
        std::ofstream rep(out_dir / ("distill_report_" + tag + ".txt"));
        rep << "metric,k,value\n";
        rep << "fidelity_mse_train,," << fmt(fidelity_train) << '\n';
        rep << "fidelity_mse_test,," << fmt(fidelity_test) << '\n';
        rep << "fidelity_pearson_test,," << fmt(pearson(teacher_test, student_test)) << '\n';
        rep << "student_task_loss_test,," << fmt(task_loss(student.task, splits.test.labels, student_test)) << '\n';
        rep << "teacher_task_loss_test,," << fmt(task_loss(teacher.task, splits.test.labels, teacher_test)) << '\n';
        if (classification) {
            rep << "student_auc_test,," << fmt(auc(splits.test.labels, student_test)) << '\n';
            rep << "teacher_auc_test,," << fmt(auc(splits.test.labels, teacher_test)) << '\n';
        } else {
            rep << "student_mse_test,," << fmt(mse(splits.test.labels, student_test)) << '\n';
            rep << "teacher_mse_test,," << fmt(mse(splits.test.labels, teacher_test)) << '\n';
        }
    }
    for (std::size_t j = 0; j < embeddings.size(); ++j) {
        log_info("group " + std::to_string(j) + ": embedding loss " + fmt(embeddings[j].final_loss) + ", structure loss " +
                 (struct_history.group_loss[j].empty() ? std::string("n/a") : fmt(struct_history.group_loss[j].back())));
    }
    log_info("fidelity (student vs teacher raw MSE): train " + fmt(fidelity_train) + ", test " + fmt(fidelity_test));

    return {{"command", "distill"},
            {"method", tag},
            {"model", model_path.string()},
            {"n_groups", std::to_string(student.groups.size())},
            {"fidelity_mse_train", fmt(fidelity_train)},
            {"fidelity_mse_test", fmt(fidelity_test)}};
}

Summary cmd_explain(const PipelineConfig& c, const std::filesystem::path& student_path,
                    const std::filesystem::path& teacher_path, const std::string& split,
                    const std::filesystem::path& out_dir) {
    require_file(teacher_path, "teacher model");
    require_file(student_path, "student model");
    const auto teacher = load_gbdt(teacher_path);
    const auto splits = load_splits(c);
    const Dataset& target = splits.by_name(split);
    if (target.n_features != teacher.n_features) throw DataError("dataset width does not match the teacher");
    ensure_dir(out_dir);

    MixedModel mm;
    std::string method;
    const auto tag = container_tag(student_path);
    if (tag == "G2MX") {
        mm = load_mixed(student_path);
        method = c.interpret.method == InterpretMethod::Joint ? "joint" : "independent";
    } else if (tag == "G2NN") {
        if (c.interpret.method == InterpretMethod::Joint) {
            throw UsageError("joint explanations need the mixed model written by `distill` with interpret.method = joint");
        }
        mm.student = load_student(student_path);
        mm.interp_head = fit_interpretation_head(mm.student, splits.train, teacher, c.interpret.head);
        save_mixed(out_dir / artifacts::kStudentIndependent, mm);
        method = "independent";
    } else {
        throw DataError("unrecognised student model container: " + student_path.string());
    }
    if (mm.student.n_features != teacher.n_features) throw DataError("student and teacher feature counts differ");

    const auto teacher_rows = attribute_dataset(teacher, target);
    const auto student_rows = explain_dataset(mm, target);
    const auto teacher_csv = out_dir / ("attributions_teacher_" + split + ".csv");
    const auto student_csv = out_dir / ("attributions_student_" + method + "_" + split + ".csv");
    write_attributions_csv(teacher_csv, target.feature_names, teacher_rows);
    write_attributions_csv(student_csv, target.feature_names, student_rows);
    return {{"command", "explain"},
            {"method", method},
            {"split", split},
            {"rows", std::to_string(target.n_samples)},
            {"teacher_csv", teacher_csv.string()},
            {"student_csv", student_csv.string()}};
}

Summary cmd_evaluate(const std::filesystem::path& teacher_csv, const std::filesystem::path& student_csv,
                     const std::vector<std::size_t>& ks, const std::filesystem::path& out_dir) {
    if (ks.empty()) throw UsageError("evaluate needs at least one k");
    require_file(teacher_csv, "teacher attribution CSV");
    require_file(student_csv, "student attribution CSV");
    const auto teacher = read_attributions_csv(teacher_csv);
    const auto student = read_attributions_csv(student_csv);
    if (teacher.feature_names != student.feature_names) throw DataError("attribution CSV headers differ");
    if (teacher.rows.size() != student.rows.size()) throw DataError("attribution CSV row counts differ");
    if (teacher.rows.empty()) throw DataError("attribution CSVs have no rows");
    ensure_dir(out_dir);

    const auto report = compare_attributions(teacher.rows, student.rows, ks);
    const auto path = out_dir / artifacts::kMetrics;
    write_report(path, report);
    Summary s{{"command", "evaluate"}, {"report", path.string()}, {"n_samples", std::to_string(report.n_samples)}};
    for (const auto& [k, v] : report.ndcg_at) s["ndcg@" + std::to_string(k)] = fmt(v);
    for (const auto& [k, v] : report.coverage_at) s["avg_c" + std::to_string(k)] = fmt(v);
    return s;
}

void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const std::uint8_t> pixels) {
    if (pixels.size() != width * height) throw UsageError("PGM pixel count mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "P5\n" << width << ' ' << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

PgmImage read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::string magic;
    int maxval = 0;
    PgmImage img;
    in >> magic >> img.width >> img.height >> maxval;
    if (magic != "P5" || maxval != 255 || !in) throw DataError("not an 8-bit binary PGM: " + path.string());
    in.get();
    img.pixels.resize(img.width * img.height);
    if (!in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()))) {
        throw DataError("truncated PGM: " + path.string());
    }
    return img;
}

PixelImportanceImages render_pixel_importance(std::span<const double> image, const AttributionVector& a, std::size_t k) {
    if (image.size() != a.values.size()) throw UsageError("image and attribution sizes differ");
    PixelImportanceImages out;
    std::vector<std::uint8_t> original(image.size());
    std::transform(image.begin(), image.end(), original.begin(),
                   [](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); });

    // Background gray of the source picture: its most frequent level.
    std::array<std::size_t, 256> histogram{};
    for (auto p : original) ++histogram[p];
    const auto background = static_cast<std::uint8_t>(std::max_element(histogram.begin(), histogram.end()) - histogram.begin());

    out.white_on_black.assign(image.size(), 0);
    out.outline.assign(image.size(), background);
    const auto top = topk(a, k);
    for (auto j : top.features) {
        out.white_on_black[j] = 255;
        out.outline[j] = original[j];
    }
    out.drawn = top.features.size();
    return out;
}

Summary cmd_visualize(const PipelineConfig& c, const std::filesystem::path& attribution_csv, const std::string& split,
                      std::size_t sample_id, std::size_t k, const std::filesystem::path& out_dir) {
    if (k < 1) throw UsageError("k must be >= 1");
    require_file(attribution_csv, "attribution CSV");
    const auto splits = load_splits(c);
    const Dataset& d = splits.by_name(split);
    const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(d.n_features))));
    if (side * side != d.n_features) {
        throw DataError("visualize needs a square pixel count, dataset has " + std::to_string(d.n_features) + " features");
    }
    const auto table = read_attributions_csv(attribution_csv);
    if (table.feature_names.size() != d.n_features) throw DataError("attribution CSV width does not match the dataset");
    if (table.rows.size() != d.n_samples) throw DataError("attribution CSV rows do not match the " + split + " split");
    if (sample_id >= d.n_samples) throw UsageError("sample id " + std::to_string(sample_id) + " out of range");
    ensure_dir(out_dir);

    const auto images = render_pixel_importance(d.row(sample_id), table.rows[sample_id], k);
    if (images.drawn < k) {
        log_info("only " + std::to_string(images.drawn) + " pixels have nonzero attribution; drew all of them");
    }
    const std::string stem = attribution_csv.stem().string() + "_sample" + std::to_string(sample_id) + "_k" + std::to_string(k);
    const auto white = out_dir / (stem + "_top.pgm");
    const auto outline = out_dir / (stem + "_outline.pgm");
    write_pgm(white, side, side, images.white_on_black);
    write_pgm(outline, side, side, images.outline);
    return {{"command", "visualize"},
            {"top_image", white.string()},
            {"outline_image", outline.string()},
            {"pixels_drawn", std::to_string(images.drawn)}};
}

}  // namespace gbdt2nn
