#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gbdt2nn/dataset.hpp"
#include "gbdt2nn/distillation.hpp"
#include "gbdt2nn/gbdt.hpp"
#include "gbdt2nn/interpretation.hpp"

namespace gbdt2nn {

enum class DatasetFormat { Csv, Idx, Cache };
enum class InterpretMethod { Independent, Joint };

struct DatasetSection {
    DatasetFormat format = DatasetFormat::Csv;
    std::filesystem::path path;         // csv or cache
    std::filesystem::path images_path;  // idx
    std::filesystem::path labels_path;  // idx
    std::string label_column = "label";
    Task task = Task::Regression;
    std::optional<double> threshold;
    int digit = 0;
    std::size_t max_samples = 0;  // 0 keeps every row
    SplitSpec split;
};

struct InterpretSection {
    InterpretMethod method = InterpretMethod::Independent;
    double lambda = 0.7;
    HeadFitConfig head;
};

struct EvalSection {
    std::vector<std::size_t> ks{1, 3, 5, 10};
    std::string split = "test";
    std::filesystem::path output_dir = "out";
};

struct PipelineConfig {
    DatasetSection dataset;
    GbdtConfig gbdt;
    DistillConfig distill;
    InterpretSection interpret;
    EvalSection eval;

    /// Sets every seed (split, gbdt, distill, training shuffles).
    void override_seed(std::uint64_t seed);
    void validate() const;
};

/// Flat sectioned `key = value` text; `#` starts a comment.
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

/// Reference config with every key at its default, with comments.
std::string default_config_text();

struct LoadedSplits {
    Dataset train;
    Dataset test;

    const Dataset& by_name(const std::string& split) const;
};

/// Loads, optionally binarizes / truncates, and splits the configured dataset.
LoadedSplits load_splits(const PipelineConfig& c);

/// Machine-readable result of a subcommand; printed as one JSON line.
using Summary = std::map<std::string, std::string>;

Summary cmd_train_gbdt(const PipelineConfig& c, const std::filesystem::path& out_dir);
Summary cmd_distill(const PipelineConfig& c, const std::filesystem::path& teacher_path,
                    const std::filesystem::path& out_dir);
Summary cmd_explain(const PipelineConfig& c, const std::filesystem::path& student_path,
                    const std::filesystem::path& teacher_path, const std::string& split,
                    const std::filesystem::path& out_dir);
Summary cmd_evaluate(const std::filesystem::path& teacher_csv, const std::filesystem::path& student_csv,
                     const std::vector<std::size_t>& ks, const std::filesystem::path& out_dir);
Summary cmd_visualize(const PipelineConfig& c, const std::filesystem::path& attribution_csv, const std::string& split,
                      std::size_t sample_id, std::size_t k, const std::filesystem::path& out_dir);

/// Artifact names, relative to the output directory.
namespace artifacts {
inline constexpr const char* kTeacher = "teacher.gbdt";
inline constexpr const char* kTeacherLog = "teacher_training.csv";
inline constexpr const char* kStudentBaseline = "student.g2nn";
inline constexpr const char* kStudentJoint = "student_joint.g2mx";
inline constexpr const char* kStudentIndependent = "student_independent.g2mx";
inline constexpr const char* kDistillLog = "distill_log.csv";
inline constexpr const char* kMetrics = "metrics.txt";
}  // namespace artifacts

std::string method_name(InterpretMethod m);

/// 8-bit binary PGM (P5).
void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const std::uint8_t> pixels);

struct PgmImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;
};

PgmImage read_pgm(const std::filesystem::path& path);

/// The two visual-evaluation renderings of one sample.
struct PixelImportanceImages {
    std::vector<std::uint8_t> white_on_black;  // top-k pixels at 255, the rest 0
    std::vector<std::uint8_t> outline;         // top-k pixels at original value over the background gray
    std::size_t drawn = 0;                     // number of top-k pixels actually drawn
};

PixelImportanceImages render_pixel_importance(std::span<const double> image, const AttributionVector& a, std::size_t k);

}  // namespace gbdt2nn
