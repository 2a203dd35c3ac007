#include "gbdt2nn/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "gbdt2nn/binary_io.hpp"
#include "gbdt2nn/errors.hpp"
#include "gbdt2nn/rng.hpp"

namespace gbdt2nn {

namespace {

std::string trim(std::string_view s) {
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos) return {};
    auto end = s.find_last_not_of(" \t\r\n");
    s = s.substr(begin, end - begin + 1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return std::string(s);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string::npos) {
            cells.push_back(trim(std::string_view(line).substr(start)));
            break;
        }
        cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
        start = comma + 1;
    }
    return cells;
}

bool is_missing(const std::string& cell) {
    return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" || cell == "?";
}

bool parse_double(const std::string& cell, double& out) {
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
}

double median(std::vector<double> values) {
    const auto n = values.size();
    std::sort(values.begin(), values.end());
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError("truncated IDX header in " + path.string());
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

void write_be32(std::ostream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                       static_cast<char>(v)};
    out.write(b, 4);
}

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::uint32_t kDatasetVersion = 1;

}  // namespace

std::string to_string(Task task) {
    return task == Task::Classification ? "classification" : "regression";
}

Task parse_task(const std::string& name) {
    if (name == "classification" || name == "cls") return Task::Classification;
    if (name == "regression" || name == "reg") return Task::Regression;
    throw UsageError("unknown task '" + name + "'");
}

void Dataset::validate() const {
    if (features.size() != n_samples * n_features) throw DataError("feature matrix size mismatch");
    if (labels.size() != n_samples) throw DataError("label count does not match sample count");
    if (feature_names.size() != n_features) throw DataError("feature name count does not match column count");
    for (double v : features) {
        if (!std::isfinite(v)) throw DataError("non-finite feature value");
    }
    for (double y : labels) {
        if (!std::isfinite(y)) throw DataError("non-finite label");
        if (task == Task::Classification && y != 0.0 && y != 1.0) {
            throw DataError("classification labels must be 0 or 1");
        }
    }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.n_samples = indices.size();
    out.n_features = n_features;
    out.feature_names = feature_names;
    out.task = task;
    out.features.reserve(indices.size() * n_features);
    out.labels.reserve(indices.size());
    for (auto i : indices) {
        if (i >= n_samples) throw UsageError("subset index out of range");
        auto r = row(i);
        out.features.insert(out.features.end(), r.begin(), r.end());
        out.labels.push_back(labels[i]);
    }
    return out;
}

Dataset load_csv(const std::filesystem::path& path, const std::string& label_column, Task task) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open CSV file: " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw DataError("CSV file has no header row: " + path.string());
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
    const auto header = split_csv_line(line);
    const auto label_it = std::find(header.begin(), header.end(), label_column);
    if (label_it == header.end()) throw DataError("label column not found: '" + label_column + "'");
    const auto label_pos = static_cast<std::size_t>(label_it - header.begin());
    const std::size_t n_cols = header.size();

    // Parse into column-major buffers; NaN marks a missing cell until imputation.
    std::vector<std::vector<double>> columns(n_cols);
    std::size_t row_no = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row_no;
        const auto cells = split_csv_line(line);
        if (cells.size() != n_cols) {
            throw DataError("CSV row " + std::to_string(row_no) + " has " + std::to_string(cells.size()) +
                            " cells, expected " + std::to_string(n_cols));
        }
        for (std::size_t c = 0; c < n_cols; ++c) {
            double v = std::numeric_limits<double>::quiet_NaN();
            if (!is_missing(cells[c]) && !parse_double(cells[c], v)) {
                throw DataError("parse error at row " + std::to_string(row_no) + ", column '" + header[c] +
                                "': '" + cells[c] + "'");
            }
            columns[c].push_back(v);
        }
    }
    if (row_no == 0) throw DataError("CSV file has no data rows: " + path.string());

    for (std::size_t c = 0; c < n_cols; ++c) {
        std::vector<double> present;
        for (double v : columns[c]) {
            if (!std::isnan(v)) present.push_back(v);
        }
        if (present.size() == columns[c].size()) continue;
        if (c == label_pos) throw DataError("missing label value in column '" + header[c] + "'");
        if (present.empty()) throw DataError("column '" + header[c] + "' has no values to impute from");
        const double fill = median(std::move(present));
        for (double& v : columns[c]) {
            if (std::isnan(v)) v = fill;
        }
    }

    Dataset d;
    d.task = task;
    d.n_samples = row_no;
    d.n_features = n_cols - 1;
    for (std::size_t c = 0; c < n_cols; ++c) {
        if (c != label_pos) d.feature_names.push_back(header[c]);
    }
    d.labels = columns[label_pos];
    d.features.resize(d.n_samples * d.n_features);
    for (std::size_t i = 0; i < d.n_samples; ++i) {
        std::size_t j = 0;
        for (std::size_t c = 0; c < n_cols; ++c) {
            if (c == label_pos) continue;
            d.features[i * d.n_features + j++] = columns[c][i];
        }
    }
    d.validate();
    return d;
}

Dataset binarize_label(const Dataset& d, double threshold) {
    Dataset out = d;
    for (double& y : out.labels) y = y >= threshold ? 1.0 : 0.0;
    out.task = Task::Classification;
    return out;
}

Dataset load_idx_binary_digit(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                              int digit) {
    if (digit < 0 || digit > 9) throw UsageError("digit must be in 0..9");
    std::ifstream images(images_path, std::ios::binary);
    if (!images) throw DataError("cannot open IDX images file: " + images_path.string());
    std::ifstream labels(labels_path, std::ios::binary);
    if (!labels) throw DataError("cannot open IDX labels file: " + labels_path.string());

    if (read_be32(images, images_path) != kIdxImagesMagic) {
        throw DataError("bad magic number in IDX images file: " + images_path.string());
    }
    const auto n_images = read_be32(images, images_path);
    const auto rows = read_be32(images, images_path);
    const auto cols = read_be32(images, images_path);

    if (read_be32(labels, labels_path) != kIdxLabelsMagic) {
        throw DataError("bad magic number in IDX labels file: " + labels_path.string());
    }
    const auto n_labels = read_be32(labels, labels_path);
    if (n_labels != n_images) {
        throw DataError("IDX count mismatch: " + std::to_string(n_images) + " images vs " +
                        std::to_string(n_labels) + " labels");
    }

    Dataset d;
    d.task = Task::Classification;
    d.n_samples = n_images;
    d.n_features = std::size_t{rows} * cols;
    for (std::uint32_t r = 0; r < rows; ++r) {
        for (std::uint32_t c = 0; c < cols; ++c) {
            d.feature_names.push_back("px_" + std::to_string(r) + "_" + std::to_string(c));
        }
    }

    std::vector<unsigned char> pixels(d.n_samples * d.n_features);
    if (!images.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()))) {
        throw DataError("IDX images file shorter than its header declares");
    }
    std::vector<unsigned char> raw_labels(d.n_samples);
    if (!labels.read(reinterpret_cast<char*>(raw_labels.data()), static_cast<std::streamsize>(raw_labels.size()))) {
        throw DataError("IDX labels file shorter than its header declares");
    }

    d.features.resize(pixels.size());
    std::transform(pixels.begin(), pixels.end(), d.features.begin(),
                   [](unsigned char p) { return static_cast<double>(p) / 255.0; });
    d.labels.resize(d.n_samples);
    std::transform(raw_labels.begin(), raw_labels.end(), d.labels.begin(),
                   [digit](unsigned char l) { return l == digit ? 1.0 : 0.0; });
    d.validate();
    return d;
}

void write_idx_images(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                      std::span<const std::uint8_t> pixels) {
    const auto per_image = rows * cols;
    if (per_image == 0 || pixels.size() % per_image != 0) throw UsageError("pixel buffer is not a whole number of images");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    write_be32(out, kIdxImagesMagic);
    write_be32(out, static_cast<std::uint32_t>(pixels.size() / per_image));
    write_be32(out, static_cast<std::uint32_t>(rows));
    write_be32(out, static_cast<std::uint32_t>(cols));
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    write_be32(out, kIdxLabelsMagic);
    write_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n_samples,
                                                                            const SplitSpec& s) {
    if (!(s.train_fraction > 0.0 && s.train_fraction < 1.0)) {
        throw UsageError("train_fraction must be strictly between 0 and 1");
    }
    if (n_samples < 2) throw UsageError("split needs at least 2 samples");
    std::vector<std::size_t> order(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) order[i] = i;
    if (s.shuffle) {
        Rng rng(s.seed);
        rng.shuffle(std::span<std::size_t>(order));
    }
    const auto n_train = static_cast<std::size_t>(std::floor(s.train_fraction * static_cast<double>(n_samples)));
    std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    return {std::move(train), std::move(test)};
}

std::pair<Dataset, Dataset> split(const Dataset& d, const SplitSpec& s) {
    auto [train, test] = split_indices(d.n_samples, s);
    return {d.subset(train), d.subset(test)};
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& d, const std::string& label_column) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out.precision(17);
    for (const auto& name : d.feature_names) out << name << ',';
    out << label_column << '\n';
    for (std::size_t i = 0; i < d.n_samples; ++i) {
        for (double v : d.row(i)) out << v << ',';
        out << d.labels[i] << '\n';
    }
}

void save_dataset(const std::filesystem::path& path, const Dataset& d) {
    d.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    io::Writer w(out);
    w.magic("G2DS", kDatasetVersion);
    w.u8(d.task == Task::Classification ? 0 : 1);
    w.u64(d.n_samples);
    w.u64(d.n_features);
    for (const auto& name : d.feature_names) w.str(name);
    w.f64s(d.features);
    w.f64s(d.labels);
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open dataset cache: " + path.string());
    io::Reader r(in);
    r.magic("G2DS", kDatasetVersion);
    Dataset d;
    d.task = r.u8() == 0 ? Task::Classification : Task::Regression;
    d.n_samples = r.checked_size(r.u64());
    d.n_features = r.checked_size(r.u64());
    for (std::size_t j = 0; j < d.n_features; ++j) d.feature_names.push_back(r.str());
    d.features = r.f64s();
    d.labels = r.f64s();
    d.validate();
    return d;
}

}  // namespace gbdt2nn
