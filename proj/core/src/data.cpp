#include "imml/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "imml/errors.hpp"
#include "imml/rng.hpp"

namespace imml {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = first + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || cell.empty()) {
        throw ParseError("row " + std::to_string(row) + ", column '" + column +
                         "': not a number: '" + cell + "'");
    }
    return v;
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path);
    return in;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    return out;
}

}  // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

std::size_t MultimodalDataset::n_classes() const {
    if (task != Task::classification) return 0;
    double hi = -1.0;
    for (double v : y) hi = std::max(hi, v);
    return y.empty() ? 0 : static_cast<std::size_t>(hi) + 1;
}

void MultimodalDataset::validate() const {
    std::size_t rows = ids.size();
    if (x_mri.size() != rows * m1) throw ValueError("dataset: imaging block size mismatch");
    if (x_gen.size() != rows * m2) throw ValueError("dataset: genetic block size mismatch");
    if (y.size() != rows) throw ValueError("dataset: label count mismatch");
    if (task == Task::classification) {
        for (double v : y) {
            if (v < 0.0 || v != std::floor(v))
                throw ValueError("dataset: class labels must be whole numbers >= 0");
        }
    }
}

MultimodalDataset MultimodalDataset::subset(const std::vector<std::size_t>& rows) const {
    MultimodalDataset out;
    out.m1 = m1;
    out.m2 = m2;
    out.task = task;
    out.ids.reserve(rows.size());
    out.x_mri.reserve(rows.size() * m1);
    out.x_gen.reserve(rows.size() * m2);
    out.y.reserve(rows.size());
    for (std::size_t r : rows) {
        if (r >= n()) throw ValueError("dataset: row index out of range");
        out.ids.push_back(ids[r]);
        out.x_mri.insert(out.x_mri.end(), x_mri.begin() + r * m1, x_mri.begin() + (r + 1) * m1);
        out.x_gen.insert(out.x_gen.end(), x_gen.begin() + r * m2, x_gen.begin() + (r + 1) * m2);
        out.y.push_back(y[r]);
    }
    return out;
}

Tensor MultimodalDataset::mri_batch(const std::vector<std::size_t>& rows) const {
    std::vector<double> data;
    data.reserve(rows.size() * m1);
    for (std::size_t r : rows) {
        if (r >= n()) throw ValueError("dataset: row index out of range");
        data.insert(data.end(), x_mri.begin() + r * m1, x_mri.begin() + (r + 1) * m1);
    }
    return Tensor::from_data({rows.size(), m1}, std::move(data));
}

Tensor MultimodalDataset::gen_batch(const std::vector<std::size_t>& rows) const {
    if (!has_gen()) throw ValueError("dataset: no genetic block");
    std::vector<double> data;
    data.reserve(rows.size() * m2);
    for (std::size_t r : rows) {
        if (r >= n()) throw ValueError("dataset: row index out of range");
        data.insert(data.end(), x_gen.begin() + r * m2, x_gen.begin() + (r + 1) * m2);
    }
    return Tensor::from_data({rows.size(), m2}, std::move(data));
}

std::vector<double> MultimodalDataset::labels_at(const std::vector<std::size_t>& rows) const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) {
        if (r >= n()) throw ValueError("dataset: row index out of range");
        out.push_back(y[r]);
    }
    return out;
}

namespace {

struct FeatureTable {
    std::vector<std::string> ids;
    std::size_t m1 = 0, m2 = 0;
    std::vector<double> values;  // n * (m1 + m2), imaging block then genetic
};

FeatureTable read_features(const std::string& path) {
    std::ifstream in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    line = strip_cr(line);
    std::vector<std::string> header = split_csv_line(line);
    if (header.empty() || header[0] != "id")
        throw ParseError(path + ": first header column must be 'id'");

    FeatureTable table;
    bool in_gen = false;
    for (std::size_t c = 1; c < header.size(); ++c) {
        bool is_mri = header[c].rfind("mri_", 0) == 0;
        bool is_gen = header[c].rfind("gen_", 0) == 0;
        if (!is_mri && !is_gen)
            throw ParseError(path + ": feature columns must be named mri_* or gen_*, got '" +
                             header[c] + "'");
        if (is_gen) in_gen = true;
        if (is_mri && in_gen)
            throw ParseError(path + ": imaging columns must precede genetic columns");
        if (is_mri) ++table.m1;
        else ++table.m2;
    }
    if (table.m1 == 0) throw ParseError(path + ": no imaging feature columns");

    std::unordered_set<std::string> seen;
    std::size_t width = table.m1 + table.m2;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        line = strip_cr(line);
        ++row;
        if (line.empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != width + 1)
            throw ParseError(path + ": row " + std::to_string(row) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(width + 1));
        if (!seen.insert(cells[0]).second)
            throw ParseError(path + ": duplicate id '" + cells[0] + "'");
        table.ids.push_back(cells[0]);
        for (std::size_t c = 1; c < cells.size(); ++c)
            table.values.push_back(parse_cell(cells[c], row, header[c]));
    }
    return table;
}

std::unordered_map<std::string, double> read_labels(const std::string& path) {
    std::ifstream in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    line = strip_cr(line);
    std::vector<std::string> header = split_csv_line(line);
    if (header.size() != 2 || header[0] != "id" || header[1] != "label")
        throw ParseError(path + ": header must be 'id,label'");

    std::unordered_map<std::string, double> out;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        line = strip_cr(line);
        ++row;
        if (line.empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != 2)
            throw ParseError(path + ": row " + std::to_string(row) + " must have 2 cells");
        if (!out.emplace(cells[0], parse_cell(cells[1], row, "label")).second)
            throw ParseError(path + ": duplicate id '" + cells[0] + "'");
    }
    return out;
}

}  // namespace

LoadResult load_dataset(const std::string& features_path, const std::string& labels_path,
                        Task task) {
    FeatureTable table = read_features(features_path);
    std::unordered_map<std::string, double> labels = read_labels(labels_path);

    LoadResult res;
    res.data.m1 = table.m1;
    res.data.m2 = table.m2;
    res.data.task = task;
    std::size_t width = table.m1 + table.m2;
    std::unordered_set<std::string> matched;
    for (std::size_t r = 0; r < table.ids.size(); ++r) {
        auto it = labels.find(table.ids[r]);
        if (it == labels.end()) {
            ++res.dropped;
            continue;
        }
        matched.insert(table.ids[r]);
        res.data.ids.push_back(table.ids[r]);
        const double* rowp = table.values.data() + r * width;
        res.data.x_mri.insert(res.data.x_mri.end(), rowp, rowp + table.m1);
        res.data.x_gen.insert(res.data.x_gen.end(), rowp + table.m1, rowp + width);
        res.data.y.push_back(it->second);
    }
    res.dropped += labels.size() - matched.size();
    res.data.validate();
    return res;
}

void save_features(const MultimodalDataset& ds, const std::string& path) {
    ds.validate();
    std::ofstream out = open_output(path);
    out << "id";
    for (std::size_t c = 0; c < ds.m1; ++c) out << ",mri_" << c;
    for (std::size_t c = 0; c < ds.m2; ++c) out << ",gen_" << c;
    out << "\n";
    for (std::size_t r = 0; r < ds.n(); ++r) {
        out << ds.ids[r];
        for (std::size_t c = 0; c < ds.m1; ++c)
            out << ',' << format_double(ds.x_mri[r * ds.m1 + c]);
        for (std::size_t c = 0; c < ds.m2; ++c)
            out << ',' << format_double(ds.x_gen[r * ds.m2 + c]);
        out << "\n";
    }
    if (!out) throw IoError("write failed: " + path);
}

void save_labels(const MultimodalDataset& ds, const std::string& path) {
    std::ofstream out = open_output(path);
    out << "id,label\n";
    for (std::size_t r = 0; r < ds.n(); ++r)
        out << ds.ids[r] << ',' << format_double(ds.y[r]) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

std::vector<std::size_t> FoldPlan::train_indices(std::size_t f) const {
    if (f >= folds.size()) throw ValueError("fold index out of range");
    std::vector<std::size_t> out;
    for (std::size_t g = 0; g < folds.size(); ++g) {
        if (g == f) continue;
        out.insert(out.end(), folds[g].begin(), folds[g].end());
    }
    std::sort(out.begin(), out.end());
    return out;
}

FoldPlan kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ValueError("kfold: k must be >= 2");
    if (n < k) throw ValueError("kfold: n must be >= k");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = Rng(seed).split("kfold");
    rng.shuffle(idx);

    FoldPlan plan;
    std::size_t base = n / k, rem = n % k, pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        std::size_t len = base + (f < rem ? 1 : 0);
        plan.folds.emplace_back(idx.begin() + pos, idx.begin() + pos + len);
        pos += len;
    }
    return plan;
}

Standardizer Standardizer::fit(const std::vector<double>& x, std::size_t n, std::size_t m) {
    if (n == 0 || x.size() != n * m) throw ValueError("standardizer: bad matrix dimensions");
    Standardizer z;
    z.mean.assign(m, 0.0);
    z.scale.assign(m, 1.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) z.mean[c] += x[r * m + c];
    for (std::size_t c = 0; c < m; ++c) z.mean[c] /= static_cast<double>(n);
    std::vector<double> var(m, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) {
            double d = x[r * m + c] - z.mean[c];
            var[c] += d * d;
        }
    for (std::size_t c = 0; c < m; ++c) {
        double sd = std::sqrt(var[c] / static_cast<double>(n));
        z.scale[c] = sd > 0.0 ? 1.0 / sd : 1.0;
    }
    return z;
}

void Standardizer::apply(std::vector<double>& x, std::size_t n) const {
    std::size_t m = mean.size();
    if (x.size() != n * m) throw ValueError("standardizer: bad matrix dimensions");
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c)
            x[r * m + c] = (x[r * m + c] - mean[c]) * scale[c];
}

}  // namespace imml
