#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "imml/tensor.hpp"
#include "imml/transformer.hpp"

namespace imml {

// Per-subject rows with an imaging block and an optional genetic block,
// both stored row-major. Labels are real scores (regression) or class
// indices stored as whole doubles (classification).
struct MultimodalDataset {
    std::vector<std::string> ids;
    std::size_t m1 = 0;          // imaging feature count
    std::size_t m2 = 0;          // genetic feature count; 0 when absent
    std::vector<double> x_mri;   // n * m1
    std::vector<double> x_gen;   // n * m2
    std::vector<double> y;
    Task task = Task::regression;

    std::size_t n() const { return ids.size(); }
    bool has_gen() const { return m2 > 0; }
    std::size_t n_classes() const;  // classification: max label + 1

    MultimodalDataset subset(const std::vector<std::size_t>& rows) const;

    // Batch views as constant tensors, rows in the given order.
    Tensor mri_batch(const std::vector<std::size_t>& rows) const;
    Tensor gen_batch(const std::vector<std::size_t>& rows) const;
    std::vector<double> labels_at(const std::vector<std::size_t>& rows) const;

    void validate() const;  // throws ValueError on inconsistent blocks
};

struct LoadResult {
    MultimodalDataset data;
    std::size_t dropped = 0;  // rows lost to the feature/label join
};

// Features file: header "id,mri_<i>...,gen_<j>..." (genetic block optional).
// Labels file: header "id,label". Rows join on id; feature rows without a
// label and label rows without features are dropped and counted.
LoadResult load_dataset(const std::string& features_path, const std::string& labels_path,
                        Task task);

void save_features(const MultimodalDataset& ds, const std::string& path);
void save_labels(const MultimodalDataset& ds, const std::string& path);

// Numbers are written with enough digits to round-trip exactly.
std::string format_double(double v);

struct FoldPlan {
    std::vector<std::vector<std::size_t>> folds;

    // All indices except those in fold f, in ascending order.
    std::vector<std::size_t> train_indices(std::size_t f) const;
};

// Seeded shuffle then contiguous partition; fold sizes differ by at most 1.
FoldPlan kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

// Per-column affine normalization fitted on training rows only. Columns
// with zero variance pass through unscaled.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;

    static Standardizer fit(const std::vector<double>& x, std::size_t n, std::size_t m);
    void apply(std::vector<double>& x, std::size_t n) const;
};

}  // namespace imml
