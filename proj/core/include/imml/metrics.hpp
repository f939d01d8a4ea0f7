#pragma once

#include <cstddef>
#include <vector>

#include "imml/transformer.hpp"

namespace imml {

double rmse(const std::vector<double>& pred, const std::vector<double>& target);

struct R2Result {
    double value = 0.0;
    bool defined = true;  // false when the target is constant
};

R2Result r2(const std::vector<double>& pred, const std::vector<double>& target);

struct MacroMetrics {
    double accuracy = 0.0;  // unweighted mean of per-class recall
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool zero_division = false;  // some class had an empty denominator
};

// Per-class precision/recall/F1 from the confusion matrix, averaged
// unweighted; classes absent from both predictions and targets still count.
// Empty denominators contribute 0 and set the zero_division flag.
MacroMetrics macro_classification_metrics(const std::vector<int>& pred,
                                          const std::vector<int>& target,
                                          std::size_t n_classes);

// Task-tagged union of the two metric families.
struct Metrics {
    Task task = Task::regression;
    double rmse = 0.0;
    double r2 = 0.0;
    bool r2_defined = true;
    MacroMetrics macro;
};

// outputs: [B, n_out] model outputs; regression uses column 0, classification
// takes the row argmax against integer labels.
Metrics metrics_from_outputs(const Tensor& outputs, const std::vector<double>& targets,
                             Task task, std::size_t n_classes);

}  // namespace imml
