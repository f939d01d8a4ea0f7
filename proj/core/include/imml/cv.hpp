#pragma once

#include <cstddef>
#include <vector>

#include "imml/data.hpp"
#include "imml/metrics.hpp"
#include "imml/trainer.hpp"

namespace imml {

struct FoldOutcome {
    std::size_t fold = 0;
    Metrics metrics;
};

struct CvResult {
    ModelKind kind = ModelKind::m;
    std::vector<FoldOutcome> folds;
    Metrics mean;  // arithmetic mean over folds, field by field
    Metrics sd;    // sample standard deviation over folds (0 when k == 1)
};

// Trains and evaluates the requested model kind over a seeded k-fold plan.
// Imaging features are standardized per fold (fit on the training rows).
// Each fold trains from an independent seed substream; folds may run on up
// to `jobs` threads, and results are always ordered by fold index.
CvResult run_cv(const MultimodalDataset& ds, const TrainConfig& cfg, ModelKind kind,
                std::size_t k, std::size_t jobs = 1);

// All four model kinds over the same fold plan.
std::vector<CvResult> run_grid(const MultimodalDataset& ds, const TrainConfig& cfg,
                               std::size_t k, std::size_t jobs = 1);

}  // namespace imml
