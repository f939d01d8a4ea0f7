#include "imml/cv.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "imml/errors.hpp"
#include "imml/rng.hpp"

namespace imml {

namespace {

Metrics run_fold(const MultimodalDataset& ds, const FoldPlan& plan, std::size_t f,
                 const TrainConfig& cfg, ModelKind kind) {
    MultimodalDataset train = ds.subset(plan.train_indices(f));
    MultimodalDataset test = ds.subset(plan.folds[f]);

    Standardizer z = Standardizer::fit(train.x_mri, train.n(), train.m1);
    z.apply(train.x_mri, train.n());
    z.apply(test.x_mri, test.n());

    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = Rng(cfg.seed).split("fold").split(f).seed();

    switch (kind) {
        case ModelKind::m: {
            auto [model, report] = pretrain_m(train, fold_cfg);
            return evaluate(model, test);
        }
        case ModelKind::u: {
            auto [teacher, m_report] = pretrain_m(train, fold_cfg);
            auto [model, report] = train_u(train, teacher, fold_cfg);
            return evaluate(model, test);
        }
        case ModelKind::vanilla: {
            auto [model, report] = train_vanilla(train, fold_cfg);
            return evaluate(model, test);
        }
        case ModelKind::mlp: {
            auto [model, report] = train_mlp(train, fold_cfg);
            return evaluate(model, test);
        }
    }
    throw ValueError("unknown model kind");
}

void aggregate(CvResult& result) {
    std::size_t k = result.folds.size();
    double n = static_cast<double>(k);
    Metrics& mean = result.mean;
    Metrics& sd = result.sd;
    mean = Metrics{};
    sd = Metrics{};
    mean.task = sd.task = result.folds.empty() ? Task::regression
                                               : result.folds[0].metrics.task;
    mean.r2_defined = true;
    for (const FoldOutcome& f : result.folds) {
        mean.rmse += f.metrics.rmse;
        mean.r2 += f.metrics.r2;
        mean.r2_defined = mean.r2_defined && f.metrics.r2_defined;
        mean.macro.accuracy += f.metrics.macro.accuracy;
        mean.macro.precision += f.metrics.macro.precision;
        mean.macro.recall += f.metrics.macro.recall;
        mean.macro.f1 += f.metrics.macro.f1;
        mean.macro.zero_division = mean.macro.zero_division || f.metrics.macro.zero_division;
    }
    mean.rmse /= n;
    mean.r2 /= n;
    mean.macro.accuracy /= n;
    mean.macro.precision /= n;
    mean.macro.recall /= n;
    mean.macro.f1 /= n;

    if (k > 1) {
        double d = n - 1.0;
        for (const FoldOutcome& f : result.folds) {
            auto acc = [](double& slot, double x, double mu) { slot += (x - mu) * (x - mu); };
            acc(sd.rmse, f.metrics.rmse, mean.rmse);
            acc(sd.r2, f.metrics.r2, mean.r2);
            acc(sd.macro.accuracy, f.metrics.macro.accuracy, mean.macro.accuracy);
            acc(sd.macro.precision, f.metrics.macro.precision, mean.macro.precision);
            acc(sd.macro.recall, f.metrics.macro.recall, mean.macro.recall);
            acc(sd.macro.f1, f.metrics.macro.f1, mean.macro.f1);
        }
        sd.rmse = std::sqrt(sd.rmse / d);
        sd.r2 = std::sqrt(sd.r2 / d);
        sd.macro.accuracy = std::sqrt(sd.macro.accuracy / d);
        sd.macro.precision = std::sqrt(sd.macro.precision / d);
        sd.macro.recall = std::sqrt(sd.macro.recall / d);
        sd.macro.f1 = std::sqrt(sd.macro.f1 / d);
    }
    sd.r2_defined = mean.r2_defined;
}

}  // namespace

CvResult run_cv(const MultimodalDataset& ds, const TrainConfig& cfg, ModelKind kind,
                std::size_t k, std::size_t jobs) {
    cfg.validate();
    ds.validate();
    if (jobs == 0) throw ValueError("cv: jobs must be positive");
    FoldPlan plan = kfold_split(ds.n(), k, cfg.seed);

    CvResult result;
    result.kind = kind;
    result.folds.resize(k);

    std::size_t workers = std::min(jobs, k);
    if (workers <= 1) {
        for (std::size_t f = 0; f < k; ++f)
            result.folds[f] = FoldOutcome{f, run_fold(ds, plan, f, cfg, kind)};
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        auto worker = [&]() {
            for (;;) {
                std::size_t f = next.fetch_add(1);
                if (f >= k) return;
                try {
                    result.folds[f] = FoldOutcome{f, run_fold(ds, plan, f, cfg, kind)};
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    return;
                }
            }
        };
        std::vector<std::thread> threads;
        threads.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
        for (std::thread& t : threads) t.join();
        if (failure) std::rethrow_exception(failure);
    }

    aggregate(result);
    return result;
}

std::vector<CvResult> run_grid(const MultimodalDataset& ds, const TrainConfig& cfg,
                               std::size_t k, std::size_t jobs) {
    std::vector<CvResult> out;
    for (ModelKind kind : {ModelKind::vanilla, ModelKind::mlp, ModelKind::m, ModelKind::u})
        out.push_back(run_cv(ds, cfg, kind, k, jobs));
    return out;
}

}  // namespace imml
