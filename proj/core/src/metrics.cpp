#include "imml/metrics.hpp"

#include <cmath>
#include <string>

#include "imml/errors.hpp"

namespace imml {

double rmse(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size()) throw ShapeError("rmse: length mismatch");
    if (pred.empty()) throw ValueError("rmse: empty input");
    double ss = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double d = pred[i] - target[i];
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(pred.size()));
}

R2Result r2(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size()) throw ShapeError("r2: length mismatch");
    if (pred.empty()) throw ValueError("r2: empty input");
    double mean = 0.0;
    for (double t : target) mean += t;
    mean /= static_cast<double>(target.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double r = target[i] - pred[i];
        double c = target[i] - mean;
        ss_res += r * r;
        ss_tot += c * c;
    }
    if (ss_tot == 0.0) return {0.0, false};
    return {1.0 - ss_res / ss_tot, true};
}

MacroMetrics macro_classification_metrics(const std::vector<int>& pred,
                                          const std::vector<int>& target,
                                          std::size_t n_classes) {
    if (pred.size() != target.size())
        throw ShapeError("classification metrics: length mismatch");
    if (pred.empty()) throw ValueError("classification metrics: empty input");
    if (n_classes == 0) throw ValueError("classification metrics: n_classes must be > 0");

    std::size_t c = n_classes;
    std::vector<std::size_t> confusion(c * c, 0);  // [target][pred]
    for (std::size_t i = 0; i < pred.size(); ++i) {
        int t = target[i], p = pred[i];
        if (t < 0 || static_cast<std::size_t>(t) >= c || p < 0 ||
            static_cast<std::size_t>(p) >= c) {
            throw ValueError("classification metrics: label out of range at sample " +
                             std::to_string(i));
        }
        ++confusion[static_cast<std::size_t>(t) * c + static_cast<std::size_t>(p)];
    }

    MacroMetrics out;
    for (std::size_t k = 0; k < c; ++k) {
        std::size_t tp = confusion[k * c + k];
        std::size_t target_k = 0, pred_k = 0;
        for (std::size_t j = 0; j < c; ++j) {
            target_k += confusion[k * c + j];
            pred_k += confusion[j * c + k];
        }
        double prec = 0.0, rec = 0.0;
        if (pred_k > 0) prec = static_cast<double>(tp) / static_cast<double>(pred_k);
        else out.zero_division = true;
        if (target_k > 0) rec = static_cast<double>(tp) / static_cast<double>(target_k);
        else out.zero_division = true;
        double f1 = 0.0;
        if (prec + rec > 0.0) f1 = 2.0 * prec * rec / (prec + rec);
        else out.zero_division = true;
        out.precision += prec;
        out.recall += rec;
        out.f1 += f1;
    }
    double denom = static_cast<double>(c);
    out.precision /= denom;
    out.recall /= denom;
    out.f1 /= denom;
    out.accuracy = out.recall;
    return out;
}

Metrics metrics_from_outputs(const Tensor& outputs, const std::vector<double>& targets,
                             Task task, std::size_t n_classes) {
    Metrics m;
    m.task = task;
    if (task == Task::regression) {
        if (outputs.ndim() != 2 || outputs.dim(1) != 1)
            throw ShapeError("metrics: regression outputs must be [B, 1]");
        std::vector<double> pred(outputs.values().begin(), outputs.values().end());
        m.rmse = rmse(pred, targets);
        R2Result r = r2(pred, targets);
        m.r2 = r.value;
        m.r2_defined = r.defined;
    } else {
        std::vector<int> pred = argmax_rows(outputs);
        std::vector<int> truth = to_class_labels(targets, n_classes);
        m.macro = macro_classification_metrics(pred, truth, n_classes);
    }
    return m;
}

}  // namespace imml
