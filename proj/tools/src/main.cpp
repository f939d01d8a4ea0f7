#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "imml/checkpoint.hpp"
#include "imml/cv.hpp"
#include "imml/data.hpp"
#include "imml/errors.hpp"
#include "imml/geno_qc.hpp"
#include "imml/synth.hpp"
#include "imml/trainer.hpp"

using json = nlohmann::ordered_json;

namespace {

// Every tunable in one flat bag; a JSON config file fills it first, then
// command-line flags override field by field. The echoed form of this bag
// is sufficient to reproduce a run exactly.
struct CliConfig {
    std::string task = "regression";
    std::string model = "u";

    std::size_t n = 1000, m1 = 40, m2 = 60, latent_dim = 8;
    double shared_signal = 0.8, noise_sd = 0.5;
    std::size_t classes = 3;

    std::size_t d1 = 32, d2 = 32, layers = 2;
    int heads = 4;
    double dropout = 0.1;
    std::size_t d_sph = 16;
    double eta = 1.0;
    double alpha = 0.1, beta = 1.0, gamma = 0.999, temperature = 2.0, task_weight = 1.0;
    double lr = 1e-3, weight_decay = 1e-5;
    std::size_t batch = 32, epochs_m = 100, epochs_u = 100, mlp_hidden = 64;

    std::size_t k = 5, jobs = 1;
    bool grid = false;

    std::uint64_t seed = 1;

    double missing_thr = 0.95, maf_thr = 0.05, hwe_thr = 1e-6;

    std::string features, labels, teacher, checkpoint, report, metrics, results, table;
    std::string input, output;
};

json config_to_json(const CliConfig& c, const std::string& command) {
    json j;
    j["command"] = command;
    j["task"] = c.task;
    j["model"] = c.model;
    j["n"] = c.n;
    j["m1"] = c.m1;
    j["m2"] = c.m2;
    j["latent_dim"] = c.latent_dim;
    j["shared_signal"] = c.shared_signal;
    j["noise_sd"] = c.noise_sd;
    j["classes"] = c.classes;
    j["d1"] = c.d1;
    j["d2"] = c.d2;
    j["layers"] = c.layers;
    j["heads"] = c.heads;
    j["dropout"] = c.dropout;
    j["d_sph"] = c.d_sph;
    j["eta"] = c.eta;
    j["alpha"] = c.alpha;
    j["beta"] = c.beta;
    j["gamma"] = c.gamma;
    j["temperature"] = c.temperature;
    j["task_weight"] = c.task_weight;
    j["lr"] = c.lr;
    j["weight_decay"] = c.weight_decay;
    j["batch"] = c.batch;
    j["epochs_m"] = c.epochs_m;
    j["epochs_u"] = c.epochs_u;
    j["mlp_hidden"] = c.mlp_hidden;
    j["k"] = c.k;
    j["jobs"] = c.jobs;
    j["grid"] = c.grid;
    j["seed"] = c.seed;
    j["missing_thr"] = c.missing_thr;
    j["maf_thr"] = c.maf_thr;
    j["hwe_thr"] = c.hwe_thr;
    j["features"] = c.features;
    j["labels"] = c.labels;
    j["teacher"] = c.teacher;
    j["checkpoint"] = c.checkpoint;
    j["report"] = c.report;
    j["metrics"] = c.metrics;
    j["results"] = c.results;
    j["table"] = c.table;
    j["input"] = c.input;
    j["output"] = c.output;
    return j;
}

struct FileConfig {
    CliConfig values;
    bool has_seed = false;
};

FileConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw imml::IoError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw imml::ParseError(path + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw imml::ParseError(path + ": config must be a JSON object");

    FileConfig fc;
    CliConfig& c = fc.values;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "command") continue;  // echoed metadata, not a setting
            else if (key == "task") c.task = value.get<std::string>();
            else if (key == "model") c.model = value.get<std::string>();
            else if (key == "n") c.n = value.get<std::size_t>();
            else if (key == "m1") c.m1 = value.get<std::size_t>();
            else if (key == "m2") c.m2 = value.get<std::size_t>();
            else if (key == "latent_dim") c.latent_dim = value.get<std::size_t>();
            else if (key == "shared_signal") c.shared_signal = value.get<double>();
            else if (key == "noise_sd") c.noise_sd = value.get<double>();
            else if (key == "classes") c.classes = value.get<std::size_t>();
            else if (key == "d1") c.d1 = value.get<std::size_t>();
            else if (key == "d2") c.d2 = value.get<std::size_t>();
            else if (key == "layers") c.layers = value.get<std::size_t>();
            else if (key == "heads") c.heads = value.get<int>();
            else if (key == "dropout") c.dropout = value.get<double>();
            else if (key == "d_sph") c.d_sph = value.get<std::size_t>();
            else if (key == "eta") c.eta = value.get<double>();
            else if (key == "alpha") c.alpha = value.get<double>();
            else if (key == "beta") c.beta = value.get<double>();
            else if (key == "gamma") c.gamma = value.get<double>();
            else if (key == "temperature") c.temperature = value.get<double>();
            else if (key == "task_weight") c.task_weight = value.get<double>();
            else if (key == "lr") c.lr = value.get<double>();
            else if (key == "weight_decay") c.weight_decay = value.get<double>();
            else if (key == "batch") c.batch = value.get<std::size_t>();
            else if (key == "epochs_m") c.epochs_m = value.get<std::size_t>();
            else if (key == "epochs_u") c.epochs_u = value.get<std::size_t>();
            else if (key == "mlp_hidden") c.mlp_hidden = value.get<std::size_t>();
            else if (key == "k") c.k = value.get<std::size_t>();
            else if (key == "jobs") c.jobs = value.get<std::size_t>();
            else if (key == "grid") c.grid = value.get<bool>();
            else if (key == "seed") { c.seed = value.get<std::uint64_t>(); fc.has_seed = true; }
            else if (key == "missing_thr") c.missing_thr = value.get<double>();
            else if (key == "maf_thr") c.maf_thr = value.get<double>();
            else if (key == "hwe_thr") c.hwe_thr = value.get<double>();
            else if (key == "features") c.features = value.get<std::string>();
            else if (key == "labels") c.labels = value.get<std::string>();
            else if (key == "teacher") c.teacher = value.get<std::string>();
            else if (key == "checkpoint") c.checkpoint = value.get<std::string>();
            else if (key == "report") c.report = value.get<std::string>();
            else if (key == "metrics") c.metrics = value.get<std::string>();
            else if (key == "results") c.results = value.get<std::string>();
            else if (key == "table") c.table = value.get<std::string>();
            else if (key == "input") c.input = value.get<std::string>();
            else if (key == "output") c.output = value.get<std::string>();
            else throw imml::ParseError(path + ": unknown config key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw imml::ParseError(path + ": bad value type: " + e.what());
    }
    return fc;
}

imml::Task parse_task(const std::string& s) {
    if (s == "regression") return imml::Task::regression;
    if (s == "classification") return imml::Task::classification;
    throw imml::ValueError("task must be 'regression' or 'classification', got '" + s + "'");
}

imml::TrainConfig train_config(const CliConfig& c) {
    imml::TrainConfig t;
    t.task = parse_task(c.task);
    t.d1 = c.d1;
    t.d2 = c.d2;
    t.n_layers = c.layers;
    t.n_heads = c.heads;
    t.dropout = c.dropout;
    t.d_sph = c.d_sph;
    t.eta = c.eta;
    t.distill.alpha = c.alpha;
    t.distill.beta = c.beta;
    t.distill.gamma = c.gamma;
    t.distill.temperature = c.temperature;
    t.task_weight = c.task_weight;
    t.lr = c.lr;
    t.weight_decay = c.weight_decay;
    t.batch_size = c.batch;
    t.epochs_m = c.epochs_m;
    t.epochs_u = c.epochs_u;
    t.mlp_hidden = c.mlp_hidden;
    t.seed = c.seed;
    t.validate();
    return t;
}

void require_path(const std::string& value, const std::string& flag) {
    if (value.empty()) throw imml::ValueError("missing required option " + flag);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw imml::IoError("cannot open for writing: " + path);
    out << text;
    if (!out) throw imml::IoError("write failed: " + path);
}

void echo_config(const CliConfig& c, const std::string& command) {
    std::cout << config_to_json(c, command).dump(2) << "\n";
}

json metrics_to_json(const imml::Metrics& m) {
    json j;
    if (m.task == imml::Task::regression) {
        j["rmse"] = m.rmse;
        j["r2"] = m.r2;
        j["r2_defined"] = m.r2_defined;
    } else {
        j["accuracy"] = m.macro.accuracy;
        j["precision"] = m.macro.precision;
        j["recall"] = m.macro.recall;
        j["f1"] = m.macro.f1;
        j["zero_division"] = m.macro.zero_division;
    }
    return j;
}

json report_to_json(const imml::TrainReport& r, const CliConfig& c,
                    const std::string& command) {
    json j;
    j["config"] = config_to_json(c, command);
    j["seed"] = r.seed;
    j["wall_time_s"] = r.wall_time_s;
    json epochs = json::array();
    for (const imml::EpochRecord& e : r.epochs) {
        epochs.push_back({{"task", e.task},
                          {"imitation", e.imitation},
                          {"d_loss", e.d_loss},
                          {"g_loss", e.g_loss},
                          {"center", e.center},
                          {"distance", e.distance}});
    }
    j["epochs"] = epochs;
    return j;
}

int cmd_qc(const CliConfig& c) {
    require_path(c.input, "--input");
    require_path(c.output, "--output");
    echo_config(c, "qc");

    imml::GenotypeMatrix g = imml::read_genotypes(c.input);
    imml::QcThresholds thr{c.missing_thr, c.maf_thr, c.hwe_thr};
    auto [survivors, report] = imml::qc_pipeline(g, thr);
    imml::write_genotypes(survivors, c.output);

    if (!c.report.empty()) {
        json j;
        j["input_snps"] = report.input_snps;
        j["removed"] = {{"missingness", report.removed_missingness},
                        {"maf", report.removed_maf},
                        {"hwe", report.removed_hwe}};
        j["imputed_cells"] = report.imputed_cells;
        j["surviving"] = report.surviving;
        j["thresholds"] = {{"missing", thr.missing}, {"maf", thr.maf}, {"hwe", thr.hwe}};
        j["dropped"] = {{"missingness", report.dropped_missingness},
                        {"maf", report.dropped_maf},
                        {"hwe", report.dropped_hwe}};
        write_text(c.report, j.dump(2) + "\n");
    }
    std::cerr << "snps in: " << report.input_snps
              << ", removed by missingness: " << report.removed_missingness
              << ", imputed cells: " << report.imputed_cells
              << ", removed by maf: " << report.removed_maf
              << ", removed by hwe: " << report.removed_hwe
              << ", surviving: " << report.surviving << "\n";
    return 0;
}

int cmd_synth(const CliConfig& c) {
    require_path(c.features, "--features");
    require_path(c.labels, "--labels");
    echo_config(c, "synth");

    imml::SynthConfig s;
    s.n = c.n;
    s.m1 = c.m1;
    s.m2 = c.m2;
    s.latent_dim = c.latent_dim;
    s.shared_signal = c.shared_signal;
    s.noise_sd = c.noise_sd;
    s.seed = c.seed;
    s.task = parse_task(c.task);
    s.n_classes = c.classes;

    imml::MultimodalDataset ds = imml::synth_generate(s);
    imml::save_features(ds, c.features);
    imml::save_labels(ds, c.labels);
    std::cerr << "wrote " << ds.n() << " rows (" << ds.m1 << " imaging + " << ds.m2
              << " genetic features)\n";
    return 0;
}

int cmd_train(const CliConfig& c) {
    require_path(c.features, "--features");
    require_path(c.labels, "--labels");
    require_path(c.checkpoint, "--checkpoint");
    echo_config(c, "train");

    imml::Task task = parse_task(c.task);
    imml::ModelKind kind = imml::model_kind_from_string(c.model);
    imml::TrainConfig cfg = train_config(c);
    imml::LoadResult loaded = imml::load_dataset(c.features, c.labels, task);
    if (loaded.dropped > 0)
        std::cerr << "warning: " << loaded.dropped << " rows dropped by the id join\n";
    const imml::MultimodalDataset& train = loaded.data;

    imml::TrainReport report;
    switch (kind) {
        case imml::ModelKind::m: {
            auto [model, rep] = imml::pretrain_m(train, cfg);
            imml::save_checkpoint(c.checkpoint, model, task);
            report = std::move(rep);
            break;
        }
        case imml::ModelKind::u: {
            if (c.teacher.empty())
                throw imml::ValueError("training the u model requires --teacher");
            imml::Checkpoint teacher_ck = imml::load_checkpoint(c.teacher);
            if (teacher_ck.kind != imml::ModelKind::m)
                throw imml::ValueError("--teacher must be an m-model checkpoint");
            if (teacher_ck.task != task)
                throw imml::ValueError("teacher task does not match --task");
            imml::MModel& teacher = std::get<imml::MModel>(teacher_ck.model);
            auto [model, rep] = imml::train_u(train, teacher, cfg);
            imml::save_checkpoint(c.checkpoint, model, task);
            report = std::move(rep);
            break;
        }
        case imml::ModelKind::vanilla: {
            auto [model, rep] = imml::train_vanilla(train, cfg);
            imml::save_checkpoint(c.checkpoint, model, task);
            report = std::move(rep);
            break;
        }
        case imml::ModelKind::mlp: {
            auto [model, rep] = imml::train_mlp(train, cfg);
            imml::save_checkpoint(c.checkpoint, model, task);
            report = std::move(rep);
            break;
        }
    }
    if (!c.report.empty()) write_text(c.report, report_to_json(report, c, "train").dump(2) + "\n");
    std::cerr << "trained " << c.model << " model, " << report.epochs.size() << " epochs, "
              << report.wall_time_s << " s\n";
    return 0;
}

int cmd_eval(const CliConfig& c, bool task_flag_given) {
    require_path(c.checkpoint, "--checkpoint");
    require_path(c.features, "--features");
    require_path(c.labels, "--labels");
    echo_config(c, "eval");

    imml::Checkpoint ck = imml::load_checkpoint(c.checkpoint);
    if (task_flag_given && parse_task(c.task) != ck.task)
        throw imml::ValueError("task mismatch: checkpoint is " +
                               std::string(ck.task == imml::Task::regression
                                               ? "regression"
                                               : "classification"));
    imml::LoadResult loaded = imml::load_dataset(c.features, c.labels, ck.task);
    if (loaded.dropped > 0)
        std::cerr << "warning: " << loaded.dropped << " rows dropped by the id join\n";

    imml::Metrics metrics = std::visit(
        [&](const auto& model) -> imml::Metrics {
            if constexpr (std::is_same_v<std::decay_t<decltype(model)>, std::monostate>)
                throw imml::ParseError("empty checkpoint");
            else
                return imml::evaluate(model, loaded.data);
        },
        ck.model);

    json j = metrics_to_json(metrics);
    if (!c.metrics.empty()) write_text(c.metrics, j.dump(2) + "\n");
    std::cerr << "metrics: " << j.dump() << "\n";
    return 0;
}

json cv_result_to_json(const imml::CvResult& r) {
    json folds = json::array();
    for (const imml::FoldOutcome& f : r.folds) {
        json jf = metrics_to_json(f.metrics);
        jf["fold"] = f.fold;
        folds.push_back(jf);
    }
    return {{"kind", imml::to_string(r.kind)},
            {"folds", folds},
            {"mean", metrics_to_json(r.mean)},
            {"sd", metrics_to_json(r.sd)}};
}

std::string cv_table(const std::vector<imml::CvResult>& results, imml::Task task) {
    std::string out;
    if (task == imml::Task::regression)
        out = "kind,rmse_mean,rmse_sd,r2_mean,r2_sd\n";
    else
        out = "kind,accuracy_mean,accuracy_sd,precision_mean,precision_sd,recall_mean,"
              "recall_sd,f1_mean,f1_sd\n";
    for (const imml::CvResult& r : results) {
        out += imml::to_string(r.kind);
        auto cell = [&out](double v) { out += "," + imml::format_double(v); };
        if (task == imml::Task::regression) {
            cell(r.mean.rmse);
            cell(r.sd.rmse);
            cell(r.mean.r2);
            cell(r.sd.r2);
        } else {
            cell(r.mean.macro.accuracy);
            cell(r.sd.macro.accuracy);
            cell(r.mean.macro.precision);
            cell(r.sd.macro.precision);
            cell(r.mean.macro.recall);
            cell(r.sd.macro.recall);
            cell(r.mean.macro.f1);
            cell(r.sd.macro.f1);
        }
        out += "\n";
    }
    return out;
}

int cmd_cv(const CliConfig& c) {
    require_path(c.features, "--features");
    require_path(c.labels, "--labels");
    echo_config(c, "cv");

    imml::Task task = parse_task(c.task);
    imml::TrainConfig cfg = train_config(c);
    imml::LoadResult loaded = imml::load_dataset(c.features, c.labels, task);
    if (loaded.dropped > 0)
        std::cerr << "warning: " << loaded.dropped << " rows dropped by the id join\n";

    std::vector<imml::CvResult> results;
    if (c.grid) {
        results = imml::run_grid(loaded.data, cfg, c.k, c.jobs);
    } else {
        results.push_back(
            imml::run_cv(loaded.data, cfg, imml::model_kind_from_string(c.model), c.k, c.jobs));
    }

    if (!c.results.empty()) {
        json j;
        j["config"] = config_to_json(c, "cv");
        json arr = json::array();
        for (const imml::CvResult& r : results) arr.push_back(cv_result_to_json(r));
        j["results"] = arr;
        write_text(c.results, j.dump(2) + "\n");
    }
    if (!c.table.empty()) write_text(c.table, cv_table(results, task));
    for (const imml::CvResult& r : results)
        std::cerr << imml::to_string(r.kind) << ": " << metrics_to_json(r.mean).dump() << "\n";
    return 0;
}

// Adds the hyperparameter and path options shared by train/eval/cv.
void add_model_options(CLI::App* sub, CliConfig& c) {
    sub->add_option("--task", c.task, "regression or classification");
    sub->add_option("--d1", c.d1, "imaging representation width");
    sub->add_option("--d2", c.d2, "genetic representation width");
    sub->add_option("--layers", c.layers, "transformer blocks per backbone");
    sub->add_option("--heads", c.heads, "attention heads");
    sub->add_option("--dropout", c.dropout, "dropout rate");
    sub->add_option("--d-sph", c.d_sph, "discriminator sphere dimension");
    sub->add_option("--eta", c.eta, "adversarial score scale");
    sub->add_option("--alpha", c.alpha, "adversarial loss weight");
    sub->add_option("--beta", c.beta, "imitation loss weight");
    sub->add_option("--gamma", c.gamma, "teacher EMA retention rate");
    sub->add_option("--temperature", c.temperature, "distillation temperature");
    sub->add_option("--task-weight", c.task_weight, "supervised loss weight");
    sub->add_option("--lr", c.lr, "learning rate");
    sub->add_option("--weight-decay", c.weight_decay, "decoupled weight decay");
    sub->add_option("--batch", c.batch, "batch size");
    sub->add_option("--epochs-m", c.epochs_m, "teacher training epochs");
    sub->add_option("--epochs-u", c.epochs_u, "student training epochs");
    sub->add_option("--mlp-hidden", c.mlp_hidden, "mlp baseline hidden width");
}

}  // namespace

int main(int argc, char** argv) {
    CliConfig cfg;
    try {
        // Pass 1: a config file, when present, replaces the built-in defaults.
        bool file_has_seed = false;
        std::string config_path;
        for (int i = 1; i < argc; ++i) {
            std::string a = argv[i];
            if (a == "--config" && i + 1 < argc) config_path = argv[i + 1];
            else if (a.rfind("--config=", 0) == 0) config_path = a.substr(9);
        }
        if (!config_path.empty()) {
            FileConfig fc = load_config_file(config_path);
            cfg = fc.values;
            file_has_seed = fc.has_seed;
        }

        CLI::App app{"incomplete multimodal learning toolkit"};
        app.require_subcommand(1);
        std::string config_dummy;
        app.add_option("--config", config_dummy, "JSON config file (flags override it)");

        CLI::App* qc = app.add_subcommand("qc", "genotype quality control");
        qc->add_option("--config", config_dummy, "JSON config file (flags override it)");
        qc->add_option("--input", cfg.input, "genotype matrix to filter");
        qc->add_option("--output", cfg.output, "filtered genotype matrix");
        qc->add_option("--report", cfg.report, "QC report JSON");
        qc->add_option("--missing-thr", cfg.missing_thr, "max missing fraction");
        qc->add_option("--maf-thr", cfg.maf_thr, "min minor allele frequency");
        qc->add_option("--hwe-thr", cfg.hwe_thr, "min equilibrium p-value");

        CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
        synth->add_option("--config", config_dummy, "JSON config file (flags override it)");
        synth->add_option("--features", cfg.features, "output features file");
        synth->add_option("--labels", cfg.labels, "output labels file");
        synth->add_option("--task", cfg.task, "regression or classification");
        synth->add_option("--n", cfg.n, "rows");
        synth->add_option("--m1", cfg.m1, "imaging feature count");
        synth->add_option("--m2", cfg.m2, "genetic feature count");
        synth->add_option("--latent-dim", cfg.latent_dim, "latent width");
        synth->add_option("--shared-signal", cfg.shared_signal, "cross-modal signal share");
        synth->add_option("--noise-sd", cfg.noise_sd, "noise level");
        synth->add_option("--classes", cfg.classes, "class count (classification)");

        CLI::App* train = app.add_subcommand("train", "train a model");
        train->add_option("--config", config_dummy, "JSON config file (flags override it)");
        train->add_option("--model", cfg.model, "m, u, vanilla, or mlp");
        train->add_option("--features", cfg.features, "training features file");
        train->add_option("--labels", cfg.labels, "training labels file");
        train->add_option("--teacher", cfg.teacher, "m-model checkpoint (u training)");
        train->add_option("--checkpoint", cfg.checkpoint, "output checkpoint");
        train->add_option("--report", cfg.report, "training report JSON");
        add_model_options(train, cfg);

        CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
        eval_cmd->add_option("--config", config_dummy, "JSON config file (flags override it)");
        eval_cmd->add_option("--checkpoint", cfg.checkpoint, "model checkpoint");
        eval_cmd->add_option("--features", cfg.features, "evaluation features file");
        eval_cmd->add_option("--labels", cfg.labels, "evaluation labels file");
        eval_cmd->add_option("--metrics", cfg.metrics, "metrics output JSON");
        CLI::Option* eval_task = eval_cmd->add_option("--task", cfg.task,
                                                      "expected checkpoint task");

        CLI::App* cv = app.add_subcommand("cv", "k-fold cross-validation");
        cv->add_option("--config", config_dummy, "JSON config file (flags override it)");
        cv->add_option("--model", cfg.model, "m, u, vanilla, or mlp");
        cv->add_flag("--grid", cfg.grid, "run all four model kinds");
        cv->add_option("--features", cfg.features, "features file");
        cv->add_option("--labels", cfg.labels, "labels file");
        cv->add_option("--k", cfg.k, "fold count");
        cv->add_option("--jobs", cfg.jobs, "parallel fold workers");
        cv->add_option("--results", cfg.results, "results JSON");
        cv->add_option("--table", cfg.table, "flat results table (comma separated)");
        add_model_options(cv, cfg);

        // Seed precedence: flag, then config file, then environment, then 1.
        std::vector<CLI::Option*> seed_opts;
        for (CLI::App* sub : {qc, synth, train, eval_cmd, cv})
            seed_opts.push_back(sub->add_option("--seed", cfg.seed, "random seed"));

        try {
            app.parse(argc, argv);
        } catch (const CLI::CallForHelp& e) {
            return app.exit(e);
        } catch (const CLI::CallForAllHelp& e) {
            return app.exit(e);
        } catch (const CLI::ParseError& e) {
            app.exit(e);
            return 2;
        }

        bool seed_flag_given = false;
        for (CLI::Option* o : seed_opts) seed_flag_given = seed_flag_given || o->count() > 0;
        if (!seed_flag_given && !file_has_seed) {
            if (const char* env = std::getenv("IMML_SEED")) {
                try {
                    cfg.seed = std::stoull(env);
                } catch (const std::exception&) {
                    throw imml::ValueError("IMML_SEED must be an unsigned integer");
                }
            }
        }

        if (qc->parsed()) return cmd_qc(cfg);
        if (synth->parsed()) return cmd_synth(cfg);
        if (train->parsed()) return cmd_train(cfg);
        if (eval_cmd->parsed()) return cmd_eval(cfg, eval_task->count() > 0);
        if (cv->parsed()) return cmd_cv(cfg);
        return 2;
    } catch (const imml::NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const imml::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 1;
    } catch (const imml::ValueError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
