#include "imml/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>

#include "imml/adam.hpp"
#include "imml/errors.hpp"

namespace imml {

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::m: return "m";
        case ModelKind::u: return "u";
        case ModelKind::vanilla: return "vanilla";
        case ModelKind::mlp: return "mlp";
    }
    throw ValueError("unknown model kind");
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "m") return ModelKind::m;
    if (s == "u") return ModelKind::u;
    if (s == "vanilla") return ModelKind::vanilla;
    if (s == "mlp") return ModelKind::mlp;
    throw ValueError("unknown model kind '" + s + "' (expected m, u, vanilla, or mlp)");
}

void TrainConfig::validate() const {
    if (d1 == 0 || d2 == 0) throw ValueError("train: d1 and d2 must be positive");
    if (n_heads <= 0) throw ValueError("train: n_heads must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ValueError("train: dropout must lie in [0, 1)");
    if (d_sph == 0 || d_sph >= d2) throw ValueError("train: d_sph must satisfy 0 < d_sph < d2");
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ValueError("train: eta must be positive");
    distill.validate();
    if (!(task_weight >= 0.0) || !std::isfinite(task_weight))
        throw ValueError("train: task_weight must be finite and >= 0");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValueError("train: lr must be finite and >= 0");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
        throw ValueError("train: weight_decay must be finite and >= 0");
    if (batch_size == 0) throw ValueError("train: batch_size must be positive");
    if (mlp_hidden == 0) throw ValueError("train: mlp_hidden must be positive");
}

namespace {

BackboneConfig backbone_config(std::size_t m, std::size_t d, const TrainConfig& cfg) {
    BackboneConfig b;
    b.n_features = m;
    b.d = d;
    b.n_layers = cfg.n_layers;
    b.n_heads = cfg.n_heads;
    b.dropout = cfg.dropout;
    return b;
}

// Each component draws from its own substream, so adding or removing one
// component never shifts another's initialization.
TabularBackbone make_backbone(BackboneConfig cfg, Rng rng) { return {cfg, rng}; }
FusionHead make_head(std::size_t d1, std::size_t d2, std::size_t n_out, Rng rng) {
    return {d1, d2, n_out, rng};
}
GeneratorHead make_generator(std::size_t d1, std::size_t d2, Rng rng) { return {d1, d2, rng}; }
SphereDiscriminator make_disc(std::size_t d2, std::size_t d_sph, double eta, Rng rng) {
    return {d2, d_sph, eta, rng};
}

Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor::param(shape, rng.uniform_vec(shape_size(shape), -bound, bound));
}

AdamConfig adam_config(const TrainConfig& cfg) {
    AdamConfig a;
    a.learning_rate = cfg.lr;
    a.weight_decay = cfg.weight_decay;
    return a;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   Rng rng, bool min_two) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t pos = 0; pos < n; pos += batch_size) {
        std::size_t len = std::min(batch_size, n - pos);
        batches.emplace_back(order.begin() + pos, order.begin() + pos + len);
    }
    // Batch statistics in the adversarial losses need two samples; fold a
    // trailing singleton into its predecessor.
    if (min_two && batches.size() > 1 && batches.back().size() < 2) {
        batches[batches.size() - 2].push_back(batches.back()[0]);
        batches.pop_back();
    }
    return batches;
}

[[noreturn]] void rethrow_with_context(const NumericError& e, std::size_t epoch,
                                       std::size_t step) {
    throw NumericError("epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                       ": " + e.what());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::size_t output_width(const MultimodalDataset& ds) {
    if (ds.task == Task::regression) return 1;
    std::size_t c = ds.n_classes();
    if (c < 2) throw ValueError("train: classification needs at least 2 classes present");
    return c;
}

void append(std::vector<Tensor>& dst, const std::vector<Tensor>& src) {
    dst.insert(dst.end(), src.begin(), src.end());
}

// Accumulates weighted loss terms, leaving the sum absent when no term is
// active; an absent loss means the corresponding optimizer step is skipped.
void add_term(std::optional<Tensor>& acc, const Tensor& term, double weight) {
    if (weight <= 0.0) return;
    Tensor w = weight == 1.0 ? term : mul_scalar(term, weight);
    acc = acc ? add(*acc, w) : w;
}

}  // namespace

MModel::MModel(std::size_t m1, std::size_t m2, std::size_t n_out, const TrainConfig& cfg,
               const Rng& root)
    : mri(make_backbone(backbone_config(m1, cfg.d1, cfg), root.split("mri_backbone"))),
      gen(make_backbone(backbone_config(m2, cfg.d2, cfg), root.split("gen_backbone"))),
      head(make_head(cfg.d1, cfg.d2, n_out, root.split("head"))) {}

Tensor MModel::forward(const Tensor& x_mri, const Tensor& x_gen, bool training,
                       Rng* mri_dropout, Rng* gen_dropout) const {
    Tensor z1 = mri.forward(x_mri, training, mri_dropout);
    Tensor z2 = gen.forward(x_gen, training, gen_dropout);
    return head.forward(z1, z2);
}

std::vector<Tensor> MModel::parameters() const {
    std::vector<Tensor> out = mri.parameters();
    append(out, gen.parameters());
    append(out, head.parameters());
    return out;
}

NamedParams MModel::named_params() const {
    NamedParams out = mri.named_params("mri.");
    NamedParams g = gen.named_params("gen.");
    NamedParams h = head.named_params("head.");
    out.insert(out.end(), g.begin(), g.end());
    out.insert(out.end(), h.begin(), h.end());
    return out;
}

UModel::UModel(std::size_t m1, std::size_t n_out, const TrainConfig& cfg, const Rng& root)
    : mri(make_backbone(backbone_config(m1, cfg.d1, cfg), root.split("mri_backbone"))),
      generator(make_generator(cfg.d1, cfg.d2, root.split("generator"))),
      head(make_head(cfg.d1, cfg.d2, n_out, root.split("head"))),
      disc(make_disc(cfg.d2, cfg.d_sph, cfg.eta, root.split("disc"))) {}

Tensor UModel::forward(const Tensor& x_mri, bool training, Rng* dropout_rng) const {
    Tensor z = mri.forward(x_mri, training, dropout_rng);
    Tensor h = generator.forward(z);
    return head.forward(z, h);
}

std::vector<Tensor> UModel::parameters() const {
    std::vector<Tensor> out = mri.parameters();
    append(out, generator.parameters());
    append(out, head.parameters());
    append(out, disc.parameters());
    return out;
}

NamedParams UModel::named_params() const {
    NamedParams out = mri.named_params("mri.");
    NamedParams g = generator.named_params("generator.");
    NamedParams h = head.named_params("head.");
    NamedParams d = disc.named_params("disc.");
    out.insert(out.end(), g.begin(), g.end());
    out.insert(out.end(), h.begin(), h.end());
    out.insert(out.end(), d.begin(), d.end());
    return out;
}

VanillaModel::VanillaModel(std::size_t m1, std::size_t n_out, const TrainConfig& cfg,
                           const Rng& root)
    : mri(make_backbone(backbone_config(m1, cfg.d1, cfg), root.split("mri_backbone"))),
      head(make_head(cfg.d1, 0, n_out, root.split("head"))) {}

Tensor VanillaModel::forward(const Tensor& x_mri, bool training, Rng* dropout_rng) const {
    return head.forward_concat(mri.forward(x_mri, training, dropout_rng));
}

std::vector<Tensor> VanillaModel::parameters() const {
    std::vector<Tensor> out = mri.parameters();
    append(out, head.parameters());
    return out;
}

NamedParams VanillaModel::named_params() const {
    NamedParams out = mri.named_params("mri.");
    NamedParams h = head.named_params("head.");
    out.insert(out.end(), h.begin(), h.end());
    return out;
}

MlpModel::MlpModel(std::size_t m1, std::size_t n_out, const TrainConfig& cfg, const Rng& root)
    : head(make_head(cfg.d1, 0, n_out, root.split("head"))) {
    Rng rng = root.split("mlp_backbone");
    w1 = fan_in_uniform({m1, cfg.mlp_hidden}, m1, rng);
    b1 = fan_in_uniform({cfg.mlp_hidden}, m1, rng);
    w2 = fan_in_uniform({cfg.mlp_hidden, cfg.d1}, cfg.mlp_hidden, rng);
    b2 = fan_in_uniform({cfg.d1}, cfg.mlp_hidden, rng);
}

Tensor MlpModel::forward(const Tensor& x_mri) const {
    Tensor h = gelu(linear(x_mri, w1, b1));
    return head.forward_concat(linear(h, w2, b2));
}

std::vector<Tensor> MlpModel::parameters() const {
    std::vector<Tensor> out = {w1, b1, w2, b2};
    append(out, head.parameters());
    return out;
}

NamedParams MlpModel::named_params() const {
    NamedParams out = {{"backbone.w1", w1}, {"backbone.b1", b1},
                       {"backbone.w2", w2}, {"backbone.b2", b2}};
    NamedParams h = head.named_params("head.");
    out.insert(out.end(), h.begin(), h.end());
    return out;
}

void copy_parameters(const std::vector<Tensor>& dst, const std::vector<Tensor>& src) {
    if (dst.size() != src.size())
        throw ShapeError("copy_parameters: parameter lists differ in length");
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (dst[i].shape() != src[i].shape())
            throw ShapeError("copy_parameters: parameter " + std::to_string(i) +
                             " shapes differ");
        Tensor d = dst[i];
        d.values_mut() = src[i].values();
    }
}

std::pair<MModel, TrainReport> pretrain_m(const MultimodalDataset& train,
                                          const TrainConfig& cfg) {
    cfg.validate();
    train.validate();
    if (train.n() == 0) throw ValueError("pretrain: empty training set");
    if (!train.has_gen()) throw ValueError("pretrain: teacher training needs the genetic block");

    auto t0 = std::chrono::steady_clock::now();
    Rng root(cfg.seed);
    MModel model(train.m1, train.m2, output_width(train), cfg, root.split("m_init"));
    std::vector<Tensor> params = model.parameters();
    Adam opt(adam_config(cfg));

    Rng shuffle_root = root.split("m_shuffle");
    Rng dropout_root = root.split("m_dropout");

    TrainReport report;
    report.seed = cfg.seed;
    for (std::size_t epoch = 0; epoch < cfg.epochs_m; ++epoch) {
        auto batches = make_batches(train.n(), cfg.batch_size, shuffle_root.split(epoch), false);
        double task_sum = 0.0;
        for (std::size_t step = 0; step < batches.size(); ++step) {
            const auto& rows = batches[step];
            try {
                Rng batch_rng = dropout_root.split(epoch).split(step);
                Rng drop_mri = batch_rng.split("mri");
                Rng drop_gen = batch_rng.split("gen");
                Tensor pred = model.forward(train.mri_batch(rows), train.gen_batch(rows), true,
                                            &drop_mri, &drop_gen);
                Tensor loss = task_loss(pred, train.labels_at(rows), cfg.task);
                opt.step(params, backward(loss));
                task_sum += loss.item();
            } catch (const NumericError& e) {
                rethrow_with_context(e, epoch, step);
            }
        }
        EpochRecord rec;
        rec.task = task_sum / static_cast<double>(batches.size());
        report.epochs.push_back(rec);
    }
    report.wall_time_s = seconds_since(t0);
    return {std::move(model), std::move(report)};
}

namespace {

Tensor slice_rows(const std::vector<double>& values, std::size_t width,
                  const std::vector<std::size_t>& rows) {
    std::vector<double> out;
    out.reserve(rows.size() * width);
    for (std::size_t r : rows)
        out.insert(out.end(), values.begin() + r * width, values.begin() + (r + 1) * width);
    return Tensor::from_data({rows.size(), width}, std::move(out));
}

Tensor imitation_loss(const Tensor& student, const Tensor& teacher, const TrainConfig& cfg) {
    if (cfg.task == Task::classification)
        return kl_imitation(student, teacher, cfg.distill.temperature);
    return regression_imitation(student, teacher);
}

}  // namespace

std::pair<UModel, TrainReport> train_u(const MultimodalDataset& train, MModel& teacher,
                                       const TrainConfig& cfg) {
    cfg.validate();
    train.validate();
    if (train.n() < 2) throw ValueError("student training needs at least 2 rows");
    if (!train.has_gen()) throw ValueError("student training needs the genetic block");
    if (teacher.mri.config().n_features != train.m1 ||
        teacher.gen.config().n_features != train.m2)
        throw ShapeError("teacher feature arity does not match the training set");
    std::size_t n_out = output_width(train);
    if (teacher.head.out_width() != n_out)
        throw ShapeError("teacher output width does not match the training labels");
    if (teacher.mri.config().d != cfg.d1 || teacher.gen.config().d != cfg.d2)
        throw ShapeError("teacher representation widths do not match the config");

    auto t0 = std::chrono::steady_clock::now();
    Rng root(cfg.seed);
    UModel model(train.m1, n_out, cfg, root.split("u_init"));
    // The student starts from the teacher: same imaging backbone weights and
    // the same fusion head to read the (imitated) fused representation.
    copy_parameters(model.mri.parameters(), teacher.mri.parameters());
    copy_parameters(model.head.parameters(), teacher.head.parameters());

    // The teacher's genetic backbone never changes here, so its
    // representations are computed once, in inference mode.
    std::vector<std::size_t> all_rows(train.n());
    std::iota(all_rows.begin(), all_rows.end(), 0);
    std::vector<double> z_real_all = teacher.gen.forward(train.gen_batch(all_rows)).values();

    std::vector<Tensor> disc_params = model.disc.parameters();
    std::vector<Tensor> gen_params = model.generator.parameters();
    std::vector<Tensor> bh_params = model.mri.parameters();
    append(bh_params, model.head.parameters());
    Adam opt_d(adam_config(cfg)), opt_g(adam_config(cfg)), opt_bh(adam_config(cfg));

    const double alpha = cfg.distill.alpha, beta = cfg.distill.beta;
    const bool generator_active = cfg.task_weight > 0.0 || beta > 0.0 || alpha > 0.0;
    const bool backbone_active = cfg.task_weight > 0.0 || beta > 0.0;

    Rng shuffle_root = root.split("u_shuffle");
    Rng dropout_root = root.split("u_dropout");

    TrainReport report;
    report.seed = cfg.seed;
    for (std::size_t epoch = 0; epoch < cfg.epochs_u; ++epoch) {
        auto batches = make_batches(train.n(), cfg.batch_size, shuffle_root.split(epoch), true);
        EpochRecord rec;
        for (std::size_t step = 0; step < batches.size(); ++step) {
            const auto& rows = batches[step];
            try {
                Rng batch_rng = dropout_root.split(epoch).split(step);
                Tensor x_mri = train.mri_batch(rows);
                std::vector<double> y = train.labels_at(rows);
                Tensor z_real = slice_rows(z_real_all, cfg.d2, rows);

                // Teacher predictions track its EMA-updated imaging backbone,
                // so they are recomputed every batch (inference mode).
                Tensor pred_teacher =
                    teacher.head.forward(teacher.mri.forward(x_mri), z_real).detach();

                // (1) Discriminator: adversarial + sphere shape penalties over
                // the union of real and fake embeddings.
                Rng drop_d = batch_rng.split("backbone_d");
                Tensor z_u = model.mri.forward(x_mri, true, &drop_d);
                Tensor h_fake_const = model.generator.forward(z_u).detach();
                Tensor emb_real = model.disc.embed(z_real);
                Tensor emb_fake = model.disc.embed(h_fake_const);
                Tensor d_adv = d_loss(model.disc.score_embedded(emb_real).scores,
                                      model.disc.score_embedded(emb_fake).scores, cfg.eta);
                Tensor emb_all = concat_first(emb_real, emb_fake);
                Tensor l_center = center_loss(emb_all, model.disc.center());
                Tensor l_distance = distance_loss(emb_all, model.disc.center());
                Tensor disc_total = add(add(d_adv, l_center), l_distance);
                opt_d.step(disc_params, backward(disc_total));
                model.disc.renormalize_axis();
                rec.d_loss += d_adv.item();
                rec.center += l_center.item();
                rec.distance += l_distance.item();

                // (2) Generator head: task + imitation + adversarial, scored
                // against the just-updated discriminator. The backbone input
                // is detached, so only the generator receives updates.
                if (generator_active) {
                    Tensor z_const = z_u.detach();
                    Tensor h_fake = model.generator.forward(z_const);
                    Tensor pred = model.head.forward(z_const, h_fake);
                    std::optional<Tensor> loss;
                    add_term(loss, task_loss(pred, y, cfg.task), cfg.task_weight);
                    add_term(loss, imitation_loss(pred, pred_teacher, cfg), beta);
                    if (alpha > 0.0) {
                        Tensor g_adv =
                            g_loss(model.disc.score(z_real).scores,
                                   model.disc.score(h_fake).scores, cfg.eta);
                        add_term(loss, g_adv, alpha);
                        rec.g_loss += g_adv.item();
                    }
                    opt_g.step(gen_params, backward(*loss));
                }

                // (3) Backbone and fusion head: task + imitation only; the
                // adversarial term never reaches these parameters.
                if (backbone_active) {
                    Rng drop_b = batch_rng.split("backbone_update");
                    Tensor z = model.mri.forward(x_mri, true, &drop_b);
                    Tensor h = model.generator.forward(z);
                    Tensor pred = model.head.forward(z, h);
                    Tensor l_task = task_loss(pred, y, cfg.task);
                    Tensor l_im = imitation_loss(pred, pred_teacher, cfg);
                    std::optional<Tensor> loss;
                    add_term(loss, l_task, cfg.task_weight);
                    add_term(loss, l_im, beta);
                    opt_bh.step(bh_params, backward(*loss));
                    rec.task += l_task.item();
                    rec.imitation += l_im.item();
                }

                // (4) Teacher imaging backbone drifts toward the student.
                ema_update(teacher.mri.parameters(), model.mri.parameters(),
                           cfg.distill.gamma);
            } catch (const NumericError& e) {
                rethrow_with_context(e, epoch, step);
            }
        }
        double nb = static_cast<double>(batches.size());
        rec.task /= nb;
        rec.imitation /= nb;
        rec.d_loss /= nb;
        rec.g_loss /= nb;
        rec.center /= nb;
        rec.distance /= nb;
        report.epochs.push_back(rec);
    }
    report.wall_time_s = seconds_since(t0);
    return {std::move(model), std::move(report)};
}

namespace {

template <typename Model, typename Forward>
TrainReport supervised_loop(const MultimodalDataset& train, const TrainConfig& cfg,
                            std::size_t epochs, std::vector<Tensor> params, Forward forward) {
    Adam opt(adam_config(cfg));
    Rng root(cfg.seed);
    Rng shuffle_root = root.split("s_shuffle");
    Rng dropout_root = root.split("s_dropout");
    auto t0 = std::chrono::steady_clock::now();

    TrainReport report;
    report.seed = cfg.seed;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        auto batches = make_batches(train.n(), cfg.batch_size, shuffle_root.split(epoch), false);
        double task_sum = 0.0;
        for (std::size_t step = 0; step < batches.size(); ++step) {
            const auto& rows = batches[step];
            try {
                Rng drop = dropout_root.split(epoch).split(step);
                Tensor pred = forward(train.mri_batch(rows), &drop);
                Tensor loss = task_loss(pred, train.labels_at(rows), cfg.task);
                opt.step(params, backward(loss));
                task_sum += loss.item();
            } catch (const NumericError& e) {
                rethrow_with_context(e, epoch, step);
            }
        }
        EpochRecord rec;
        rec.task = task_sum / static_cast<double>(batches.size());
        report.epochs.push_back(rec);
    }
    report.wall_time_s = seconds_since(t0);
    return report;
}

}  // namespace

std::pair<VanillaModel, TrainReport> train_vanilla(const MultimodalDataset& train,
                                                   const TrainConfig& cfg) {
    cfg.validate();
    train.validate();
    if (train.n() == 0) throw ValueError("train: empty training set");
    VanillaModel model(train.m1, output_width(train), cfg, Rng(cfg.seed).split("vanilla_init"));
    TrainReport report = supervised_loop<VanillaModel>(
        train, cfg, cfg.epochs_u, model.parameters(),
        [&](const Tensor& x, Rng* drop) { return model.forward(x, true, drop); });
    return {std::move(model), std::move(report)};
}

std::pair<MlpModel, TrainReport> train_mlp(const MultimodalDataset& train,
                                           const TrainConfig& cfg) {
    cfg.validate();
    train.validate();
    if (train.n() == 0) throw ValueError("train: empty training set");
    MlpModel model(train.m1, output_width(train), cfg, Rng(cfg.seed).split("mlp_init"));
    TrainReport report = supervised_loop<MlpModel>(
        train, cfg, cfg.epochs_u, model.parameters(),
        [&](const Tensor& x, Rng*) { return model.forward(x); });
    return {std::move(model), std::move(report)};
}

Tensor predict(const MModel& model, const MultimodalDataset& ds,
               const std::vector<std::size_t>& rows) {
    return model.forward(ds.mri_batch(rows), ds.gen_batch(rows));
}

Tensor predict(const UModel& model, const MultimodalDataset& ds,
               const std::vector<std::size_t>& rows) {
    return model.forward(ds.mri_batch(rows));
}

Tensor predict(const VanillaModel& model, const MultimodalDataset& ds,
               const std::vector<std::size_t>& rows) {
    return model.forward(ds.mri_batch(rows));
}

Tensor predict(const MlpModel& model, const MultimodalDataset& ds,
               const std::vector<std::size_t>& rows) {
    return model.forward(ds.mri_batch(rows));
}

namespace {

template <typename Model>
Metrics evaluate_impl(const Model& model, const MultimodalDataset& ds, std::size_t n_out) {
    ds.validate();
    if (ds.n() == 0) throw ValueError("evaluate: empty dataset");
    std::vector<std::size_t> rows(ds.n());
    std::iota(rows.begin(), rows.end(), 0);
    return metrics_from_outputs(predict(model, ds, rows), ds.y, ds.task, n_out);
}

}  // namespace

Metrics evaluate(const MModel& model, const MultimodalDataset& ds) {
    return evaluate_impl(model, ds, model.head.out_width());
}
Metrics evaluate(const UModel& model, const MultimodalDataset& ds) {
    return evaluate_impl(model, ds, model.head.out_width());
}
Metrics evaluate(const VanillaModel& model, const MultimodalDataset& ds) {
    return evaluate_impl(model, ds, model.head.out_width());
}
Metrics evaluate(const MlpModel& model, const MultimodalDataset& ds) {
    return evaluate_impl(model, ds, model.head.out_width());
}

}  // namespace imml
