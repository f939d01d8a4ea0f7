#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "imml/data.hpp"
#include "imml/distill.hpp"
#include "imml/metrics.hpp"
#include "imml/rng.hpp"
#include "imml/sphere_gan.hpp"
#include "imml/transformer.hpp"

namespace imml {

enum class ModelKind { m, u, vanilla, mlp };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

struct TrainConfig {
    Task task = Task::regression;
    std::size_t d1 = 32;       // imaging representation width
    std::size_t d2 = 32;       // genetic representation width
    std::size_t n_layers = 2;
    int n_heads = 4;
    double dropout = 0.1;
    std::size_t d_sph = 16;    // discriminator sphere dimension, < d2
    double eta = 1.0;          // adversarial score scale
    DistillConfig distill;     // temperature, alpha, beta, gamma
    double task_weight = 1.0;  // 0 ablates the supervised term entirely
    double lr = 1e-3;
    double weight_decay = 1e-5;
    std::size_t batch_size = 32;
    std::size_t epochs_m = 100;
    std::size_t epochs_u = 100;
    std::size_t mlp_hidden = 64;
    std::uint64_t seed = 1;

    void validate() const;
};

struct EpochRecord {
    double task = 0.0;
    double imitation = 0.0;
    double d_loss = 0.0;
    double g_loss = 0.0;
    double center = 0.0;
    double distance = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    double wall_time_s = 0.0;
    std::uint64_t seed = 0;
};

// Multimodal teacher: one backbone per modality, predictions from the fused
// representation.
struct MModel {
    TabularBackbone mri;
    TabularBackbone gen;
    FusionHead head;

    MModel(std::size_t m1, std::size_t m2, std::size_t n_out, const TrainConfig& cfg,
           const Rng& root);

    Tensor forward(const Tensor& x_mri, const Tensor& x_gen, bool training = false,
                   Rng* mri_dropout = nullptr, Rng* gen_dropout = nullptr) const;

    std::vector<Tensor> parameters() const;
    NamedParams named_params() const;
};

// Unimodal student: imaging backbone, a generator head that imitates the
// teacher's genetic representation, and a fusion head over both. The
// discriminator exists only for training.
struct UModel {
    TabularBackbone mri;
    GeneratorHead generator;
    FusionHead head;
    SphereDiscriminator disc;

    UModel(std::size_t m1, std::size_t n_out, const TrainConfig& cfg, const Rng& root);

    // Inference reads the imaging features only.
    Tensor forward(const Tensor& x_mri, bool training = false,
                   Rng* dropout_rng = nullptr) const;

    std::vector<Tensor> parameters() const;  // everything, discriminator included
    NamedParams named_params() const;
};

// Supervised imaging-only transformer, no generator: the plain baseline.
struct VanillaModel {
    TabularBackbone mri;
    FusionHead head;

    VanillaModel(std::size_t m1, std::size_t n_out, const TrainConfig& cfg, const Rng& root);

    Tensor forward(const Tensor& x_mri, bool training = false,
                   Rng* dropout_rng = nullptr) const;

    std::vector<Tensor> parameters() const;
    NamedParams named_params() const;
};

// Two-layer GELU perceptron baseline in place of the transformer backbone.
struct MlpModel {
    Tensor w1, b1, w2, b2;
    FusionHead head;

    MlpModel(std::size_t m1, std::size_t n_out, const TrainConfig& cfg, const Rng& root);

    Tensor forward(const Tensor& x_mri) const;

    std::vector<Tensor> parameters() const;
    NamedParams named_params() const;
};

// Copies parameter values from src to dst (shape-checked, by position).
void copy_parameters(const std::vector<Tensor>& dst, const std::vector<Tensor>& src);

// Supervised teacher pretraining on both modalities.
std::pair<MModel, TrainReport> pretrain_m(const MultimodalDataset& train,
                                          const TrainConfig& cfg);

// Student training. Per batch: (1) discriminator update on the adversarial
// loss plus the sphere center/radius penalties, real = teacher genetic
// representations, fake = generator outputs; (2) generator update on
// task + beta*imitation + alpha*adversarial; (3) backbone and fusion head
// update on task + beta*imitation; (4) EMA drift of the teacher's imaging
// backbone toward the student's. The teacher's genetic backbone stays
// frozen, so its representations are computed once. A phase with no active
// loss terms is skipped outright, leaving its parameters bit-identical.
std::pair<UModel, TrainReport> train_u(const MultimodalDataset& train, MModel& teacher,
                                       const TrainConfig& cfg);

std::pair<VanillaModel, TrainReport> train_vanilla(const MultimodalDataset& train,
                                                   const TrainConfig& cfg);
std::pair<MlpModel, TrainReport> train_mlp(const MultimodalDataset& train,
                                           const TrainConfig& cfg);

// Inference-mode outputs [n_rows, n_out].
Tensor predict(const MModel& model, const MultimodalDataset& ds,
               const std::vector<std::size_t>& rows);
Tensor predict(const UModel& model, const MultimodalDataset& ds,
               const std::vector<std::size_t>& rows);
Tensor predict(const VanillaModel& model, const MultimodalDataset& ds,
               const std::vector<std::size_t>& rows);
Tensor predict(const MlpModel& model, const MultimodalDataset& ds,
               const std::vector<std::size_t>& rows);

Metrics evaluate(const MModel& model, const MultimodalDataset& ds);
Metrics evaluate(const UModel& model, const MultimodalDataset& ds);
Metrics evaluate(const VanillaModel& model, const MultimodalDataset& ds);
Metrics evaluate(const MlpModel& model, const MultimodalDataset& ds);

}  // namespace imml
