#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "imml/rng.hpp"
#include "imml/tensor.hpp"
#include "imml/transformer.hpp"

namespace imml {

// Guard for sigma denominators and the projection radius.
inline constexpr double kSphereEps = 1e-8;

// (h - c) / ||h - c||, rowwise when h is [B, d]. Offsets within kSphereEps
// of c are a degenerate projection.
Tensor project_to_sphere(const Tensor& h_embed, const Tensor& c);

// Mean of row norms over a [B, k] batch (the displayed definition of the
// batch "sigma", which names a standard deviation but is a mean of norms).
Tensor batch_sigma(const Tensor& rows);

struct ScoredBatch {
    Tensor projections;     // [B, d_sph], unit rows
    Tensor scores;          // [B]
    Tensor sigma_parallel;  // scalar
    Tensor sigma_perp;      // scalar
};

// Discriminator over genetic-representation samples: a two-layer embedding
// map into R^{d_sph} followed by projection onto a trainable sphere (center
// c, unit main axis v). Scores decompose each projected point against the
// axis: score = ||perp|| / max(sigma_perp, eps) - ||par|| / max(sigma_par, eps).
class SphereDiscriminator {
public:
    // Requires d_sph < d2. Hidden width is 2*d2.
    SphereDiscriminator(std::size_t d2, std::size_t d_sph, double eta, Rng& rng);

    // h: [B, d2] -> raw embeddings [B, d_sph] (pre-projection).
    Tensor embed(const Tensor& h) const;

    // Full scoring pipelines. Batch statistics need B >= 2.
    ScoredBatch score(const Tensor& h) const;
    ScoredBatch score_embedded(const Tensor& emb) const;
    ScoredBatch score_projected(const Tensor& projections) const;

    double eta() const { return eta_; }
    const Tensor& center() const { return c_; }
    const Tensor& axis() const { return v_; }
    std::size_t in_width() const { return d2_; }
    std::size_t sphere_dim() const { return d_sph_; }

    // Rescales v to unit length in place; call after every optimizer step.
    void renormalize_axis();

    std::vector<Tensor> parameters() const { return {w1_, b1_, w2_, b2_, c_, v_}; }
    NamedParams named_params(const std::string& prefix) const;

private:
    std::size_t d2_, d_sph_;
    double eta_;
    Tensor w1_, b1_, w2_, b2_;
    Tensor c_, v_;
};

// Maps MRI representations [B, d1] to fake genetic representations [B, d2]
// through one hidden layer of width 2*d2. Deterministic (no noise input).
class GeneratorHead {
public:
    GeneratorHead(std::size_t d1, std::size_t d2, Rng& rng);

    Tensor forward(const Tensor& z_mri) const;

    std::size_t in_width() const { return d1_; }
    std::size_t out_width() const { return d2_; }
    std::vector<Tensor> parameters() const { return {w1_, b1_, w2_, b2_}; }
    NamedParams named_params(const std::string& prefix) const;

private:
    std::size_t d1_, d2_;
    Tensor w1_, b1_, w2_, b2_;
};

// Relativistic averaged adversarial losses over score batches [B].
// d_loss = -mean_real log sig(eta*(D_r - mean(D_f))) - mean_fake log sig(eta*(mean(D_r) - D_f)).
// g_loss swaps the real/fake roles. Logs are clamped at 1e-12.
Tensor d_loss(const Tensor& real_scores, const Tensor& fake_scores, double eta);
Tensor g_loss(const Tensor& real_scores, const Tensor& fake_scores, double eta);

// Mean huber distance of raw embeddings to the center (sphere compactness).
Tensor center_loss(const Tensor& h_embed_batch, const Tensor& c);
// Mean huber deviation of each center distance from the batch sigma of the
// centered embeddings (radius uniformity).
Tensor distance_loss(const Tensor& h_embed_batch, const Tensor& c);

}  // namespace imml
