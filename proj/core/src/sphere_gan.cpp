#include "imml/sphere_gan.hpp"

#include <cmath>

#include "imml/errors.hpp"

namespace imml {

namespace {

Tensor init_uniform(Shape shape, double fan_in, Rng& rng) {
    double bound = 1.0 / std::sqrt(fan_in);
    return Tensor::param(shape, rng.uniform_vec(shape_size(shape), -bound, bound));
}

void require_rows(const Tensor& t, const char* what) {
    if (!t.defined() || t.ndim() != 2 || t.dim(0) == 0)
        throw ValueError(std::string(what) + ": expected a nonempty [B,k] batch");
}

}  // namespace

Tensor project_to_sphere(const Tensor& h_embed, const Tensor& c) {
    Tensor diff = sub(h_embed, c);
    if (diff.ndim() == 1) {
        Tensor norm = sqrt(sum(square(diff)));
        if (norm.item() <= kSphereEps)
            throw NumericError("project_to_sphere: degenerate projection, sample at the center");
        return div(diff, norm);
    }
    if (diff.ndim() != 2) throw ShapeError("project_to_sphere: expected [d] or [B,d]");
    Tensor norms = row_norms(diff);
    for (double n : norms.values())
        if (n <= kSphereEps)
            throw NumericError("project_to_sphere: degenerate projection, sample at the center");
    return mul_rows(diff, reciprocal(norms));
}

Tensor batch_sigma(const Tensor& rows) {
    require_rows(rows, "batch_sigma");
    return mean(row_norms(rows));
}

SphereDiscriminator::SphereDiscriminator(std::size_t d2, std::size_t d_sph, double eta, Rng& rng)
    : d2_(d2), d_sph_(d_sph), eta_(eta) {
    if (d2 == 0 || d_sph == 0) throw ValueError("discriminator: widths must be positive");
    if (d_sph >= d2)
        throw ValueError("discriminator: sphere dimension " + std::to_string(d_sph) +
                         " must be smaller than the representation width " + std::to_string(d2));
    std::size_t hidden = 2 * d2;
    w1_ = init_uniform({d2, hidden}, static_cast<double>(d2), rng);
    b1_ = init_uniform({hidden}, static_cast<double>(d2), rng);
    w2_ = init_uniform({hidden, d_sph}, static_cast<double>(hidden), rng);
    b2_ = init_uniform({d_sph}, static_cast<double>(hidden), rng);
    c_ = Tensor::zeros({d_sph}, true);
    std::vector<double> axis = rng.normal_vec(d_sph);
    double norm = 0.0;
    for (double x : axis) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : axis) x /= norm;
    v_ = Tensor::param({d_sph}, std::move(axis));
}

Tensor SphereDiscriminator::embed(const Tensor& h) const {
    if (h.ndim() != 2 || h.dim(1) != d2_)
        throw ShapeError("discriminator: expected [B," + std::to_string(d2_) + "], got " +
                         shape_str(h.shape()));
    return linear(gelu(linear(h, w1_, b1_)), w2_, b2_);
}

ScoredBatch SphereDiscriminator::score(const Tensor& h) const { return score_embedded(embed(h)); }

ScoredBatch SphereDiscriminator::score_embedded(const Tensor& emb) const {
    return score_projected(project_to_sphere(emb, c_));
}

ScoredBatch SphereDiscriminator::score_projected(const Tensor& projections) const {
    require_rows(projections, "score_projected");
    if (projections.dim(1) != d_sph_)
        throw ShapeError("score_projected: expected [B," + std::to_string(d_sph_) + "]");
    std::size_t B = projections.dim(0);
    if (B < 2) throw ValueError("score_projected: batch statistics need at least 2 samples");

    // Unit axis kept in-graph so adversarial gradients reach v.
    Tensor vhat = div(v_, sqrt(sum(square(v_))));
    Tensor par = sum_last(mul(projections, vhat));  // [B], signed coefficients
    Tensor par_norms = abs(par);                    // ||proj_v p_i|| for unit vhat
    Tensor vrows = add(Tensor::zeros({B, d_sph_}), vhat);
    Tensor perp = sub(projections, mul_rows(vrows, par));
    Tensor perp_norms = row_norms(perp);

    ScoredBatch out;
    out.projections = projections;
    out.sigma_parallel = mean(par_norms);
    out.sigma_perp = mean(perp_norms);
    out.scores = sub(div(perp_norms, clamp_min(out.sigma_perp, kSphereEps)),
                     div(par_norms, clamp_min(out.sigma_parallel, kSphereEps)));
    return out;
}

void SphereDiscriminator::renormalize_axis() {
    std::vector<double>& v = v_.values_mut();
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < kSphereEps) throw NumericError("renormalize_axis: axis collapsed to zero");
    for (double& x : v) x /= norm;
}

NamedParams SphereDiscriminator::named_params(const std::string& prefix) const {
    return {{prefix + "w1", w1_}, {prefix + "b1", b1_}, {prefix + "w2", w2_},
            {prefix + "b2", b2_}, {prefix + "center", c_}, {prefix + "axis", v_}};
}

GeneratorHead::GeneratorHead(std::size_t d1, std::size_t d2, Rng& rng) : d1_(d1), d2_(d2) {
    if (d1 == 0 || d2 == 0) throw ValueError("generator: widths must be positive");
    std::size_t hidden = 2 * d2;
    w1_ = init_uniform({d1, hidden}, static_cast<double>(d1), rng);
    b1_ = init_uniform({hidden}, static_cast<double>(d1), rng);
    w2_ = init_uniform({hidden, d2}, static_cast<double>(hidden), rng);
    b2_ = init_uniform({d2}, static_cast<double>(hidden), rng);
}

Tensor GeneratorHead::forward(const Tensor& z_mri) const {
    if (z_mri.ndim() != 2 || z_mri.dim(1) != d1_)
        throw ShapeError("generator: expected [B," + std::to_string(d1_) + "], got " +
                         shape_str(z_mri.shape()));
    return linear(gelu(linear(z_mri, w1_, b1_)), w2_, b2_);
}

NamedParams GeneratorHead::named_params(const std::string& prefix) const {
    return {{prefix + "w1", w1_}, {prefix + "b1", b1_}, {prefix + "w2", w2_}, {prefix + "b2", b2_}};
}

namespace {

Tensor relativistic_loss(const Tensor& first, const Tensor& second, double eta) {
    if (!first.defined() || !second.defined() || first.size() == 0 || second.size() == 0)
        throw ValueError("adversarial loss: score batches must be nonempty");
    // -mean log sig(eta*(first_i - mean(second))) - mean log sig(eta*(mean(first) - second_j))
    Tensor t1 = sigmoid(mul_scalar(sub(first, mean(second)), eta));
    Tensor t2 = sigmoid(mul_scalar(neg(sub(second, mean(first))), eta));
    Tensor l1 = neg(mean(log(clamp_min(t1, 1e-12))));
    Tensor l2 = neg(mean(log(clamp_min(t2, 1e-12))));
    return add(l1, l2);
}

}  // namespace

Tensor d_loss(const Tensor& real_scores, const Tensor& fake_scores, double eta) {
    return relativistic_loss(real_scores, fake_scores, eta);
}

Tensor g_loss(const Tensor& real_scores, const Tensor& fake_scores, double eta) {
    // Role swap of d_loss: the generator wins when fakes out-score reals.
    return d_loss(fake_scores, real_scores, eta);
}

Tensor center_loss(const Tensor& h_embed_batch, const Tensor& c) {
    require_rows(h_embed_batch, "center_loss");
    return mean(huber(row_norms(sub(h_embed_batch, c))));
}

Tensor distance_loss(const Tensor& h_embed_batch, const Tensor& c) {
    require_rows(h_embed_batch, "distance_loss");
    Tensor centered = sub(h_embed_batch, c);
    Tensor dists = row_norms(centered);
    Tensor sigma = batch_sigma(centered);
    return mean(huber(abs(sub(dists, sigma))));
}

}  // namespace imml
