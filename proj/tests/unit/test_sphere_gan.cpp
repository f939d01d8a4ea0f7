#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "imml/errors.hpp"
#include "imml/rng.hpp"
#include "imml/sphere_gan.hpp"
#include "imml/tensor.hpp"

using imml::GeneratorHead;
using imml::GradientMap;
using imml::Rng;
using imml::ScoredBatch;
using imml::Shape;
using imml::SphereDiscriminator;
using imml::Tensor;

namespace {

// Finite-difference check against a named leaf parameter of a model: the
// loss closure re-evaluates after in-place perturbations of the parameter.
double fd_param_check(const std::function<Tensor()>& loss, Tensor param, double h = 1e-6) {
    GradientMap g = imml::backward(loss());
    Tensor analytic = g.grad_for(param);
    std::vector<double>& vals = param.values_mut();
    double worst = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) {
        double keep = vals[i];
        vals[i] = keep + h;
        double fp = loss().item();
        vals[i] = keep - h;
        double fm = loss().item();
        vals[i] = keep;
        double numeric = (fp - fm) / (2.0 * h);
        double an = analytic.at(i);
        worst = std::max(worst, std::fabs(an - numeric) / std::max(1.0, std::fabs(an)));
    }
    return worst;
}

SphereDiscriminator axis_aligned_disc() {
    Rng rng(7);
    SphereDiscriminator disc(3, 2, 1.0, rng);
    auto named = disc.named_params("");
    named[5].second.values_mut() = {1.0, 0.0};  // axis
    return disc;
}

}  // namespace

TEST_SUITE("sphere_gan") {

TEST_CASE("projection normalizes offsets from the center") {
    Tensor h = Tensor::from_data({2}, {3.0, 4.0});
    Tensor c = Tensor::zeros({2});
    Tensor p = imml::project_to_sphere(h, c);
    CHECK(p.at(0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(p.at(1) == doctest::Approx(0.8).epsilon(1e-12));

    Tensor h2 = Tensor::from_data({2}, {1.0, 1.0});
    Tensor c2 = Tensor::from_data({2}, {1.0, 0.0});
    Tensor p2 = imml::project_to_sphere(h2, c2);
    CHECK(p2.at(0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p2.at(1) == doctest::Approx(1.0).epsilon(1e-12));

    // already-unit offset is returned unchanged
    Tensor u = Tensor::from_data({3}, {0.0, 1.0, 0.0});
    Tensor c3 = Tensor::from_data({3}, {0.5, -0.5, 2.0});
    Tensor h3 = imml::add(c3, u);
    Tensor p3 = imml::project_to_sphere(h3, c3);
    for (int i = 0; i < 3; ++i) CHECK(p3.at(i) == doctest::Approx(u.at(i)).epsilon(1e-12));

    CHECK_THROWS_AS(imml::project_to_sphere(c3, c3), imml::NumericError);
}

TEST_CASE("projections always land on the unit sphere") {
    Rng rng(13);
    Tensor c = Tensor::from_data({4}, rng.normal_vec(4));
    for (int t = 0; t < 50; ++t) {
        Tensor h = Tensor::from_data({6, 4}, rng.normal_vec(24));
        Tensor p = imml::project_to_sphere(h, c);
        Tensor norms = imml::row_norms(p);
        for (double n : norms.values()) CHECK(n == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("batch sigma is the mean of row norms") {
    Tensor rows = Tensor::from_data({2, 2}, {3, 4, 0, 5});
    CHECK(imml::batch_sigma(rows).item() == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(imml::batch_sigma(Tensor::zeros({1, 3})).item() == 0.0);
    Tensor units = Tensor::from_data({3, 2}, {1, 0, 0, 1, -1, 0});
    CHECK(imml::batch_sigma(units).item() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(imml::batch_sigma(Tensor::zeros({3})), imml::ValueError);
}

TEST_CASE("axis decomposition scores match the hand example") {
    SphereDiscriminator disc = axis_aligned_disc();
    Tensor proj = Tensor::from_data({2, 2}, {0.6, 0.8, 0.8, 0.6});
    ScoredBatch sb = disc.score_projected(proj);
    CHECK(sb.sigma_parallel.item() == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(sb.sigma_perp.item() == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(sb.scores.at(0) == doctest::Approx(0.2 / 0.7).epsilon(1e-12));
    CHECK(sb.scores.at(1) == doctest::Approx(-0.2 / 0.7).epsilon(1e-12));
    CHECK_THROWS_AS(disc.score_projected(Tensor::from_data({1, 2}, {1.0, 0.0})),
                    imml::ValueError);
}

TEST_CASE("degenerate parallel component stays finite through the guard") {
    SphereDiscriminator disc = axis_aligned_disc();
    Tensor proj = Tensor::from_data({2, 2}, {0.0, 1.0, 0.0, -1.0});
    ScoredBatch sb = disc.score_projected(proj);
    CHECK(sb.sigma_parallel.item() == 0.0);
    CHECK(std::isfinite(sb.scores.at(0)));
    CHECK(sb.scores.at(0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(sb.scores.at(1) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("scores ignore radial rescaling of embedded offsets") {
    Rng rng(21);
    SphereDiscriminator disc(5, 3, 1.0, rng);
    Tensor emb = Tensor::from_data({4, 3}, rng.normal_vec(12));
    ScoredBatch a = disc.score_embedded(emb);
    // rescale offsets about the center by 3.7
    Tensor c = disc.center();
    Tensor scaled = imml::add(imml::mul_scalar(imml::sub(emb, c), 3.7), c);
    ScoredBatch b = disc.score_embedded(scaled);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(a.scores.at(i) == doctest::Approx(b.scores.at(i)).epsilon(1e-9));
}

TEST_CASE("scored batch satisfies the decomposition identity") {
    Rng rng(33);
    SphereDiscriminator disc(6, 4, 1.0, rng);
    Tensor h = Tensor::from_data({5, 6}, rng.normal_vec(30));
    ScoredBatch sb = disc.score(h);
    // oracle decomposition from the public projections and axis
    std::vector<double> v = disc.axis().values();
    double vn = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3]);
    std::vector<double> par_n(5), perp_n(5);
    for (int i = 0; i < 5; ++i) {
        double dot = 0.0;
        for (int k = 0; k < 4; ++k) dot += sb.projections.at(i * 4 + k) * v[k] / vn;
        double perp2 = 0.0;
        for (int k = 0; k < 4; ++k) {
            double comp = sb.projections.at(i * 4 + k) - dot * v[k] / vn;
            perp2 += comp * comp;
        }
        par_n[i] = std::fabs(dot);
        perp_n[i] = std::sqrt(perp2);
        // unit rows and orthogonal parts reassemble the projection
        CHECK(std::sqrt(perp2 + dot * dot) == doctest::Approx(1.0).epsilon(1e-9));
    }
    double sp = 0, so = 0;
    for (int i = 0; i < 5; ++i) {
        sp += par_n[i] / 5;
        so += perp_n[i] / 5;
    }
    CHECK(sb.sigma_parallel.item() == doctest::Approx(sp).epsilon(1e-12));
    CHECK(sb.sigma_perp.item() == doctest::Approx(so).epsilon(1e-12));
    for (int i = 0; i < 5; ++i) {
        double expect = perp_n[i] / std::max(so, 1e-8) - par_n[i] / std::max(sp, 1e-8);
        CHECK(sb.scores.at(i) == doctest::Approx(expect).epsilon(1e-10));
    }
}

TEST_CASE("relativistic losses at matched scores give 2 ln 2") {
    Tensor r = Tensor::full({4}, 1.7);
    Tensor f = Tensor::full({4}, 1.7);
    double two_ln2 = 2.0 * std::log(2.0);
    CHECK(imml::d_loss(r, f, 1.0).item() == doctest::Approx(two_ln2).epsilon(1e-12));
    CHECK(imml::g_loss(r, f, 1.0).item() == doctest::Approx(two_ln2).epsilon(1e-12));
    // zero eta erases the score information entirely
    Rng rng(3);
    Tensor rr = Tensor::from_data({5}, rng.normal_vec(5));
    Tensor ff = Tensor::from_data({5}, rng.normal_vec(5));
    CHECK(imml::d_loss(rr, ff, 0.0).item() == doctest::Approx(two_ln2).epsilon(1e-12));
}

TEST_CASE("saturated discriminators and winning generators drive losses to zero") {
    Tensor r = Tensor::full({3}, 40.0);
    Tensor f = Tensor::full({3}, -40.0);
    CHECK(imml::d_loss(r, f, 1.0).item() < 1e-12);
    CHECK(imml::g_loss(f, r, 1.0).item() < 1e-12);  // fake outscores real
}

TEST_CASE("generator loss is the role swap of the discriminator loss") {
    Rng rng(9);
    for (int t = 0; t < 20; ++t) {
        Tensor r = Tensor::from_data({6}, rng.normal_vec(6));
        Tensor f = Tensor::from_data({6}, rng.normal_vec(6));
        double eta = rng.uniform(0.1, 3.0);
        CHECK(imml::g_loss(r, f, eta).item() ==
              doctest::Approx(imml::d_loss(f, r, eta).item()).epsilon(1e-15));
    }
}

TEST_CASE("losses are invariant to batch order") {
    Rng rng(15);
    std::vector<double> rv = rng.normal_vec(5);
    std::vector<double> fv = rng.normal_vec(5);
    double base = imml::d_loss(Tensor::from_data({5}, rv), Tensor::from_data({5}, fv), 1.2).item();
    std::vector<double> rp = {rv[3], rv[0], rv[4], rv[1], rv[2]};
    std::vector<double> fp = {fv[1], fv[4], fv[0], fv[2], fv[3]};
    double perm = imml::d_loss(Tensor::from_data({5}, rp), Tensor::from_data({5}, fp), 1.2).item();
    CHECK(base == doctest::Approx(perm).epsilon(1e-14));
}

TEST_CASE("d_loss falls as real scores rise and rises as fake scores rise") {
    Rng rng(25);
    std::vector<double> rv = rng.uniform_vec(4, -1.0, 1.0);
    std::vector<double> fv = rng.uniform_vec(4, -1.0, 1.0);
    auto value = [&](const std::vector<double>& r, const std::vector<double>& f) {
        return imml::d_loss(Tensor::from_data({4}, r), Tensor::from_data({4}, f), 1.0).item();
    };
    double base = value(rv, fv);
    for (int i = 0; i < 4; ++i) {
        std::vector<double> up = rv;
        up[i] += 0.05;
        CHECK(value(up, fv) < base);
        std::vector<double> fup = fv;
        fup[i] += 0.05;
        CHECK(value(rv, fup) > base);
    }
}

TEST_CASE("huber penalty values") {
    Tensor x = Tensor::from_data({3}, {0.5, 1.0, 2.0});
    Tensor h = imml::huber(x);
    CHECK(h.at(0) == doctest::Approx(0.125).epsilon(1e-15));
    CHECK(h.at(1) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(h.at(2) == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("center loss averages huber distances to the center") {
    Tensor c = Tensor::from_data({2}, {1.0, -1.0});
    Tensor at_c = Tensor::from_data({3, 2}, {1, -1, 1, -1, 1, -1});
    CHECK(imml::center_loss(at_c, c).item() == 0.0);
    Tensor one = Tensor::from_data({1, 2}, {3.0, -1.0});  // distance 2
    CHECK(imml::center_loss(one, c).item() == doctest::Approx(1.5).epsilon(1e-12));
    Tensor two = Tensor::from_data({2, 2}, {1.5, -1.0, 3.0, -1.0});  // distances 0.5, 2
    CHECK(imml::center_loss(two, c).item() == doctest::Approx(0.8125).epsilon(1e-12));
}

TEST_CASE("distance loss penalizes spread around the mean radius") {
    Tensor c = Tensor::zeros({2});
    // common radius: zero loss
    Tensor ring = Tensor::from_data({4, 2}, {2, 0, 0, 2, -2, 0, 0, -2});
    CHECK(imml::distance_loss(ring, c).item() == doctest::Approx(0.0).epsilon(1e-15));
    // centered norms {1, 3}: sigma 2, huber(1) each
    Tensor pair = Tensor::from_data({2, 2}, {1, 0, 0, 3});
    CHECK(imml::distance_loss(pair, c).item() == doctest::Approx(0.5).epsilon(1e-12));
    // rotation about the center leaves the loss unchanged
    double a = 0.83;
    auto rot = [&](double x, double y) {
        return std::pair<double, double>{x * std::cos(a) - y * std::sin(a),
                                         x * std::sin(a) + y * std::cos(a)};
    };
    auto [x1, y1] = rot(1, 0);
    auto [x2, y2] = rot(0, 3);
    Tensor rotated = Tensor::from_data({2, 2}, {x1, y1, x2, y2});
    CHECK(imml::distance_loss(rotated, c).item() ==
          doctest::Approx(imml::distance_loss(pair, c).item()).epsilon(1e-12));
}

TEST_CASE("adversarial and sphere losses pass gradient checks") {
    Rng rng(40);
    Tensor fake = Tensor::from_data({4}, rng.uniform_vec(4, -1.5, 1.5));
    auto dl = [&](const Tensor& r) { return imml::d_loss(r, fake, 1.3); };
    CHECK(imml::grad_check(dl, Tensor::from_data({4}, rng.uniform_vec(4, -1.5, 1.5))) < 1e-5);
    auto gl = [&](const Tensor& f) {
        return imml::g_loss(Tensor::from_data({4}, {0.2, -0.4, 0.9, 0.1}), f, 0.8);
    };
    CHECK(imml::grad_check(gl, Tensor::from_data({4}, rng.uniform_vec(4, -1.5, 1.5))) < 1e-5);

    // embeddings kept away from the center and from the huber kink
    Tensor c = Tensor::from_data({3}, {0.1, -0.2, 0.05});
    Tensor emb0 = Tensor::from_data({4, 3}, rng.uniform_vec(12, 1.2, 3.0));
    auto cl = [&](const Tensor& e) { return imml::center_loss(e, c); };
    CHECK(imml::grad_check(cl, emb0) < 1e-5);
    auto dil = [&](const Tensor& e) { return imml::distance_loss(e, c); };
    CHECK(imml::grad_check(dil, emb0) < 1e-5);
    auto clc = [&](const Tensor& cc) { return imml::center_loss(emb0, cc); };
    CHECK(imml::grad_check(clc, c) < 1e-5);
    auto dilc = [&](const Tensor& cc) { return imml::distance_loss(emb0, cc); };
    CHECK(imml::grad_check(dilc, c) < 1e-5);
}

TEST_CASE("full scoring pipeline gradients reach embeddings, center, and axis") {
    Rng rng(55);
    SphereDiscriminator disc(5, 3, 1.1, rng);
    Tensor fake_scores = Tensor::from_data({4}, {0.4, -0.2, 0.1, 0.3});
    Tensor emb = Tensor::from_data({4, 3}, rng.uniform_vec(12, 0.8, 2.4));
    auto loss_of_emb = [&](const Tensor& e) {
        return imml::d_loss(disc.score_embedded(e).scores, fake_scores, disc.eta());
    };
    CHECK(imml::grad_check(loss_of_emb, emb) < 1e-5);

    auto named = disc.named_params("");
    Tensor center = named[4].second;
    Tensor axis = named[5].second;
    auto loss = [&] { return imml::d_loss(disc.score_embedded(emb).scores, fake_scores, 1.1); };
    CHECK(fd_param_check(loss, center) < 1e-5);
    CHECK(fd_param_check(loss, axis) < 1e-5);
    auto gloss = [&] { return imml::g_loss(fake_scores, disc.score_embedded(emb).scores, 1.1); };
    CHECK(fd_param_check(gloss, axis) < 1e-5);
}

TEST_CASE("axis renormalization restores unit length") {
    SphereDiscriminator disc = axis_aligned_disc();
    auto named = disc.named_params("");
    named[5].second.values_mut() = {3.0, 4.0};
    disc.renormalize_axis();
    CHECK(disc.axis().at(0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(disc.axis().at(1) == doctest::Approx(0.8).epsilon(1e-12));
    named[5].second.values_mut() = {0.0, 0.0};
    CHECK_THROWS_AS(disc.renormalize_axis(), imml::NumericError);
}

TEST_CASE("configuration constraints") {
    Rng rng(2);
    CHECK_THROWS_AS(SphereDiscriminator(4, 4, 1.0, rng), imml::ValueError);
    CHECK_THROWS_AS(SphereDiscriminator(4, 6, 1.0, rng), imml::ValueError);
    SphereDiscriminator ok(4, 2, 1.0, rng);
    CHECK(ok.sphere_dim() == 2);
    double n = 0;
    for (double x : ok.axis().values()) n += x * x;
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(ok.embed(Tensor::zeros({2, 5})), imml::ShapeError);
}

TEST_CASE("generator maps MRI representations to the genetic width") {
    Rng rng(61);
    GeneratorHead gen(6, 4, rng);
    Tensor z = Tensor::from_data({3, 6}, rng.normal_vec(18));
    Tensor fake = gen.forward(z);
    CHECK(fake.shape() == Shape{3, 4});
    CHECK(gen.out_width() == 4);
    CHECK_THROWS_AS(gen.forward(Tensor::zeros({3, 5})), imml::ShapeError);
    // gradients flow end to end
    auto f = [&](const Tensor& x) { return imml::mean(imml::square(gen.forward(x))); };
    CHECK(imml::grad_check(f, z) < 1e-5);
}

TEST_CASE("identical seeds build identical adversaries") {
    Rng a(77), b(77);
    SphereDiscriminator d1(5, 3, 1.0, a);
    SphereDiscriminator d2(5, 3, 1.0, b);
    Rng rng(1);
    Tensor h = Tensor::from_data({3, 5}, rng.normal_vec(15));
    CHECK(d1.score(h).scores.values() == d2.score(h).scores.values());
}

}  // TEST_SUITE
