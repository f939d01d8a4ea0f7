#include "imml/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "imml/errors.hpp"
#include "imml/rng.hpp"

namespace imml {

void SynthConfig::validate() const {
    if (n == 0 || m1 == 0 || m2 == 0 || latent_dim == 0)
        throw ValueError("synth: n, m1, m2, latent_dim must be positive");
    if (!(shared_signal >= 0.0 && shared_signal <= 1.0))
        throw ValueError("synth: shared_signal must lie in [0, 1]");
    if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd))
        throw ValueError("synth: noise_sd must be finite and >= 0");
    if (task == Task::classification && n_classes < 2)
        throw ValueError("synth: classification needs n_classes >= 2");
}

namespace {

// rows x cols mixing matrix with entries N(0, 1/cols) so outputs have
// unit-order variance regardless of latent width.
std::vector<double> mixing_matrix(Rng rng, std::size_t rows, std::size_t cols) {
    std::vector<double> m = rng.normal_vec(rows * cols);
    double s = 1.0 / std::sqrt(static_cast<double>(cols));
    for (double& v : m) v *= s;
    return m;
}

void mix_into(const std::vector<double>& m, std::size_t rows, std::size_t cols,
              const std::vector<double>& v, std::vector<double>& out) {
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += m[r * cols + c] * v[c];
        out.push_back(acc);
    }
}

}  // namespace

MultimodalDataset synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    Rng root(cfg.seed);

    std::size_t ld = cfg.latent_dim;
    std::vector<double> mix_mri = mixing_matrix(root.split("mix_mri"), cfg.m1, ld);
    std::vector<double> mix_gen = mixing_matrix(root.split("mix_gen"), cfg.m2, ld);
    std::size_t n_out = cfg.task == Task::classification ? cfg.n_classes : 1;
    std::vector<double> readout = mixing_matrix(root.split("readout"), n_out, ld);

    Rng latent_rng = root.split("latent");
    Rng private_rng = root.split("latent_private");
    Rng noise_mri = root.split("noise_mri");
    Rng noise_gen = root.split("noise_gen");
    Rng noise_y = root.split("noise_y");

    MultimodalDataset ds;
    ds.m1 = cfg.m1;
    ds.m2 = cfg.m2;
    ds.task = cfg.task;
    ds.ids.reserve(cfg.n);
    ds.x_mri.reserve(cfg.n * cfg.m1);
    ds.x_gen.reserve(cfg.n * cfg.m2);
    ds.y.reserve(cfg.n);

    double s = cfg.shared_signal;
    for (std::size_t i = 0; i < cfg.n; ++i) {
        char buf[24];
        std::snprintf(buf, sizeof(buf), "s%05zu", i);
        ds.ids.emplace_back(buf);

        std::vector<double> u = latent_rng.normal_vec(ld);
        std::vector<double> w = private_rng.normal_vec(ld);
        std::vector<double> blend(ld);
        for (std::size_t j = 0; j < ld; ++j) blend[j] = s * u[j] + (1.0 - s) * w[j];

        mix_into(mix_mri, cfg.m1, ld, u, ds.x_mri);
        for (std::size_t c = 0; c < cfg.m1; ++c)
            ds.x_mri[i * cfg.m1 + c] += cfg.noise_sd * noise_mri.normal();

        mix_into(mix_gen, cfg.m2, ld, blend, ds.x_gen);
        for (std::size_t c = 0; c < cfg.m2; ++c)
            ds.x_gen[i * cfg.m2 + c] += cfg.noise_sd * noise_gen.normal();

        std::vector<double> out;
        out.reserve(n_out);
        mix_into(readout, n_out, ld, u, out);
        for (double& v : out) v += cfg.noise_sd * noise_y.normal();
        if (cfg.task == Task::regression) {
            ds.y.push_back(out[0]);
        } else {
            std::size_t best = 0;
            for (std::size_t k = 1; k < n_out; ++k)
                if (out[k] > out[best]) best = k;
            ds.y.push_back(static_cast<double>(best));
        }
    }
    ds.validate();
    return ds;
}

}  // namespace imml
