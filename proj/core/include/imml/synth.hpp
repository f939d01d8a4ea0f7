#pragma once

#include <cstdint>

#include "imml/data.hpp"

namespace imml {

// Factor model for desk-scale experiments: both modalities are linear mixes
// of a per-subject latent, the genetic block blends the shared latent with a
// private one at rate shared_signal, and the label depends on the shared
// latent only. shared_signal therefore controls how much label-relevant
// information the genetic modality carries.
struct SynthConfig {
    std::size_t n = 1000;
    std::size_t m1 = 40;
    std::size_t m2 = 60;
    std::size_t latent_dim = 8;
    double shared_signal = 0.8;  // in [0, 1]
    double noise_sd = 0.5;
    std::uint64_t seed = 1;
    Task task = Task::regression;
    std::size_t n_classes = 3;  // classification only

    void validate() const;
};

MultimodalDataset synth_generate(const SynthConfig& cfg);

}  // namespace imml
