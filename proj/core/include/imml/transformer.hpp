#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "imml/rng.hpp"
#include "imml/tensor.hpp"

namespace imml {

enum class Task { regression, classification };

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

struct BackboneConfig {
    std::size_t n_features = 0;  // m
    std::size_t d = 32;          // embedding width
    std::size_t n_layers = 2;    // L
    int n_heads = 4;
    double dropout = 0.1;
};

// One pre-normalization transformer block: self-attention and a GELU
// feed-forward (hidden width 2d), residual connections on both sublayers.
class TransformerBlock {
public:
    TransformerBlock(std::size_t d, int n_heads, Rng& rng);

    // x: [B, T, d]. Dropout masks are drawn from dropout_rng only when
    // training and dropout > 0; inference is deterministic.
    Tensor forward(const Tensor& x, bool training, double dropout, Rng* dropout_rng) const;

    void append_params(const std::string& prefix, NamedParams& out) const;

private:
    std::size_t d_;
    int n_heads_;
    Tensor ln1_gain_, ln1_bias_, wq_, bq_, wk_, bk_, wv_, bv_, wo_, bo_;
    Tensor ln2_gain_, ln2_bias_, ffn_w1_, ffn_b1_, ffn_w2_, ffn_b2_;
};

// Per-feature affine tokenizer, a learned readout token prepended at
// position 0, and L transformer blocks. The representation is the final
// state of the readout position; no normalization is applied after the last
// block, so with L = 0 the representation is the readout token itself.
class TabularBackbone {
public:
    TabularBackbone(BackboneConfig cfg, Rng& rng);

    // x: [B, m] -> z: [B, d]
    Tensor forward(const Tensor& x, bool training = false, Rng* dropout_rng = nullptr) const;

    const BackboneConfig& config() const { return cfg_; }
    std::vector<Tensor> parameters() const;
    NamedParams named_params(const std::string& prefix) const;

private:
    BackboneConfig cfg_;
    Tensor tok_w_, tok_b_;  // [m, d]
    Tensor readout_;        // [d]
    std::vector<TransformerBlock> blocks_;
};

// Affine map on the concatenation of two modality representations.
class FusionHead {
public:
    FusionHead(std::size_t d1, std::size_t d2, std::size_t n_out, Rng& rng);

    // z1: [B, d1], z2: [B, d2] -> [B, n_out]
    Tensor forward(const Tensor& z1, const Tensor& z2) const;
    // z: [B, d1 + d2]
    Tensor forward_concat(const Tensor& z) const;

    std::size_t in_width() const { return d1_ + d2_; }
    std::size_t out_width() const { return n_out_; }
    std::vector<Tensor> parameters() const { return {w_, b_}; }
    NamedParams named_params(const std::string& prefix) const;

private:
    std::size_t d1_, d2_, n_out_;
    Tensor w_, b_;
};

// Regression: mean squared error of pred [B,1] (or [B]) against targets.
// Classification: mean cross-entropy of pred [B,C] against integer class
// labels stored in targets (validated to be whole numbers in range).
Tensor task_loss(const Tensor& pred, const std::vector<double>& targets, Task task);

// Row-wise argmax of logits [B, C]; ties break to the lowest class index.
std::vector<int> argmax_rows(const Tensor& logits);

// Class labels as checked integers (each must be a whole number in [0, C)).
std::vector<int> to_class_labels(const std::vector<double>& targets, std::size_t n_classes);

}  // namespace imml
