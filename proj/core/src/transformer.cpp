#include "imml/transformer.hpp"

#include <cmath>

#include "imml/errors.hpp"

namespace imml {

namespace {

// All affine maps (and the tokenizer/readout vectors) initialize uniformly
// in [-1/sqrt(d), 1/sqrt(d)] with d the embedding width of their backbone.
Tensor init_uniform(Shape shape, double width, Rng& rng) {
    double bound = 1.0 / std::sqrt(width);
    return Tensor::param(shape, rng.uniform_vec(shape_size(shape), -bound, bound));
}

Tensor maybe_dropout(Tensor x, bool training, double p, Rng* rng) {
    if (!training || p <= 0.0) return x;
    if (!rng) throw ValueError("dropout: training forward needs an rng");
    return mul(x, make_dropout_mask(x.shape(), p, *rng));
}

}  // namespace

TransformerBlock::TransformerBlock(std::size_t d, int n_heads, Rng& rng)
    : d_(d), n_heads_(n_heads) {
    if (d == 0) throw ValueError("transformer block: d must be positive");
    if (n_heads <= 0 || d % static_cast<std::size_t>(n_heads) != 0)
        throw ValueError("transformer block: n_heads must divide d");
    double w = static_cast<double>(d);
    ln1_gain_ = Tensor::full({d}, 1.0, true);
    ln1_bias_ = Tensor::zeros({d}, true);
    wq_ = init_uniform({d, d}, w, rng);
    bq_ = init_uniform({d}, w, rng);
    wk_ = init_uniform({d, d}, w, rng);
    bk_ = init_uniform({d}, w, rng);
    wv_ = init_uniform({d, d}, w, rng);
    bv_ = init_uniform({d}, w, rng);
    wo_ = init_uniform({d, d}, w, rng);
    bo_ = init_uniform({d}, w, rng);
    ln2_gain_ = Tensor::full({d}, 1.0, true);
    ln2_bias_ = Tensor::zeros({d}, true);
    ffn_w1_ = init_uniform({d, 2 * d}, w, rng);
    ffn_b1_ = init_uniform({2 * d}, w, rng);
    ffn_w2_ = init_uniform({2 * d, d}, w, rng);
    ffn_b2_ = init_uniform({d}, w, rng);
}

Tensor TransformerBlock::forward(const Tensor& x, bool training, double dropout,
                                 Rng* dropout_rng) const {
    Tensor h = layer_norm(x, ln1_gain_, ln1_bias_);
    Tensor att = attention(linear(h, wq_, bq_), linear(h, wk_, bk_), linear(h, wv_, bv_),
                           n_heads_);
    att = maybe_dropout(linear(att, wo_, bo_), training, dropout, dropout_rng);
    Tensor mid = add(x, att);
    Tensor f = layer_norm(mid, ln2_gain_, ln2_bias_);
    f = linear(gelu(linear(f, ffn_w1_, ffn_b1_)), ffn_w2_, ffn_b2_);
    f = maybe_dropout(f, training, dropout, dropout_rng);
    return add(mid, f);
}

void TransformerBlock::append_params(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".ln1.gain", ln1_gain_);
    out.emplace_back(prefix + ".ln1.bias", ln1_bias_);
    out.emplace_back(prefix + ".attn.wq", wq_);
    out.emplace_back(prefix + ".attn.bq", bq_);
    out.emplace_back(prefix + ".attn.wk", wk_);
    out.emplace_back(prefix + ".attn.bk", bk_);
    out.emplace_back(prefix + ".attn.wv", wv_);
    out.emplace_back(prefix + ".attn.bv", bv_);
    out.emplace_back(prefix + ".attn.wo", wo_);
    out.emplace_back(prefix + ".attn.bo", bo_);
    out.emplace_back(prefix + ".ln2.gain", ln2_gain_);
    out.emplace_back(prefix + ".ln2.bias", ln2_bias_);
    out.emplace_back(prefix + ".ffn.w1", ffn_w1_);
    out.emplace_back(prefix + ".ffn.b1", ffn_b1_);
    out.emplace_back(prefix + ".ffn.w2", ffn_w2_);
    out.emplace_back(prefix + ".ffn.b2", ffn_b2_);
}

TabularBackbone::TabularBackbone(BackboneConfig cfg, Rng& rng) : cfg_(cfg) {
    if (cfg_.n_features == 0) throw ValueError("backbone: n_features must be positive");
    if (cfg_.d == 0) throw ValueError("backbone: d must be positive");
    if (cfg_.dropout < 0.0 || cfg_.dropout >= 1.0)
        throw ValueError("backbone: dropout must be in [0,1)");
    double w = static_cast<double>(cfg_.d);
    tok_w_ = init_uniform({cfg_.n_features, cfg_.d}, w, rng);
    tok_b_ = init_uniform({cfg_.n_features, cfg_.d}, w, rng);
    readout_ = init_uniform({cfg_.d}, w, rng);
    blocks_.reserve(cfg_.n_layers);
    for (std::size_t i = 0; i < cfg_.n_layers; ++i) blocks_.emplace_back(cfg_.d, cfg_.n_heads, rng);
}

Tensor TabularBackbone::forward(const Tensor& x, bool training, Rng* dropout_rng) const {
    if (x.ndim() != 2 || x.dim(1) != cfg_.n_features)
        throw ShapeError("backbone: expected input [B," + std::to_string(cfg_.n_features) +
                         "], got " + shape_str(x.shape()));
    Tensor seq = prepend_token(tokenize(x, tok_w_, tok_b_), readout_);
    for (const TransformerBlock& block : blocks_)
        seq = block.forward(seq, training, cfg_.dropout, dropout_rng);
    return select_token(seq, 0);
}

std::vector<Tensor> TabularBackbone::parameters() const {
    std::vector<Tensor> out;
    for (const auto& [name, p] : named_params("")) out.push_back(p);
    return out;
}

NamedParams TabularBackbone::named_params(const std::string& prefix) const {
    NamedParams out;
    out.emplace_back(prefix + "tok.w", tok_w_);
    out.emplace_back(prefix + "tok.b", tok_b_);
    out.emplace_back(prefix + "readout", readout_);
    for (std::size_t i = 0; i < blocks_.size(); ++i)
        blocks_[i].append_params(prefix + "block" + std::to_string(i), out);
    return out;
}

FusionHead::FusionHead(std::size_t d1, std::size_t d2, std::size_t n_out, Rng& rng)
    : d1_(d1), d2_(d2), n_out_(n_out) {
    if (d1 + d2 == 0 || n_out == 0) throw ValueError("head: widths must be positive");
    double w = static_cast<double>(d1 + d2);
    w_ = init_uniform({d1 + d2, n_out}, w, rng);
    b_ = init_uniform({n_out}, w, rng);
}

Tensor FusionHead::forward(const Tensor& z1, const Tensor& z2) const {
    if (z1.ndim() != 2 || z1.dim(1) != d1_ || z2.ndim() != 2 || z2.dim(1) != d2_)
        throw ShapeError("head: representation widths do not match the head");
    return forward_concat(concat_last(z1, z2));
}

Tensor FusionHead::forward_concat(const Tensor& z) const {
    if (z.ndim() != 2 || z.dim(1) != d1_ + d2_)
        throw ShapeError("head: expected [B," + std::to_string(d1_ + d2_) + "], got " +
                         shape_str(z.shape()));
    return linear(z, w_, b_);
}

NamedParams FusionHead::named_params(const std::string& prefix) const {
    return {{prefix + "w", w_}, {prefix + "b", b_}};
}

std::vector<int> to_class_labels(const std::vector<double>& targets, std::size_t n_classes) {
    std::vector<int> labels(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) {
        double t = targets[i];
        if (!(t == std::floor(t)))
            throw ValueError("classification target " + std::to_string(t) +
                             " is not a whole number");
        if (t < 0 || t >= static_cast<double>(n_classes))
            throw ValueError("class index " + std::to_string(t) + " out of range [0," +
                             std::to_string(n_classes) + ")");
        labels[i] = static_cast<int>(t);
    }
    return labels;
}

Tensor task_loss(const Tensor& pred, const std::vector<double>& targets, Task task) {
    if (targets.empty()) throw ValueError("task_loss: empty batch");
    if (pred.ndim() == 0 || pred.dim(0) != targets.size())
        throw ShapeError("task_loss: prediction batch does not match target count");
    if (task == Task::regression) {
        if (pred.size() != targets.size())
            throw ShapeError("task_loss: regression prediction must be one value per row");
        Tensor y = Tensor::from_data(pred.shape(), std::vector<double>(targets));
        return mean(square(sub(pred, y)));
    }
    if (pred.ndim() != 2) throw ShapeError("task_loss: classification needs logits [B,C]");
    return cross_entropy(pred, to_class_labels(targets, pred.dim(1)));
}

std::vector<int> argmax_rows(const Tensor& logits) {
    if (logits.ndim() != 2) throw ShapeError("argmax_rows: expected [B,C]");
    std::size_t B = logits.dim(0), C = logits.dim(1);
    std::vector<int> out(B, 0);
    for (std::size_t b = 0; b < B; ++b) {
        double best = logits.at(b * C);
        for (std::size_t c = 1; c < C; ++c) {
            double v = logits.at(b * C + c);
            if (v > best) {  // strict: ties keep the lowest index
                best = v;
                out[b] = static_cast<int>(c);
            }
        }
    }
    return out;
}

}  // namespace imml
