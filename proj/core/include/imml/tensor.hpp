#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace imml {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {
struct Node;
}

// Dense real-valued n-dimensional array (row-major, 64-bit reals) with
// reverse-mode gradient support. Tensors are cheap handles onto shared
// nodes; operations record the computation graph whenever an operand
// requires gradients. Any operation that would produce a non-finite value
// throws NumericError naming the operation.
class Tensor {
public:
    Tensor() = default;

    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    // Leaf with requires_grad set; the usual way to declare a trainable weight.
    static Tensor param(Shape shape, std::vector<double> data);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t ndim() const;
    std::size_t dim(std::size_t i) const;
    std::size_t size() const;
    bool requires_grad() const;
    bool is_leaf() const;
    std::uint64_t id() const;
    const char* op_name() const;

    const std::vector<double>& values() const;
    // In-place mutation is reserved for optimizer-style updates on leaves.
    std::vector<double>& values_mut();
    double item() const;
    double at(std::size_t flat_index) const;

    // Constant copy that shares no graph history.
    Tensor detach() const;

    // Internal node accessor used by the operation implementations.
    const std::shared_ptr<detail::Node>& node() const { return node_; }
    static Tensor wrap(std::shared_ptr<detail::Node> n);

private:
    std::shared_ptr<detail::Node> node_;
};

// ---- elementwise (b may be scalar or a trailing-dims broadcast of a) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double k);
Tensor mul_scalar(const Tensor& a, double k);
Tensor neg(const Tensor& a);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor reciprocal(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lo);
// 0.5*x^2 for x <= 1, x - 0.5 otherwise (robust penalty on distances).
Tensor huber(const Tensor& a);

// ---- linear algebra ----
// a: [..., M, K] (leading dims batched), b: [K, N].
Tensor matmul(const Tensor& a, const Tensor& b);
// matmul(x, w) + bias with bias broadcast over rows.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// ---- reductions / structure ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// [..., k] -> [...]: sum over the last axis.
Tensor sum_last(const Tensor& a);
// a: [..., k], s: shape of a without the last axis; scales row r by s[r].
Tensor mul_rows(const Tensor& a, const Tensor& s);
Tensor concat_last(const Tensor& a, const Tensor& b);
Tensor concat_first(const Tensor& a, const Tensor& b);
// x: [B, T, d] -> [B, d], the state of token `index`.
Tensor select_token(const Tensor& x, std::size_t index);
// tokens: [B, T, d], token: [d] -> [B, T+1, d] with `token` at position 0 of
// every batch row.
Tensor prepend_token(const Tensor& tokens, const Tensor& token);
// sqrt(sum_last(square(a))): Euclidean norm of each row.
Tensor row_norms(const Tensor& a);

// ---- fused network ops ----
// x: [B, m] feature values, w/b: [m, d]; out[b,j,:] = x[b,j]*w[j,:] + b[j,:].
Tensor tokenize(const Tensor& x, const Tensor& w, const Tensor& b);
// q,k,v: [B, T, d], d divisible by n_heads. Scaled dot-product attention per
// head; when probs_out is non-null the row-stochastic attention weights
// [B, n_heads, T, T] are copied there.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int n_heads,
                 std::vector<double>* probs_out = nullptr);
// Normalizes the last axis to zero mean / unit variance, then applies gain
// and bias (both [d]).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
// logits: [B, C]; mean negative log-likelihood of the labels under
// softmax(logits).
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);
// Temperature-softened KL(student || teacher), scaled by T^2 and averaged
// over rows when the inputs are 2-D. The teacher is treated as a constant.
Tensor kl_divergence(const Tensor& student_logits, const Tensor& teacher_logits, double temperature);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double k) { return mul_scalar(a, k); }
inline Tensor operator*(double k, const Tensor& a) { return mul_scalar(a, k); }

// Gradients of a scalar output with respect to every requires_grad leaf in
// its graph. Leaves that do not influence the output map to zero tensors.
class GradientMap {
public:
    void set(std::uint64_t id, Tensor g) { grads_[id] = std::move(g); }
    bool contains(std::uint64_t id) const { return grads_.count(id) != 0; }
    // Zero tensor of the parameter's shape when the parameter is untouched.
    Tensor grad_for(const Tensor& param) const;
    std::size_t size() const { return grads_.size(); }

private:
    std::unordered_map<std::uint64_t, Tensor> grads_;
};

GradientMap backward(const Tensor& output);

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// f must be deterministic; step in (0, 1e-3].
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double step = 1e-6);

// Dropout keep-mask scaled by 1/(1-p); multiply a tensor by it during
// training. p must be in [0, 1).
Tensor make_dropout_mask(const Shape& shape, double p, class Rng& rng);

}  // namespace imml
