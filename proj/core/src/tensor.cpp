#include "imml/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "imml/errors.hpp"
#include "imml/rng.hpp"

namespace imml {

std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // sized lazily during backward
    bool requires_grad = false;
    bool leaf = true;
    const char* op = "leaf";
    std::uint64_t id = 0;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    std::size_t size() const { return values.size(); }
    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

}  // namespace detail

using detail::Node;

namespace {

std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

void check_finite(const char* op, const std::vector<double>& v) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw NumericError(std::string("non-finite value produced by operation '") + op + "'");
        }
    }
}

std::shared_ptr<Node> new_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_size(shape) != data.size()) {
        throw ShapeError("tensor: shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
    }
    check_finite("leaf", data);
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->values = std::move(data);
    n->requires_grad = requires_grad;
    n->leaf = true;
    n->id = next_id();
    return n;
}

Tensor make_node(const char* op, Shape shape, std::vector<double> values,
                 std::vector<std::shared_ptr<Node>> parents, std::function<void(Node&)> back) {
    if (shape_size(shape) != values.size())
        throw ShapeError(std::string(op) + ": internal shape/value mismatch");
    check_finite(op, values);
    bool needs = false;
    for (const auto& p : parents)
        if (p->requires_grad) needs = true;
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    n->leaf = false;
    n->op = op;
    n->id = next_id();
    n->requires_grad = needs;
    if (needs) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(back);
    }
    return Tensor::wrap(std::move(n));
}

const std::shared_ptr<Node>& req(const Tensor& t, const char* op) {
    if (!t.defined()) throw ValueError(std::string(op) + ": undefined tensor operand");
    return t.node();
}

// Broadcast layout for binary elementwise ops: b is either the same shape as
// a, a scalar, or matches the trailing dims of a.
struct Bcast {
    std::size_t reps;
    std::size_t stride;  // = b.size()
};

Bcast bcast_layout(const char* op, const Node& a, const Node& b) {
    if (b.size() == 1) return {a.size(), 1};
    if (b.shape.size() > a.shape.size())
        throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(b.shape) + " onto " +
                         shape_str(a.shape));
    std::size_t off = a.shape.size() - b.shape.size();
    for (std::size_t i = 0; i < b.shape.size(); ++i) {
        if (a.shape[off + i] != b.shape[i])
            throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(b.shape) +
                             " onto " + shape_str(a.shape));
    }
    return {a.size() / b.size(), b.size()};
}

// ---- tiny row-major gemm kernels ----

// C[M,N] (+)= A[M,K] * B[K,N]
void gemm_nn(const double* A, const double* B, double* C, std::size_t M, std::size_t K,
             std::size_t N, bool acc) {
    if (!acc) std::fill(C, C + M * N, 0.0);
    for (std::size_t i = 0; i < M; ++i) {
        const double* a = A + i * K;
        double* c = C + i * N;
        for (std::size_t k = 0; k < K; ++k) {
            double aik = a[k];
            const double* b = B + k * N;
            for (std::size_t j = 0; j < N; ++j) c[j] += aik * b[j];
        }
    }
}

// C[M,N] (+)= A[M,K] * B[N,K]^T
void gemm_nt(const double* A, const double* B, double* C, std::size_t M, std::size_t K,
             std::size_t N, bool acc) {
    for (std::size_t i = 0; i < M; ++i) {
        const double* a = A + i * K;
        double* c = C + i * N;
        for (std::size_t j = 0; j < N; ++j) {
            const double* b = B + j * K;
            double s = 0.0;
            for (std::size_t k = 0; k < K; ++k) s += a[k] * b[k];
            c[j] = acc ? c[j] + s : s;
        }
    }
}

// C[K,N] (+)= A[M,K]^T * B[M,N]
void gemm_tn(const double* A, const double* B, double* C, std::size_t M, std::size_t K,
             std::size_t N, bool acc) {
    if (!acc) std::fill(C, C + K * N, 0.0);
    for (std::size_t i = 0; i < M; ++i) {
        const double* a = A + i * K;
        const double* b = B + i * N;
        for (std::size_t k = 0; k < K; ++k) {
            double aik = a[k];
            double* c = C + k * N;
            for (std::size_t j = 0; j < N; ++j) c[j] += aik * b[j];
        }
    }
}

using UnaryFn = double (*)(double);

Tensor unary_op(const char* op, const Tensor& at, UnaryFn f, UnaryFn dfdx) {
    const auto& a = req(at, op);
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a->values[i]);
    Node* ap = a.get();
    return make_node(op, a->shape, std::move(out), {a}, [ap, dfdx](Node& self) {
        if (!ap->requires_grad) return;
        ap->ensure_grad();
        for (std::size_t i = 0; i < self.values.size(); ++i)
            ap->grad[i] += self.grad[i] * dfdx(ap->values[i]);
    });
}

}  // namespace

// ---- Tensor handle ----

Tensor Tensor::wrap(std::shared_ptr<Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    return wrap(new_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double v) { return from_data({}, {v}); }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<double> d(shape_size(shape), 0.0);
    return from_data(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    std::vector<double> d(shape_size(shape), v);
    return from_data(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::param(Shape shape, std::vector<double> data) {
    return from_data(std::move(shape), std::move(data), true);
}

const Shape& Tensor::shape() const { return req(*this, "shape")->shape; }
std::size_t Tensor::ndim() const { return shape().size(); }
std::size_t Tensor::dim(std::size_t i) const { return shape().at(i); }
std::size_t Tensor::size() const { return req(*this, "size")->size(); }
bool Tensor::requires_grad() const { return req(*this, "requires_grad")->requires_grad; }
bool Tensor::is_leaf() const { return req(*this, "is_leaf")->leaf; }
std::uint64_t Tensor::id() const { return req(*this, "id")->id; }
const char* Tensor::op_name() const { return req(*this, "op_name")->op; }

const std::vector<double>& Tensor::values() const { return req(*this, "values")->values; }

std::vector<double>& Tensor::values_mut() {
    auto& n = req(*this, "values_mut");
    if (!n->leaf) throw ValueError("values_mut: only leaf tensors may be mutated in place");
    return n->values;
}

double Tensor::item() const {
    const auto& n = req(*this, "item");
    if (n->size() != 1) throw ShapeError("item: tensor " + shape_str(n->shape) + " is not scalar");
    return n->values[0];
}

double Tensor::at(std::size_t i) const {
    const auto& v = values();
    if (i >= v.size()) throw ShapeError("at: index out of range");
    return v[i];
}

Tensor Tensor::detach() const {
    const auto& n = req(*this, "detach");
    return from_data(n->shape, n->values, false);
}

// ---- binary elementwise ----

namespace {

enum class BinOp { Add, Sub, Mul, Div };

Tensor binary_op(const char* op, BinOp kind, const Tensor& at, const Tensor& bt) {
    const auto& a = req(at, op);
    const auto& b = req(bt, op);
    Bcast bc = bcast_layout(op, *a, *b);
    std::vector<double> out(a->size());
    const double* av = a->values.data();
    const double* bv = b->values.data();
    for (std::size_t r = 0; r < bc.reps; ++r) {
        double* o = out.data() + r * bc.stride;
        const double* ar = av + r * bc.stride;
        for (std::size_t i = 0; i < bc.stride; ++i) {
            switch (kind) {
                case BinOp::Add: o[i] = ar[i] + bv[i]; break;
                case BinOp::Sub: o[i] = ar[i] - bv[i]; break;
                case BinOp::Mul: o[i] = ar[i] * bv[i]; break;
                case BinOp::Div: o[i] = ar[i] / bv[i]; break;
            }
        }
    }
    Node* ap = a.get();
    Node* bp = b.get();
    return make_node(op, a->shape, std::move(out), {a, b}, [ap, bp, bc, kind](Node& self) {
        const double* g = self.grad.data();
        if (ap->requires_grad) {
            ap->ensure_grad();
            for (std::size_t r = 0; r < bc.reps; ++r) {
                double* ag = ap->grad.data() + r * bc.stride;
                const double* gr = g + r * bc.stride;
                const double* bv = bp->values.data();
                for (std::size_t i = 0; i < bc.stride; ++i) {
                    switch (kind) {
                        case BinOp::Add:
                        case BinOp::Sub: ag[i] += gr[i]; break;
                        case BinOp::Mul: ag[i] += gr[i] * bv[i]; break;
                        case BinOp::Div: ag[i] += gr[i] / bv[i]; break;
                    }
                }
            }
        }
        if (bp->requires_grad) {
            bp->ensure_grad();
            for (std::size_t r = 0; r < bc.reps; ++r) {
                const double* gr = g + r * bc.stride;
                const double* av = ap->values.data() + r * bc.stride;
                const double* bv = bp->values.data();
                double* bg = bp->grad.data();
                for (std::size_t i = 0; i < bc.stride; ++i) {
                    switch (kind) {
                        case BinOp::Add: bg[i] += gr[i]; break;
                        case BinOp::Sub: bg[i] -= gr[i]; break;
                        case BinOp::Mul: bg[i] += gr[i] * av[i]; break;
                        case BinOp::Div: bg[i] -= gr[i] * av[i] / (bv[i] * bv[i]); break;
                    }
                }
            }
        }
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op("add", BinOp::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op("sub", BinOp::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op("mul", BinOp::Mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_op("div", BinOp::Div, a, b); }

Tensor add_scalar(const Tensor& at, double k) {
    const auto& a = req(at, "add_scalar");
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] + k;
    Node* ap = a.get();
    return make_node("add_scalar", a->shape, std::move(out), {a}, [ap](Node& self) {
        if (!ap->requires_grad) return;
        ap->ensure_grad();
        for (std::size_t i = 0; i < self.values.size(); ++i) ap->grad[i] += self.grad[i];
    });
}

Tensor mul_scalar(const Tensor& at, double k) {
    const auto& a = req(at, "mul_scalar");
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] * k;
    Node* ap = a.get();
    return make_node("mul_scalar", a->shape, std::move(out), {a}, [ap, k](Node& self) {
        if (!ap->requires_grad) return;
        ap->ensure_grad();
        for (std::size_t i = 0; i < self.values.size(); ++i) ap->grad[i] += self.grad[i] * k;
    });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

// ---- unary ----

namespace {
double sigmoid_val(double x) {
    if (x >= 0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}
double sigmoid_grad(double x) {
    double s = sigmoid_val(x);
    return s * (1.0 - s);
}
double gelu_val(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }
double gelu_grad(double x) {
    double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)) + x * phi;
}
double huber_val(double x) { return x <= 1.0 ? 0.5 * x * x : x - 0.5; }
double huber_grad(double x) { return x <= 1.0 ? x : 1.0; }
}  // namespace

Tensor exp(const Tensor& a) {
    return unary_op("exp", a, [](double x) { return std::exp(x); },
                    [](double x) { return std::exp(x); });
}
Tensor log(const Tensor& a) {
    return unary_op("log", a, [](double x) { return std::log(x); },
                    [](double x) { return 1.0 / x; });
}
Tensor sqrt(const Tensor& a) {
    return unary_op("sqrt", a, [](double x) { return std::sqrt(x); },
                    [](double x) { return 0.5 / std::sqrt(x); });
}
Tensor square(const Tensor& a) {
    return unary_op("square", a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}
Tensor abs(const Tensor& a) {
    return unary_op("abs", a, [](double x) { return std::fabs(x); },
                    [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}
Tensor reciprocal(const Tensor& a) {
    return unary_op("reciprocal", a, [](double x) { return 1.0 / x; },
                    [](double x) { return -1.0 / (x * x); });
}
Tensor sigmoid(const Tensor& a) { return unary_op("sigmoid", a, sigmoid_val, sigmoid_grad); }
Tensor tanh(const Tensor& a) {
    return unary_op("tanh", a, [](double x) { return std::tanh(x); },
                    [](double x) {
                        double t = std::tanh(x);
                        return 1.0 - t * t;
                    });
}
Tensor relu(const Tensor& a) {
    return unary_op("relu", a, [](double x) { return x > 0 ? x : 0.0; },
                    [](double x) { return x > 0 ? 1.0 : 0.0; });
}
Tensor gelu(const Tensor& a) { return unary_op("gelu", a, gelu_val, gelu_grad); }
Tensor huber(const Tensor& a) { return unary_op("huber", a, huber_val, huber_grad); }

Tensor clamp_min(const Tensor& at, double lo) {
    const auto& a = req(at, "clamp_min");
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(a->values[i], lo);
    Node* ap = a.get();
    return make_node("clamp_min", a->shape, std::move(out), {a}, [ap, lo](Node& self) {
        if (!ap->requires_grad) return;
        ap->ensure_grad();
        for (std::size_t i = 0; i < self.values.size(); ++i)
            if (ap->values[i] > lo) ap->grad[i] += self.grad[i];
    });
}

// ---- linear algebra ----

Tensor matmul(const Tensor& at, const Tensor& bt) {
    const auto& a = req(at, "matmul");
    const auto& b = req(bt, "matmul");
    if (a->shape.size() < 2 || b->shape.size() != 2)
        throw ShapeError("matmul: need a [..,M,K] and b [K,N], got " + shape_str(a->shape) +
                         " and " + shape_str(b->shape));
    std::size_t K = a->shape[a->shape.size() - 1];
    std::size_t M = a->shape[a->shape.size() - 2];
    if (b->shape[0] != K)
        throw ShapeError("matmul: inner dims disagree: " + shape_str(a->shape) + " vs " +
                         shape_str(b->shape));
    std::size_t N = b->shape[1];
    std::size_t batch = a->size() / (M * K);
    Shape out_shape = a->shape;
    out_shape.back() = N;
    std::vector<double> out(batch * M * N);
    for (std::size_t g = 0; g < batch; ++g)
        gemm_nn(a->values.data() + g * M * K, b->values.data(), out.data() + g * M * N, M, K, N,
                false);
    Node* ap = a.get();
    Node* bp = b.get();
    return make_node("matmul", std::move(out_shape), std::move(out), {a, b},
                     [ap, bp, M, K, N, batch](Node& self) {
                         if (ap->requires_grad) {
                             ap->ensure_grad();
                             for (std::size_t g = 0; g < batch; ++g)
                                 gemm_nt(self.grad.data() + g * M * N, bp->values.data(),
                                         ap->grad.data() + g * M * K, M, N, K, true);
                         }
                         if (bp->requires_grad) {
                             bp->ensure_grad();
                             for (std::size_t g = 0; g < batch; ++g)
                                 gemm_tn(ap->values.data() + g * M * K,
                                         self.grad.data() + g * M * N, bp->grad.data(), M, K, N,
                                         true);
                         }
                     });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    return add(matmul(x, w), bias);
}

// ---- reductions / structure ----

Tensor sum(const Tensor& at) {
    const auto& a = req(at, "sum");
    double s = 0.0;
    for (double x : a->values) s += x;
    Node* ap = a.get();
    return make_node("sum", {}, {s}, {a}, [ap](Node& self) {
        if (!ap->requires_grad) return;
        ap->ensure_grad();
        double g = self.grad[0];
        for (double& x : ap->grad) x += g;
    });
}

Tensor mean(const Tensor& a) {
    std::size_t n = a.size();
    if (n == 0) throw ShapeError("mean: empty tensor");
    return mul_scalar(sum(a), 1.0 / static_cast<double>(n));
}

Tensor sum_last(const Tensor& at) {
    const auto& a = req(at, "sum_last");
    if (a->shape.empty()) throw ShapeError("sum_last: needs at least one axis");
    std::size_t k = a->shape.back();
    std::size_t rows = a->size() / std::max<std::size_t>(k, 1);
    if (k == 0) throw ShapeError("sum_last: zero-length last axis");
    Shape out_shape(a->shape.begin(), a->shape.end() - 1);
    std::vector<double> out(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = a->values.data() + r * k;
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i) s += row[i];
        out[r] = s;
    }
    Node* ap = a.get();
    return make_node("sum_last", std::move(out_shape), std::move(out), {a}, [ap, rows, k](Node& self) {
        if (!ap->requires_grad) return;
        ap->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            double g = self.grad[r];
            double* row = ap->grad.data() + r * k;
            for (std::size_t i = 0; i < k; ++i) row[i] += g;
        }
    });
}

Tensor mul_rows(const Tensor& at, const Tensor& st) {
    const auto& a = req(at, "mul_rows");
    const auto& s = req(st, "mul_rows");
    if (a->shape.empty()) throw ShapeError("mul_rows: needs at least one axis");
    std::size_t k = a->shape.back();
    Shape row_shape(a->shape.begin(), a->shape.end() - 1);
    if (s->shape != row_shape)
        throw ShapeError("mul_rows: scale shape " + shape_str(s->shape) + " must equal " +
                         shape_str(row_shape));
    std::size_t rows = s->size();
    std::vector<double> out(a->size());
    for (std::size_t r = 0; r < rows; ++r) {
        double sc = s->values[r];
        const double* av = a->values.data() + r * k;
        double* o = out.data() + r * k;
        for (std::size_t i = 0; i < k; ++i) o[i] = av[i] * sc;
    }
    Node* ap = a.get();
    Node* sp = s.get();
    return make_node("mul_rows", a->shape, std::move(out), {a, s}, [ap, sp, rows, k](Node& self) {
        if (ap->requires_grad) {
            ap->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                double sc = sp->values[r];
                const double* g = self.grad.data() + r * k;
                double* ag = ap->grad.data() + r * k;
                for (std::size_t i = 0; i < k; ++i) ag[i] += g[i] * sc;
            }
        }
        if (sp->requires_grad) {
            sp->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* g = self.grad.data() + r * k;
                const double* av = ap->values.data() + r * k;
                double acc = 0.0;
                for (std::size_t i = 0; i < k; ++i) acc += g[i] * av[i];
                sp->grad[r] += acc;
            }
        }
    });
}

Tensor concat_last(const Tensor& at, const Tensor& bt) {
    const auto& a = req(at, "concat_last");
    const auto& b = req(bt, "concat_last");
    if (a->shape.empty() || b->shape.empty() || a->shape.size() != b->shape.size())
        throw ShapeError("concat_last: rank mismatch");
    for (std::size_t i = 0; i + 1 < a->shape.size(); ++i)
        if (a->shape[i] != b->shape[i]) throw ShapeError("concat_last: leading dims disagree");
    std::size_t ka = a->shape.back(), kb = b->shape.back();
    std::size_t rows = a->size() / std::max<std::size_t>(ka, 1);
    Shape out_shape = a->shape;
    out_shape.back() = ka + kb;
    std::vector<double> out(rows * (ka + kb));
    for (std::size_t r = 0; r < rows; ++r) {
        std::memcpy(out.data() + r * (ka + kb), a->values.data() + r * ka, ka * sizeof(double));
        std::memcpy(out.data() + r * (ka + kb) + ka, b->values.data() + r * kb,
                    kb * sizeof(double));
    }
    Node* ap = a.get();
    Node* bp = b.get();
    return make_node("concat_last", std::move(out_shape), std::move(out), {a, b},
                     [ap, bp, rows, ka, kb](Node& self) {
                         for (std::size_t r = 0; r < rows; ++r) {
                             const double* g = self.grad.data() + r * (ka + kb);
                             if (ap->requires_grad) {
                                 ap->ensure_grad();
                                 double* ag = ap->grad.data() + r * ka;
                                 for (std::size_t i = 0; i < ka; ++i) ag[i] += g[i];
                             }
                             if (bp->requires_grad) {
                                 bp->ensure_grad();
                                 double* bg = bp->grad.data() + r * kb;
                                 for (std::size_t i = 0; i < kb; ++i) bg[i] += g[ka + i];
                             }
                         }
                     });
}

Tensor concat_first(const Tensor& at, const Tensor& bt) {
    const auto& a = req(at, "concat_first");
    const auto& b = req(bt, "concat_first");
    if (a->shape.empty() || b->shape.empty() || a->shape.size() != b->shape.size())
        throw ShapeError("concat_first: rank mismatch");
    for (std::size_t i = 1; i < a->shape.size(); ++i)
        if (a->shape[i] != b->shape[i]) throw ShapeError("concat_first: trailing dims disagree");
    Shape out_shape = a->shape;
    out_shape[0] = a->shape[0] + b->shape[0];
    std::vector<double> out;
    out.reserve(a->size() + b->size());
    out.insert(out.end(), a->values.begin(), a->values.end());
    out.insert(out.end(), b->values.begin(), b->values.end());
    Node* ap = a.get();
    Node* bp = b.get();
    std::size_t na = a->size();
    return make_node("concat_first", std::move(out_shape), std::move(out), {a, b},
                     [ap, bp, na](Node& self) {
                         if (ap->requires_grad) {
                             ap->ensure_grad();
                             for (std::size_t i = 0; i < na; ++i) ap->grad[i] += self.grad[i];
                         }
                         if (bp->requires_grad) {
                             bp->ensure_grad();
                             for (std::size_t i = 0; i < bp->grad.size(); ++i)
                                 bp->grad[i] += self.grad[na + i];
                         }
                     });
}

Tensor select_token(const Tensor& xt, std::size_t index) {
    const auto& x = req(xt, "select_token");
    if (x->shape.size() != 3) throw ShapeError("select_token: expected [B,T,d]");
    std::size_t B = x->shape[0], T = x->shape[1], d = x->shape[2];
    if (index >= T) throw ShapeError("select_token: token index out of range");
    std::vector<double> out(B * d);
    for (std::size_t b = 0; b < B; ++b)
        std::memcpy(out.data() + b * d, x->values.data() + (b * T + index) * d,
                    d * sizeof(double));
    Node* xp = x.get();
    return make_node("select_token", {B, d}, std::move(out), {x}, [xp, B, T, d, index](Node& self) {
        if (!xp->requires_grad) return;
        xp->ensure_grad();
        for (std::size_t b = 0; b < B; ++b) {
            double* g = xp->grad.data() + (b * T + index) * d;
            const double* sg = self.grad.data() + b * d;
            for (std::size_t i = 0; i < d; ++i) g[i] += sg[i];
        }
    });
}

Tensor prepend_token(const Tensor& xt, const Tensor& tt) {
    const auto& x = req(xt, "prepend_token");
    const auto& t = req(tt, "prepend_token");
    if (x->shape.size() != 3) throw ShapeError("prepend_token: expected tokens [B,T,d]");
    std::size_t B = x->shape[0], T = x->shape[1], d = x->shape[2];
    if (t->shape != Shape{d})
        throw ShapeError("prepend_token: token must be [d], got " + shape_str(t->shape));
    std::vector<double> out(B * (T + 1) * d);
    for (std::size_t b = 0; b < B; ++b) {
        std::memcpy(out.data() + b * (T + 1) * d, t->values.data(), d * sizeof(double));
        std::memcpy(out.data() + (b * (T + 1) + 1) * d, x->values.data() + b * T * d,
                    T * d * sizeof(double));
    }
    Node* xp = x.get();
    Node* tp = t.get();
    return make_node("prepend_token", {B, T + 1, d}, std::move(out), {x, t},
                     [xp, tp, B, T, d](Node& self) {
                         for (std::size_t b = 0; b < B; ++b) {
                             const double* g = self.grad.data() + b * (T + 1) * d;
                             if (tp->requires_grad) {
                                 tp->ensure_grad();
                                 for (std::size_t i = 0; i < d; ++i) tp->grad[i] += g[i];
                             }
                             if (xp->requires_grad) {
                                 xp->ensure_grad();
                                 double* xg = xp->grad.data() + b * T * d;
                                 for (std::size_t i = 0; i < T * d; ++i) xg[i] += g[d + i];
                             }
                         }
                     });
}

Tensor row_norms(const Tensor& a) { return sqrt(sum_last(square(a))); }

// ---- fused network ops ----

Tensor tokenize(const Tensor& xt, const Tensor& wt, const Tensor& bt) {
    const auto& x = req(xt, "tokenize");
    const auto& w = req(wt, "tokenize");
    const auto& b = req(bt, "tokenize");
    if (x->shape.size() != 2 || w->shape.size() != 2 || b->shape != w->shape)
        throw ShapeError("tokenize: expected x [B,m], w/b [m,d]");
    std::size_t B = x->shape[0], m = x->shape[1], d = w->shape[1];
    if (w->shape[0] != m)
        throw ShapeError("tokenize: feature count mismatch: x has " + std::to_string(m) +
                         ", tokenizer has " + std::to_string(w->shape[0]));
    std::vector<double> out(B * m * d);
    for (std::size_t bi = 0; bi < B; ++bi)
        for (std::size_t j = 0; j < m; ++j) {
            double xv = x->values[bi * m + j];
            const double* wr = w->values.data() + j * d;
            const double* br = b->values.data() + j * d;
            double* o = out.data() + (bi * m + j) * d;
            for (std::size_t k = 0; k < d; ++k) o[k] = xv * wr[k] + br[k];
        }
    Node* xp = x.get();
    Node* wp = w.get();
    Node* bp = b.get();
    return make_node("tokenize", {B, m, d}, std::move(out), {x, w, b}, [xp, wp, bp, B, m,
                                                                        d](Node& self) {
        if (xp->requires_grad) xp->ensure_grad();
        if (wp->requires_grad) wp->ensure_grad();
        if (bp->requires_grad) bp->ensure_grad();
        for (std::size_t bi = 0; bi < B; ++bi)
            for (std::size_t j = 0; j < m; ++j) {
                const double* g = self.grad.data() + (bi * m + j) * d;
                double xv = xp->values[bi * m + j];
                const double* wr = wp->values.data() + j * d;
                if (xp->requires_grad) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < d; ++k) acc += g[k] * wr[k];
                    xp->grad[bi * m + j] += acc;
                }
                if (wp->requires_grad) {
                    double* wg = wp->grad.data() + j * d;
                    for (std::size_t k = 0; k < d; ++k) wg[k] += g[k] * xv;
                }
                if (bp->requires_grad) {
                    double* bg = bp->grad.data() + j * d;
                    for (std::size_t k = 0; k < d; ++k) bg[k] += g[k];
                }
            }
    });
}

Tensor attention(const Tensor& qt, const Tensor& kt, const Tensor& vt, int n_heads,
                 std::vector<double>* probs_out) {
    const auto& q = req(qt, "attention");
    const auto& k = req(kt, "attention");
    const auto& v = req(vt, "attention");
    if (q->shape.size() != 3 || q->shape != k->shape || q->shape != v->shape)
        throw ShapeError("attention: q,k,v must share shape [B,T,d]");
    std::size_t B = q->shape[0], T = q->shape[1], d = q->shape[2];
    if (n_heads <= 0 || d % static_cast<std::size_t>(n_heads) != 0)
        throw ShapeError("attention: head count must divide embedding width");
    std::size_t H = static_cast<std::size_t>(n_heads);
    std::size_t dh = d / H;
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    // Row-stochastic weights kept for the backward pass (and for inspection).
    auto probs = std::make_shared<std::vector<double>>(B * H * T * T);
    std::vector<double> out(B * T * d, 0.0);

    std::vector<double> scores(T * T);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t h = 0; h < H; ++h) {
            const double* qb = q->values.data() + b * T * d + h * dh;
            const double* kb = k->values.data() + b * T * d + h * dh;
            const double* vb = v->values.data() + b * T * d + h * dh;
            for (std::size_t i = 0; i < T; ++i) {
                const double* qi = qb + i * d;
                double mx = -1e300;
                for (std::size_t j = 0; j < T; ++j) {
                    const double* kj = kb + j * d;
                    double s = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
                    s *= scale;
                    scores[i * T + j] = s;
                    mx = std::max(mx, s);
                }
                double z = 0.0;
                for (std::size_t j = 0; j < T; ++j) {
                    double e = std::exp(scores[i * T + j] - mx);
                    scores[i * T + j] = e;
                    z += e;
                }
                double* prow = probs->data() + ((b * H + h) * T + i) * T;
                for (std::size_t j = 0; j < T; ++j) prow[j] = scores[i * T + j] / z;
                double* orow = out.data() + b * T * d + i * d + h * dh;
                for (std::size_t j = 0; j < T; ++j) {
                    double p = prow[j];
                    const double* vj = vb + j * d;
                    for (std::size_t c = 0; c < dh; ++c) orow[c] += p * vj[c];
                }
            }
        }
    }
    if (probs_out) *probs_out = *probs;

    Node* qp = q.get();
    Node* kp = k.get();
    Node* vp = v.get();
    return make_node(
        "attention", q->shape, std::move(out), {q, k, v},
        [qp, kp, vp, probs, B, T, d, H, dh, scale](Node& self) {
            bool nq = qp->requires_grad, nk = kp->requires_grad, nv = vp->requires_grad;
            if (nq) qp->ensure_grad();
            if (nk) kp->ensure_grad();
            if (nv) vp->ensure_grad();
            std::vector<double> dP(T * T), dS(T * T);
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t h = 0; h < H; ++h) {
                    const double* qb = qp->values.data() + b * T * d + h * dh;
                    const double* kb = kp->values.data() + b * T * d + h * dh;
                    const double* vb = vp->values.data() + b * T * d + h * dh;
                    const double* gb = self.grad.data() + b * T * d + h * dh;
                    const double* pb = probs->data() + (b * H + h) * T * T;
                    // dV[j] += sum_i P[i,j] * dO[i]
                    if (nv) {
                        double* vg = vp->grad.data() + b * T * d + h * dh;
                        for (std::size_t i = 0; i < T; ++i) {
                            const double* gi = gb + i * d;
                            const double* pi = pb + i * T;
                            for (std::size_t j = 0; j < T; ++j) {
                                double p = pi[j];
                                double* vgj = vg + j * d;
                                for (std::size_t c = 0; c < dh; ++c) vgj[c] += p * gi[c];
                            }
                        }
                    }
                    if (!nq && !nk) continue;
                    // dP[i,j] = dO[i] . V[j]; dS = P o (dP - rowdot(dP,P))
                    for (std::size_t i = 0; i < T; ++i) {
                        const double* gi = gb + i * d;
                        for (std::size_t j = 0; j < T; ++j) {
                            const double* vj = vb + j * d;
                            double s = 0.0;
                            for (std::size_t c = 0; c < dh; ++c) s += gi[c] * vj[c];
                            dP[i * T + j] = s;
                        }
                        const double* pi = pb + i * T;
                        double dot = 0.0;
                        for (std::size_t j = 0; j < T; ++j) dot += dP[i * T + j] * pi[j];
                        for (std::size_t j = 0; j < T; ++j)
                            dS[i * T + j] = pi[j] * (dP[i * T + j] - dot);
                    }
                    // dQ[i] += scale * sum_j dS[i,j] K[j]; dK[j] += scale * sum_i dS[i,j] Q[i]
                    for (std::size_t i = 0; i < T; ++i) {
                        for (std::size_t j = 0; j < T; ++j) {
                            double s = dS[i * T + j] * scale;
                            if (nq) {
                                double* qg = qp->grad.data() + b * T * d + i * d + h * dh;
                                const double* kj = kb + j * d;
                                for (std::size_t c = 0; c < dh; ++c) qg[c] += s * kj[c];
                            }
                            if (nk) {
                                double* kg = kp->grad.data() + b * T * d + j * d + h * dh;
                                const double* qi = qb + i * d;
                                for (std::size_t c = 0; c < dh; ++c) kg[c] += s * qi[c];
                            }
                        }
                    }
                }
            }
        });
}

Tensor layer_norm(const Tensor& xt, const Tensor& gt, const Tensor& bt, double eps) {
    const auto& x = req(xt, "layer_norm");
    const auto& g = req(gt, "layer_norm");
    const auto& b = req(bt, "layer_norm");
    if (x->shape.empty()) throw ShapeError("layer_norm: needs at least one axis");
    std::size_t d = x->shape.back();
    if (g->shape != Shape{d} || b->shape != Shape{d})
        throw ShapeError("layer_norm: gain/bias must be [d]");
    std::size_t rows = x->size() / d;
    auto xhat = std::make_shared<std::vector<double>>(x->size());
    auto inv_sd = std::make_shared<std::vector<double>>(rows);
    std::vector<double> out(x->size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x->values.data() + r * d;
        double m = 0.0;
        for (std::size_t i = 0; i < d; ++i) m += xr[i];
        m /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            double c = xr[i] - m;
            var += c * c;
        }
        var /= static_cast<double>(d);
        double isd = 1.0 / std::sqrt(var + eps);
        (*inv_sd)[r] = isd;
        double* xh = xhat->data() + r * d;
        double* o = out.data() + r * d;
        for (std::size_t i = 0; i < d; ++i) {
            xh[i] = (xr[i] - m) * isd;
            o[i] = g->values[i] * xh[i] + b->values[i];
        }
    }
    Node* xp = x.get();
    Node* gp = g.get();
    Node* bp = b.get();
    return make_node(
        "layer_norm", x->shape, std::move(out), {x, g, b},
        [xp, gp, bp, xhat, inv_sd, rows, d](Node& self) {
            if (gp->requires_grad) gp->ensure_grad();
            if (bp->requires_grad) bp->ensure_grad();
            if (xp->requires_grad) xp->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* grad = self.grad.data() + r * d;
                const double* xh = xhat->data() + r * d;
                if (gp->requires_grad)
                    for (std::size_t i = 0; i < d; ++i) gp->grad[i] += grad[i] * xh[i];
                if (bp->requires_grad)
                    for (std::size_t i = 0; i < d; ++i) bp->grad[i] += grad[i];
                if (xp->requires_grad) {
                    double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                    for (std::size_t i = 0; i < d; ++i) {
                        double dxh = grad[i] * gp->values[i];
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * xh[i];
                    }
                    mean_dxh /= static_cast<double>(d);
                    mean_dxh_xh /= static_cast<double>(d);
                    double* xg = xp->grad.data() + r * d;
                    double isd = (*inv_sd)[r];
                    for (std::size_t i = 0; i < d; ++i) {
                        double dxh = grad[i] * gp->values[i];
                        xg[i] += isd * (dxh - mean_dxh - xh[i] * mean_dxh_xh);
                    }
                }
            }
        });
}

Tensor cross_entropy(const Tensor& lt, const std::vector<int>& labels) {
    const auto& l = req(lt, "cross_entropy");
    if (l->shape.size() != 2) throw ShapeError("cross_entropy: logits must be [B,C]");
    std::size_t B = l->shape[0], C = l->shape[1];
    if (B == 0) throw ValueError("cross_entropy: empty batch");
    if (labels.size() != B) throw ShapeError("cross_entropy: label count mismatch");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= C)
            throw ValueError("cross_entropy: class index " + std::to_string(y) +
                             " out of range [0," + std::to_string(C) + ")");
    auto probs = std::make_shared<std::vector<double>>(B * C);
    double total = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        const double* row = l->values.data() + b * C;
        double mx = *std::max_element(row, row + C);
        double z = 0.0;
        for (std::size_t c = 0; c < C; ++c) z += std::exp(row[c] - mx);
        double logz = std::log(z) + mx;
        for (std::size_t c = 0; c < C; ++c) (*probs)[b * C + c] = std::exp(row[c] - logz);
        total += logz - row[static_cast<std::size_t>(labels[b])];
    }
    total /= static_cast<double>(B);
    Node* lp = l.get();
    auto lab = std::make_shared<std::vector<int>>(labels);
    return make_node("cross_entropy", {}, {total}, {l}, [lp, probs, lab, B, C](Node& self) {
        if (!lp->requires_grad) return;
        lp->ensure_grad();
        double g = self.grad[0] / static_cast<double>(B);
        for (std::size_t b = 0; b < B; ++b) {
            double* lg = lp->grad.data() + b * C;
            const double* p = probs->data() + b * C;
            for (std::size_t c = 0; c < C; ++c) lg[c] += g * p[c];
            lg[static_cast<std::size_t>((*lab)[b])] -= g;
        }
    });
}

Tensor kl_divergence(const Tensor& st, const Tensor& tt, double temperature) {
    const auto& s = req(st, "kl_divergence");
    const auto& t = req(tt, "kl_divergence");
    if (s->shape != t->shape) throw ShapeError("kl_divergence: logit shapes must match");
    if (temperature <= 0) throw ValueError("kl_divergence: temperature must be positive");
    std::size_t C = s->shape.empty() ? 1 : s->shape.back();
    if (C < 2) throw ShapeError("kl_divergence: need at least two classes");
    std::size_t B = s->size() / C;
    if (B == 0) throw ValueError("kl_divergence: empty batch");
    constexpr double kClamp = 1e-12;

    auto sprob = std::make_shared<std::vector<double>>(B * C);
    auto glog = std::make_shared<std::vector<double>>(B * C);  // log s - log t per class
    auto rowf = std::make_shared<std::vector<double>>(B);
    auto softmax_row = [C](const double* row, double T, double* out) {
        double mx = -1e300;
        for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, row[c] / T);
        double z = 0.0;
        for (std::size_t c = 0; c < C; ++c) z += std::exp(row[c] / T - mx);
        double logz = std::log(z) + mx;
        for (std::size_t c = 0; c < C; ++c) out[c] = std::exp(row[c] / T - logz);
    };
    std::vector<double> tp(C);
    double total = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        softmax_row(s->values.data() + b * C, temperature, sprob->data() + b * C);
        softmax_row(t->values.data() + b * C, temperature, tp.data());
        double f = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            double sp = (*sprob)[b * C + c];
            double g = std::log(std::max(sp, kClamp)) - std::log(std::max(tp[c], kClamp));
            (*glog)[b * C + c] = g;
            f += sp * g;
        }
        (*rowf)[b] = f;
        total += f;
    }
    total *= temperature * temperature / static_cast<double>(B);

    Node* sp = s.get();
    double T = temperature;
    // Teacher logits are intentionally not a graph parent: the imitation
    // target is a constant for the student.
    return make_node("kl_divergence", {}, {total}, {s}, [sp, sprob, glog, rowf, B, C, T](Node& self) {
        if (!sp->requires_grad) return;
        sp->ensure_grad();
        // d/ds_i [T^2 * F] = T * S_i * (g_i - F), averaged over rows.
        double scale = self.grad[0] * T / static_cast<double>(B);
        for (std::size_t b = 0; b < B; ++b) {
            double f = (*rowf)[b];
            double* sg = sp->grad.data() + b * C;
            for (std::size_t c = 0; c < C; ++c) {
                double si = (*sprob)[b * C + c];
                sg[c] += scale * si * ((*glog)[b * C + c] - f);
            }
        }
    });
}

// ---- backward ----

namespace {

void topo_sort(Node* root, std::vector<Node*>& order) {
    // Iterative post-order; the graph can be deep for long training chains.
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx].get();
            ++idx;
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

}  // namespace

GradientMap backward(const Tensor& output) {
    const auto& out = req(output, "backward");
    if (out->size() != 1)
        throw ShapeError("backward: output must be scalar, got " + shape_str(out->shape));
    GradientMap map;
    if (!out->requires_grad) return map;

    std::vector<Node*> order;
    topo_sort(out.get(), order);

    out->ensure_grad();
    out->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->grad.empty()) n->ensure_grad();
        if (!n->leaf && n->backward_fn) n->backward_fn(*n);
    }
    for (Node* n : order) {
        if (n->leaf && n->requires_grad) {
            n->ensure_grad();
            check_finite("backward", n->grad);
            map.set(n->id, Tensor::from_data(n->shape, n->grad));
        }
        n->grad.clear();
    }
    return map;
}

Tensor GradientMap::grad_for(const Tensor& param) const {
    auto it = grads_.find(param.id());
    if (it == grads_.end()) return Tensor::zeros(param.shape());
    return it->second;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double step) {
    if (!(step > 0.0) || step > 1e-3) throw ValueError("grad_check: step must be in (0, 1e-3]");
    Tensor probe = Tensor::param(x.shape(), x.values());
    Tensor out = f(probe);
    if (out.size() != 1) throw ShapeError("grad_check: f must return a scalar");
    GradientMap grads = backward(out);
    Tensor analytic = grads.grad_for(probe);

    std::vector<double> base = x.values();
    double worst = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) {
        auto eval_at = [&](double v) {
            std::vector<double> d = base;
            d[i] = v;
            return f(Tensor::from_data(x.shape(), std::move(d))).item();
        };
        double fp = eval_at(base[i] + step);
        double fm = eval_at(base[i] - step);
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("grad_check: f non-finite at perturbed point");
        double numeric = (fp - fm) / (2.0 * step);
        double an = analytic.at(i);
        double err = std::fabs(an - numeric) / std::max(1.0, std::fabs(an));
        worst = std::max(worst, err);
    }
    return worst;
}

Tensor make_dropout_mask(const Shape& shape, double p, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw ValueError("dropout: p must be in [0,1)");
    std::size_t n = shape_size(shape);
    std::vector<double> mask(n);
    double keep = 1.0 - p;
    for (std::size_t i = 0; i < n; ++i) mask[i] = rng.uniform() < p ? 0.0 : 1.0 / keep;
    return Tensor::from_data(shape, std::move(mask));
}

}  // namespace imml
