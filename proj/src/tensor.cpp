#include "volta/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

namespace volta {

namespace {

std::size_t shape_size(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

void check_shape(const std::vector<int>& shape) {
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor dimension must be positive, got " + shape_str(shape));
    }
}

std::shared_ptr<TensorNode> make_leaf(std::vector<int> shape, std::vector<double> data,
                                      bool requires_grad) {
    check_shape(shape);
    if (shape_size(shape) != data.size()) {
        throw DimensionError("data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return n;
}

thread_local bool g_grad_enabled = true;

std::shared_ptr<TensorNode> make_op_node(std::vector<int> shape,
                                         std::vector<std::shared_ptr<TensorNode>> parents,
                                         const char* op) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data.assign(shape_size(n->shape), 0.0);
    n->op = op;
    if (g_grad_enabled) {
        n->parents = std::move(parents);
        for (const auto& p : n->parents) {
            if (p->requires_grad) {
                n->requires_grad = true;
                break;
            }
        }
    }
    return n;
}

TensorNode& deref(const Tensor& t) {
    if (!t.defined()) throw ContractError("operation on undefined tensor");
    return *t.node();
}

void require_rank2(const TensorNode& n, const char* op) {
    if (n.shape.size() != 2) {
        throw DimensionError(std::string(op) + ": expected rank-2 tensor, got shape " +
                             shape_str(n.shape));
    }
}

} // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

void TensorNode::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void TensorNode::add_grad(std::size_t i, double v) { grad[i] += v; }

// --- Tensor handle -----------------------------------------------------------

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    check_shape(shape);
    std::vector<double> data(shape_size(shape), 0.0);
    return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    check_shape(shape);
    std::vector<double> data(shape_size(shape), value);
    return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(make_leaf({}, {value}, requires_grad));
}

Tensor Tensor::row(std::vector<double> data, bool requires_grad) {
    const int n = static_cast<int>(data.size());
    return Tensor(make_leaf({n}, std::move(data), requires_grad));
}

const std::vector<int>& Tensor::shape() const { return deref(*this).shape; }
int Tensor::rank() const { return static_cast<int>(deref(*this).shape.size()); }
std::size_t Tensor::size() const { return deref(*this).data.size(); }

int Tensor::rows() const {
    require_rank2(deref(*this), "rows");
    return deref(*this).shape[0];
}

int Tensor::cols() const {
    require_rank2(deref(*this), "cols");
    return deref(*this).shape[1];
}

bool Tensor::requires_grad() const { return deref(*this).requires_grad; }
const std::vector<double>& Tensor::data() const { return deref(*this).data; }
std::vector<double>& Tensor::data() { return deref(*this).data; }

bool Tensor::has_grad() const {
    const TensorNode& n = deref(*this);
    return n.grad.size() == n.data.size();
}

const std::vector<double>& Tensor::grad() const {
    const TensorNode& n = deref(*this);
    if (n.grad.size() != n.data.size()) throw ContractError("gradient not populated; call backward() first");
    return n.grad;
}

void Tensor::zero_grad() {
    TensorNode& n = deref(*this);
    n.grad.assign(n.data.size(), 0.0);
}

double Tensor::value() const {
    const TensorNode& n = deref(*this);
    if (n.data.size() != 1) throw DimensionError("value(): tensor is not a scalar, shape " + shape_str(n.shape));
    return n.data[0];
}

double Tensor::at(int i) const {
    const TensorNode& n = deref(*this);
    if (n.shape.size() != 1) throw DimensionError("at(i): tensor is not rank-1");
    if (i < 0 || i >= n.shape[0]) throw IndexError("at(i): index out of range");
    return n.data[static_cast<std::size_t>(i)];
}

double Tensor::at(int i, int j) const {
    const TensorNode& n = deref(*this);
    require_rank2(n, "at");
    if (i < 0 || i >= n.shape[0] || j < 0 || j >= n.shape[1]) throw IndexError("at(i,j): index out of range");
    return n.data[static_cast<std::size_t>(i) * n.shape[1] + j];
}

void Tensor::set(int i, double v) {
    TensorNode& n = deref(*this);
    if (n.shape.size() != 1) throw DimensionError("set(i): tensor is not rank-1");
    if (i < 0 || i >= n.shape[0]) throw IndexError("set(i): index out of range");
    n.data[static_cast<std::size_t>(i)] = v;
}

void Tensor::set(int i, int j, double v) {
    TensorNode& n = deref(*this);
    require_rank2(n, "set");
    if (i < 0 || i >= n.shape[0] || j < 0 || j >= n.shape[1]) throw IndexError("set(i,j): index out of range");
    n.data[static_cast<std::size_t>(i) * n.shape[1] + j] = v;
}

Tensor Tensor::detached() const {
    const TensorNode& n = deref(*this);
    return Tensor(make_leaf(n.shape, n.data, false));
}

// --- graph replay ------------------------------------------------------------

ComputationRecord ComputationRecord::build(const Tensor& root) {
    ComputationRecord rec;
    // Iterative post-order DFS; each node appears once, parents before children.
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    TensorNode* r = root.node();
    if (!r) throw ContractError("backward: undefined tensor");
    stack.emplace_back(r, 0);
    visited.insert(r);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode* p = node->parents[next++].get();
            if (visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            rec.order.push_back(node);
            stack.pop_back();
        }
    }
    return rec;
}

void ComputationRecord::run_backward() {
    if (order.empty()) return;
    TensorNode* root = order.back();
    // Interior grads are scratch for this replay; leaf grads persist so that
    // repeated calls accumulate.
    for (TensorNode* n : order) {
        if (!n->parents.empty()) n->grad.assign(n->data.size(), 0.0);
    }
    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backward_fn && n->requires_grad) n->backward_fn(*n);
    }
}

void backward(const Tensor& loss) {
    if (!loss.defined()) throw ContractError("backward: undefined tensor");
    if (loss.size() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    auto rec = ComputationRecord::build(loss);
    rec.run_backward();
}

// --- elementwise -------------------------------------------------------------

namespace {

void require_same_shape(const TensorNode& a, const TensorNode& b, const char* op) {
    if (a.shape != b.shape) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                             " vs " + shape_str(b.shape));
    }
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    TensorNode& na = deref(a);
    TensorNode& nb = deref(b);
    require_same_shape(na, nb, "add");
    auto out = make_op_node(na.shape, {a.ptr(), b.ptr()}, "add");
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = na.data[i] + nb.data[i];
    if (out->requires_grad) {
        out->backward_fn = [](TensorNode& o) {
            for (int side = 0; side < 2; ++side) {
                TensorNode& p = *o.parents[side];
                if (!p.requires_grad) continue;
                p.ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i) p.grad[i] += o.grad[i];
            }
        };
    }
    return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    TensorNode& na = deref(a);
    TensorNode& nb = deref(b);
    require_same_shape(na, nb, "sub");
    auto out = make_op_node(na.shape, {a.ptr(), b.ptr()}, "sub");
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = na.data[i] - nb.data[i];
    if (out->requires_grad) {
        out->backward_fn = [](TensorNode& o) {
            TensorNode& pa = *o.parents[0];
            TensorNode& pb = *o.parents[1];
            if (pa.requires_grad) {
                pa.ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i];
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i) pb.grad[i] -= o.grad[i];
            }
        };
    }
    return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    TensorNode& na = deref(a);
    TensorNode& nb = deref(b);
    require_same_shape(na, nb, "mul");
    auto out = make_op_node(na.shape, {a.ptr(), b.ptr()}, "mul");
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = na.data[i] * nb.data[i];
    if (out->requires_grad) {
        out->backward_fn = [](TensorNode& o) {
            TensorNode& pa = *o.parents[0];
            TensorNode& pb = *o.parents[1];
            if (pa.requires_grad) {
                pa.ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i] * pb.data[i];
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i) pb.grad[i] += o.grad[i] * pa.data[i];
            }
        };
    }
    return Tensor(out);
}

Tensor scale(const Tensor& x, double s) {
    TensorNode& nx = deref(x);
    auto out = make_op_node(nx.shape, {x.ptr()}, "scale");
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = nx.data[i] * s;
    if (out->requires_grad) {
        out->backward_fn = [s](TensorNode& o) {
            TensorNode& p = *o.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) p.grad[i] += o.grad[i] * s;
        };
    }
    return Tensor(out);
}

Tensor add_scalar(const Tensor& x, double c) {
    TensorNode& nx = deref(x);
    auto out = make_op_node(nx.shape, {x.ptr()}, "add_scalar");
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = nx.data[i] + c;
    if (out->requires_grad) {
        out->backward_fn = [](TensorNode& o) {
            TensorNode& p = *o.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) p.grad[i] += o.grad[i];
        };
    }
    return Tensor(out);
}

namespace {

template <typename Fwd, typename Grad>
Tensor unary_op(const Tensor& x, const char* name, Fwd fwd, Grad dydx) {
    TensorNode& nx = deref(x);
    auto out = make_op_node(nx.shape, {x.ptr()}, name);
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = fwd(nx.data[i]);
    if (out->requires_grad) {
        out->backward_fn = [dydx](TensorNode& o) {
            TensorNode& p = *o.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                p.grad[i] += o.grad[i] * dydx(p.data[i], o.data[i]);
            }
        };
    }
    return Tensor(out);
}

} // namespace

Tensor exp(const Tensor& x) {
    return unary_op(
        x, "exp", [](double v) { return std::exp(v); },
        [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
    return unary_op(
        x, "log", [](double v) { return std::log(v); },
        [](double v, double) { return 1.0 / v; });
}

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        x, "sigmoid",
        [](double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(const Tensor& x) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    return unary_op(
        x, "gelu",
        [=](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
        [=](double v, double) {
            return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(-0.5 * v * v);
        });
}

Tensor clamp_min(const Tensor& x, double floor) {
    return unary_op(
        x, "clamp_min", [floor](double v) { return v > floor ? v : floor; },
        [floor](double v, double) { return v > floor ? 1.0 : 0.0; });
}

// --- linear algebra ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    TensorNode& na = deref(a);
    TensorNode& nb = deref(b);
    require_rank2(na, "matmul");
    require_rank2(nb, "matmul");
    if (na.shape[1] != nb.shape[0]) {
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(na.shape) +
                             " vs " + shape_str(nb.shape));
    }
    const int m = na.shape[0], k = na.shape[1], n = nb.shape[1];
    auto out = make_op_node({m, n}, {a.ptr(), b.ptr()}, "matmul");
    const double* A = na.data.data();
    const double* B = nb.data.data();
    double* C = out->data.data();
    for (int i = 0; i < m; ++i) {
        for (int l = 0; l < k; ++l) {
            const double av = A[i * k + l];
            if (av == 0.0) continue;
            const double* brow = B + l * n;
            double* crow = C + i * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    if (out->requires_grad) {
        out->backward_fn = [m, k, n](TensorNode& o) {
            TensorNode& pa = *o.parents[0];
            TensorNode& pb = *o.parents[1];
            const double* G = o.grad.data();
            if (pa.requires_grad) {
                pa.ensure_grad();
                const double* B = pb.data.data();
                for (int i = 0; i < m; ++i) {
                    for (int l = 0; l < k; ++l) {
                        const double* grow = G + i * n;
                        const double* brow = B + l * n;
                        double s = 0.0;
                        for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
                        pa.grad[i * k + l] += s;
                    }
                }
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                const double* A = pa.data.data();
                for (int l = 0; l < k; ++l) {
                    for (int i = 0; i < m; ++i) {
                        const double av = A[i * k + l];
                        if (av == 0.0) continue;
                        const double* grow = G + i * n;
                        double* brow = pb.grad.data() + l * n;
                        for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
                    }
                }
            }
        };
    }
    return Tensor(out);
}

Tensor transpose(const Tensor& x) {
    TensorNode& nx = deref(x);
    require_rank2(nx, "transpose");
    const int m = nx.shape[0], n = nx.shape[1];
    auto out = make_op_node({n, m}, {x.ptr()}, "transpose");
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out->data[static_cast<std::size_t>(j) * m + i] = nx.data[static_cast<std::size_t>(i) * n + j];
    if (out->requires_grad) {
        out->backward_fn = [m, n](TensorNode& o) {
            TensorNode& p = *o.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < m; ++i) p.grad[static_cast<std::size_t>(i) * n + j] += o.grad[static_cast<std::size_t>(j) * m + i];
        };
    }
    return Tensor(out);
}

Tensor bias_add(const Tensor& x, const Tensor& bias) {
    TensorNode& nx = deref(x);
    TensorNode& nb = deref(bias);
    require_rank2(nx, "bias_add");
    if (nb.shape.size() != 1 || nb.shape[0] != nx.shape[1]) {
        throw DimensionError("bias_add: bias shape " + shape_str(nb.shape) +
                             " does not match columns of " + shape_str(nx.shape));
    }
    const int m = nx.shape[0], n = nx.shape[1];
    auto out = make_op_node(nx.shape, {x.ptr(), bias.ptr()}, "bias_add");
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out->data[static_cast<std::size_t>(i) * n + j] = nx.data[static_cast<std::size_t>(i) * n + j] + nb.data[j];
    if (out->requires_grad) {
        out->backward_fn = [m, n](TensorNode& o) {
            TensorNode& px = *o.parents[0];
            TensorNode& pb = *o.parents[1];
            if (px.requires_grad) {
                px.ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i) px.grad[i] += o.grad[i];
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) pb.grad[j] += o.grad[static_cast<std::size_t>(i) * n + j];
            }
        };
    }
    return Tensor(out);
}

// --- shape ops ----------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw DegenerateInputError("concat: no parts");
    const int rank = parts[0].rank();
    if (rank < 1 || rank > 2 || axis < 0 || axis >= rank) {
        throw DimensionError("concat: invalid axis " + std::to_string(axis) + " for rank " +
                             std::to_string(rank));
    }
    std::vector<int> out_shape = parts[0].shape();
    for (std::size_t i = 1; i < parts.size(); ++i) {
        const auto& s = parts[i].shape();
        if (static_cast<int>(s.size()) != rank) throw DimensionError("concat: rank mismatch");
        for (int d = 0; d < rank; ++d) {
            if (d == axis) continue;
            if (s[d] != out_shape[d]) {
                throw DimensionError("concat: shape mismatch " + shape_str(out_shape) + " vs " +
                                     shape_str(s));
            }
        }
        out_shape[axis] += s[axis];
    }
    std::vector<std::shared_ptr<TensorNode>> ps;
    ps.reserve(parts.size());
    for (const auto& p : parts) ps.push_back(p.ptr());
    auto out = make_op_node(out_shape, std::move(ps), "concat");

    // Uniform copy treating rank-1 as a single row when axis==0.
    if (rank == 1 || axis == 0) {
        std::size_t off = 0;
        for (const auto& p : parts) {
            const auto& d = p.data();
            std::copy(d.begin(), d.end(), out->data.begin() + off);
            off += d.size();
        }
        if (out->requires_grad) {
            out->backward_fn = [](TensorNode& o) {
                std::size_t off = 0;
                for (auto& pp : o.parents) {
                    TensorNode& p = *pp;
                    if (p.requires_grad) {
                        p.ensure_grad();
                        for (std::size_t i = 0; i < p.data.size(); ++i) p.grad[i] += o.grad[off + i];
                    }
                    off += p.data.size();
                }
            };
        }
    } else { // rank 2, axis 1
        const int m = out_shape[0], n = out_shape[1];
        int coff = 0;
        for (const auto& p : parts) {
            const int pc = p.shape()[1];
            const auto& d = p.data();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < pc; ++j)
                    out->data[static_cast<std::size_t>(i) * n + coff + j] = d[static_cast<std::size_t>(i) * pc + j];
            coff += pc;
        }
        if (out->requires_grad) {
            out->backward_fn = [m, n](TensorNode& o) {
                int coff = 0;
                for (auto& pp : o.parents) {
                    TensorNode& p = *pp;
                    const int pc = p.shape[1];
                    if (p.requires_grad) {
                        p.ensure_grad();
                        for (int i = 0; i < m; ++i)
                            for (int j = 0; j < pc; ++j)
                                p.grad[static_cast<std::size_t>(i) * pc + j] += o.grad[static_cast<std::size_t>(i) * n + coff + j];
                    }
                    coff += pc;
                }
            };
        }
    }
    return Tensor(out);
}

Tensor slice(const Tensor& x, int axis, int start, int len) {
    TensorNode& nx = deref(x);
    const int rank = static_cast<int>(nx.shape.size());
    if (rank < 1 || rank > 2 || axis < 0 || axis >= rank) {
        throw DimensionError("slice: invalid axis " + std::to_string(axis) + " for shape " +
                             shape_str(nx.shape));
    }
    if (len <= 0 || start < 0 || start + len > nx.shape[axis]) {
        throw IndexError("slice: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") out of bounds for shape " +
                         shape_str(nx.shape));
    }
    std::vector<int> out_shape = nx.shape;
    out_shape[axis] = len;
    auto out = make_op_node(out_shape, {x.ptr()}, "slice");
    const int n = rank == 2 ? nx.shape[1] : 1;
    if (rank == 1 || axis == 0) {
        const std::size_t off = static_cast<std::size_t>(start) * n;
        std::copy(nx.data.begin() + off, nx.data.begin() + off + out->data.size(), out->data.begin());
        if (out->requires_grad) {
            out->backward_fn = [off](TensorNode& o) {
                TensorNode& p = *o.parents[0];
                if (!p.requires_grad) return;
                p.ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i) p.grad[off + i] += o.grad[i];
            };
        }
    } else { // rank 2, axis 1
        const int m = nx.shape[0];
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < len; ++j)
                out->data[static_cast<std::size_t>(i) * len + j] = nx.data[static_cast<std::size_t>(i) * n + start + j];
        if (out->requires_grad) {
            out->backward_fn = [m, n, start, len](TensorNode& o) {
                TensorNode& p = *o.parents[0];
                if (!p.requires_grad) return;
                p.ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < len; ++j)
                        p.grad[static_cast<std::size_t>(i) * n + start + j] += o.grad[static_cast<std::size_t>(i) * len + j];
            };
        }
    }
    return Tensor(out);
}

Tensor reshape(const Tensor& x, std::vector<int> new_shape) {
    TensorNode& nx = deref(x);
    check_shape(new_shape);
    if (shape_size(new_shape) != nx.data.size()) {
        throw DimensionError("reshape: cannot view " + shape_str(nx.shape) + " as " +
                             shape_str(new_shape));
    }
    auto out = make_op_node(std::move(new_shape), {x.ptr()}, "reshape");
    out->data = nx.data;
    if (out->requires_grad) {
        out->backward_fn = [](TensorNode& o) {
            TensorNode& p = *o.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) p.grad[i] += o.grad[i];
        };
    }
    return Tensor(out);
}

// --- reductions ----------------------------------------------------------------

Tensor sum_all(const Tensor& x) {
    TensorNode& nx = deref(x);
    auto out = make_op_node({}, {x.ptr()}, "sum_all");
    double s = 0.0;
    for (double v : nx.data) s += v;
    out->data[0] = s;
    if (out->requires_grad) {
        out->backward_fn = [](TensorNode& o) {
            TensorNode& p = *o.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            const double g = o.grad[0];
            for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
        };
    }
    return Tensor(out);
}

Tensor mean_all(const Tensor& x) {
    TensorNode& nx = deref(x);
    const double inv = 1.0 / static_cast<double>(nx.data.size());
    auto out = make_op_node({}, {x.ptr()}, "mean_all");
    double s = 0.0;
    for (double v : nx.data) s += v;
    out->data[0] = s * inv;
    if (out->requires_grad) {
        out->backward_fn = [inv](TensorNode& o) {
            TensorNode& p = *o.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            const double g = o.grad[0] * inv;
            for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
        };
    }
    return Tensor(out);
}

Tensor mean_axis(const Tensor& x, int axis) {
    TensorNode& nx = deref(x);
    require_rank2(nx, "mean_axis");
    if (axis != 0 && axis != 1) throw DimensionError("mean_axis: invalid axis " + std::to_string(axis));
    const int m = nx.shape[0], n = nx.shape[1];
    const int out_len = axis == 0 ? n : m;
    auto out = make_op_node({out_len}, {x.ptr()}, "mean_axis");
    if (axis == 0) {
        const double inv = 1.0 / m;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) out->data[j] += nx.data[static_cast<std::size_t>(i) * n + j];
        for (int j = 0; j < n; ++j) out->data[j] *= inv;
        if (out->requires_grad) {
            out->backward_fn = [m, n, inv](TensorNode& o) {
                TensorNode& p = *o.parents[0];
                if (!p.requires_grad) return;
                p.ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) p.grad[static_cast<std::size_t>(i) * n + j] += o.grad[j] * inv;
            };
        }
    } else {
        const double inv = 1.0 / n;
        for (int i = 0; i < m; ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += nx.data[static_cast<std::size_t>(i) * n + j];
            out->data[i] = s * inv;
        }
        if (out->requires_grad) {
            out->backward_fn = [m, n, inv](TensorNode& o) {
                TensorNode& p = *o.parents[0];
                if (!p.requires_grad) return;
                p.ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) p.grad[static_cast<std::size_t>(i) * n + j] += o.grad[i] * inv;
            };
        }
    }
    return Tensor(out);
}

// --- softmax -------------------------------------------------------------------

namespace {

// Stable softmax over `count` elements with the given stride.
void softmax_lane(const double* in, double* out, int count, int stride) {
    double mx = in[0];
    for (int i = 1; i < count; ++i) mx = std::max(mx, in[static_cast<std::size_t>(i) * stride]);
    double denom = 0.0;
    for (int i = 0; i < count; ++i) {
        const double e = std::exp(in[static_cast<std::size_t>(i) * stride] - mx);
        out[static_cast<std::size_t>(i) * stride] = e;
        denom += e;
    }
    const double inv = 1.0 / denom;
    for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i) * stride] *= inv;
}

void softmax_lane_backward(const double* y, const double* gy, double* gx, int count, int stride) {
    double dot = 0.0;
    for (int i = 0; i < count; ++i) {
        const std::size_t k = static_cast<std::size_t>(i) * stride;
        dot += y[k] * gy[k];
    }
    for (int i = 0; i < count; ++i) {
        const std::size_t k = static_cast<std::size_t>(i) * stride;
        gx[k] += y[k] * (gy[k] - dot);
    }
}

} // namespace

Tensor softmax(const Tensor& x, int axis) {
    TensorNode& nx = deref(x);
    const int rank = static_cast<int>(nx.shape.size());
    if (rank < 1 || rank > 2 || axis < 0 || axis >= rank) {
        throw DimensionError("softmax: invalid axis " + std::to_string(axis) + " for shape " +
                             shape_str(nx.shape));
    }
    auto out = make_op_node(nx.shape, {x.ptr()}, "softmax");
    const int m = rank == 2 ? nx.shape[0] : 1;
    const int n = rank == 2 ? nx.shape[1] : nx.shape[0];
    const bool by_row = (rank == 1) || (axis == 1);
    if (by_row) {
        for (int i = 0; i < m; ++i)
            softmax_lane(nx.data.data() + static_cast<std::size_t>(i) * n,
                         out->data.data() + static_cast<std::size_t>(i) * n, n, 1);
    } else {
        for (int j = 0; j < n; ++j) softmax_lane(nx.data.data() + j, out->data.data() + j, m, n);
    }
    if (out->requires_grad) {
        out->backward_fn = [m, n, by_row](TensorNode& o) {
            TensorNode& p = *o.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            if (by_row) {
                for (int i = 0; i < m; ++i) {
                    const std::size_t off = static_cast<std::size_t>(i) * n;
                    softmax_lane_backward(o.data.data() + off, o.grad.data() + off, p.grad.data() + off, n, 1);
                }
            } else {
                for (int j = 0; j < n; ++j)
                    softmax_lane_backward(o.data.data() + j, o.grad.data() + j, p.grad.data() + j, m, n);
            }
        };
    }
    return Tensor(out);
}

// --- embedding -------------------------------------------------------------------

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
    TensorNode& nt = deref(table);
    require_rank2(nt, "embedding");
    const int v = nt.shape[0], d = nt.shape[1];
    for (int id : ids) {
        if (id < 0 || id >= v) {
            throw IndexError("embedding: id " + std::to_string(id) + " outside table of " +
                             std::to_string(v) + " rows");
        }
    }
    const int t = static_cast<int>(ids.size());
    if (t == 0) throw DegenerateInputError("embedding: empty id list");
    auto out = make_op_node({t, d}, {table.ptr()}, "embedding");
    for (int i = 0; i < t; ++i)
        std::copy(nt.data.begin() + static_cast<std::size_t>(ids[i]) * d,
                  nt.data.begin() + static_cast<std::size_t>(ids[i] + 1) * d,
                  out->data.begin() + static_cast<std::size_t>(i) * d);
    if (out->requires_grad) {
        out->backward_fn = [ids, d](TensorNode& o) {
            TensorNode& p = *o.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (std::size_t i = 0; i < ids.size(); ++i)
                for (int j = 0; j < d; ++j)
                    p.grad[static_cast<std::size_t>(ids[i]) * d + j] += o.grad[i * d + j];
        };
    }
    return Tensor(out);
}

// --- layer norm --------------------------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    TensorNode& nx = deref(x);
    TensorNode& ng = deref(gain);
    TensorNode& nb = deref(bias);
    const int rank = static_cast<int>(nx.shape.size());
    if (rank < 1 || rank > 2) throw DimensionError("layer_norm: rank must be 1 or 2");
    const int m = rank == 2 ? nx.shape[0] : 1;
    const int d = rank == 2 ? nx.shape[1] : nx.shape[0];
    if (ng.shape != std::vector<int>{d} || nb.shape != std::vector<int>{d}) {
        throw DimensionError("layer_norm: gain/bias must have shape [" + std::to_string(d) + "]");
    }
    auto out = make_op_node(nx.shape, {x.ptr(), gain.ptr(), bias.ptr()}, "layer_norm");
    std::vector<double> inv_std(m), means(m);
    for (int i = 0; i < m; ++i) {
        const double* xr = nx.data.data() + static_cast<std::size_t>(i) * d;
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += xr[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= d;
        const double istd = 1.0 / std::sqrt(var + eps);
        means[i] = mean;
        inv_std[i] = istd;
        double* yr = out->data.data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) yr[j] = ng.data[j] * (xr[j] - mean) * istd + nb.data[j];
    }
    if (out->requires_grad) {
        out->backward_fn = [m, d, means, inv_std](TensorNode& o) {
            TensorNode& px = *o.parents[0];
            TensorNode& pg = *o.parents[1];
            TensorNode& pb = *o.parents[2];
            if (px.requires_grad) px.ensure_grad();
            if (pg.requires_grad) pg.ensure_grad();
            if (pb.requires_grad) pb.ensure_grad();
            for (int i = 0; i < m; ++i) {
                const std::size_t off = static_cast<std::size_t>(i) * d;
                const double* xr = px.data.data() + off;
                const double* gy = o.grad.data() + off;
                const double istd = inv_std[i];
                const double mean = means[i];
                if (pg.requires_grad || pb.requires_grad) {
                    for (int j = 0; j < d; ++j) {
                        const double xhat = (xr[j] - mean) * istd;
                        if (pg.requires_grad) pg.grad[j] += gy[j] * xhat;
                        if (pb.requires_grad) pb.grad[j] += gy[j];
                    }
                }
                if (px.requires_grad) {
                    // dxhat = gy * gain; dx = istd * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
                    double s1 = 0.0, s2 = 0.0;
                    for (int j = 0; j < d; ++j) {
                        const double dxh = gy[j] * pg.data[j];
                        const double xhat = (xr[j] - mean) * istd;
                        s1 += dxh;
                        s2 += dxh * xhat;
                    }
                    s1 /= d;
                    s2 /= d;
                    for (int j = 0; j < d; ++j) {
                        const double dxh = gy[j] * pg.data[j];
                        const double xhat = (xr[j] - mean) * istd;
                        px.grad[off + j] += istd * (dxh - s1 - xhat * s2);
                    }
                }
            }
        };
    }
    return Tensor(out);
}

// --- cross entropy -------------------------------------------------------------------

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, int ignore_id) {
    TensorNode& nl = deref(logits);
    require_rank2(nl, "cross_entropy");
    const int n = nl.shape[0], v = nl.shape[1];
    if (static_cast<int>(targets.size()) != n) {
        throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                             " targets for " + std::to_string(n) + " rows");
    }
    int count = 0;
    for (int t : targets) {
        if (t == ignore_id) continue;
        if (t < 0 || t >= v) {
            throw IndexError("cross_entropy: target id " + std::to_string(t) +
                             " outside vocabulary of size " + std::to_string(v));
        }
        ++count;
    }
    if (count == 0) throw DegenerateInputError("cross_entropy: every position is ignored");
    auto out = make_op_node({}, {logits.ptr()}, "cross_entropy");
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        if (targets[i] == ignore_id) continue;
        const double* row = nl.data.data() + static_cast<std::size_t>(i) * v;
        double mx = row[0];
        for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int j = 0; j < v; ++j) denom += std::exp(row[j] - mx);
        total += mx + std::log(denom) - row[targets[i]];
    }
    out->data[0] = total / count;
    if (out->requires_grad) {
        out->backward_fn = [n, v, targets, ignore_id, count](TensorNode& o) {
            TensorNode& p = *o.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            const double g = o.grad[0] / count;
            for (int i = 0; i < n; ++i) {
                if (targets[i] == ignore_id) continue;
                const double* row = p.data.data() + static_cast<std::size_t>(i) * v;
                double* grow = p.grad.data() + static_cast<std::size_t>(i) * v;
                double mx = row[0];
                for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
                double denom = 0.0;
                for (int j = 0; j < v; ++j) denom += std::exp(row[j] - mx);
                const double inv = 1.0 / denom;
                for (int j = 0; j < v; ++j) {
                    const double soft = std::exp(row[j] - mx) * inv;
                    grow[j] += g * (soft - (j == targets[i] ? 1.0 : 0.0));
                }
            }
        };
    }
    return Tensor(out);
}

// --- gradient checking ------------------------------------------------------------------

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
    if (eps <= 0.0) throw ContractError("grad_check: eps must be positive");
    const std::vector<int> shape = x.shape();
    const std::vector<double> base = x.data();

    Tensor probe = Tensor::from_data(shape, base, true);
    Tensor y1 = f(probe);
    {
        Tensor again = Tensor::from_data(shape, base, true);
        Tensor y2 = f(again);
        if (y1.shape() != y2.shape() || y1.data() != y2.data()) {
            throw VerificationError("grad_check: f is not deterministic across probe evaluations");
        }
    }
    if (y1.size() != 1) throw ContractError("grad_check: f must return a scalar");
    backward(y1);
    const std::vector<double> autodiff =
        probe.has_grad() ? probe.grad() : std::vector<double>(base.size(), 0.0);

    double worst = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) {
        std::vector<double> lo = base, hi = base;
        hi[i] += eps;
        lo[i] -= eps;
        const double fhi = f(Tensor::from_data(shape, hi, false)).value();
        const double flo = f(Tensor::from_data(shape, lo, false)).value();
        const double fd = (fhi - flo) / (2.0 * eps);
        const double rel = std::abs(autodiff[i] - fd) / std::max(1.0, std::abs(autodiff[i]));
        worst = std::max(worst, rel);
    }
    return worst;
}

} // namespace volta
