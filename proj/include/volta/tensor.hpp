#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "volta/error.hpp"

namespace volta {

struct TensorNode;

// Dense 64-bit float tensor with reverse-mode autodiff. Row-major flat
// storage; rank 0 (scalar), 1 or 2. Copies are shallow handles to the same
// node, which is what lets ops record the graph.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                            bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor row(std::vector<double> data, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const;
    int rank() const;
    std::size_t size() const;
    int rows() const; // rank-2 only
    int cols() const;

    bool requires_grad() const;
    const std::vector<double>& data() const;
    std::vector<double>& data();
    bool has_grad() const;
    const std::vector<double>& grad() const;
    void zero_grad();

    double value() const; // rank-0
    double at(int i) const;
    double at(int i, int j) const;
    void set(int i, double v);
    void set(int i, int j, double v);

    // Same data, fresh leaf node with no history and no grad.
    Tensor detached() const;

    TensorNode* node() const { return node_.get(); }
    const std::shared_ptr<TensorNode>& ptr() const { return node_; }

private:
    std::shared_ptr<TensorNode> node_;
};

struct TensorNode {
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad; // sized lazily on first accumulation
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn; // pulls from this->grad into parents
    const char* op = "leaf";

    std::size_t size() const { return data.size(); }
    void ensure_grad();
    void add_grad(std::size_t i, double v);
};

// Reverse-mode replay record: every reachable node exactly once, parents
// before children; the root is last. Confined to one training step.
struct ComputationRecord {
    std::vector<TensorNode*> order;

    static ComputationRecord build(const Tensor& root);
    // Clears interior grads, seeds the root with 1 and replays in reverse.
    // Leaf gradients accumulate across repeated calls.
    void run_backward();
};

// Thread-local switch: while disabled, ops compute forward values but record
// no graph. Used by evaluation/generation loops.
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// --- op inventory -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double c);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor bias_add(const Tensor& x, const Tensor& bias); // bias row broadcast over rows
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, int start, int len);
Tensor reshape(const Tensor& x, std::vector<int> new_shape);
Tensor softmax(const Tensor& x, int axis);
Tensor mean_all(const Tensor& x);
Tensor sum_all(const Tensor& x);
Tensor mean_axis(const Tensor& x, int axis);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor clamp_min(const Tensor& x, double floor);
Tensor embedding(const Tensor& table, const std::vector<int>& ids);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     int ignore_id);

// Backpropagates d(loss)/d(leaf) into every requires_grad leaf. The loss must
// be a scalar; calling twice without zero_grad accumulates.
void backward(const Tensor& loss);

// Max over elements of |autodiff - central difference| / max(1, |autodiff|).
// f is evaluated twice at x to verify determinism (bit-identical outputs).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double eps);

std::string shape_str(const std::vector<int>& shape);

} // namespace volta
