#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ssnas/kernels.hpp"
#include "ssnas/tensor.hpp"

namespace ssnas::autodiff {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the dynamically built reverse-mode tape.
struct Node {
    Tensor value;
    Tensor grad; // allocated on first accumulation
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad() {
        if (grad.numel() == 0) grad = Tensor::zeros(value.shape());
        return grad;
    }
    void clear_grad() { grad = Tensor(); }
};

/// Value-semantic handle to a graph node. Copying shares the node.
class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : node_(std::move(n)) {}

    /// Leaf holding data; set requires_grad for trainable parameters.
    static Var leaf(Tensor value, bool requires_grad);

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    Tensor& ensure_grad() { return node_->ensure_grad(); }
    void clear_grad() { node_->clear_grad(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const std::vector<int>& shape() const { return node_->value.shape(); }
    NodePtr node() const { return node_; }

    double scalar() const { return node_->value[0]; }

private:
    NodePtr node_;
};

/// While a guard is alive, ops record no tape (values only).
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

/// Runs reverse-mode accumulation from a scalar root.
void backward(const Var& root);

Var constant(Tensor t);
Var detach(const Var& x);

Var conv2d(const Var& x, const Var& w, const kernels::Conv2dSpec& spec);
Var linear(const Var& x, const Var& w);
Var bmm(const Var& a, const Var& b, bool trans_a, bool trans_b);

Var relu(const Var& x);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& x, double c);
Var add_scalar(const Var& x, double c);
Var log_op(const Var& x);
Var sqrt_op(const Var& x);
Var square(const Var& x);
Var clamp_min(const Var& x, double c);

Var weighted_sum(const std::vector<Var>& xs, const Var& w);
Var sum_scalars(const std::vector<Var>& xs);

Var softmax_vec(const Var& x);
Var softmax_channel(const Var& x);

Var avgpool3x3(const Var& x);
Var maxpool3x3(const Var& x);
Var upsample_nearest(const Var& x, int factor);

Var map_to_tokens(const Var& x);
Var tokens_to_map(const Var& x, int height, int width);
Var col_gather(const Var& x, std::vector<int> cols);
Var col_merge(const Var& base, const Var& sub, std::vector<int> cols);
Var concat_channels(const std::vector<Var>& xs);
Var channel_slice(const Var& x, int c0, int count);
Var div_bcast(const Var& numer, const Var& denom, double eps);
Var sum_tokens(const Var& x);
Var reshape(const Var& x, std::vector<int> shape);

Var sum_all(const Var& x);
Var mean_all(const Var& x);
/// Row-wise dot product of two (R,C) matrices -> (R,).
Var rows_dot(const Var& a, const Var& b);
/// p (B,C,H,W), labels (B,H,W) in [0,C) -> selected probabilities (B,1,H,W).
Var gather_class(const Var& p, const IntMask& labels);
/// x (B,C,H,W) * mask (B,1,H,W), broadcast over channels.
Var mask_mul(const Var& x, Tensor mask);

} // namespace ssnas::autodiff
