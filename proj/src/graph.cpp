#include "ssnas/graph.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace ssnas::autodiff {

namespace {

thread_local int g_no_grad_depth = 0;

bool any_requires_grad(const std::vector<NodePtr>& parents) {
    for (const NodePtr& p : parents)
        if (p && p->requires_grad) return true;
    return false;
}

/// Builds a node; drops the tape when grads are disabled or no parent needs them.
Var make_node(Tensor value, std::vector<NodePtr> parents, std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (grad_enabled() && any_requires_grad(parents)) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return Var(std::move(n));
}

void accumulate(const NodePtr& p, const Tensor& g) {
    if (p->requires_grad) kernels::axpy(p->ensure_grad(), 1.0, g);
}

} // namespace

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

Var Var::leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
}

Var constant(Tensor t) { return Var::leaf(std::move(t), false); }

Var detach(const Var& x) { return constant(x.value()); }

void backward(const Var& root) {
    if (root.value().numel() != 1)
        throw ContractError("backward: root must be a scalar");
    if (!root.node()->requires_grad) return;

    // post-order DFS, then walk the list from the root back to the leaves
    std::vector<Node*> topo;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p && p->requires_grad && visited.insert(p).second)
                stack.emplace_back(p, 0);
        } else {
            topo.push_back(n);
            stack.pop_back();
        }
    }

    root.node()->ensure_grad()[0] = 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.numel() != 0) n->backward_fn(*n);
    }
}

Var conv2d(const Var& x, const Var& w, const kernels::Conv2dSpec& spec) {
    Tensor y = kernels::conv2d_forward(x.value(), w.value(), spec);
    NodePtr xn = x.node(), wn = w.node();
    return make_node(std::move(y), {xn, wn}, [xn, wn, spec](Node& n) {
        if (xn->requires_grad) kernels::conv2d_grad_input(xn->ensure_grad(), n.grad, wn->value, spec);
        if (wn->requires_grad) kernels::conv2d_grad_weight(wn->ensure_grad(), n.grad, xn->value, spec);
    });
}

Var linear(const Var& x, const Var& w) {
    Tensor y = kernels::linear_forward(x.value(), w.value());
    NodePtr xn = x.node(), wn = w.node();
    return make_node(std::move(y), {xn, wn}, [xn, wn](Node& n) {
        if (xn->requires_grad) kernels::linear_grad_input(xn->ensure_grad(), n.grad, wn->value);
        if (wn->requires_grad) kernels::linear_grad_weight(wn->ensure_grad(), n.grad, xn->value);
    });
}

Var bmm(const Var& a, const Var& b, bool trans_a, bool trans_b) {
    Tensor y = kernels::bmm(a.value(), b.value(), trans_a, trans_b);
    NodePtr an = a.node(), bn = b.node();
    return make_node(std::move(y), {an, bn}, [an, bn, trans_a, trans_b](Node& n) {
        // y = A(a) * B(b); gradients follow the usual transpose rules
        if (an->requires_grad) {
            Tensor ga = trans_a ? kernels::bmm(bn->value, n.grad, trans_b, true)
                                : kernels::bmm(n.grad, bn->value, false, !trans_b);
            kernels::axpy(an->ensure_grad(), 1.0, ga);
        }
        if (bn->requires_grad) {
            Tensor gb = trans_b ? kernels::bmm(n.grad, an->value, true, trans_a)
                                : kernels::bmm(an->value, n.grad, !trans_a, false);
            kernels::axpy(bn->ensure_grad(), 1.0, gb);
        }
    });
}

Var relu(const Var& x) {
    NodePtr xn = x.node();
    return make_node(kernels::relu_forward(x.value()), {xn}, [xn](Node& n) {
        kernels::relu_backward(xn->ensure_grad(), n.grad, xn->value);
    });
}

Var add(const Var& a, const Var& b) {
    NodePtr an = a.node(), bn = b.node();
    return make_node(kernels::add(a.value(), b.value()), {an, bn}, [an, bn](Node& n) {
        accumulate(an, n.grad);
        accumulate(bn, n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    NodePtr an = a.node(), bn = b.node();
    return make_node(kernels::sub(a.value(), b.value()), {an, bn}, [an, bn](Node& n) {
        accumulate(an, n.grad);
        if (bn->requires_grad) kernels::axpy(bn->ensure_grad(), -1.0, n.grad);
    });
}

Var mul(const Var& a, const Var& b) {
    NodePtr an = a.node(), bn = b.node();
    return make_node(kernels::mul(a.value(), b.value()), {an, bn}, [an, bn](Node& n) {
        if (an->requires_grad) kernels::axpy(an->ensure_grad(), 1.0, kernels::mul(n.grad, bn->value));
        if (bn->requires_grad) kernels::axpy(bn->ensure_grad(), 1.0, kernels::mul(n.grad, an->value));
    });
}

Var div(const Var& a, const Var& b) {
    if (!a.value().same_shape(b.value())) throw ContractError("div: shape mismatch");
    Tensor y(a.value().shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] / b.value()[i];
    NodePtr an = a.node(), bn = b.node();
    return make_node(std::move(y), {an, bn}, [an, bn](Node& n) {
        if (an->requires_grad) {
            Tensor& ga = an->ensure_grad();
            for (std::int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += n.grad[i] / bn->value[i];
        }
        if (bn->requires_grad) {
            Tensor& gb = bn->ensure_grad();
            for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
                const double bv = bn->value[i];
                gb[i] -= n.grad[i] * an->value[i] / (bv * bv);
            }
        }
    });
}

Var scale(const Var& x, double c) {
    NodePtr xn = x.node();
    return make_node(kernels::scale(x.value(), c), {xn}, [xn, c](Node& n) {
        if (xn->requires_grad) kernels::axpy(xn->ensure_grad(), c, n.grad);
    });
}

Var add_scalar(const Var& x, double c) {
    Tensor y = x.value();
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] += c;
    NodePtr xn = x.node();
    return make_node(std::move(y), {xn}, [xn](Node& n) { accumulate(xn, n.grad); });
}

Var log_op(const Var& x) {
    Tensor y(x.value().shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = std::log(x.value()[i]);
    NodePtr xn = x.node();
    return make_node(std::move(y), {xn}, [xn](Node& n) {
        if (!xn->requires_grad) return;
        Tensor& g = xn->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.numel(); ++i) g[i] += n.grad[i] / xn->value[i];
    });
}

Var sqrt_op(const Var& x) {
    Tensor y(x.value().shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = std::sqrt(x.value()[i]);
    NodePtr xn = x.node();
    return make_node(std::move(y), {xn}, [xn](Node& n) {
        Tensor& g = xn->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.numel(); ++i)
            g[i] += n.grad[i] * 0.5 / n.value[i];
    });
}

Var square(const Var& x) {
    Tensor y(x.value().shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = x.value()[i] * x.value()[i];
    NodePtr xn = x.node();
    return make_node(std::move(y), {xn}, [xn](Node& n) {
        if (!xn->requires_grad) return;
        Tensor& g = xn->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.numel(); ++i) g[i] += 2.0 * n.grad[i] * xn->value[i];
    });
}

Var clamp_min(const Var& x, double c) {
    Tensor y(x.value().shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = std::max(x.value()[i], c);
    NodePtr xn = x.node();
    return make_node(std::move(y), {xn}, [xn, c](Node& n) {
        if (!xn->requires_grad) return;
        Tensor& g = xn->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.numel(); ++i)
            if (xn->value[i] > c) g[i] += n.grad[i];
    });
}

Var weighted_sum(const std::vector<Var>& xs, const Var& w) {
    std::vector<const Tensor*> vals;
    std::vector<NodePtr> parents;
    vals.reserve(xs.size());
    parents.reserve(xs.size() + 1);
    for (const Var& x : xs) {
        vals.push_back(&x.value());
        parents.push_back(x.node());
    }
    parents.push_back(w.node());
    Tensor y = kernels::weighted_sum(vals, w.value());
    NodePtr wn = w.node();
    std::vector<NodePtr> xns = parents; // copy including w at the back
    xns.pop_back();
    return make_node(std::move(y), std::move(parents), [xns, wn](Node& n) {
        for (std::size_t k = 0; k < xns.size(); ++k) {
            if (xns[k]->requires_grad)
                kernels::axpy(xns[k]->ensure_grad(), wn->value[static_cast<std::int64_t>(k)], n.grad);
        }
        if (wn->requires_grad) {
            Tensor& gw = wn->ensure_grad();
            for (std::size_t k = 0; k < xns.size(); ++k) {
                double acc = 0.0; // serial dot keeps the reduction order fixed
                const Tensor& xv = xns[k]->value;
                for (std::int64_t i = 0; i < xv.numel(); ++i) acc += n.grad[i] * xv[i];
                gw[static_cast<std::int64_t>(k)] += acc;
            }
        }
    });
}

Var sum_scalars(const std::vector<Var>& xs) {
    if (xs.empty()) return constant(Tensor::scalar(0.0));
    double acc = 0.0;
    std::vector<NodePtr> parents;
    parents.reserve(xs.size());
    for (const Var& x : xs) {
        acc += x.scalar();
        parents.push_back(x.node());
    }
    std::vector<NodePtr> copy = parents;
    return make_node(Tensor::scalar(acc), std::move(parents), [copy](Node& n) {
        for (const NodePtr& p : copy)
            if (p->requires_grad) p->ensure_grad()[0] += n.grad[0];
    });
}

Var softmax_vec(const Var& x) {
    if (x.value().ndim() != 1) throw ContractError("softmax_vec: expected a 1-d tensor");
    const std::int64_t k = x.value().numel();
    Tensor y(x.value().shape());
    double mx = x.value()[0];
    for (std::int64_t i = 1; i < k; ++i) mx = std::max(mx, x.value()[i]);
    double z = 0.0;
    for (std::int64_t i = 0; i < k; ++i) {
        y[i] = std::exp(x.value()[i] - mx);
        z += y[i];
    }
    for (std::int64_t i = 0; i < k; ++i) y[i] /= z;
    NodePtr xn = x.node();
    return make_node(std::move(y), {xn}, [xn](Node& n) {
        Tensor& g = xn->ensure_grad();
        double dot = 0.0;
        for (std::int64_t i = 0; i < n.grad.numel(); ++i) dot += n.grad[i] * n.value[i];
        for (std::int64_t i = 0; i < n.grad.numel(); ++i)
            g[i] += n.value[i] * (n.grad[i] - dot);
    });
}

Var softmax_channel(const Var& x) {
    Tensor y = kernels::softmax_channel_forward(x.value());
    NodePtr xn = x.node();
    return make_node(std::move(y), {xn}, [xn](Node& n) {
        kernels::softmax_channel_backward(xn->ensure_grad(), n.grad, n.value);
    });
}

Var avgpool3x3(const Var& x) {
    NodePtr xn = x.node();
    return make_node(kernels::avgpool3x3_forward(x.value()), {xn}, [xn](Node& n) {
        kernels::avgpool3x3_backward(xn->ensure_grad(), n.grad);
    });
}

Var maxpool3x3(const Var& x) {
    auto argmax = std::make_shared<std::vector<std::int64_t>>();
    Tensor y = kernels::maxpool3x3_forward(x.value(), *argmax);
    NodePtr xn = x.node();
    return make_node(std::move(y), {xn}, [xn, argmax](Node& n) {
        kernels::maxpool3x3_backward(xn->ensure_grad(), n.grad, *argmax);
    });
}

Var upsample_nearest(const Var& x, int factor) {
    NodePtr xn = x.node();
    return make_node(kernels::upsample_nearest_forward(x.value(), factor), {xn}, [xn, factor](Node& n) {
        kernels::upsample_nearest_backward(xn->ensure_grad(), n.grad, factor);
    });
}

Var map_to_tokens(const Var& x) {
    const int h = x.value().dim(2), w = x.value().dim(3);
    NodePtr xn = x.node();
    return make_node(kernels::map_to_tokens(x.value()), {xn}, [xn, h, w](Node& n) {
        if (xn->requires_grad)
            kernels::axpy(xn->ensure_grad(), 1.0, kernels::tokens_to_map(n.grad, h, w));
    });
}

Var tokens_to_map(const Var& x, int height, int width) {
    NodePtr xn = x.node();
    return make_node(kernels::tokens_to_map(x.value(), height, width), {xn}, [xn](Node& n) {
        if (xn->requires_grad)
            kernels::axpy(xn->ensure_grad(), 1.0, kernels::map_to_tokens(n.grad));
    });
}

Var col_gather(const Var& x, std::vector<int> cols) {
    NodePtr xn = x.node();
    auto c = std::make_shared<std::vector<int>>(std::move(cols));
    return make_node(kernels::col_gather(x.value(), *c), {xn}, [xn, c](Node& n) {
        kernels::col_gather_backward(xn->ensure_grad(), n.grad, *c);
    });
}

Var col_merge(const Var& base, const Var& sub, std::vector<int> cols) {
    NodePtr bn = base.node(), sn = sub.node();
    auto c = std::make_shared<std::vector<int>>(std::move(cols));
    return make_node(kernels::col_merge(base.value(), sub.value(), *c), {bn, sn}, [bn, sn, c](Node& n) {
        Tensor gb_dummy, gs_dummy;
        Tensor& gb = bn->requires_grad ? bn->ensure_grad() : (gb_dummy = Tensor::zeros(bn->value.shape()));
        Tensor& gs = sn->requires_grad ? sn->ensure_grad() : (gs_dummy = Tensor::zeros(sn->value.shape()));
        kernels::col_merge_backward(gb, gs, n.grad, *c);
    });
}

Var concat_channels(const std::vector<Var>& xs) {
    std::vector<const Tensor*> vals;
    std::vector<NodePtr> parents;
    for (const Var& x : xs) {
        vals.push_back(&x.value());
        parents.push_back(x.node());
    }
    std::vector<NodePtr> copy = parents;
    return make_node(kernels::concat_channels(vals), std::move(parents), [copy](Node& n) {
        std::vector<Tensor> scratch;
        std::vector<Tensor*> gxs;
        scratch.reserve(copy.size());
        for (const NodePtr& p : copy) {
            if (p->requires_grad) {
                gxs.push_back(&p->ensure_grad());
            } else {
                scratch.emplace_back(Tensor::zeros(p->value.shape()));
                gxs.push_back(&scratch.back());
            }
        }
        kernels::concat_channels_backward(gxs, n.grad);
    });
}

Var channel_slice(const Var& x, int c0, int count) {
    const Tensor& v = x.value();
    const int B = v.dim(0), C = v.dim(1), H = v.dim(2), W = v.dim(3);
    if (c0 < 0 || c0 + count > C) throw ContractError("channel_slice: out of range");
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    Tensor y({B, count, H, W});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < count; ++c)
            for (std::int64_t i = 0; i < hw; ++i)
                y[((static_cast<std::int64_t>(b) * count + c)) * hw + i] =
                    v[((static_cast<std::int64_t>(b) * C + c0 + c)) * hw + i];
    NodePtr xn = x.node();
    return make_node(std::move(y), {xn}, [xn, c0, count, B, C, hw](Node& n) {
        if (!xn->requires_grad) return;
        Tensor& g = xn->ensure_grad();
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < count; ++c)
                for (std::int64_t i = 0; i < hw; ++i)
                    g[((static_cast<std::int64_t>(b) * C + c0 + c)) * hw + i] +=
                        n.grad[((static_cast<std::int64_t>(b) * count + c)) * hw + i];
    });
}

Var div_bcast(const Var& numer, const Var& denom, double eps) {
    Tensor y = kernels::div_bcast_forward(numer.value(), denom.value(), eps);
    NodePtr nn = numer.node(), dn = denom.node();
    return make_node(std::move(y), {nn, dn}, [nn, dn, eps](Node& n) {
        Tensor gn_dummy, gd_dummy;
        Tensor& gn = nn->requires_grad ? nn->ensure_grad() : (gn_dummy = Tensor::zeros(nn->value.shape()));
        Tensor& gd = dn->requires_grad ? dn->ensure_grad() : (gd_dummy = Tensor::zeros(dn->value.shape()));
        kernels::div_bcast_backward(gn, gd, n.grad, nn->value, dn->value, eps);
    });
}

Var sum_tokens(const Var& x) {
    NodePtr xn = x.node();
    return make_node(kernels::sum_tokens(x.value()), {xn}, [xn](Node& n) {
        kernels::sum_tokens_backward(xn->ensure_grad(), n.grad);
    });
}

Var reshape(const Var& x, std::vector<int> shape) {
    NodePtr xn = x.node();
    Tensor y = x.value().reshaped(shape);
    return make_node(std::move(y), {xn}, [xn](Node& n) {
        if (xn->requires_grad)
            kernels::axpy(xn->ensure_grad(), 1.0, n.grad.reshaped(xn->value.shape()));
    });
}

Var sum_all(const Var& x) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < x.value().numel(); ++i) acc += x.value()[i];
    NodePtr xn = x.node();
    return make_node(Tensor::scalar(acc), {xn}, [xn](Node& n) {
        if (!xn->requires_grad) return;
        Tensor& g = xn->ensure_grad();
        const double gv = n.grad[0];
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += gv;
    });
}

Var mean_all(const Var& x) {
    return scale(sum_all(x), 1.0 / static_cast<double>(x.value().numel()));
}

Var rows_dot(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.ndim() != 2 || !av.same_shape(bv)) throw ContractError("rows_dot: want matching 2-d tensors");
    const int R = av.dim(0), C = av.dim(1);
    Tensor y({R});
    for (int r = 0; r < R; ++r) {
        double acc = 0.0;
        for (int c = 0; c < C; ++c)
            acc += av[static_cast<std::int64_t>(r) * C + c] * bv[static_cast<std::int64_t>(r) * C + c];
        y[r] = acc;
    }
    NodePtr an = a.node(), bn = b.node();
    return make_node(std::move(y), {an, bn}, [an, bn, R, C](Node& n) {
        for (int r = 0; r < R; ++r) {
            const double gv = n.grad[r];
            if (gv == 0.0) continue;
            for (int c = 0; c < C; ++c) {
                const std::int64_t i = static_cast<std::int64_t>(r) * C + c;
                if (an->requires_grad) an->ensure_grad()[i] += gv * bn->value[i];
                if (bn->requires_grad) bn->ensure_grad()[i] += gv * an->value[i];
            }
        }
    });
}

Var gather_class(const Var& p, const IntMask& labels) {
    const Tensor& v = p.value();
    const int B = v.dim(0), C = v.dim(1), H = v.dim(2), W = v.dim(3);
    if (labels.shape != std::vector<int>({B, H, W}))
        throw ContractError("gather_class: label shape mismatch");
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    Tensor y({B, 1, H, W});
    for (int b = 0; b < B; ++b)
        for (std::int64_t i = 0; i < hw; ++i) {
            const int cls = labels[static_cast<std::int64_t>(b) * hw + i];
            if (cls < 0 || cls >= C) throw ContractError("gather_class: label out of range");
            y[static_cast<std::int64_t>(b) * hw + i] = v[(static_cast<std::int64_t>(b) * C + cls) * hw + i];
        }
    NodePtr pn = p.node();
    auto lab = std::make_shared<IntMask>(labels);
    return make_node(std::move(y), {pn}, [pn, lab, B, C, hw](Node& n) {
        if (!pn->requires_grad) return;
        Tensor& g = pn->ensure_grad();
        for (int b = 0; b < B; ++b)
            for (std::int64_t i = 0; i < hw; ++i) {
                const int cls = (*lab)[static_cast<std::int64_t>(b) * hw + i];
                g[(static_cast<std::int64_t>(b) * C + cls) * hw + i] +=
                    n.grad[static_cast<std::int64_t>(b) * hw + i];
            }
    });
}

Var mask_mul(const Var& x, Tensor mask) {
    const Tensor& v = x.value();
    const int B = v.dim(0), C = v.dim(1), H = v.dim(2), W = v.dim(3);
    if (mask.shape() != std::vector<int>({B, 1, H, W}))
        throw ContractError("mask_mul: mask shape mismatch");
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    Tensor y(v.shape());
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (std::int64_t i = 0; i < hw; ++i)
                y[(static_cast<std::int64_t>(b) * C + c) * hw + i] =
                    v[(static_cast<std::int64_t>(b) * C + c) * hw + i] * mask[static_cast<std::int64_t>(b) * hw + i];
    NodePtr xn = x.node();
    auto m = std::make_shared<Tensor>(std::move(mask));
    return make_node(std::move(y), {xn}, [xn, m, B, C, hw](Node& n) {
        if (!xn->requires_grad) return;
        Tensor& g = xn->ensure_grad();
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
                for (std::int64_t i = 0; i < hw; ++i)
                    g[(static_cast<std::int64_t>(b) * C + c) * hw + i] +=
                        n.grad[(static_cast<std::int64_t>(b) * C + c) * hw + i] *
                        (*m)[static_cast<std::int64_t>(b) * hw + i];
    });
}

} // namespace ssnas::autodiff
