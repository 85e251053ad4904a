#include "ssnas/objectives.hpp"

#include <cmath>

namespace ssnas {

using namespace autodiff;

double ramp_weight(int epoch, int ramp_epochs) {
    if (epoch < 0) throw ContractError("ramp_weight: epoch must be >= 0");
    if (ramp_epochs < 1) throw ConfigError("ramp_weight: ramp_epochs must be >= 1");
    const double t = 1.0 - static_cast<double>(std::min(epoch, ramp_epochs)) / ramp_epochs;
    return 5.0 * std::exp(-5.0 * t * t);
}

double LossWeights::ramp(int epoch) const { return ramp_weight(epoch, ramp_epochs); }

namespace {

void check_probability_maps(const Tensor& p) {
    if (p.ndim() != 4) throw ContractError("loss: probability maps must be (B,C,H,W)");
    const int B = p.dim(0), C = p.dim(1);
    const std::int64_t hw = static_cast<std::int64_t>(p.dim(2)) * p.dim(3);
    for (int b = 0; b < B; ++b)
        for (std::int64_t i = 0; i < hw; ++i) {
            double s = 0.0;
            for (int c = 0; c < C; ++c) s += p[(static_cast<std::int64_t>(b) * C + c) * hw + i];
            if (std::abs(s - 1.0) > 1e-6)
                throw ContractError("loss: class probabilities are not pixel-normalized");
        }
}

} // namespace

Var cross_entropy(const Var& p, const IntMask& y) {
    Var picked = gather_class(p, y);
    return scale(sum_all(log_op(picked)), -1.0 / static_cast<double>(picked.value().numel()));
}

Var supervised_loss(const Var& p, const IntMask& y) {
    check_probability_maps(p.value());
    Var ce = cross_entropy(p, y);

    const int C = p.value().dim(1);
    const std::int64_t n = p.value().numel() / C;
    std::vector<Var> dices;
    for (int c = 0; c < C; ++c) {
        Var pc = channel_slice(p, c, 1);
        Tensor onehot(pc.value().shape());
        double count = 0.0;
        for (std::int64_t i = 0; i < n; ++i)
            if (y.data[static_cast<std::size_t>(i)] == c) {
                onehot[i] = 1.0;
                count += 1.0;
            }
        Var inter = sum_all(mul(pc, constant(onehot)));
        Var psum = sum_all(pc);
        Var dice = div(add_scalar(scale(inter, 2.0), kDiceSmooth),
                       add_scalar(psum, count + kDiceSmooth));
        dices.push_back(dice);
    }
    Var dice_loss = add_scalar(scale(sum_scalars(dices), -1.0 / C), 1.0);
    return scale(add(ce, dice_loss), 0.5);
}

IntMask pseudo_label(const Tensor& p) {
    if (p.ndim() != 4) throw ContractError("pseudo_label: expected (B,C,H,W)");
    const int B = p.dim(0), C = p.dim(1), H = p.dim(2), W = p.dim(3);
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    IntMask out({B, H, W});
    for (int b = 0; b < B; ++b)
        for (std::int64_t i = 0; i < hw; ++i) {
            int best = 0;
            double bv = p[(static_cast<std::int64_t>(b) * C) * hw + i];
            for (int c = 1; c < C; ++c) {
                const double v = p[(static_cast<std::int64_t>(b) * C + c) * hw + i];
                if (v > bv) { // strict: ties keep the lowest class index
                    bv = v;
                    best = c;
                }
            }
            out[static_cast<std::int64_t>(b) * hw + i] = best;
        }
    return out;
}

Var unsupervised_loss(const Var& p_i, const IntMask& pseudo_from_other) {
    return cross_entropy(p_i, pseudo_from_other);
}

Var as_matrix(const Var& kernel) {
    const Tensor& v = kernel.value();
    if (v.ndim() == 2) return kernel;
    if (v.ndim() != 4) throw ContractError("as_matrix: expected a conv kernel");
    const int co = v.dim(0);
    return reshape(kernel, {co, static_cast<int>(v.numel() / co)});
}

Var independence_layer_loss(const Var& a, const Var& b, const Var& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.ndim() != 2 || !av.same_shape(bv))
        throw ContractError("independence_layer_loss: paired layers have mismatched shapes");
    const int rows = av.dim(0), d = av.dim(1);
    if (g.value().shape() != std::vector<int>({rows, rows}))
        throw ContractError("independence_layer_loss: G must be (C_out, C_out)");

    Var q = reshape(bmm(reshape(g, {1, rows, rows}), reshape(b, {1, rows, d}), false, false),
                    {rows, d});
    Var dots = rows_dot(a, q);
    Var norms = mul(sqrt_op(rows_dot(a, a)), sqrt_op(rows_dot(q, q)));
    Var cosine = div(dots, clamp_min(norms, kCosineGuard));
    return mean_all(square(cosine));
}

Var independence_loss(const std::vector<Var>& a_layers, const std::vector<Var>& b_layers,
                      const std::vector<Var>& g_layers, bool grad_a, bool grad_g) {
    if (a_layers.size() != b_layers.size() || a_layers.size() != g_layers.size())
        throw ContractError("independence_loss: layer list sizes differ");
    if (a_layers.empty()) throw ContractError("independence_loss: no registered layers");
    std::vector<Var> parts;
    parts.reserve(a_layers.size());
    for (std::size_t k = 0; k < a_layers.size(); ++k) {
        Var a = as_matrix(a_layers[k]);
        if (!grad_a) a = detach(a);
        Var b = detach(as_matrix(b_layers[k]));
        Var g = grad_g ? g_layers[k] : detach(g_layers[k]);
        parts.push_back(independence_layer_loss(a, b, g));
    }
    return scale(sum_scalars(parts), 1.0 / static_cast<double>(parts.size()));
}

Tensor uncertainty_map(const Tensor& features, bool channel_mean) {
    if (features.ndim() != 4) throw ContractError("uncertainty_map: expected (B,C,h,w)");
    const int B = features.dim(0), C = features.dim(1);
    const std::int64_t hw = static_cast<std::int64_t>(features.dim(2)) * features.dim(3);
    Tensor u({B, features.dim(2), features.dim(3)});
    for (int b = 0; b < B; ++b) {
        std::vector<double> chan_mean(static_cast<std::size_t>(C), 0.0);
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::int64_t i = 0; i < hw; ++i) {
                const double x = features[(static_cast<std::int64_t>(b) * C + c) * hw + i];
                s += x > 0.0 ? x : 0.0;
            }
            chan_mean[static_cast<std::size_t>(c)] = s / static_cast<double>(hw);
        }
        for (std::int64_t i = 0; i < hw; ++i) {
            double pos_mean = 0.0;
            if (channel_mean) {
                for (int c = 0; c < C; ++c) {
                    const double x = features[(static_cast<std::int64_t>(b) * C + c) * hw + i];
                    pos_mean += x > 0.0 ? x : 0.0;
                }
                pos_mean /= static_cast<double>(C);
            }
            double acc = 0.0;
            for (int c = 0; c < C; ++c) {
                double x = features[(static_cast<std::int64_t>(b) * C + c) * hw + i];
                x = x > 0.0 ? x : 0.0;
                const double ref = channel_mean ? pos_mean : chan_mean[static_cast<std::size_t>(c)];
                if (x != 0.0) acc += x * std::log((x + kUncertaintyEps) / (ref + kUncertaintyEps));
            }
            u[static_cast<std::int64_t>(b) * hw + i] = acc;
        }
    }
    return u;
}

ContrastivePair contrastive_loss(const DecoderTrace& trace1, const DecoderTrace& trace2,
                                 const std::vector<int>& resolutions, bool channel_mean) {
    std::vector<Var> parts1, parts2;
    for (int r : resolutions) {
        if (!trace1.features.count(r) || !trace2.features.count(r))
            throw ContractError("contrastive_loss: traces do not cover resolution " +
                                std::to_string(r));
        const Var& f1 = trace1.features.at(r);
        const Var& f2 = trace2.features.at(r);
        if (!f1.value().same_shape(f2.value()))
            throw ContractError("contrastive_loss: feature shapes differ at resolution " +
                                std::to_string(r));
        Tensor u1 = uncertainty_map(f1.value(), channel_mean);
        Tensor u2 = uncertainty_map(f2.value(), channel_mean);

        const int B = f1.value().dim(0), C = f1.value().dim(1);
        const int h = f1.value().dim(2), w = f1.value().dim(3);
        Tensor mask1({B, 1, h, w}), mask2({B, 1, h, w});
        for (std::int64_t i = 0; i < u1.numel(); ++i) {
            if (u1[i] > u2[i]) mask1[i] = 1.0;
            if (u2[i] > u1[i]) mask2[i] = 1.0; // ties belong to neither mask
        }
        const double norm = 1.0 / (static_cast<double>(C) * B * h * w);
        parts1.push_back(
            scale(sum_all(mask_mul(square(sub(f1, detach(f2))), mask1)), norm));
        parts2.push_back(
            scale(sum_all(mask_mul(square(sub(f2, detach(f1))), mask2)), norm));
    }
    return {sum_scalars(parts1), sum_scalars(parts2)};
}

Var total_loss(const Var& sup, const Var& uns, const Var& ind, const Var& con,
               const LossWeights& weights, int epoch) {
    weights.validate();
    const struct {
        const char* name;
        const Var* v;
    } parts[] = {{"supervised", &sup}, {"unsupervised", &uns}, {"independence", &ind},
                 {"contrastive", &con}};
    for (const auto& p : parts)
        if (!std::isfinite(p.v->scalar()))
            throw TrainingError(std::string("total_loss: non-finite ") + p.name + " term");
    const double l24 = weights.ramp(epoch);
    return add(add(scale(sup, weights.lambda1), scale(uns, l24)),
               add(scale(ind, weights.lambda3), scale(con, l24)));
}

} // namespace ssnas
