#pragma once

#include "ssnas/decoder.hpp"

namespace ssnas {

/// Smoothing constant of the soft Dice loss.
inline constexpr double kDiceSmooth = 1e-5;
/// Bias term of the smoothed KL uncertainty estimate.
inline constexpr double kUncertaintyEps = 1e-8;
/// Guard on the cosine denominator of the independence loss.
inline constexpr double kCosineGuard = 1e-12;

struct LossWeights {
    double lambda1 = 1.0; // supervised
    double lambda3 = 2.0; // independence
    int ramp_epochs = 50; // I_ramp for lambda2 = lambda4

    void validate() const {
        if (ramp_epochs < 1) throw ConfigError("LossWeights: ramp_epochs must be >= 1");
        if (!(lambda1 >= 0.0) || !(lambda3 >= 0.0))
            throw ConfigError("LossWeights: negative loss weight");
    }
    double ramp(int epoch) const;
};

/// 5*exp(-5*(1 - min(i, I)/I)^2); shared schedule of lambda2 and lambda4.
double ramp_weight(int epoch, int ramp_epochs = 50);

/// 0.5*(cross-entropy + soft Dice) of pixel-normalized class probabilities
/// p (B,C,H,W) against integer masks y (B,H,W).
autodiff::Var supervised_loss(const autodiff::Var& p, const IntMask& y);

/// Mean over pixels of -log p[y].
autodiff::Var cross_entropy(const autodiff::Var& p, const IntMask& y);

/// Per-pixel argmax over the class dimension; ties break to the lowest index.
IntMask pseudo_label(const Tensor& p);

/// Cross-entropy of one network's predictions against the other network's
/// one-hot pseudo labels (which carry no gradient).
autodiff::Var unsupervised_loss(const autodiff::Var& p_i, const IntMask& pseudo_from_other);

/// Eq.-12 style squared-cosine dependence of matrix a on the row space of
/// g*b, averaged over rows. All inputs are (R,d) / (R,R) vars; detach the
/// sides that must not receive gradient before calling.
autodiff::Var independence_layer_loss(const autodiff::Var& a, const autodiff::Var& b,
                                      const autodiff::Var& g);

/// Mean over registered layer pairs. a_layers belong to the network being
/// optimized; b_layers to the other network (always treated as constants);
/// g_layers are that other network's combination matrices.
autodiff::Var independence_loss(const std::vector<autodiff::Var>& a_layers,
                                const std::vector<autodiff::Var>& b_layers,
                                const std::vector<autodiff::Var>& g_layers, bool grad_a,
                                bool grad_g);

/// Kernels are compared as (C_out, fan_in) matrices.
autodiff::Var as_matrix(const autodiff::Var& kernel);

/// Smoothed-KL uncertainty of rectified features (B,C,h,w) -> (B,h,w).
/// channel_mean switches the reference mean from per-channel-spatial to
/// per-position-across-channels.
Tensor uncertainty_map(const Tensor& features, bool channel_mean = false);

struct ContrastivePair {
    autodiff::Var net1, net2;
};

/// Uncertainty-gated masked MSE between the two decoder traces at the given
/// resolutions. At positions where net i is more uncertain, gradient flows
/// only into net i's features; the other side is a frozen target.
ContrastivePair contrastive_loss(const DecoderTrace& trace1, const DecoderTrace& trace2,
                                 const std::vector<int>& resolutions, bool channel_mean = false);

/// lambda1*sup + ramp(epoch)*uns + lambda3*ind + ramp(epoch)*con.
autodiff::Var total_loss(const autodiff::Var& sup, const autodiff::Var& uns,
                         const autodiff::Var& ind, const autodiff::Var& con,
                         const LossWeights& weights, int epoch);

} // namespace ssnas
