#pragma once

#include "ssnas/encoder.hpp"

namespace ssnas {

/// Decoder relaxation parameters: one (num_ops,) leaf per decoder cell, in
/// processing order r = 32, 16, 8, 4.
struct GammaParams {
    int num_ops = 0;
    std::vector<autodiff::Var> cells;
};

/// Decoder-cell outputs per resolution plus the full-resolution logits.
struct DecoderTrace {
    std::map<int, autodiff::Var> features; // r -> H^o at that resolution
    autodiff::Var logits;                  // (B,num_classes,H,W)
};

/// U-shaped searchable decoder: node-free cells over the decoder op set,
/// staged upsample-concat-convolve recovery from r=32 to full resolution.
class DecoderSupernet {
public:
    DecoderSupernet(const EncoderConfig& enc_cfg, int num_classes, bool include_pool_zero,
                    ParamRegistry& reg, Rng& rng);

    DecoderTrace forward(const FeaturePyramid& pyramid, const GammaParams& gamma,
                         const std::vector<int>* plan) const;

    /// H^o = sum_k softmax(gamma)_k O_k(x); forced single op when plan_index >= 0.
    static autodiff::Var cell_forward(const autodiff::Var& x, const autodiff::Var& gamma,
                                      const std::vector<OpInstance>& ops, int plan_index);

    const GammaParams& gamma() const { return gamma_; }
    GammaParams& gamma() { return gamma_; }
    int num_ops() const { return num_ops_; }
    int num_classes() const { return num_classes_; }
    const std::vector<OpKind>& op_kinds() const { return kinds_; }

    /// Cell resolutions in processing (and gamma) order.
    static constexpr int kCellOrder[4] = {32, 16, 8, 4};

    const std::vector<std::vector<OpInstance>>& cell_ops() const { return cell_ops_; }
    const autodiff::Var& stage_conv(int r) const { return stage_convs_.at(r); }
    const autodiff::Var& classifier() const { return classifier_; }

private:
    int num_classes_;
    int num_ops_;
    std::vector<OpKind> kinds_;
    std::vector<std::vector<OpInstance>> cell_ops_; // per cell in kCellOrder
    std::map<int, autodiff::Var> stage_convs_;      // r in {16,8,4}: concat -> C(r)
    autodiff::Var classifier_;
    GammaParams gamma_;
};

} // namespace ssnas
