#pragma once

#include "ssnas/candidate_ops.hpp"
#include "ssnas/params.hpp"

namespace ssnas {

/// Denominator guard of the ReLU linear attention.
inline constexpr double kAttentionEps = 1e-6;

struct NasVitConfig {
    int f = 0;                      // input feature dimension
    int d = 0;                      // token dimension
    double channel_fraction = 0.25; // share of token channels exposed to op search
    int num_ops = 8;

    int masked_channels() const;
    void validate() const;
};

/// Token triple produced by the Q/K/V projection, re-viewable as spatial maps.
struct TokenSet {
    autodiff::Var q, k, v;
    int height = 0, width = 0;
};

/// Fixed random channel subset searched by the token mixer; the complement
/// passes through untouched.
struct ChannelMask {
    std::vector<int> masked; // sorted channel indices, size = round(fraction*d)

    static ChannelMask sample(int d, double fraction, Rng& rng);
};

/// One searchable attention block: Q/K/V projection, token mixing over the
/// encoder candidate ops on the masked channels, ReLU linear attention, output
/// projection with residual, then an FFN with a depthwise convolution.
class NasVitBlock {
public:
    NasVitBlock(const NasVitConfig& cfg, ParamRegistry& reg, const std::string& name, Rng& rng);

    /// x_map (B,f,H,W), alpha raw logits of length num_ops.
    autodiff::Var forward(const autodiff::Var& x_map, const autodiff::Var& alpha) const;
    /// Mixture replaced by the single op at op_index (exact one-hot weights).
    autodiff::Var forward_discrete(const autodiff::Var& x_map, int op_index) const;

    TokenSet project_qkv(const autodiff::Var& tokens, int height, int width) const;
    autodiff::Var mix_tokens(const autodiff::Var& tokens, const autodiff::Var& alpha,
                             int height, int width) const;
    autodiff::Var mix_tokens_onehot(const autodiff::Var& tokens, int op_index,
                                    int height, int width) const;
    autodiff::Var ffn_dwconv(const autodiff::Var& x_map) const;

    static autodiff::Var relu_linear_attention(const autodiff::Var& q, const autodiff::Var& k,
                                               const autodiff::Var& v);

    const NasVitConfig& config() const { return cfg_; }
    const ChannelMask& mask() const { return mask_; }
    const std::vector<OpInstance>& ops() const { return ops_; }
    const autodiff::Var& wq() const { return w_q_; }
    const autodiff::Var& wk() const { return w_k_; }
    const autodiff::Var& wv() const { return w_v_; }
    const autodiff::Var& wout() const { return w_out_; }
    const autodiff::Var& ffn_expand() const { return ffn_expand_; }
    const autodiff::Var& ffn_dw() const { return ffn_dw_; }
    const autodiff::Var& ffn_proj() const { return ffn_proj_; }

private:
    autodiff::Var forward_impl(const autodiff::Var& x_map, const autodiff::Var* alpha,
                               int op_index) const;

    NasVitConfig cfg_;
    ChannelMask mask_;
    autodiff::Var w_q_, w_k_, w_v_, w_out_;
    std::vector<OpInstance> ops_;
    autodiff::Var ffn_expand_, ffn_dw_, ffn_proj_;
};

} // namespace ssnas
