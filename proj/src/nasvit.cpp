#include "ssnas/nasvit.hpp"

#include <algorithm>
#include <cmath>

namespace ssnas {

using namespace autodiff;

int NasVitConfig::masked_channels() const {
    return static_cast<int>(std::lround(channel_fraction * d));
}

void NasVitConfig::validate() const {
    if (f < 1 || d < 1) throw ConfigError("NasVitConfig: f and d must be >= 1");
    if (!(channel_fraction > 0.0 && channel_fraction <= 1.0))
        throw ConfigError("NasVitConfig: channel_fraction must be in (0,1]");
    const double exact = channel_fraction * d;
    if (std::abs(exact - std::lround(exact)) > 1e-9 || std::lround(exact) < 1)
        throw ConfigError("NasVitConfig: channel_fraction*d must be a positive integer");
    if (num_ops < 1) throw ConfigError("NasVitConfig: num_ops must be >= 1");
}

ChannelMask ChannelMask::sample(int d, double fraction, Rng& rng) {
    const int m = static_cast<int>(std::lround(fraction * d));
    std::vector<int> perm = rng.permutation(d);
    ChannelMask mask;
    mask.masked.assign(perm.begin(), perm.begin() + m);
    std::sort(mask.masked.begin(), mask.masked.end());
    return mask;
}

namespace {

Var projection(ParamRegistry& reg, const std::string& name, int fan_in, int fan_out, Rng& rng,
               double gain = 1.0) {
    Tensor w({fan_in, fan_out});
    const double std = gain * std::sqrt(1.0 / fan_in);
    for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = std * rng.normal();
    return reg.add(ParamGroup::weights, name, std::move(w));
}

Var conv_kernel(ParamRegistry& reg, const std::string& name, int co, int cig, int k, Rng& rng,
                double gain = 1.0) {
    Tensor w({co, cig, k, k});
    const double std = gain * std::sqrt(1.0 / (static_cast<double>(cig) * k * k));
    for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = std * rng.normal();
    Var v = reg.add(ParamGroup::weights, name, std::move(w));
    reg.register_independence(v);
    return v;
}

} // namespace

NasVitBlock::NasVitBlock(const NasVitConfig& cfg, ParamRegistry& reg, const std::string& name,
                         Rng& rng)
    : cfg_(cfg) {
    cfg_.validate();
    mask_ = ChannelMask::sample(cfg_.d, cfg_.channel_fraction, rng);
    w_q_ = projection(reg, name + ".wq", cfg_.f, cfg_.d, rng);
    w_k_ = projection(reg, name + ".wk", cfg_.f, cfg_.d, rng);
    w_v_ = projection(reg, name + ".wv", cfg_.f, cfg_.d, rng);
    w_out_ = projection(reg, name + ".wo", cfg_.d, cfg_.f, rng, 0.1);

    const int dm = cfg_.masked_channels();
    const std::vector<OpKind> kinds = op_set(OpSetRole::encoder);
    if (static_cast<int>(kinds.size()) != cfg_.num_ops)
        throw ConfigError("NasVitBlock: num_ops does not match the encoder op set");
    ops_.reserve(kinds.size());
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        OpInstance op = build_op(kinds[i], dm, rng);
        for (std::size_t p = 0; p < op.params.size(); ++p) {
            reg.adopt(ParamGroup::weights,
                      name + ".op" + std::to_string(i) + ".k" + std::to_string(p), op.params[p]);
            reg.register_independence(op.params[p]);
        }
        ops_.push_back(std::move(op));
    }

    const int e = 2 * cfg_.f; // FFN expansion ratio 2
    ffn_expand_ = conv_kernel(reg, name + ".ffn.expand", e, cfg_.f, 1, rng);
    ffn_dw_ = conv_kernel(reg, name + ".ffn.dw", e, 1, 3, rng);
    ffn_proj_ = conv_kernel(reg, name + ".ffn.proj", cfg_.f, e, 1, rng, 0.1);
}

TokenSet NasVitBlock::project_qkv(const Var& tokens, int height, int width) const {
    const Tensor& t = tokens.value();
    if (t.ndim() != 3 || t.dim(2) != cfg_.f)
        throw ContractError("project_qkv: tokens must be (B,T,f)");
    if (!t.all_finite()) throw ContractError("project_qkv: non-finite input");
    TokenSet ts;
    ts.q = linear(tokens, w_q_);
    ts.k = linear(tokens, w_k_);
    ts.v = linear(tokens, w_v_);
    ts.height = height;
    ts.width = width;
    return ts;
}

Var NasVitBlock::mix_tokens(const Var& tokens, const Var& alpha, int height, int width) const {
    if (alpha.value().numel() != cfg_.num_ops)
        throw ContractError("mix_tokens: alpha length does not match the op set");
    if (!alpha.value().all_finite()) throw ContractError("mix_tokens: non-finite alpha");
    Var w = softmax_vec(alpha);
    double sum = 0.0;
    for (std::int64_t i = 0; i < w.value().numel(); ++i) sum += w.value()[i];
    if (std::abs(sum - 1.0) >= 1e-6) throw ContractError("mix_tokens: softmax weights do not sum to 1");

    Var masked_map = tokens_to_map(col_gather(tokens, mask_.masked), height, width);
    std::vector<Var> outs;
    outs.reserve(ops_.size());
    for (const OpInstance& op : ops_) outs.push_back(op.forward(masked_map));
    Var mixed = map_to_tokens(weighted_sum(outs, w));
    return col_merge(tokens, mixed, mask_.masked);
}

Var NasVitBlock::mix_tokens_onehot(const Var& tokens, int op_index, int height, int width) const {
    if (op_index < 0 || op_index >= static_cast<int>(ops_.size()))
        throw ContractError("mix_tokens_onehot: op index out of range");
    Var masked_map = tokens_to_map(col_gather(tokens, mask_.masked), height, width);
    Var out = ops_[static_cast<std::size_t>(op_index)].forward(masked_map);
    return col_merge(tokens, map_to_tokens(out), mask_.masked);
}

Var NasVitBlock::relu_linear_attention(const Var& q, const Var& k, const Var& v) {
    Var rq = relu(q);
    Var rk = relu(k);
    Var s = bmm(rk, v, true, false);        // (B,d,d) = sum_j rk_j (x) v_j
    Var numer = bmm(rq, s, false, false);   // (B,T,d)
    Var denom = bmm(rq, sum_tokens(rk), false, true); // (B,T,1)
    return div_bcast(numer, denom, kAttentionEps);
}

Var NasVitBlock::ffn_dwconv(const Var& x_map) const {
    const kernels::Conv2dSpec pw{1, 0, 1, 1};
    const kernels::Conv2dSpec dw{1, 1, 1, 2 * cfg_.f};
    Var h = conv2d(x_map, ffn_expand_, pw);
    h = relu(conv2d(h, ffn_dw_, dw));
    h = conv2d(h, ffn_proj_, pw);
    return add(x_map, h);
}

Var NasVitBlock::forward_impl(const Var& x_map, const Var* alpha, int op_index) const {
    const Tensor& x = x_map.value();
    if (x.ndim() != 4 || x.dim(1) != cfg_.f)
        throw ContractError("NasVitBlock: input must be (B,f,H,W)");
    const int height = x.dim(2), width = x.dim(3);

    Var tokens = map_to_tokens(x_map);
    TokenSet ts = project_qkv(tokens, height, width);
    Var q, k, v;
    if (alpha != nullptr) {
        q = mix_tokens(ts.q, *alpha, height, width);
        k = mix_tokens(ts.k, *alpha, height, width);
        v = mix_tokens(ts.v, *alpha, height, width);
    } else {
        q = mix_tokens_onehot(ts.q, op_index, height, width);
        k = mix_tokens_onehot(ts.k, op_index, height, width);
        v = mix_tokens_onehot(ts.v, op_index, height, width);
    }
    Var att = relu_linear_attention(q, k, v);
    Var out_map = tokens_to_map(linear(att, w_out_), height, width);
    return ffn_dwconv(add(x_map, out_map));
}

Var NasVitBlock::forward(const Var& x_map, const Var& alpha) const {
    return forward_impl(x_map, &alpha, -1);
}

Var NasVitBlock::forward_discrete(const Var& x_map, int op_index) const {
    return forward_impl(x_map, nullptr, op_index);
}

} // namespace ssnas
