#include "ssnas/candidate_ops.hpp"

#include <cmath>

namespace ssnas {

using autodiff::Var;

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::sep_conv_3x3: return "sep_conv_3x3";
        case OpKind::sep_conv_5x5: return "sep_conv_5x5";
        case OpKind::dil_conv_3x3_r2: return "dil_conv_3x3_r2";
        case OpKind::dil_conv_5x5_r2: return "dil_conv_5x5_r2";
        case OpKind::avg_pool_3x3: return "avg_pool_3x3";
        case OpKind::max_pool_3x3: return "max_pool_3x3";
        case OpKind::skip: return "skip";
        case OpKind::zero: return "zero";
    }
    throw ConfigError("op_name: unknown kind");
}

OpKind op_from_name(const std::string& name) {
    for (OpKind k : op_set(OpSetRole::encoder))
        if (name == op_name(k)) return k;
    throw ConfigError("unknown candidate operation '" + name + "'");
}

OpSetRole role_from_string(const std::string& role) {
    if (role == "encoder") return OpSetRole::encoder;
    if (role == "decoder") return OpSetRole::decoder;
    throw ConfigError("unknown op-set role '" + role + "' (expected encoder or decoder)");
}

std::vector<OpKind> op_set(OpSetRole role) {
    switch (role) {
        case OpSetRole::encoder:
            return {OpKind::sep_conv_3x3, OpKind::sep_conv_5x5, OpKind::dil_conv_3x3_r2,
                    OpKind::dil_conv_5x5_r2, OpKind::avg_pool_3x3, OpKind::max_pool_3x3,
                    OpKind::skip, OpKind::zero};
        case OpSetRole::decoder:
            return decoder_op_set(false);
    }
    throw ConfigError("op_set: unknown role");
}

std::vector<OpKind> decoder_op_set(bool include_pool_zero) {
    if (include_pool_zero) return op_set(OpSetRole::encoder);
    return {OpKind::sep_conv_3x3, OpKind::sep_conv_5x5, OpKind::dil_conv_3x3_r2,
            OpKind::dil_conv_5x5_r2, OpKind::skip};
}

namespace {

Var he_kernel(int co, int cig, int k, Rng& rng) {
    Tensor w({co, cig, k, k});
    const double std = std::sqrt(1.0 / (static_cast<double>(cig) * k * k));
    for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = std * rng.normal();
    return Var::leaf(std::move(w), true);
}

} // namespace

Var OpInstance::forward(const Var& x) const {
    if (x.value().ndim() != 4 || x.value().dim(1) != channels)
        throw ContractError("OpInstance: input channels do not match");
    using namespace autodiff;
    const kernels::Conv2dSpec dw3{1, 1, 1, channels};
    const kernels::Conv2dSpec dw5{1, 2, 1, channels};
    const kernels::Conv2dSpec pw{1, 0, 1, 1};
    switch (kind) {
        case OpKind::sep_conv_3x3:
            return conv2d(conv2d(conv2d(conv2d(x, params[0], dw3), params[1], pw), params[2], dw3),
                          params[3], pw);
        case OpKind::sep_conv_5x5:
            return conv2d(conv2d(conv2d(conv2d(x, params[0], dw5), params[1], pw), params[2], dw5),
                          params[3], pw);
        case OpKind::dil_conv_3x3_r2:
            return conv2d(x, params[0], {1, 2, 2, 1});
        case OpKind::dil_conv_5x5_r2:
            return conv2d(x, params[0], {1, 4, 2, 1});
        case OpKind::avg_pool_3x3:
            return avgpool3x3(x);
        case OpKind::max_pool_3x3:
            return maxpool3x3(x);
        case OpKind::skip:
            return x;
        case OpKind::zero:
            return constant(Tensor::zeros(x.value().shape()));
    }
    throw ContractError("OpInstance: unknown kind");
}

OpInstance build_op(OpKind kind, int channels, Rng& rng) {
    if (channels < 1) throw ConfigError("build_op: channels must be >= 1");
    OpInstance op;
    op.kind = kind;
    op.channels = channels;
    switch (kind) {
        case OpKind::sep_conv_3x3:
            op.params = {he_kernel(channels, 1, 3, rng), he_kernel(channels, channels, 1, rng),
                         he_kernel(channels, 1, 3, rng), he_kernel(channels, channels, 1, rng)};
            break;
        case OpKind::sep_conv_5x5:
            op.params = {he_kernel(channels, 1, 5, rng), he_kernel(channels, channels, 1, rng),
                         he_kernel(channels, 1, 5, rng), he_kernel(channels, channels, 1, rng)};
            break;
        case OpKind::dil_conv_3x3_r2:
            op.params = {he_kernel(channels, channels, 3, rng)};
            break;
        case OpKind::dil_conv_5x5_r2:
            op.params = {he_kernel(channels, channels, 5, rng)};
            break;
        default:
            break; // pooling, skip, zero carry no parameters
    }
    return op;
}

OpInstance build_op(OpKind kind, int channels, std::uint64_t seed) {
    Rng rng(seed);
    return build_op(kind, channels, rng);
}

} // namespace ssnas
