#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssnas/graph.hpp"
#include "ssnas/rng.hpp"

namespace ssnas {

/// Candidate spatial transforms searched over by the encoder and decoder
/// cells. All preserve (C,H,W) shape and map zero input to zero output.
enum class OpKind {
    sep_conv_3x3,
    sep_conv_5x5,
    dil_conv_3x3_r2,
    dil_conv_5x5_r2,
    avg_pool_3x3,
    max_pool_3x3,
    skip,
    zero,
};

enum class OpSetRole { encoder, decoder };

const char* op_name(OpKind kind);
OpKind op_from_name(const std::string& name);
OpSetRole role_from_string(const std::string& role);

/// Fixed, documented candidate ordering per role. Encoder: all 8 kinds.
/// Decoder: separable/dilated convolutions and skip (pooling and zero are
/// excluded by default; see decoder_op_set for the ablation variant).
std::vector<OpKind> op_set(OpSetRole role);

/// Decoder candidates with the pooling/zero ablation switch.
std::vector<OpKind> decoder_op_set(bool include_pool_zero);

/// A parametric instance of one candidate op at a fixed channel width.
/// Convolutional kinds are bias-free; parameters are held as graph leaves.
struct OpInstance {
    OpKind kind = OpKind::skip;
    int channels = 0;
    std::vector<autodiff::Var> params;

    autodiff::Var forward(const autodiff::Var& x) const;
};

/// Deterministic factory: identical (kind, channels, seed) give bit-identical
/// parameters.
OpInstance build_op(OpKind kind, int channels, std::uint64_t seed);
OpInstance build_op(OpKind kind, int channels, Rng& rng);

} // namespace ssnas
