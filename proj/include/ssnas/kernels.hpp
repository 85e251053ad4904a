#pragma once

#include <cstdint>
#include <vector>

#include "ssnas/tensor.hpp"

namespace ssnas::kernels {

/// Runtime switch between the OpenMP path and plain serial loops. Both paths
/// share the same per-output-element code and accumulation order, so results
/// are bit-identical regardless of the switch or the thread count.
void set_parallel(bool on);
bool parallel_enabled();

struct Conv2dSpec {
    int stride = 1;
    int pad = 0;
    int dilation = 1;
    int groups = 1;
};

int conv2d_out_size(int in, int kernel, const Conv2dSpec& spec);

/// x (B,Ci,H,W), w (Co,Ci/g,kh,kw) -> y (B,Co,Ho,Wo). Bias-free.
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Conv2dSpec& spec);
/// Accumulates dL/dx into gx given dL/dy.
void conv2d_grad_input(Tensor& gx, const Tensor& gy, const Tensor& w, const Conv2dSpec& spec);
/// Accumulates dL/dw into gw given dL/dy.
void conv2d_grad_weight(Tensor& gw, const Tensor& gy, const Tensor& x, const Conv2dSpec& spec);

/// x (B,T,F), w (F,D) -> y (B,T,D).
Tensor linear_forward(const Tensor& x, const Tensor& w);
void linear_grad_input(Tensor& gx, const Tensor& gy, const Tensor& w);
void linear_grad_weight(Tensor& gw, const Tensor& gy, const Tensor& x);

/// Batched matmul with optional transposes: a (B,*,*), b (B,*,*) -> (B,M,N).
Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b);

/// 3x3 pooling, stride 1, zero padding 1 (spatial size preserved).
Tensor avgpool3x3_forward(const Tensor& x);
void avgpool3x3_backward(Tensor& gx, const Tensor& gy);
/// argmax records the flat input index chosen per output element (first-wins on ties).
Tensor maxpool3x3_forward(const Tensor& x, std::vector<std::int64_t>& argmax);
void maxpool3x3_backward(Tensor& gx, const Tensor& gy, const std::vector<std::int64_t>& argmax);

Tensor upsample_nearest_forward(const Tensor& x, int factor);
void upsample_nearest_backward(Tensor& gx, const Tensor& gy, int factor);

Tensor relu_forward(const Tensor& x);
void relu_backward(Tensor& gx, const Tensor& gy, const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
/// y += c * x
void axpy(Tensor& y, double c, const Tensor& x);

/// y = sum_k w[k] * xs[k]; all xs share one shape, w has length xs.size().
Tensor weighted_sum(const std::vector<const Tensor*>& xs, const Tensor& w);

/// Softmax over the channel dimension of (B,C,H,W).
Tensor softmax_channel_forward(const Tensor& x);
void softmax_channel_backward(Tensor& gx, const Tensor& gy, const Tensor& y);

/// (B,C,H,W) -> (B,H*W,C) and back.
Tensor map_to_tokens(const Tensor& x);
Tensor tokens_to_map(const Tensor& x, int height, int width);

/// numer (B,T,D) / (denom (B,T,1) + eps), elementwise along D.
Tensor div_bcast_forward(const Tensor& numer, const Tensor& denom, double eps);
void div_bcast_backward(Tensor& gnumer, Tensor& gdenom, const Tensor& gy,
                        const Tensor& numer, const Tensor& denom, double eps);

/// (B,T,D) -> (B,D), summing over tokens.
Tensor sum_tokens(const Tensor& x);
void sum_tokens_backward(Tensor& gx, const Tensor& gy);

/// Column subset of (B,T,D): keep cols[i] in order.
Tensor col_gather(const Tensor& x, const std::vector<int>& cols);
void col_gather_backward(Tensor& gx, const Tensor& gy, const std::vector<int>& cols);
/// Inverse: out[...,cols[i]] = sub[...,i], out[...,other] = base[...,other].
Tensor col_merge(const Tensor& base, const Tensor& sub, const std::vector<int>& cols);
void col_merge_backward(Tensor& gbase, Tensor& gsub, const Tensor& gy, const std::vector<int>& cols);

/// Channel concatenation of (B,Ci,H,W) blocks.
Tensor concat_channels(const std::vector<const Tensor*>& xs);
void concat_channels_backward(std::vector<Tensor*>& gxs, const Tensor& gy);

} // namespace ssnas::kernels
