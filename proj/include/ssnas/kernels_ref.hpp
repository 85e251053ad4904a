#pragma once

#include "ssnas/kernels.hpp"

namespace ssnas::kernels_ref {

/// Straightforward single-threaded implementations of the heavy kernels,
/// written independently of the dispatch versions in kernels.cpp. They are
/// the correctness reference for the parallel path and the serial baseline
/// for the kernel benchmark.

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const kernels::Conv2dSpec& spec);
void conv2d_grad_input(Tensor& gx, const Tensor& gy, const Tensor& w, const kernels::Conv2dSpec& spec);
void conv2d_grad_weight(Tensor& gw, const Tensor& gy, const Tensor& x, const kernels::Conv2dSpec& spec);

Tensor linear_forward(const Tensor& x, const Tensor& w);
Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b);

Tensor avgpool3x3_forward(const Tensor& x);
Tensor maxpool3x3_forward(const Tensor& x);
Tensor upsample_nearest_forward(const Tensor& x, int factor);

} // namespace ssnas::kernels_ref
