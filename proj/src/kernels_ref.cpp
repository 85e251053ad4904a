#include "ssnas/kernels_ref.hpp"

#include <algorithm>
#include <limits>

namespace ssnas::kernels_ref {

using kernels::Conv2dSpec;

namespace {

inline std::int64_t idx4(int b, int c, int h, int w, int C, int H, int W) {
    return ((static_cast<std::int64_t>(b) * C + c) * H + h) * W + w;
}

} // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Conv2dSpec& s) {
    const int B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Co = w.dim(0), Cig = w.dim(1), Kh = w.dim(2), Kw = w.dim(3);
    const int Ho = kernels::conv2d_out_size(H, Kh, s);
    const int Wo = kernels::conv2d_out_size(W, Kw, s);
    const int Cog = Co / s.groups;
    Tensor y({B, Co, Ho, Wo});
    for (int b = 0; b < B; ++b)
        for (int co = 0; co < Co; ++co)
            for (int cg = 0; cg < Cig; ++cg) {
                const int ci = (co / Cog) * Cig + cg;
                for (int kh = 0; kh < Kh; ++kh)
                    for (int kw = 0; kw < Kw; ++kw) {
                        const double wv = w[((static_cast<std::int64_t>(co) * Cig + cg) * Kh + kh) * Kw + kw];
                        for (int oh = 0; oh < Ho; ++oh) {
                            const int ih = oh * s.stride - s.pad + kh * s.dilation;
                            if (ih < 0 || ih >= H) continue;
                            for (int ow = 0; ow < Wo; ++ow) {
                                const int iw = ow * s.stride - s.pad + kw * s.dilation;
                                if (iw < 0 || iw >= W) continue;
                                y[idx4(b, co, oh, ow, Co, Ho, Wo)] += wv * x[idx4(b, ci, ih, iw, Ci, H, W)];
                            }
                        }
                    }
            }
    return y;
}

void conv2d_grad_input(Tensor& gx, const Tensor& gy, const Tensor& w, const Conv2dSpec& s) {
    const int B = gx.dim(0), Ci = gx.dim(1), H = gx.dim(2), W = gx.dim(3);
    const int Co = w.dim(0), Cig = w.dim(1), Kh = w.dim(2), Kw = w.dim(3);
    const int Ho = gy.dim(2), Wo = gy.dim(3);
    const int Cog = Co / s.groups;
    for (int b = 0; b < B; ++b)
        for (int co = 0; co < Co; ++co)
            for (int cg = 0; cg < Cig; ++cg) {
                const int ci = (co / Cog) * Cig + cg;
                for (int kh = 0; kh < Kh; ++kh)
                    for (int kw = 0; kw < Kw; ++kw) {
                        const double wv = w[((static_cast<std::int64_t>(co) * Cig + cg) * Kh + kh) * Kw + kw];
                        for (int oh = 0; oh < Ho; ++oh) {
                            const int ih = oh * s.stride - s.pad + kh * s.dilation;
                            if (ih < 0 || ih >= H) continue;
                            for (int ow = 0; ow < Wo; ++ow) {
                                const int iw = ow * s.stride - s.pad + kw * s.dilation;
                                if (iw < 0 || iw >= W) continue;
                                gx[idx4(b, ci, ih, iw, Ci, H, W)] += wv * gy[idx4(b, co, oh, ow, Co, Ho, Wo)];
                            }
                        }
                    }
            }
}

void conv2d_grad_weight(Tensor& gw, const Tensor& gy, const Tensor& x, const Conv2dSpec& s) {
    const int B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Co = gw.dim(0), Cig = gw.dim(1), Kh = gw.dim(2), Kw = gw.dim(3);
    const int Ho = gy.dim(2), Wo = gy.dim(3);
    const int Cog = Co / s.groups;
    for (int b = 0; b < B; ++b)
        for (int co = 0; co < Co; ++co)
            for (int cg = 0; cg < Cig; ++cg) {
                const int ci = (co / Cog) * Cig + cg;
                for (int kh = 0; kh < Kh; ++kh)
                    for (int kw = 0; kw < Kw; ++kw) {
                        double acc = 0.0;
                        for (int oh = 0; oh < Ho; ++oh) {
                            const int ih = oh * s.stride - s.pad + kh * s.dilation;
                            if (ih < 0 || ih >= H) continue;
                            for (int ow = 0; ow < Wo; ++ow) {
                                const int iw = ow * s.stride - s.pad + kw * s.dilation;
                                if (iw < 0 || iw >= W) continue;
                                acc += gy[idx4(b, co, oh, ow, Co, Ho, Wo)] * x[idx4(b, ci, ih, iw, Ci, H, W)];
                            }
                        }
                        gw[((static_cast<std::int64_t>(co) * Cig + cg) * Kh + kh) * Kw + kw] += acc;
                    }
            }
}

Tensor linear_forward(const Tensor& x, const Tensor& w) {
    const int B = x.dim(0), T = x.dim(1), F = x.dim(2), D = w.dim(1);
    Tensor y({B, T, D});
    for (int b = 0; b < B; ++b)
        for (int t = 0; t < T; ++t)
            for (int f = 0; f < F; ++f) {
                const double xv = x[(static_cast<std::int64_t>(b) * T + t) * F + f];
                for (int dd = 0; dd < D; ++dd)
                    y[(static_cast<std::int64_t>(b) * T + t) * D + dd] +=
                        xv * w[static_cast<std::int64_t>(f) * D + dd];
            }
    return y;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    const int B = a.dim(0);
    const int M = trans_a ? a.dim(2) : a.dim(1);
    const int K = trans_a ? a.dim(1) : a.dim(2);
    const int N = trans_b ? b.dim(1) : b.dim(2);
    Tensor y({B, M, N});
    for (int bi = 0; bi < B; ++bi)
        for (int m = 0; m < M; ++m)
            for (int n = 0; n < N; ++n) {
                double acc = 0.0;
                for (int k = 0; k < K; ++k) {
                    const double av = trans_a
                        ? a[(static_cast<std::int64_t>(bi) * a.dim(1) + k) * a.dim(2) + m]
                        : a[(static_cast<std::int64_t>(bi) * a.dim(1) + m) * a.dim(2) + k];
                    const double bv = trans_b
                        ? b[(static_cast<std::int64_t>(bi) * b.dim(1) + n) * b.dim(2) + k]
                        : b[(static_cast<std::int64_t>(bi) * b.dim(1) + k) * b.dim(2) + n];
                    acc += av * bv;
                }
                y[(static_cast<std::int64_t>(bi) * M + m) * N + n] = acc;
            }
    return y;
}

Tensor avgpool3x3_forward(const Tensor& x) {
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y(x.shape());
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int oh = 0; oh < H; ++oh)
                for (int ow = 0; ow < W; ++ow) {
                    double acc = 0.0;
                    for (int ih = oh - 1; ih <= oh + 1; ++ih)
                        for (int iw = ow - 1; iw <= ow + 1; ++iw)
                            if (ih >= 0 && ih < H && iw >= 0 && iw < W)
                                acc += x[idx4(b, c, ih, iw, C, H, W)];
                    y[idx4(b, c, oh, ow, C, H, W)] = acc / 9.0;
                }
    return y;
}

Tensor maxpool3x3_forward(const Tensor& x) {
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y(x.shape());
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int oh = 0; oh < H; ++oh)
                for (int ow = 0; ow < W; ++ow) {
                    double best = -std::numeric_limits<double>::infinity();
                    for (int ih = oh - 1; ih <= oh + 1; ++ih)
                        for (int iw = ow - 1; iw <= ow + 1; ++iw)
                            if (ih >= 0 && ih < H && iw >= 0 && iw < W)
                                best = std::max(best, x[idx4(b, c, ih, iw, C, H, W)]);
                    y[idx4(b, c, oh, ow, C, H, W)] = best;
                }
    return y;
}

Tensor upsample_nearest_forward(const Tensor& x, int factor) {
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y({B, C, H * factor, W * factor});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int oh = 0; oh < H * factor; ++oh)
                for (int ow = 0; ow < W * factor; ++ow)
                    y[idx4(b, c, oh, ow, C, H * factor, W * factor)] =
                        x[idx4(b, c, oh / factor, ow / factor, C, H, W)];
    return y;
}

} // namespace ssnas::kernels_ref
