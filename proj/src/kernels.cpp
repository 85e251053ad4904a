#include "ssnas/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ssnas::kernels {

namespace {

std::atomic<bool> g_parallel{true};

// Minimum element count before spinning up a thread team.
constexpr std::int64_t kGrain = 512;

// Both branches run the same body per index i; OpenMP only partitions the
// index range, so results are bit-identical to the serial branch.
template <class F>
void par_for(std::int64_t n, F&& f) {
    if (g_parallel.load(std::memory_order_relaxed) && n >= 2) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (std::int64_t i = 0; i < n; ++i) f(i);
    } else {
        for (std::int64_t i = 0; i < n; ++i) f(i);
    }
}

template <class F>
void par_for_grained(std::int64_t n, F&& f) {
    if (n >= kGrain) {
        par_for(n, f);
    } else {
        for (std::int64_t i = 0; i < n; ++i) f(i);
    }
}

void check_4d(const Tensor& t, const char* who) {
    if (t.ndim() != 4) throw ContractError(std::string(who) + ": expected a 4-d tensor");
}

struct ConvDims {
    int b, ci, h, w;
    int co, cig, kh, kw;
    int ho, wo;
    int cog; // output channels per group
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, const Conv2dSpec& s) {
    check_4d(x, "conv2d");
    check_4d(w, "conv2d");
    ConvDims d;
    d.b = x.dim(0); d.ci = x.dim(1); d.h = x.dim(2); d.w = x.dim(3);
    d.co = w.dim(0); d.cig = w.dim(1); d.kh = w.dim(2); d.kw = w.dim(3);
    if (s.groups < 1 || d.ci % s.groups != 0 || d.co % s.groups != 0)
        throw ContractError("conv2d: invalid group count");
    if (d.cig != d.ci / s.groups)
        throw ContractError("conv2d: weight shape inconsistent with groups");
    d.ho = conv2d_out_size(d.h, d.kh, s);
    d.wo = conv2d_out_size(d.w, d.kw, s);
    if (d.ho <= 0 || d.wo <= 0) throw ContractError("conv2d: empty output");
    d.cog = d.co / s.groups;
    return d;
}

} // namespace

void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }
bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }

int conv2d_out_size(int in, int kernel, const Conv2dSpec& spec) {
    return (in + 2 * spec.pad - spec.dilation * (kernel - 1) - 1) / spec.stride + 1;
}

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Conv2dSpec& s) {
    ConvDims d = conv_dims(x, w, s);
    Tensor y({d.b, d.co, d.ho, d.wo});
    const double* xp = x.data();
    const double* wp = w.data();
    double* yp = y.data();
    par_for(static_cast<std::int64_t>(d.b) * d.co, [&](std::int64_t bc) {
        const int b = static_cast<int>(bc / d.co);
        const int co = static_cast<int>(bc % d.co);
        const int ci0 = (co / d.cog) * d.cig;
        const double* wrow = wp + static_cast<std::int64_t>(co) * d.cig * d.kh * d.kw;
        double* yrow = yp + ((static_cast<std::int64_t>(b) * d.co + co) * d.ho) * d.wo;
        for (int oh = 0; oh < d.ho; ++oh)
            for (int ow = 0; ow < d.wo; ++ow) {
                double acc = 0.0;
                for (int cg = 0; cg < d.cig; ++cg) {
                    const double* xpl = xp + ((static_cast<std::int64_t>(b) * d.ci + ci0 + cg) * d.h) * d.w;
                    const double* wk = wrow + static_cast<std::int64_t>(cg) * d.kh * d.kw;
                    for (int kh = 0; kh < d.kh; ++kh) {
                        const int ih = oh * s.stride - s.pad + kh * s.dilation;
                        if (ih < 0 || ih >= d.h) continue;
                        for (int kw = 0; kw < d.kw; ++kw) {
                            const int iw = ow * s.stride - s.pad + kw * s.dilation;
                            if (iw < 0 || iw >= d.w) continue;
                            acc += xpl[static_cast<std::int64_t>(ih) * d.w + iw] * wk[kh * d.kw + kw];
                        }
                    }
                }
                yrow[static_cast<std::int64_t>(oh) * d.wo + ow] = acc;
            }
    });
    return y;
}

void conv2d_grad_input(Tensor& gx, const Tensor& gy, const Tensor& w, const Conv2dSpec& s) {
    ConvDims d = conv_dims(gx, w, s);
    if (gy.dim(0) != d.b || gy.dim(1) != d.co || gy.dim(2) != d.ho || gy.dim(3) != d.wo)
        throw ContractError("conv2d_grad_input: gy shape mismatch");
    const double* gyp = gy.data();
    const double* wp = w.data();
    double* gxp = gx.data();
    par_for(static_cast<std::int64_t>(d.b) * d.ci, [&](std::int64_t bc) {
        const int b = static_cast<int>(bc / d.ci);
        const int ci = static_cast<int>(bc % d.ci);
        const int g = ci / d.cig;
        const int cg = ci % d.cig;
        double* gxpl = gxp + ((static_cast<std::int64_t>(b) * d.ci + ci) * d.h) * d.w;
        for (int ih = 0; ih < d.h; ++ih)
            for (int iw = 0; iw < d.w; ++iw) {
                double acc = 0.0;
                for (int co = g * d.cog; co < (g + 1) * d.cog; ++co) {
                    const double* gyrow = gyp + ((static_cast<std::int64_t>(b) * d.co + co) * d.ho) * d.wo;
                    const double* wk = wp + (static_cast<std::int64_t>(co) * d.cig + cg) * d.kh * d.kw;
                    for (int kh = 0; kh < d.kh; ++kh) {
                        const int ohs = ih + s.pad - kh * s.dilation;
                        if (ohs < 0 || ohs % s.stride != 0) continue;
                        const int oh = ohs / s.stride;
                        if (oh >= d.ho) continue;
                        for (int kw = 0; kw < d.kw; ++kw) {
                            const int ows = iw + s.pad - kw * s.dilation;
                            if (ows < 0 || ows % s.stride != 0) continue;
                            const int ow = ows / s.stride;
                            if (ow >= d.wo) continue;
                            acc += gyrow[static_cast<std::int64_t>(oh) * d.wo + ow] * wk[kh * d.kw + kw];
                        }
                    }
                }
                gxpl[static_cast<std::int64_t>(ih) * d.w + iw] += acc;
            }
    });
}

void conv2d_grad_weight(Tensor& gw, const Tensor& gy, const Tensor& x, const Conv2dSpec& s) {
    ConvDims d = conv_dims(x, gw, s);
    if (gy.dim(0) != d.b || gy.dim(1) != d.co || gy.dim(2) != d.ho || gy.dim(3) != d.wo)
        throw ContractError("conv2d_grad_weight: gy shape mismatch");
    const double* gyp = gy.data();
    const double* xp = x.data();
    double* gwp = gw.data();
    par_for(static_cast<std::int64_t>(d.co) * d.cig, [&](std::int64_t cc) {
        const int co = static_cast<int>(cc / d.cig);
        const int cg = static_cast<int>(cc % d.cig);
        const int ci = (co / d.cog) * d.cig + cg;
        double* gwk = gwp + (static_cast<std::int64_t>(co) * d.cig + cg) * d.kh * d.kw;
        for (int kh = 0; kh < d.kh; ++kh)
            for (int kw = 0; kw < d.kw; ++kw) {
                double acc = 0.0;
                for (int b = 0; b < d.b; ++b) {
                    const double* gyrow = gyp + ((static_cast<std::int64_t>(b) * d.co + co) * d.ho) * d.wo;
                    const double* xpl = xp + ((static_cast<std::int64_t>(b) * d.ci + ci) * d.h) * d.w;
                    for (int oh = 0; oh < d.ho; ++oh) {
                        const int ih = oh * s.stride - s.pad + kh * s.dilation;
                        if (ih < 0 || ih >= d.h) continue;
                        for (int ow = 0; ow < d.wo; ++ow) {
                            const int iw = ow * s.stride - s.pad + kw * s.dilation;
                            if (iw < 0 || iw >= d.w) continue;
                            acc += gyrow[static_cast<std::int64_t>(oh) * d.wo + ow] *
                                   xpl[static_cast<std::int64_t>(ih) * d.w + iw];
                        }
                    }
                }
                gwk[kh * d.kw + kw] += acc;
            }
    });
}

Tensor linear_forward(const Tensor& x, const Tensor& w) {
    if (x.ndim() != 3 || w.ndim() != 2 || x.dim(2) != w.dim(0))
        throw ContractError("linear: shape mismatch " + Tensor::shape_str(x.shape()) + " x " +
                            Tensor::shape_str(w.shape()));
    const int B = x.dim(0), T = x.dim(1), F = x.dim(2), D = w.dim(1);
    Tensor y({B, T, D});
    const double* xp = x.data();
    const double* wp = w.data();
    double* yp = y.data();
    par_for(static_cast<std::int64_t>(B) * T, [&](std::int64_t bt) {
        const double* xr = xp + bt * F;
        double* yr = yp + bt * D;
        for (int dd = 0; dd < D; ++dd) {
            double acc = 0.0;
            for (int f = 0; f < F; ++f) acc += xr[f] * wp[static_cast<std::int64_t>(f) * D + dd];
            yr[dd] = acc;
        }
    });
    return y;
}

void linear_grad_input(Tensor& gx, const Tensor& gy, const Tensor& w) {
    const int B = gx.dim(0), T = gx.dim(1), F = gx.dim(2), D = w.dim(1);
    const double* gyp = gy.data();
    const double* wp = w.data();
    double* gxp = gx.data();
    par_for(static_cast<std::int64_t>(B) * T, [&](std::int64_t bt) {
        const double* gyr = gyp + bt * D;
        double* gxr = gxp + bt * F;
        for (int f = 0; f < F; ++f) {
            double acc = 0.0;
            const double* wr = wp + static_cast<std::int64_t>(f) * D;
            for (int dd = 0; dd < D; ++dd) acc += gyr[dd] * wr[dd];
            gxr[f] += acc;
        }
    });
}

void linear_grad_weight(Tensor& gw, const Tensor& gy, const Tensor& x) {
    const int B = x.dim(0), T = x.dim(1), F = x.dim(2), D = gy.dim(2);
    const double* gyp = gy.data();
    const double* xp = x.data();
    double* gwp = gw.data();
    par_for(F, [&](std::int64_t f) {
        double* gwr = gwp + f * D;
        for (std::int64_t bt = 0; bt < static_cast<std::int64_t>(B) * T; ++bt) {
            const double xv = xp[bt * F + f];
            if (xv == 0.0) continue;
            const double* gyr = gyp + bt * D;
            for (int dd = 0; dd < D; ++dd) gwr[dd] += xv * gyr[dd];
        }
    });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0))
        throw ContractError("bmm: expected matching 3-d tensors");
    const int B = a.dim(0);
    const int M = trans_a ? a.dim(2) : a.dim(1);
    const int K = trans_a ? a.dim(1) : a.dim(2);
    const int Kb = trans_b ? b.dim(2) : b.dim(1);
    const int N = trans_b ? b.dim(1) : b.dim(2);
    if (K != Kb) throw ContractError("bmm: inner dimensions differ");
    Tensor y({B, M, N});
    const double* ap = a.data();
    const double* bp = b.data();
    double* yp = y.data();
    const std::int64_t as = static_cast<std::int64_t>(a.dim(1)) * a.dim(2);
    const std::int64_t bs = static_cast<std::int64_t>(b.dim(1)) * b.dim(2);
    par_for(static_cast<std::int64_t>(B) * M, [&](std::int64_t bm) {
        const int bi = static_cast<int>(bm / M);
        const int m = static_cast<int>(bm % M);
        const double* ab = ap + bi * as;
        const double* bb = bp + bi * bs;
        double* yr = yp + bm * N;
        for (int n = 0; n < N; ++n) {
            double acc = 0.0;
            for (int k = 0; k < K; ++k) {
                const double av = trans_a ? ab[static_cast<std::int64_t>(k) * M + m]
                                          : ab[static_cast<std::int64_t>(m) * K + k];
                const double bv = trans_b ? bb[static_cast<std::int64_t>(n) * K + k]
                                          : bb[static_cast<std::int64_t>(k) * N + n];
                acc += av * bv;
            }
            yr[n] = acc;
        }
    });
    return y;
}

Tensor avgpool3x3_forward(const Tensor& x) {
    check_4d(x, "avgpool3x3");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y(x.shape());
    const double* xp = x.data();
    double* yp = y.data();
    par_for(static_cast<std::int64_t>(B) * C, [&](std::int64_t bc) {
        const double* xpl = xp + bc * H * W;
        double* ypl = yp + bc * H * W;
        for (int oh = 0; oh < H; ++oh)
            for (int ow = 0; ow < W; ++ow) {
                double acc = 0.0;
                for (int dh = -1; dh <= 1; ++dh) {
                    const int ih = oh + dh;
                    if (ih < 0 || ih >= H) continue;
                    for (int dw = -1; dw <= 1; ++dw) {
                        const int iw = ow + dw;
                        if (iw < 0 || iw >= W) continue;
                        acc += xpl[static_cast<std::int64_t>(ih) * W + iw];
                    }
                }
                ypl[static_cast<std::int64_t>(oh) * W + ow] = acc / 9.0;
            }
    });
    return y;
}

void avgpool3x3_backward(Tensor& gx, const Tensor& gy) {
    const int B = gx.dim(0), C = gx.dim(1), H = gx.dim(2), W = gx.dim(3);
    const double* gyp = gy.data();
    double* gxp = gx.data();
    par_for(static_cast<std::int64_t>(B) * C, [&](std::int64_t bc) {
        const double* gypl = gyp + bc * H * W;
        double* gxpl = gxp + bc * H * W;
        for (int ih = 0; ih < H; ++ih)
            for (int iw = 0; iw < W; ++iw) {
                double acc = 0.0;
                for (int dh = -1; dh <= 1; ++dh) {
                    const int oh = ih + dh;
                    if (oh < 0 || oh >= H) continue;
                    for (int dw = -1; dw <= 1; ++dw) {
                        const int ow = iw + dw;
                        if (ow < 0 || ow >= W) continue;
                        acc += gypl[static_cast<std::int64_t>(oh) * W + ow];
                    }
                }
                gxpl[static_cast<std::int64_t>(ih) * W + iw] += acc / 9.0;
            }
    });
}

Tensor maxpool3x3_forward(const Tensor& x, std::vector<std::int64_t>& argmax) {
    check_4d(x, "maxpool3x3");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y(x.shape());
    argmax.assign(static_cast<std::size_t>(y.numel()), -1);
    const double* xp = x.data();
    double* yp = y.data();
    std::int64_t* am = argmax.data();
    par_for(static_cast<std::int64_t>(B) * C, [&](std::int64_t bc) {
        const std::int64_t base = bc * H * W;
        const double* xpl = xp + base;
        for (int oh = 0; oh < H; ++oh)
            for (int ow = 0; ow < W; ++ow) {
                double best = -std::numeric_limits<double>::infinity();
                std::int64_t bi = -1;
                // out-of-bounds positions are skipped (implicit -inf padding)
                for (int dh = -1; dh <= 1; ++dh) {
                    const int ih = oh + dh;
                    if (ih < 0 || ih >= H) continue;
                    for (int dw = -1; dw <= 1; ++dw) {
                        const int iw = ow + dw;
                        if (iw < 0 || iw >= W) continue;
                        const std::int64_t idx = static_cast<std::int64_t>(ih) * W + iw;
                        if (xpl[idx] > best) {
                            best = xpl[idx];
                            bi = idx;
                        }
                    }
                }
                const std::int64_t o = base + static_cast<std::int64_t>(oh) * W + ow;
                yp[o] = best;
                am[o] = base + bi;
            }
    });
    return y;
}

void maxpool3x3_backward(Tensor& gx, const Tensor& gy, const std::vector<std::int64_t>& argmax) {
    const int B = gx.dim(0), C = gx.dim(1), H = gx.dim(2), W = gx.dim(3);
    const double* gyp = gy.data();
    double* gxp = gx.data();
    // scatter stays inside one (b,c) plane, so planes can run in parallel
    par_for(static_cast<std::int64_t>(B) * C, [&](std::int64_t bc) {
        const std::int64_t base = bc * H * W;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(H) * W; ++i)
            gxp[argmax[static_cast<std::size_t>(base + i)]] += gyp[base + i];
    });
}

Tensor upsample_nearest_forward(const Tensor& x, int factor) {
    check_4d(x, "upsample_nearest");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y({B, C, H * factor, W * factor});
    const double* xp = x.data();
    double* yp = y.data();
    const int Ho = H * factor, Wo = W * factor;
    par_for(static_cast<std::int64_t>(B) * C, [&](std::int64_t bc) {
        const double* xpl = xp + bc * H * W;
        double* ypl = yp + bc * static_cast<std::int64_t>(Ho) * Wo;
        for (int oh = 0; oh < Ho; ++oh) {
            const double* xrow = xpl + static_cast<std::int64_t>(oh / factor) * W;
            double* yrow = ypl + static_cast<std::int64_t>(oh) * Wo;
            for (int ow = 0; ow < Wo; ++ow) yrow[ow] = xrow[ow / factor];
        }
    });
    return y;
}

void upsample_nearest_backward(Tensor& gx, const Tensor& gy, int factor) {
    const int B = gx.dim(0), C = gx.dim(1), H = gx.dim(2), W = gx.dim(3);
    const int Wo = W * factor;
    const double* gyp = gy.data();
    double* gxp = gx.data();
    par_for(static_cast<std::int64_t>(B) * C, [&](std::int64_t bc) {
        const double* gypl = gyp + bc * static_cast<std::int64_t>(H) * factor * Wo;
        double* gxpl = gxp + bc * H * W;
        for (int ih = 0; ih < H; ++ih)
            for (int iw = 0; iw < W; ++iw) {
                double acc = 0.0;
                for (int dh = 0; dh < factor; ++dh) {
                    const double* gyrow = gypl + (static_cast<std::int64_t>(ih) * factor + dh) * Wo;
                    for (int dw = 0; dw < factor; ++dw) acc += gyrow[iw * factor + dw];
                }
                gxpl[static_cast<std::int64_t>(ih) * W + iw] += acc;
            }
    });
}

Tensor relu_forward(const Tensor& x) {
    Tensor y(x.shape());
    const double* xp = x.data();
    double* yp = y.data();
    par_for_grained(x.numel(), [&](std::int64_t i) { yp[i] = xp[i] > 0.0 ? xp[i] : 0.0; });
    return y;
}

void relu_backward(Tensor& gx, const Tensor& gy, const Tensor& x) {
    const double* xp = x.data();
    const double* gyp = gy.data();
    double* gxp = gx.data();
    par_for_grained(x.numel(), [&](std::int64_t i) {
        if (xp[i] > 0.0) gxp[i] += gyp[i];
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ContractError("add: shape mismatch");
    Tensor y(a.shape());
    const double* ap = a.data();
    const double* bp = b.data();
    double* yp = y.data();
    par_for_grained(a.numel(), [&](std::int64_t i) { yp[i] = ap[i] + bp[i]; });
    return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ContractError("sub: shape mismatch");
    Tensor y(a.shape());
    const double* ap = a.data();
    const double* bp = b.data();
    double* yp = y.data();
    par_for_grained(a.numel(), [&](std::int64_t i) { yp[i] = ap[i] - bp[i]; });
    return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ContractError("mul: shape mismatch");
    Tensor y(a.shape());
    const double* ap = a.data();
    const double* bp = b.data();
    double* yp = y.data();
    par_for_grained(a.numel(), [&](std::int64_t i) { yp[i] = ap[i] * bp[i]; });
    return y;
}

Tensor scale(const Tensor& a, double c) {
    Tensor y(a.shape());
    const double* ap = a.data();
    double* yp = y.data();
    par_for_grained(a.numel(), [&](std::int64_t i) { yp[i] = ap[i] * c; });
    return y;
}

void axpy(Tensor& y, double c, const Tensor& x) {
    if (!y.same_shape(x)) throw ContractError("axpy: shape mismatch");
    const double* xp = x.data();
    double* yp = y.data();
    par_for_grained(x.numel(), [&](std::int64_t i) { yp[i] += c * xp[i]; });
}

Tensor weighted_sum(const std::vector<const Tensor*>& xs, const Tensor& w) {
    if (xs.empty() || w.numel() != static_cast<std::int64_t>(xs.size()))
        throw ContractError("weighted_sum: weight count mismatch");
    Tensor y(xs[0]->shape());
    const std::size_t k = xs.size();
    double* yp = y.data();
    const double* wp = w.data();
    par_for_grained(y.numel(), [&](std::int64_t i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) acc += wp[j] * xs[j]->data()[i];
        yp[i] = acc;
    });
    return y;
}

Tensor softmax_channel_forward(const Tensor& x) {
    check_4d(x, "softmax_channel");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y(x.shape());
    const double* xp = x.data();
    double* yp = y.data();
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    par_for(static_cast<std::int64_t>(B) * hw, [&](std::int64_t i) {
        const int b = static_cast<int>(i / hw);
        const std::int64_t p = i % hw;
        const std::int64_t base = static_cast<std::int64_t>(b) * C * hw + p;
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < C; ++c) mx = std::max(mx, xp[base + c * hw]);
        double z = 0.0;
        for (int c = 0; c < C; ++c) {
            const double e = std::exp(xp[base + c * hw] - mx);
            yp[base + c * hw] = e;
            z += e;
        }
        for (int c = 0; c < C; ++c) yp[base + c * hw] /= z;
    });
    return y;
}

void softmax_channel_backward(Tensor& gx, const Tensor& gy, const Tensor& y) {
    const int B = y.dim(0), C = y.dim(1), H = y.dim(2), W = y.dim(3);
    const double* gyp = gy.data();
    const double* yp = y.data();
    double* gxp = gx.data();
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    par_for(static_cast<std::int64_t>(B) * hw, [&](std::int64_t i) {
        const int b = static_cast<int>(i / hw);
        const std::int64_t p = i % hw;
        const std::int64_t base = static_cast<std::int64_t>(b) * C * hw + p;
        double dot = 0.0;
        for (int c = 0; c < C; ++c) dot += gyp[base + c * hw] * yp[base + c * hw];
        for (int c = 0; c < C; ++c)
            gxp[base + c * hw] += yp[base + c * hw] * (gyp[base + c * hw] - dot);
    });
}

Tensor map_to_tokens(const Tensor& x) {
    check_4d(x, "map_to_tokens");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y({B, H * W, C});
    const double* xp = x.data();
    double* yp = y.data();
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    par_for(static_cast<std::int64_t>(B) * hw, [&](std::int64_t i) {
        const int b = static_cast<int>(i / hw);
        const std::int64_t t = i % hw;
        const double* xb = xp + static_cast<std::int64_t>(b) * C * hw;
        double* yr = yp + i * C;
        for (int c = 0; c < C; ++c) yr[c] = xb[c * hw + t];
    });
    return y;
}

Tensor tokens_to_map(const Tensor& x, int height, int width) {
    if (x.ndim() != 3 || x.dim(1) != height * width)
        throw ContractError("tokens_to_map: token count does not match spatial size");
    const int B = x.dim(0), C = x.dim(2);
    Tensor y({B, C, height, width});
    const double* xp = x.data();
    double* yp = y.data();
    const std::int64_t hw = static_cast<std::int64_t>(height) * width;
    par_for(static_cast<std::int64_t>(B) * C, [&](std::int64_t bc) {
        const int b = static_cast<int>(bc / C);
        const int c = static_cast<int>(bc % C);
        const double* xb = xp + static_cast<std::int64_t>(b) * hw * C;
        double* ypl = yp + bc * hw;
        for (std::int64_t t = 0; t < hw; ++t) ypl[t] = xb[t * C + c];
    });
    return y;
}

Tensor div_bcast_forward(const Tensor& numer, const Tensor& denom, double eps) {
    if (numer.ndim() != 3 || denom.ndim() != 3 || denom.dim(2) != 1 ||
        numer.dim(0) != denom.dim(0) || numer.dim(1) != denom.dim(1))
        throw ContractError("div_bcast: shape mismatch");
    const int B = numer.dim(0), T = numer.dim(1), D = numer.dim(2);
    Tensor y(numer.shape());
    const double* np = numer.data();
    const double* dp = denom.data();
    double* yp = y.data();
    par_for(static_cast<std::int64_t>(B) * T, [&](std::int64_t bt) {
        const double den = dp[bt] + eps;
        const double* nr = np + bt * D;
        double* yr = yp + bt * D;
        for (int dd = 0; dd < D; ++dd) yr[dd] = nr[dd] / den;
    });
    return y;
}

void div_bcast_backward(Tensor& gnumer, Tensor& gdenom, const Tensor& gy,
                        const Tensor& numer, const Tensor& denom, double eps) {
    const int B = numer.dim(0), T = numer.dim(1), D = numer.dim(2);
    const double* gyp = gy.data();
    const double* np = numer.data();
    const double* dp = denom.data();
    double* gnp = gnumer.data();
    double* gdp = gdenom.data();
    par_for(static_cast<std::int64_t>(B) * T, [&](std::int64_t bt) {
        const double den = dp[bt] + eps;
        const double* gyr = gyp + bt * D;
        const double* nr = np + bt * D;
        double* gnr = gnp + bt * D;
        double acc = 0.0;
        for (int dd = 0; dd < D; ++dd) {
            gnr[dd] += gyr[dd] / den;
            acc += gyr[dd] * nr[dd];
        }
        gdp[bt] += -acc / (den * den);
    });
}

Tensor sum_tokens(const Tensor& x) {
    if (x.ndim() != 3) throw ContractError("sum_tokens: expected a 3-d tensor");
    const int B = x.dim(0), T = x.dim(1), D = x.dim(2);
    Tensor y({B, 1, D});
    const double* xp = x.data();
    double* yp = y.data();
    par_for(static_cast<std::int64_t>(B) * D, [&](std::int64_t bd) {
        const int b = static_cast<int>(bd / D);
        const int dd = static_cast<int>(bd % D);
        const double* xb = xp + static_cast<std::int64_t>(b) * T * D;
        double acc = 0.0;
        for (int t = 0; t < T; ++t) acc += xb[static_cast<std::int64_t>(t) * D + dd];
        yp[bd] = acc;
    });
    return y;
}

void sum_tokens_backward(Tensor& gx, const Tensor& gy) {
    const int B = gx.dim(0), T = gx.dim(1), D = gx.dim(2);
    const double* gyp = gy.data();
    double* gxp = gx.data();
    par_for(static_cast<std::int64_t>(B) * T, [&](std::int64_t bt) {
        const int b = static_cast<int>(bt / T);
        const double* gyr = gyp + static_cast<std::int64_t>(b) * D;
        double* gxr = gxp + bt * D;
        for (int dd = 0; dd < D; ++dd) gxr[dd] += gyr[dd];
    });
}

Tensor col_gather(const Tensor& x, const std::vector<int>& cols) {
    if (x.ndim() != 3) throw ContractError("col_gather: expected a 3-d tensor");
    const int B = x.dim(0), T = x.dim(1), D = x.dim(2);
    const int K = static_cast<int>(cols.size());
    Tensor y({B, T, K});
    const double* xp = x.data();
    double* yp = y.data();
    par_for(static_cast<std::int64_t>(B) * T, [&](std::int64_t bt) {
        const double* xr = xp + bt * D;
        double* yr = yp + bt * K;
        for (int k = 0; k < K; ++k) yr[k] = xr[cols[static_cast<std::size_t>(k)]];
    });
    return y;
}

void col_gather_backward(Tensor& gx, const Tensor& gy, const std::vector<int>& cols) {
    const int B = gx.dim(0), T = gx.dim(1), D = gx.dim(2);
    const int K = static_cast<int>(cols.size());
    const double* gyp = gy.data();
    double* gxp = gx.data();
    par_for(static_cast<std::int64_t>(B) * T, [&](std::int64_t bt) {
        const double* gyr = gyp + bt * K;
        double* gxr = gxp + bt * D;
        for (int k = 0; k < K; ++k) gxr[cols[static_cast<std::size_t>(k)]] += gyr[k];
    });
}

Tensor col_merge(const Tensor& base, const Tensor& sub, const std::vector<int>& cols) {
    if (!(base.ndim() == 3 && sub.ndim() == 3 && base.dim(0) == sub.dim(0) &&
          base.dim(1) == sub.dim(1) && sub.dim(2) == static_cast<int>(cols.size())))
        throw ContractError("col_merge: shape mismatch");
    const int B = base.dim(0), T = base.dim(1), D = base.dim(2);
    const int K = static_cast<int>(cols.size());
    Tensor y = base;
    const double* sp = sub.data();
    double* yp = y.data();
    par_for(static_cast<std::int64_t>(B) * T, [&](std::int64_t bt) {
        const double* sr = sp + bt * K;
        double* yr = yp + bt * D;
        for (int k = 0; k < K; ++k) yr[cols[static_cast<std::size_t>(k)]] = sr[k];
    });
    return y;
}

void col_merge_backward(Tensor& gbase, Tensor& gsub, const Tensor& gy, const std::vector<int>& cols) {
    const int B = gbase.dim(0), T = gbase.dim(1), D = gbase.dim(2);
    const int K = static_cast<int>(cols.size());
    std::vector<char> masked(static_cast<std::size_t>(D), 0);
    for (int c : cols) masked[static_cast<std::size_t>(c)] = 1;
    const double* gyp = gy.data();
    double* gbp = gbase.data();
    double* gsp = gsub.data();
    par_for(static_cast<std::int64_t>(B) * T, [&](std::int64_t bt) {
        const double* gyr = gyp + bt * D;
        double* gbr = gbp + bt * D;
        double* gsr = gsp + bt * K;
        for (int dd = 0; dd < D; ++dd)
            if (!masked[static_cast<std::size_t>(dd)]) gbr[dd] += gyr[dd];
        for (int k = 0; k < K; ++k) gsr[k] += gyr[cols[static_cast<std::size_t>(k)]];
    });
}

Tensor concat_channels(const std::vector<const Tensor*>& xs) {
    if (xs.empty()) throw ContractError("concat_channels: no inputs");
    const int B = xs[0]->dim(0), H = xs[0]->dim(2), W = xs[0]->dim(3);
    int ctot = 0;
    for (const Tensor* t : xs) {
        check_4d(*t, "concat_channels");
        if (t->dim(0) != B || t->dim(2) != H || t->dim(3) != W)
            throw ContractError("concat_channels: mismatched batch or spatial size");
        ctot += t->dim(1);
    }
    Tensor y({B, ctot, H, W});
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    double* yp = y.data();
    int coff = 0;
    for (const Tensor* t : xs) {
        const int C = t->dim(1);
        const double* xp = t->data();
        par_for(static_cast<std::int64_t>(B) * C, [&](std::int64_t bc) {
            const int b = static_cast<int>(bc / C);
            const int c = static_cast<int>(bc % C);
            const double* src = xp + bc * hw;
            double* dst = yp + ((static_cast<std::int64_t>(b) * ctot) + coff + c) * hw;
            for (std::int64_t i = 0; i < hw; ++i) dst[i] = src[i];
        });
        coff += C;
    }
    return y;
}

void concat_channels_backward(std::vector<Tensor*>& gxs, const Tensor& gy) {
    const int B = gy.dim(0), H = gy.dim(2), W = gy.dim(3);
    const int ctot = gy.dim(1);
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    const double* gyp = gy.data();
    int coff = 0;
    for (Tensor* g : gxs) {
        const int C = g->dim(1);
        double* gp = g->data();
        par_for(static_cast<std::int64_t>(B) * C, [&](std::int64_t bc) {
            const int b = static_cast<int>(bc / C);
            const int c = static_cast<int>(bc % C);
            const double* src = gyp + ((static_cast<std::int64_t>(b) * ctot) + coff + c) * hw;
            double* dst = gp + bc * hw;
            for (std::int64_t i = 0; i < hw; ++i) dst[i] += src[i];
        });
        coff += C;
    }
}

} // namespace ssnas::kernels
