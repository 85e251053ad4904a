#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ssnas/kernels.hpp"
#include "ssnas/kernels_ref.hpp"
#include "support/test_util.hpp"

using namespace ssnas;
using testutil::bitwise_equal;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {

struct ParallelMode {
    explicit ParallelMode(bool on) : saved(kernels::parallel_enabled()) { kernels::set_parallel(on); }
    ~ParallelMode() { kernels::set_parallel(saved); }
    bool saved;
};

template <class F>
void check_modes_bitwise(F&& run) {
    Tensor serial, parallel;
    {
        ParallelMode m(false);
        serial = run();
    }
    {
        ParallelMode m(true);
        parallel = run();
    }
    CHECK(bitwise_equal(serial, parallel));
}

} // namespace

TEST_CASE("conv2d matches the serial reference across configurations") {
    Rng rng(11);
    struct Cfg {
        int b, ci, h, w, co, k;
        kernels::Conv2dSpec spec;
    };
    std::vector<Cfg> cfgs = {
        {2, 3, 9, 8, 4, 3, {1, 1, 1, 1}},   // padded 3x3
        {1, 4, 8, 8, 8, 3, {2, 1, 1, 1}},   // strided
        {2, 4, 10, 10, 4, 3, {1, 2, 2, 1}}, // dilated
        {2, 6, 7, 7, 6, 3, {1, 1, 1, 6}},   // depthwise
        {1, 4, 6, 6, 8, 1, {1, 0, 1, 1}},   // pointwise
        {2, 4, 9, 9, 4, 5, {1, 4, 2, 1}},   // 5x5 dilated
    };
    for (const auto& c : cfgs) {
        CAPTURE(c.k);
        Tensor x = random_tensor({c.b, c.ci, c.h, c.w}, rng);
        Tensor w = random_tensor({c.co, c.ci / c.spec.groups, c.k, c.k}, rng);
        Tensor y = kernels::conv2d_forward(x, w, c.spec);
        Tensor yr = kernels_ref::conv2d_forward(x, w, c.spec);
        CHECK(max_abs_diff(y, yr) < 1e-12);

        Tensor gy = random_tensor(y.shape(), rng);
        Tensor gx(x.shape()), gxr(x.shape());
        kernels::conv2d_grad_input(gx, gy, w, c.spec);
        kernels_ref::conv2d_grad_input(gxr, gy, w, c.spec);
        CHECK(max_abs_diff(gx, gxr) < 1e-12);

        Tensor gw(w.shape()), gwr(w.shape());
        kernels::conv2d_grad_weight(gw, gy, x, c.spec);
        kernels_ref::conv2d_grad_weight(gwr, gy, x, c.spec);
        CHECK(max_abs_diff(gw, gwr) < 1e-12);

        check_modes_bitwise([&] { return kernels::conv2d_forward(x, w, c.spec); });
        check_modes_bitwise([&] {
            Tensor g(x.shape());
            kernels::conv2d_grad_input(g, gy, w, c.spec);
            return g;
        });
        check_modes_bitwise([&] {
            Tensor g(w.shape());
            kernels::conv2d_grad_weight(g, gy, x, c.spec);
            return g;
        });
    }
}

TEST_CASE("linear and bmm match the reference and are mode-invariant") {
    Rng rng(3);
    Tensor x = random_tensor({2, 5, 4}, rng);
    Tensor w = random_tensor({4, 6}, rng);
    CHECK(max_abs_diff(kernels::linear_forward(x, w), kernels_ref::linear_forward(x, w)) < 1e-12);
    check_modes_bitwise([&] { return kernels::linear_forward(x, w); });

    Tensor a = random_tensor({3, 4, 5}, rng);
    Tensor b = random_tensor({3, 5, 2}, rng);
    CHECK(max_abs_diff(kernels::bmm(a, b, false, false), kernels_ref::bmm(a, b, false, false)) < 1e-12);

    // K^T V form used by the attention block
    Tensor k = random_tensor({3, 7, 4}, rng);
    Tensor v = random_tensor({3, 7, 5}, rng);
    CHECK(max_abs_diff(kernels::bmm(k, v, true, false), kernels_ref::bmm(k, v, true, false)) < 1e-12);
    Tensor q = random_tensor({3, 6, 4}, rng);
    Tensor s = random_tensor({3, 5, 4}, rng);
    CHECK(max_abs_diff(kernels::bmm(q, s, false, true), kernels_ref::bmm(q, s, false, true)) < 1e-12);
    check_modes_bitwise([&] { return kernels::bmm(k, v, true, false); });
}

TEST_CASE("pooling and upsampling match the reference") {
    Rng rng(5);
    Tensor x = random_tensor({2, 3, 6, 7}, rng);
    CHECK(max_abs_diff(kernels::avgpool3x3_forward(x), kernels_ref::avgpool3x3_forward(x)) < 1e-13);
    std::vector<std::int64_t> am;
    CHECK(max_abs_diff(kernels::maxpool3x3_forward(x, am), kernels_ref::maxpool3x3_forward(x)) == 0.0);
    CHECK(max_abs_diff(kernels::upsample_nearest_forward(x, 2),
                       kernels_ref::upsample_nearest_forward(x, 2)) == 0.0);
    check_modes_bitwise([&] { return kernels::avgpool3x3_forward(x); });
    check_modes_bitwise([&] {
        std::vector<std::int64_t> a;
        return kernels::maxpool3x3_forward(x, a);
    });
}

TEST_CASE("upsample backward is the adjoint of forward") {
    // <U(x), g> == <x, U^T(g)> for random x, g
    Rng rng(9);
    Tensor x = random_tensor({1, 2, 3, 4}, rng);
    Tensor g = random_tensor({1, 2, 6, 8}, rng);
    Tensor ux = kernels::upsample_nearest_forward(x, 2);
    Tensor utg(x.shape());
    kernels::upsample_nearest_backward(utg, g, 2);
    double lhs = 0.0, rhs = 0.0;
    for (std::int64_t i = 0; i < ux.numel(); ++i) lhs += ux[i] * g[i];
    for (std::int64_t i = 0; i < x.numel(); ++i) rhs += x[i] * utg[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("softmax_channel rows are normalized and mode-invariant") {
    Rng rng(13);
    Tensor x = random_tensor({2, 4, 3, 3}, rng, 3.0);
    Tensor y = kernels::softmax_channel_forward(x);
    const int hw = 9;
    for (int b = 0; b < 2; ++b)
        for (int p = 0; p < hw; ++p) {
            double s = 0.0;
            for (int c = 0; c < 4; ++c) s += y[(b * 4 + c) * hw + p];
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
    check_modes_bitwise([&] { return kernels::softmax_channel_forward(x); });
}

TEST_CASE("token/map round trip is lossless") {
    Rng rng(17);
    Tensor x = random_tensor({2, 5, 4, 3}, rng);
    Tensor t = kernels::map_to_tokens(x);
    CHECK(t.shape() == std::vector<int>({2, 12, 5}));
    Tensor back = kernels::tokens_to_map(t, 4, 3);
    CHECK(bitwise_equal(x, back));
}

TEST_CASE("col gather/merge round trip") {
    Rng rng(19);
    Tensor x = random_tensor({2, 6, 5}, rng);
    std::vector<int> cols = {1, 3, 4};
    Tensor sub = kernels::col_gather(x, cols);
    Tensor merged = kernels::col_merge(x, sub, cols);
    CHECK(bitwise_equal(x, merged));
}

TEST_CASE("weighted_sum matches a direct loop") {
    Rng rng(23);
    Tensor a = random_tensor({2, 3, 2, 2}, rng);
    Tensor b = random_tensor({2, 3, 2, 2}, rng);
    Tensor c = random_tensor({2, 3, 2, 2}, rng);
    Tensor w({3}, {0.5, -1.0, 2.0});
    Tensor y = kernels::weighted_sum({&a, &b, &c}, w);
    for (std::int64_t i = 0; i < y.numel(); ++i)
        CHECK(y[i] == doctest::Approx(0.5 * a[i] - 1.0 * b[i] + 2.0 * c[i]).epsilon(1e-12));
}
