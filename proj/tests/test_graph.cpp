#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ssnas/graph.hpp"
#include "support/test_util.hpp"

using namespace ssnas;
using namespace ssnas::autodiff;
using testutil::finite_diff;
using testutil::random_tensor;
using testutil::rel_err;

namespace {

// Finite-difference check of dL/dparam on sampled entries.
void check_grad(Var param, const std::function<Var()>& loss_fn, Rng& rng, int samples = 5,
                double tol = 1e-6) {
    param.clear_grad();
    Var loss = loss_fn();
    backward(loss);
    const Tensor& g = param.grad();
    REQUIRE(g.numel() == param.value().numel());
    for (int s = 0; s < samples; ++s) {
        const std::int64_t idx = rng.uniform_int(0, static_cast<int>(param.value().numel()) - 1);
        const double fd = finite_diff(param.mutable_value(), idx,
                                      [&] { return loss_fn().scalar(); });
        CHECK(rel_err(g[idx], fd, 1e-7) < tol);
    }
}

} // namespace

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(101);
    Var x = Var::leaf(random_tensor({2, 3, 5, 5}, rng), true);
    Var w = Var::leaf(random_tensor({4, 3, 3, 3}, rng), true);
    kernels::Conv2dSpec spec{1, 1, 1, 1};
    auto loss_fn = [&] { return sum_all(square(conv2d(x, w, spec))); };
    for (Var p : {x, w}) {
        x.clear_grad();
        w.clear_grad();
        check_grad(p, loss_fn, rng);
    }
}

TEST_CASE("depthwise and dilated conv gradients match finite differences") {
    Rng rng(102);
    Var x = Var::leaf(random_tensor({1, 4, 6, 6}, rng), true);
    Var wd = Var::leaf(random_tensor({4, 1, 3, 3}, rng), true);
    kernels::Conv2dSpec dw{1, 1, 1, 4};
    auto loss1 = [&] { return sum_all(square(conv2d(x, wd, dw))); };
    check_grad(wd, loss1, rng);

    Var w2 = Var::leaf(random_tensor({4, 4, 3, 3}, rng), true);
    kernels::Conv2dSpec dil{1, 2, 2, 1};
    x.clear_grad();
    auto loss2 = [&] { return sum_all(square(conv2d(x, w2, dil))); };
    check_grad(x, loss2, rng);
}

TEST_CASE("linear and bmm gradients match finite differences") {
    Rng rng(103);
    Var x = Var::leaf(random_tensor({2, 4, 3}, rng), true);
    Var w = Var::leaf(random_tensor({3, 5}, rng), true);
    auto loss = [&] { return sum_all(square(linear(x, w))); };
    check_grad(x, loss, rng);
    x.clear_grad();
    w.clear_grad();
    check_grad(w, loss, rng);

    Var a = Var::leaf(random_tensor({2, 3, 4}, rng), true);
    Var b = Var::leaf(random_tensor({2, 3, 5}, rng), true);
    auto loss_tn = [&] { return sum_all(square(bmm(a, b, true, false))); };
    check_grad(a, loss_tn, rng);
    a.clear_grad();
    b.clear_grad();
    check_grad(b, loss_tn, rng);

    Var c = Var::leaf(random_tensor({2, 6, 4}, rng), true);
    Var d = Var::leaf(random_tensor({2, 5, 4}, rng), true);
    auto loss_nt = [&] { return sum_all(square(bmm(c, d, false, true))); };
    check_grad(c, loss_nt, rng);
    c.clear_grad();
    d.clear_grad();
    check_grad(d, loss_nt, rng);
}

TEST_CASE("elementwise and reduction gradients match finite differences") {
    Rng rng(104);
    Var x = Var::leaf(testutil::random_positive({2, 3, 2, 2}, rng, 0.2, 2.0), true);
    Var y = Var::leaf(testutil::random_positive({2, 3, 2, 2}, rng, 0.2, 2.0), true);

    auto loss = [&] {
        Var z = mul(add(x, scale(y, 0.5)), sub(x, y));
        z = add(z, sqrt_op(clamp_min(mul(x, y), 0.01)));
        z = add(z, log_op(add_scalar(square(y), 1.0)));
        return mean_all(z);
    };
    check_grad(x, loss, rng);
    x.clear_grad();
    y.clear_grad();
    check_grad(y, loss, rng);

    x.clear_grad();
    auto loss_div = [&] { return sum_all(div(x, add_scalar(square(y), 0.5))); };
    check_grad(y, loss_div, rng);
}

TEST_CASE("softmax, pooling, upsample, attention plumbing gradients") {
    Rng rng(105);
    Var logits = Var::leaf(random_tensor({6}, rng), true);
    auto loss_sm = [&] {
        Var p = softmax_vec(logits);
        return sum_all(mul(p, p));
    };
    check_grad(logits, loss_sm, rng);

    Var x = Var::leaf(random_tensor({1, 2, 4, 4}, rng), true);
    auto loss_pool = [&] { return sum_all(square(avgpool3x3(x))); };
    check_grad(x, loss_pool, rng);
    x.clear_grad();
    auto loss_up = [&] { return sum_all(square(upsample_nearest(x, 2))); };
    check_grad(x, loss_up, rng);

    Var n = Var::leaf(random_tensor({2, 3, 4}, rng), true);
    Var dpos = Var::leaf(testutil::random_positive({2, 3, 1}, rng, 0.5, 2.0), true);
    auto loss_div = [&] { return sum_all(square(div_bcast(n, dpos, 1e-6))); };
    check_grad(n, loss_div, rng);
    n.clear_grad();
    dpos.clear_grad();
    check_grad(dpos, loss_div, rng);

    Var t = Var::leaf(random_tensor({2, 5, 3}, rng), true);
    auto loss_sumtok = [&] { return sum_all(square(sum_tokens(t))); };
    check_grad(t, loss_sumtok, rng);
}

TEST_CASE("structural ops propagate gradients") {
    Rng rng(106);
    Var x = Var::leaf(random_tensor({1, 3, 2, 2}, rng), true);
    auto loss_tok = [&] {
        Var t = map_to_tokens(x);
        Var g = col_gather(t, {0, 2});
        Var m = col_merge(t, scale(g, 2.0), {0, 2});
        return sum_all(square(tokens_to_map(m, 2, 2)));
    };
    check_grad(x, loss_tok, rng);

    Var a = Var::leaf(random_tensor({1, 2, 3, 3}, rng), true);
    Var b = Var::leaf(random_tensor({1, 1, 3, 3}, rng), true);
    auto loss_cat = [&] {
        Var c = concat_channels({a, b});
        return sum_all(square(channel_slice(c, 1, 2)));
    };
    check_grad(a, loss_cat, rng);
    a.clear_grad();
    b.clear_grad();
    check_grad(b, loss_cat, rng);

    Var w = Var::leaf(random_tensor({3}, rng), true);
    auto loss_ws = [&] {
        Var s = weighted_sum({a, a, square(a)}, softmax_vec(w));
        return mean_all(square(s));
    };
    check_grad(w, loss_ws, rng);
}

TEST_CASE("rows_dot, gather_class, mask_mul gradients") {
    Rng rng(107);
    Var a = Var::leaf(random_tensor({3, 4}, rng), true);
    Var b = Var::leaf(random_tensor({3, 4}, rng), true);
    auto loss_rd = [&] { return sum_all(square(rows_dot(a, b))); };
    check_grad(a, loss_rd, rng);

    Var p = Var::leaf(testutil::random_positive({1, 3, 2, 2}, rng, 0.1, 0.9), true);
    IntMask labels({1, 2, 2});
    labels.data = {0, 2, 1, 0};
    auto loss_gc = [&] { return sum_all(log_op(gather_class(p, labels))); };
    check_grad(p, loss_gc, rng);

    p.clear_grad();
    Tensor mask({1, 1, 2, 2}, {1.0, 0.0, 1.0, 1.0});
    auto loss_mm = [&] { return sum_all(mask_mul(square(p), mask)); };
    check_grad(p, loss_mm, rng);
}

TEST_CASE("detach and no-grad mode cut the tape") {
    Rng rng(108);
    Var x = Var::leaf(random_tensor({2, 2}, rng), true);
    Var y = sum_all(mul(detach(x), x));
    backward(y);
    // d/dx of <const, x> is just the const values
    for (std::int64_t i = 0; i < x.value().numel(); ++i)
        CHECK(x.grad()[i] == doctest::Approx(x.value()[i]));

    {
        NoGradGuard guard;
        Var z = sum_all(square(x));
        CHECK_FALSE(z.requires_grad());
    }
}

TEST_CASE("diamond-shaped graphs accumulate both paths") {
    Var x = Var::leaf(Tensor::scalar(3.0), true);
    Var y = add(mul(x, x), scale(x, 2.0)); // x^2 + 2x -> dy/dx = 2x + 2 = 8
    backward(y);
    CHECK(x.grad()[0] == doctest::Approx(8.0));
}
