#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ssnas/nasvit.hpp"
#include "support/test_util.hpp"

using namespace ssnas;
using namespace ssnas::autodiff;
using testutil::bitwise_equal;
using testutil::finite_diff;
using testutil::max_abs_diff;
using testutil::random_tensor;
using testutil::rel_err;

namespace {

NasVitBlock make_block(int f, ParamRegistry& reg, std::uint64_t seed, double fraction = 0.25) {
    NasVitConfig cfg;
    cfg.f = f;
    cfg.d = f;
    cfg.channel_fraction = fraction;
    Rng rng(seed);
    return NasVitBlock(cfg, reg, "blk", rng);
}

} // namespace

TEST_CASE("config validation rejects non-integer masked channel counts") {
    NasVitConfig bad;
    bad.f = 6;
    bad.d = 6;
    bad.channel_fraction = 0.25; // 1.5 channels
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    NasVitConfig good;
    good.f = 8;
    good.d = 8;
    good.channel_fraction = 0.25;
    good.validate();
    CHECK(good.masked_channels() == 2);
}

TEST_CASE("project_qkv: identity projections reproduce the input") {
    ParamRegistry reg;
    NasVitBlock blk = make_block(4, reg, 1);
    // overwrite the projections with identity matrices
    for (Var w : {reg.entries()[0].var, reg.entries()[1].var, reg.entries()[2].var}) {
        Tensor& t = w.mutable_value();
        t.fill(0.0);
        for (int i = 0; i < 4; ++i) t[i * 4 + i] = 1.0;
    }
    Rng rng(2);
    Var tokens = Var::leaf(random_tensor({1, 6, 4}, rng), false);
    TokenSet ts = blk.project_qkv(tokens, 2, 3);
    CHECK(bitwise_equal(ts.q.value(), tokens.value()));
    CHECK(bitwise_equal(ts.k.value(), tokens.value()));
    CHECK(bitwise_equal(ts.v.value(), tokens.value()));

    Var zeros = Var::leaf(Tensor::zeros({1, 6, 4}), false);
    TokenSet tz = blk.project_qkv(zeros, 2, 3);
    CHECK(max_abs_diff(tz.q.value(), Tensor::zeros({1, 6, 4})) == 0.0);
}

TEST_CASE("project_qkv matches a scalar matmul oracle") {
    ParamRegistry reg;
    NasVitConfig cfg;
    cfg.f = 2;
    cfg.d = 2;
    cfg.channel_fraction = 0.5;
    Rng rng(3);
    NasVitBlock blk(cfg, reg, "b", rng);

    Rng drng(4);
    Tensor x = random_tensor({1, 3, 2}, drng);
    Var tokens = Var::leaf(x, false);
    TokenSet ts = blk.project_qkv(tokens, 1, 3);
    const Tensor& wq = reg.entries()[0].var.value();
    for (int t = 0; t < 3; ++t)
        for (int d = 0; d < 2; ++d) {
            double want = 0.0;
            for (int f = 0; f < 2; ++f) want += x[t * 2 + f] * wq[f * 2 + d];
            CHECK(ts.q.value()[t * 2 + d] == want);
        }

    Tensor bad({1, 3, 3});
    CHECK_THROWS_AS(blk.project_qkv(Var::leaf(bad, false), 1, 3), ContractError);
}

TEST_CASE("mix_tokens: uniform alpha gives weight 1/8 to every op") {
    Var alpha = Var::leaf(Tensor::full({8}, 0.7), false);
    Var w = softmax_vec(alpha);
    for (int i = 0; i < 8; ++i) CHECK(w.value()[i] == 0.125);
}

TEST_CASE("mix_tokens maps zero tokens to zero and rejects bad alpha") {
    ParamRegistry reg;
    NasVitBlock blk = make_block(4, reg, 5);
    Var t0 = Var::leaf(Tensor::zeros({2, 12, 4}), false);
    Rng rng(6);
    Var alpha = Var::leaf(random_tensor({8}, rng), false);
    Tensor out = blk.mix_tokens(t0, alpha, 3, 4).value();
    for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == 0.0);

    Tensor nan_alpha({8});
    nan_alpha[3] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(blk.mix_tokens(t0, Var::leaf(nan_alpha, false), 3, 4), ContractError);
    CHECK_THROWS_AS(blk.mix_tokens(t0, Var::leaf(Tensor::zeros({5}), false), 3, 4), ContractError);
}

TEST_CASE("one-hot skip mixing is the identity on tokens") {
    ParamRegistry reg;
    NasVitBlock blk = make_block(8, reg, 7);
    Rng rng(8);
    Var tokens = Var::leaf(random_tensor({1, 16, 8}, rng), false);
    const int skip_idx = 6;
    CHECK(bitwise_equal(blk.mix_tokens_onehot(tokens, skip_idx, 4, 4).value(), tokens.value()));

    // saturated relaxed weights agree with the forced path to 1e-12
    Tensor alpha({8});
    alpha.fill(0.0);
    alpha[skip_idx] = 60.0;
    Tensor relaxed = blk.mix_tokens(tokens, Var::leaf(alpha, false), 4, 4).value();
    CHECK(max_abs_diff(relaxed, tokens.value()) < 1e-12);
}

TEST_CASE("one-hot zero mixing: masked channels zeroed, the rest pass through") {
    ParamRegistry reg;
    NasVitBlock blk = make_block(8, reg, 9);
    Rng rng(10);
    Var tokens = Var::leaf(random_tensor({1, 4, 8}, rng), false);
    Tensor out = blk.mix_tokens_onehot(tokens, 7, 2, 2).value();
    const auto& masked = blk.mask().masked;
    REQUIRE(masked.size() == 2);
    for (int t = 0; t < 4; ++t)
        for (int c = 0; c < 8; ++c) {
            const bool is_masked = std::find(masked.begin(), masked.end(), c) != masked.end();
            if (is_masked)
                CHECK(out[t * 8 + c] == 0.0);
            else
                CHECK(out[t * 8 + c] == tokens.value()[t * 8 + c]);
        }
}

TEST_CASE("relu linear attention degenerate and guard cases") {
    // N=1, positive tokens: the single attention weight normalizes to 1
    Tensor q({1, 1, 2}, {2.0, 2.0});
    Tensor k({1, 1, 2}, {1.5, 0.5});
    Tensor v({1, 1, 2}, {0.3, -0.7});
    Tensor out = NasVitBlock::relu_linear_attention(Var::leaf(q, false), Var::leaf(k, false),
                                                    Var::leaf(v, false))
                     .value();
    CHECK(out[0] == doctest::Approx(0.3).epsilon(1e-6));
    CHECK(out[1] == doctest::Approx(-0.7).epsilon(1e-6));

    // an all-negative query row yields exactly zero output under the guard
    Tensor qn({1, 2, 2}, {-1.0, -2.0, 1.0, 1.0});
    Tensor kn({1, 2, 2}, {0.5, 0.25, 0.75, 1.0});
    Tensor vn({1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    Tensor on = NasVitBlock::relu_linear_attention(Var::leaf(qn, false), Var::leaf(kn, false),
                                                   Var::leaf(vn, false))
                    .value();
    CHECK(on[0] == 0.0);
    CHECK(on[1] == 0.0);
}

TEST_CASE("relu linear attention matches a scalar evaluation") {
    Tensor q({1, 2, 2}, {0.8, -0.3, 1.2, 0.4});
    Tensor k({1, 2, 2}, {0.5, 1.1, -0.2, 0.9});
    Tensor v({1, 2, 2}, {1.0, -2.0, 0.5, 3.0});
    Tensor out = NasVitBlock::relu_linear_attention(Var::leaf(q, false), Var::leaf(k, false),
                                                    Var::leaf(v, false))
                     .value();
    auto relu = [](double x) { return x > 0.0 ? x : 0.0; };
    for (int n = 0; n < 2; ++n) {
        double denom = 0.0;
        double numer[2] = {0.0, 0.0};
        for (int j = 0; j < 2; ++j) {
            double dot = 0.0;
            for (int c = 0; c < 2; ++c) dot += relu(q[n * 2 + c]) * relu(k[j * 2 + c]);
            denom += dot;
            for (int c = 0; c < 2; ++c) numer[c] += dot * v[j * 2 + c];
        }
        for (int c = 0; c < 2; ++c)
            CHECK(out[n * 2 + c] == doctest::Approx(numer[c] / (denom + kAttentionEps)).epsilon(1e-12));
    }
}

TEST_CASE("attention weights are row-stochastic for positive tokens") {
    Rng rng(11);
    Tensor q = testutil::random_positive({1, 6, 4}, rng, 0.5, 2.0);
    Tensor k = testutil::random_positive({1, 6, 4}, rng, 0.5, 2.0);
    for (int n = 0; n < 6; ++n) {
        double denom = 0.0;
        std::vector<double> w(6, 0.0);
        for (int j = 0; j < 6; ++j) {
            double dot = 0.0;
            for (int c = 0; c < 4; ++c) dot += q[n * 4 + c] * k[j * 4 + c];
            w[static_cast<std::size_t>(j)] = dot;
            denom += dot;
        }
        double sum = 0.0;
        for (double x : w) sum += x / (denom + kAttentionEps);
        CHECK(std::abs(sum - 1.0) < 1e-6);
    }
}

TEST_CASE("ffn_dwconv preserves shape and the residual survives a zeroed projection") {
    ParamRegistry reg;
    NasVitBlock blk = make_block(4, reg, 12);
    Rng rng(13);
    Var x = Var::leaf(random_tensor({2, 4, 3, 5}, rng), false);
    Tensor y = blk.ffn_dwconv(x).value();
    CHECK(y.shape() == x.value().shape());

    for (const auto& e : reg.entries())
        if (e.name == "blk.ffn.proj") const_cast<autodiff::Var&>(e.var).mutable_value().fill(0.0);
    CHECK(max_abs_diff(blk.ffn_dwconv(x).value(), x.value()) == 0.0);
}

TEST_CASE("ffn_dwconv gradients match finite differences on a 2x3x3 input") {
    ParamRegistry reg;
    NasVitConfig cfg;
    cfg.f = 2;
    cfg.d = 2;
    cfg.channel_fraction = 0.5;
    Rng rng(14);
    NasVitBlock blk(cfg, reg, "b", rng);
    Var x = Var::leaf(random_tensor({1, 2, 3, 3}, rng), false);
    auto loss_fn = [&] { return mean_all(square(blk.ffn_dwconv(x))); };
    for (const char* name : {"b.ffn.expand", "b.ffn.dw", "b.ffn.proj"}) {
        for (const auto& e : reg.entries()) {
            if (e.name != name) continue;
            Var p = e.var;
            p.clear_grad();
            backward(loss_fn());
            for (int s = 0; s < 3; ++s) {
                const std::int64_t idx = rng.uniform_int(0, static_cast<int>(p.value().numel()) - 1);
                const double fd =
                    finite_diff(p.mutable_value(), idx, [&] { return loss_fn().scalar(); });
                CHECK(rel_err(p.grad()[idx], fd) < 1e-4);
            }
        }
    }
}

TEST_CASE("nasvit_forward: shape contract, alpha gradients, determinism") {
    ParamRegistry reg1;
    NasVitBlock b1 = make_block(4, reg1, 21);
    Rng rng(22);
    Tensor xy = random_tensor({2, 4, 4, 4}, rng);
    Var x = Var::leaf(xy, false);
    Var alpha = Var::leaf(testutil::random_tensor({8}, rng, 0.1), true);

    Var y = b1.forward(x, alpha);
    CHECK(y.value().shape() == x.value().shape());

    // gradients reach the architecture parameters
    backward(mean_all(square(y)));
    const Tensor& ga = alpha.grad();
    REQUIRE(ga.numel() == 8);
    double mag = 0.0;
    for (int i = 0; i < 8; ++i) {
        CHECK(std::isfinite(ga[i]));
        mag += std::abs(ga[i]);
    }
    CHECK(mag > 0.0);

    // and the analytic alpha gradient agrees with finite differences
    auto loss_fn = [&] { return mean_all(square(b1.forward(x, alpha))).scalar(); };
    for (int s = 0; s < 3; ++s) {
        const std::int64_t idx = s * 2;
        const double fd = finite_diff(alpha.mutable_value(), idx, loss_fn);
        CHECK(rel_err(ga[idx], fd, 1e-9) < 1e-4);
    }

    // two constructions from one seed agree bit-exactly
    ParamRegistry reg2;
    NasVitBlock b2 = make_block(4, reg2, 21);
    Var alpha_c = detach(alpha);
    CHECK(bitwise_equal(b1.forward(x, alpha_c).value(), b2.forward(x, alpha_c).value()));
}

TEST_CASE("every block parameter receives a finite gradient") {
    ParamRegistry reg;
    NasVitBlock blk = make_block(8, reg, 31);
    Rng rng(32);
    Var x = Var::leaf(random_tensor({1, 8, 4, 4}, rng), false);
    Var alpha = Var::leaf(random_tensor({8}, rng, 0.1), true);
    backward(mean_all(square(blk.forward(x, alpha))));
    for (const auto& e : reg.entries()) {
        CAPTURE(e.name);
        REQUIRE(e.var.grad().numel() == e.var.value().numel());
        bool any_nonzero = false;
        for (std::int64_t i = 0; i < e.var.grad().numel(); ++i) {
            CHECK(std::isfinite(e.var.grad()[i]));
            any_nonzero = any_nonzero || e.var.grad()[i] != 0.0;
        }
        CHECK(any_nonzero);
    }
}

TEST_CASE("zero input propagates to zero output through the whole block") {
    ParamRegistry reg;
    NasVitBlock blk = make_block(4, reg, 41);
    Var x0 = Var::leaf(Tensor::zeros({1, 4, 4, 4}), false);
    Rng rng(42);
    Var alpha = Var::leaf(random_tensor({8}, rng), false);
    Tensor y = blk.forward(x0, alpha).value();
    for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == 0.0);
}
