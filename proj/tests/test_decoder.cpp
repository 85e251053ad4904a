#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ssnas/supernet.hpp"
#include "support/fixed_net.hpp"
#include "support/test_util.hpp"

using namespace ssnas;
using namespace ssnas::autodiff;
using testutil::bitwise_equal;
using testutil::finite_diff;
using testutil::max_abs_diff;
using testutil::random_tensor;
using testutil::rel_err;

namespace {

SupernetConfig small_cfg(int layers = 3, int nodes = 1, int base = 4) {
    SupernetConfig cfg;
    cfg.encoder.layers = layers;
    cfg.encoder.nodes = nodes;
    cfg.encoder.base_channels = base;
    cfg.encoder.channel_fraction = 0.25;
    cfg.encoder.in_channels = 1;
    cfg.num_classes = 3;
    return cfg;
}

} // namespace

TEST_CASE("decoder cell: identity, uniform weights, two-op closed form") {
    Rng rng(1);
    auto kinds = op_set(OpSetRole::decoder);
    std::vector<OpInstance> ops;
    for (OpKind k : kinds) ops.push_back(build_op(k, 2, rng));

    Rng drng(2);
    Var x = Var::leaf(random_tensor({1, 2, 3, 3}, drng), false);

    // forced skip is the exact identity (skip is the last decoder op)
    const int skip_idx = 4;
    CHECK(bitwise_equal(
        DecoderSupernet::cell_forward(x, Var(), ops, skip_idx).value(), x.value()));

    // uniform gamma: every mixture weight is exactly 1/|O^de| = 1/5
    Var g0 = Var::leaf(Tensor::full({5}, 0.3), false);
    Var w = softmax_vec(g0);
    for (int i = 0; i < 5; ++i) CHECK(w.value()[i] == 1.0 / 5.0);

    // only skip and zero enabled: output = softmax(gamma)_skip * x
    std::vector<OpInstance> two = {build_op(OpKind::skip, 2, 3ull), build_op(OpKind::zero, 2, 4ull)};
    Tensor gl({2}, {0.7, -0.4});
    Var out = DecoderSupernet::cell_forward(x, Var::leaf(gl, false), two, -1);
    const double w_skip = std::exp(0.7) / (std::exp(0.7) + std::exp(-0.4));
    for (std::int64_t i = 0; i < out.value().numel(); ++i)
        CHECK(out.value()[i] == doctest::Approx(w_skip * x.value()[i]).epsilon(1e-12));

    // contract errors
    Tensor bad({5});
    bad[2] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(DecoderSupernet::cell_forward(x, Var::leaf(bad, false), ops, -1), ContractError);
    CHECK_THROWS_AS(
        DecoderSupernet::cell_forward(x, Var::leaf(Tensor::zeros({3}), false), ops, -1),
        ContractError);
}

TEST_CASE("saturated relaxed gamma approaches the forced path") {
    Rng rng(5);
    auto kinds = op_set(OpSetRole::decoder);
    std::vector<OpInstance> ops;
    for (OpKind k : kinds) ops.push_back(build_op(k, 2, rng));
    Rng drng(6);
    Var x = Var::leaf(random_tensor({1, 2, 4, 4}, drng), false);
    Tensor g({5});
    g.fill(0.0);
    g[4] = 60.0; // skip
    Tensor relaxed = DecoderSupernet::cell_forward(x, Var::leaf(g, false), ops, -1).value();
    CHECK(max_abs_diff(relaxed, x.value()) < 1e-12);
}

TEST_CASE("decoder forward: trace and logits contracts") {
    SupernetConfig cfg = small_cfg();
    SupernetModel model(cfg, 11);
    Rng drng(7);
    NoGradGuard ng;
    Var img = Var::leaf(random_tensor({2, 1, 64, 64}, drng), false);
    auto out = model.forward(img);

    CHECK(out.trace.logits.value().shape() == std::vector<int>({2, 3, 64, 64}));
    CHECK(out.trace.features.size() == 4);
    for (int r : {4, 8, 16, 32}) CHECK(out.trace.features.count(r) == 1);

    // per-pixel class probabilities sum to 1
    Var p = softmax_channel(out.trace.logits);
    const Tensor& pv = p.value();
    for (int b = 0; b < 2; ++b)
        for (int i = 0; i < 64 * 64; ++i) {
            double s = 0.0;
            for (int c = 0; c < 3; ++c) s += pv[(b * 3 + c) * 64 * 64 + i];
            CHECK(std::abs(s - 1.0) < 1e-6);
        }

    // a pyramid missing one resolution is rejected
    FeaturePyramid partial = out.pyramid;
    partial.history.erase(16);
    CHECK_THROWS_AS(model.decoder().forward(partial, model.gamma(), nullptr), ContractError);
}

TEST_CASE("gamma and decoder kernels receive gradients (finite-difference spot checks)") {
    SupernetConfig cfg = small_cfg(2, 1, 4);
    SupernetModel model(cfg, 13);
    Rng drng(8);
    Var img = Var::leaf(random_tensor({1, 1, 32, 32}, drng), false);
    auto loss_fn = [&] { return mean_all(square(model.forward(img).trace.logits)); };
    backward(loss_fn());

    for (Var& g : model.gamma().cells) {
        REQUIRE(g.grad().numel() == g.value().numel());
        double mag = 0.0;
        for (std::int64_t i = 0; i < g.grad().numel(); ++i) {
            CHECK(std::isfinite(g.grad()[i]));
            mag += std::abs(g.grad()[i]);
        }
        CHECK(mag > 0.0);
    }

    Var g0 = model.gamma().cells[0];
    const double fd = finite_diff(g0.mutable_value(), 1, [&] { return loss_fn().scalar(); }, 1e-5);
    CHECK(rel_err(g0.grad()[1], fd, 1e-9) < 1e-3);

    // one decoder conv kernel, spot-checked against finite differences
    for (const auto& e : model.registry().entries()) {
        if (e.name != "dec.r16.op0.k0") continue;
        Var p = e.var;
        const double fdw =
            finite_diff(p.mutable_value(), 0, [&] { return loss_fn().scalar(); }, 1e-5);
        CHECK(rel_err(p.grad()[0], fdw, 1e-9) < 1e-3);
    }
}

TEST_CASE("one-hot everywhere reproduces a hand-assembled fixed network") {
    SupernetConfig cfg = small_cfg(3, 2, 4);
    SupernetModel model(cfg, 21);
    Rng prng(22);
    ArchPlan plan = testutil::random_plan(model, prng);

    Rng drng(23);
    Tensor image = random_tensor({1, 1, 64, 64}, drng);
    NoGradGuard ng;
    auto got = model.forward_discrete(Var::leaf(image, false), plan);
    auto want = testutil::fixed_forward(model, plan, image);

    CHECK(max_abs_diff(got.trace.logits.value(), want.logits) < 1e-10);
    for (int r : {4, 8, 16, 32})
        CHECK(max_abs_diff(got.trace.features.at(r).value(), want.trace.at(r)) < 1e-10);
}

TEST_CASE("decoder op-set variant flag changes the search space") {
    SupernetConfig cfg = small_cfg(2, 1, 4);
    cfg.include_pool_zero = true;
    SupernetModel model(cfg, 31);
    CHECK(model.decoder().num_ops() == 8);
    CHECK(model.gamma().cells[0].value().numel() == 8);

    SupernetConfig cfg2 = small_cfg(2, 1, 4);
    SupernetModel model2(cfg2, 31);
    CHECK(model2.decoder().num_ops() == 5);

    Rng drng(9);
    NoGradGuard ng;
    Var img = Var::leaf(random_tensor({1, 1, 32, 32}, drng), false);
    CHECK(model.forward(img).trace.logits.value().all_finite());
}

TEST_CASE("registry partition audit and group sizes") {
    SupernetConfig cfg = small_cfg(2, 1, 4);
    SupernetModel model(cfg, 41);
    const ParamRegistry& reg = model.registry();
    CHECK(reg.audit_partition());
    CHECK(reg.group_numel(ParamGroup::weights) > 0);
    CHECK(reg.group_numel(ParamGroup::fusion) > 0);
    CHECK(reg.group_numel(ParamGroup::alpha) > 0);
    CHECK(reg.group_numel(ParamGroup::gamma) > 0);
    CHECK(!reg.independence_layers().empty());

    // two same-structure networks pair their independence layers by order
    SupernetModel other(cfg, 42);
    const auto& a = reg.independence_layers();
    const auto& b = other.registry().independence_layers();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a[i].value().shape() == b[i].value().shape());
}
