#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "ssnas/checkpoint.hpp"
#include "ssnas/trainer.hpp"
#include "support/test_util.hpp"

using namespace ssnas;
using namespace ssnas::autodiff;

namespace {

SupernetConfig tiny_model() {
    SupernetConfig cfg;
    cfg.encoder.layers = 2;
    cfg.encoder.nodes = 1;
    cfg.encoder.base_channels = 4;
    cfg.encoder.channel_fraction = 0.25;
    cfg.encoder.in_channels = 1;
    cfg.num_classes = 3;
    return cfg;
}

TrainConfig tiny_train(int epochs = 2, int warmup = 0) {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.arch_warmup = warmup;
    tc.g_steps = 3;
    tc.batch_labeled = 2;
    tc.batch_unlabeled = 2;
    tc.seed = 7;
    return tc;
}

PhantomSpec tiny_phantoms() {
    PhantomSpec spec;
    spec.size = 32;
    return spec;
}

struct PairSnapshots {
    std::vector<double> w[2], beta[2], alpha[2], gamma[2], g;
};

PairSnapshots snapshot_all(const SupernetPair& pair) {
    PairSnapshots s;
    for (int i = 0; i < 2; ++i) {
        const ParamRegistry& reg = pair.net(i).registry();
        s.w[i] = reg.snapshot(ParamGroup::weights);
        s.beta[i] = reg.snapshot(ParamGroup::fusion);
        s.alpha[i] = reg.snapshot(ParamGroup::alpha);
        s.gamma[i] = reg.snapshot(ParamGroup::gamma);
    }
    s.g = pair.snapshot_g();
    return s;
}

bool same(const std::vector<double>& a, const std::vector<double>& b) { return a == b; }

} // namespace

TEST_CASE("index stream cycles deterministically") {
    IndexStream a(5, 11), b(5, 11);
    for (int i = 0; i < 4; ++i) CHECK(a.next(3) == b.next(3));
    // covers every element before reshuffling
    IndexStream c(4, 3);
    std::vector<int> seen = c.next(4);
    std::sort(seen.begin(), seen.end());
    CHECK(seen == std::vector<int>({0, 1, 2, 3}));
}

TEST_CASE("make_batch assembles images and labels") {
    Dataset data = generate_phantom_dataset(tiny_phantoms(), 4, 5);
    Batch b = make_batch(data, {1, 3});
    CHECK(b.images.shape() == std::vector<int>({2, 1, 32, 32}));
    CHECK(b.labeled);
    CHECK(b.labels.shape == std::vector<int>({2, 32, 32}));
    CHECK(b.images[0] == data.samples[1].image[0]);

    Dataset unl = data;
    for (auto& s : unl.samples) s.mask.reset();
    CHECK_FALSE(make_batch(unl, {0, 1}).labeled);
}

TEST_CASE("stage_G: only G changes, objective is nondecreasing, E_B>=1 enforced") {
    Trainer trainer(tiny_train(), LossWeights{}, tiny_model());
    PairSnapshots before = snapshot_all(trainer.pair());
    std::vector<double> values = trainer.stage_g();
    PairSnapshots after = snapshot_all(trainer.pair());

    for (int i = 0; i < 2; ++i) {
        CHECK(same(before.w[i], after.w[i]));
        CHECK(same(before.beta[i], after.beta[i]));
        CHECK(same(before.alpha[i], after.alpha[i]));
        CHECK(same(before.gamma[i], after.gamma[i]));
    }
    CHECK_FALSE(same(before.g, after.g));

    REQUIRE(values.size() == 4); // g_steps + 1
    for (std::size_t s = 1; s < values.size(); ++s) CHECK(values[s] >= values[s - 1] - 1e-8);

    TrainConfig bad = tiny_train();
    bad.g_steps = 0;
    CHECK_THROWS_AS(Trainer(bad, LossWeights{}, tiny_model()), ConfigError);
}

TEST_CASE("stage_weights: freeze contract and cross-network separation") {
    Trainer trainer(tiny_train(), LossWeights{}, tiny_model());
    Dataset data = generate_phantom_dataset(tiny_phantoms(), 6, 9);
    SplitResult sp = split(data, 0.5, 0.0, 3);
    Batch bl = make_batch(sp.labeled, {0, 1});
    Batch bu = make_batch(sp.unlabeled, {0, 1});

    PairSnapshots before = snapshot_all(trainer.pair());
    EpochRecord rec = trainer.stage_weights(bl, &bu, 1);
    PairSnapshots after = snapshot_all(trainer.pair());

    for (int i = 0; i < 2; ++i) {
        CHECK(same(before.alpha[i], after.alpha[i]));
        CHECK(same(before.gamma[i], after.gamma[i]));
        CHECK_FALSE(same(before.w[i], after.w[i]));
        CHECK_FALSE(same(before.beta[i], after.beta[i]));
    }
    CHECK(same(before.g, after.g));
    for (int i = 0; i < 2; ++i) {
        CHECK(std::isfinite(rec.total[i]));
        CHECK(rec.sup[i] > 0.0);
    }

    // net1's loss sends no gradient into net2's parameters
    for (int i = 0; i < 2; ++i) trainer.pair().net(i).registry().zero_grads();
    trainer.pair().zero_g_grads();
    auto loss = trainer.stage_loss(0, bl, &bu, 1, false);
    backward(loss.total);
    for (const auto& e : trainer.pair().net(1).registry().entries())
        CHECK(e.var.grad().numel() == 0);
    for (int i = 0; i < 2; ++i)
        for (const Var& g : trainer.pair().gmat(i)) CHECK(g.grad().numel() == 0);
}

TEST_CASE("supervised-only descent on a separable toy batch") {
    // lambda3 = 0 and no unlabeled stream: L_total reduces to L_sup
    LossWeights lw;
    lw.lambda3 = 0.0;
    TrainConfig tc = tiny_train();
    tc.batch_labeled = 2;
    Trainer trainer(tc, lw, tiny_model());
    Dataset data = generate_phantom_dataset(tiny_phantoms(), 2, 21);
    Batch bl = make_batch(data, {0, 1});

    std::vector<double> sup;
    for (int s = 0; s < 5; ++s) {
        EpochRecord rec = trainer.stage_weights(bl, nullptr, 1);
        sup.push_back(rec.sup[0] + rec.sup[1]);
    }
    for (std::size_t s = 1; s < sup.size(); ++s) CHECK(sup[s] < sup[s - 1]);
}

TEST_CASE("stage_arch: warm-up no-op and freeze contract") {
    TrainConfig tc = tiny_train(/*epochs=*/2, /*warmup=*/1);
    Trainer trainer(tc, LossWeights{}, tiny_model());
    Dataset data = generate_phantom_dataset(tiny_phantoms(), 4, 31);
    SplitResult sp = split(data, 0.5, 0.0, 5);
    Batch bl = make_batch(sp.labeled, {0, 1});
    Batch bu = make_batch(sp.unlabeled, {0, 1});

    PairSnapshots before = snapshot_all(trainer.pair());
    trainer.stage_arch(bl, &bu, 1); // epoch <= warmup: no-op
    CHECK(same(before.alpha[0], snapshot_all(trainer.pair()).alpha[0]));

    trainer.stage_arch(bl, &bu, 2);
    PairSnapshots after = snapshot_all(trainer.pair());
    for (int i = 0; i < 2; ++i) {
        CHECK_FALSE(same(before.alpha[i], after.alpha[i]));
        CHECK_FALSE(same(before.gamma[i], after.gamma[i]));
        CHECK(same(before.w[i], after.w[i]));
        CHECK(same(before.beta[i], after.beta[i]));
    }
    CHECK(same(before.g, after.g));
}

TEST_CASE("run_search: determinism, warm-up rule, history shape") {
    Dataset data = generate_phantom_dataset(tiny_phantoms(), 8, 41);
    SplitResult sp = split(data, 0.5, 0.25, 7);

    auto run = [&](std::uint64_t seed) {
        TrainConfig tc = tiny_train(/*epochs=*/2, /*warmup=*/10);
        tc.seed = seed;
        Trainer t(tc, LossWeights{}, tiny_model());
        std::vector<double> alpha_before = t.pair().net(0).registry().snapshot(ParamGroup::alpha);
        TrainState st = t.run_search(sp.labeled, sp.unlabeled, sp.test, "");
        std::vector<double> alpha_after = t.pair().net(0).registry().snapshot(ParamGroup::alpha);
        CHECK(alpha_before == alpha_after); // E=2 <= E_A=10: never updated
        return st;
    };

    TrainState a = run(99);
    TrainState b = run(99);
    REQUIRE(a.history.size() == 2);
    REQUIRE(b.history.size() == 2);
    for (std::size_t e = 0; e < a.history.size(); ++e)
        for (int i = 0; i < 2; ++i) {
            CHECK(a.history[e].total[i] == b.history[e].total[i]);
            CHECK(a.history[e].sup[i] == b.history[e].sup[i]);
            CHECK(a.history[e].uns[i] == b.history[e].uns[i]);
        }
    CHECK(a.initial_dsc[0] == b.initial_dsc[0]);
    CHECK(a.final_dsc[0] == b.final_dsc[0]);

    TrainState c = run(100);
    bool differs = false;
    for (std::size_t e = 0; e < c.history.size(); ++e)
        differs = differs || c.history[e].total[0] != a.history[e].total[0];
    CHECK(differs);
}

TEST_CASE("checkpoint round trip is bit-identical in values and forward") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "ssnas_ckpt_test";
    fs::remove_all(dir);

    Dataset data = generate_phantom_dataset(tiny_phantoms(), 4, 51);
    SplitResult sp = split(data, 1.0, 0.0, 9);
    TrainConfig tc = tiny_train(1, 0);
    Trainer trainer(tc, LossWeights{}, tiny_model());
    TrainState st = trainer.run_search(sp.labeled, sp.unlabeled, Dataset{}, dir.string());
    REQUIRE(st.checkpoints.size() == 1);

    LoadedCheckpoint loaded = load_checkpoint(st.checkpoints[0]);
    CHECK(loaded.epoch == 1);
    REQUIRE(loaded.history.size() == 1);
    CHECK(loaded.history[0].total[0] == st.history[0].total[0]);

    PairSnapshots orig = snapshot_all(trainer.pair());
    PairSnapshots back = snapshot_all(*loaded.pair);
    for (int i = 0; i < 2; ++i) {
        CHECK(same(orig.w[i], back.w[i]));
        CHECK(same(orig.beta[i], back.beta[i]));
        CHECK(same(orig.alpha[i], back.alpha[i]));
        CHECK(same(orig.gamma[i], back.gamma[i]));
    }
    CHECK(same(orig.g, back.g));

    Batch b = make_batch(sp.labeled, {0, 1});
    NoGradGuard ng;
    Tensor y1 = trainer.pair().net(0).forward(constant(b.images)).trace.logits.value();
    Tensor y2 = loaded.pair->net(0).forward(constant(b.images)).trace.logits.value();
    CHECK(testutil::bitwise_equal(y1, y2));

    fs::remove_all(dir);
}

TEST_CASE("empty labeled data and unlabeled-free runs") {
    TrainConfig tc = tiny_train(1, 0);
    Trainer trainer(tc, LossWeights{}, tiny_model());
    CHECK_THROWS_AS(trainer.run_search(Dataset{}, Dataset{}, Dataset{}, ""), ConfigError);

    // labeled_fraction = 1: the unsupervised and contrastive terms are zero
    Dataset data = generate_phantom_dataset(tiny_phantoms(), 4, 61);
    SplitResult sp = split(data, 1.0, 0.25, 3);
    Trainer t2(tc, LossWeights{}, tiny_model());
    TrainState st = t2.run_search(sp.labeled, sp.unlabeled, sp.test, "");
    CHECK(st.history[0].uns[0] == 0.0);
    CHECK(st.history[0].con[0] == 0.0);
    CHECK(st.history[0].sup[0] > 0.0);
}
