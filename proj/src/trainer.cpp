#include "ssnas/trainer.hpp"

#include <cmath>

#include "ssnas/checkpoint.hpp"
#include "ssnas/metrics.hpp"

namespace ssnas {

using namespace autodiff;

SupernetPair::SupernetPair(const SupernetConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
    Rng rng(seed ^ 0x5eed5eed5eed5eedull);
    seed1_ = rng.next_u64();
    seed2_ = rng.next_u64();
    net1_ = std::make_unique<SupernetModel>(cfg_, seed1_);
    net2_ = std::make_unique<SupernetModel>(cfg_, seed2_);

    const auto& l1 = net1_->registry().independence_layers();
    const auto& l2 = net2_->registry().independence_layers();
    if (l1.size() != l2.size())
        throw ContractError("SupernetPair: independence layer registries differ");
    Rng grng = rng.fork();
    for (std::size_t k = 0; k < l1.size(); ++k) {
        if (l1[k].value().shape() != l2[k].value().shape())
            throw ContractError("SupernetPair: paired layer shapes differ");
        const int co = l1[k].value().dim(0);
        const double std = 1.0 / std::sqrt(static_cast<double>(co));
        for (auto* g : {&g1_, &g2_}) {
            Tensor init({co, co});
            for (std::int64_t i = 0; i < init.numel(); ++i) init[i] = std * grng.normal();
            g->push_back(Var::leaf(std::move(init), true));
        }
    }
}

std::vector<double> SupernetPair::snapshot_g() const {
    std::vector<double> out;
    for (const auto* list : {&g1_, &g2_})
        for (const Var& g : *list)
            out.insert(out.end(), g.value().data(), g.value().data() + g.value().numel());
    return out;
}

void SupernetPair::restore_g(const std::vector<double>& flat) {
    std::size_t off = 0;
    for (auto* list : {&g1_, &g2_})
        for (Var& g : *list) {
            Tensor& v = g.mutable_value();
            if (off + static_cast<std::size_t>(v.numel()) > flat.size())
                throw ContractError("SupernetPair::restore_g: blob too short");
            std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                      flat.begin() + static_cast<std::ptrdiff_t>(off) + v.numel(), v.data());
            off += static_cast<std::size_t>(v.numel());
        }
    if (off != flat.size()) throw ContractError("SupernetPair::restore_g: blob size mismatch");
}

void SupernetPair::zero_g_grads() {
    for (auto* list : {&g1_, &g2_})
        for (Var& g : *list) g.clear_grad();
}

std::vector<double> maximize_g(SupernetPair& pair, int steps, Adam& opt) {
    if (steps < 1) throw ConfigError("maximize_g: need at least one ascent step");
    const auto& layers1 = pair.net(0).registry().independence_layers();
    const auto& layers2 = pair.net(1).registry().independence_layers();
    auto objective = [&] {
        Var l1 = independence_loss(layers1, layers2, pair.gmat(1), false, true);
        Var l2 = independence_loss(layers2, layers1, pair.gmat(0), false, true);
        return add(l1, l2);
    };
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(steps) + 1);
    for (int s = 0; s < steps; ++s) {
        Var obj = objective();
        values.push_back(obj.scalar());
        pair.zero_g_grads();
        backward(scale(obj, -1.0));
        opt.step();
    }
    values.push_back(objective().scalar());
    return values;
}

Batch make_batch(const Dataset& data, const std::vector<int>& indices) {
    if (indices.empty()) throw ContractError("make_batch: empty index list");
    const SegSample& first = data.samples[static_cast<std::size_t>(indices[0])];
    const int h = first.image.dim(1), w = first.image.dim(2);
    const int b = static_cast<int>(indices.size());
    Batch batch;
    batch.images = Tensor({b, 1, h, w});
    batch.labeled = true;
    for (const int idx : indices)
        batch.labeled = batch.labeled && data.samples[static_cast<std::size_t>(idx)].mask.has_value();
    if (batch.labeled) batch.labels = IntMask({b, h, w});
    for (int i = 0; i < b; ++i) {
        const SegSample& s = data.samples[static_cast<std::size_t>(indices[static_cast<std::size_t>(i)])];
        if (s.image.dim(1) != h || s.image.dim(2) != w)
            throw ContractError("make_batch: mixed image sizes");
        std::copy(s.image.data(), s.image.data() + s.image.numel(),
                  batch.images.data() + static_cast<std::int64_t>(i) * h * w);
        if (batch.labeled)
            std::copy(s.mask->data.begin(), s.mask->data.end(),
                      batch.labels.data.begin() + static_cast<std::ptrdiff_t>(i) * h * w);
    }
    return batch;
}

Trainer::Trainer(const TrainConfig& tc, const LossWeights& lw, const SupernetConfig& model_cfg)
    : tc_(tc), lw_(lw) {
    tc_.validate();
    lw_.validate();
    pair_ = std::make_unique<SupernetPair>(model_cfg, tc_.seed);
    for (int i = 0; i < 2; ++i) {
        ParamRegistry& reg = pair_->net(i).registry();
        opt_w_[i] = std::make_unique<SgdMomentum>(reg.group_vars(ParamGroup::weights),
                                                  tc_.lr_weights, tc_.momentum, tc_.wd_weights);
        opt_beta_[i] = std::make_unique<SgdMomentum>(reg.group_vars(ParamGroup::fusion),
                                                     tc_.lr_weights, tc_.momentum, tc_.wd_weights);
        std::vector<Var> arch = reg.group_vars(ParamGroup::alpha);
        for (const Var& g : reg.group_vars(ParamGroup::gamma)) arch.push_back(g);
        opt_arch_[i] = std::make_unique<Adam>(std::move(arch), tc_.lr_arch, tc_.wd_arch);
    }
    std::vector<Var> gvars = pair_->gmat(0);
    for (const Var& g : pair_->gmat(1)) gvars.push_back(g);
    opt_g_ = std::make_unique<Adam>(std::move(gvars), tc_.lr_g);
}

std::vector<double> Trainer::stage_g() { return maximize_g(*pair_, tc_.g_steps, *opt_g_); }

Trainer::NetLoss Trainer::stage_loss(int i, const Batch& labeled, const Batch* unlabeled,
                                     int epoch, bool arch_stage) {
    SupernetModel& self = pair_->net(i);
    SupernetModel& other = pair_->net(1 - i);

    Var img_l = constant(labeled.images);
    auto out_l = self.forward(img_l);
    Var sup = supervised_loss(softmax_channel(out_l.trace.logits), labeled.labels);

    Var uns = constant(Tensor::scalar(0.0));
    Var con = constant(Tensor::scalar(0.0));
    if (unlabeled != nullptr) {
        IntMask pseudo;
        DecoderTrace other_trace;
        {
            NoGradGuard ng;
            auto out_o = other.forward(constant(unlabeled->images));
            pseudo = pseudo_label(kernels::softmax_channel_forward(out_o.trace.logits.value()));
            for (const auto& [r, f] : out_o.trace.features)
                other_trace.features[r] = constant(f.value());
        }
        auto out_u = self.forward(constant(unlabeled->images));
        uns = unsupervised_loss(softmax_channel(out_u.trace.logits), pseudo);
        con = contrastive_loss(out_u.trace, other_trace, tc_.contrastive_resolutions,
                               tc_.uncertainty_channel_mean)
                  .net1;
    }

    Var ind = independence_loss(self.registry().independence_layers(),
                                other.registry().independence_layers(), pair_->gmat(1 - i),
                                /*grad_a=*/!arch_stage, /*grad_g=*/false);

    NetLoss loss;
    loss.sup = sup.scalar();
    loss.uns = uns.scalar();
    loss.ind = ind.scalar();
    loss.con = con.scalar();
    loss.total = total_loss(sup, uns, ind, con, lw_, epoch);
    return loss;
}

EpochRecord Trainer::stage_weights(const Batch& labeled, const Batch* unlabeled, int epoch) {
    if (!labeled.labeled) throw ContractError("stage_weights: labeled batch has no masks");
    EpochRecord rec;
    rec.epoch = epoch;
    for (int i = 0; i < 2; ++i) pair_->net(i).registry().zero_grads();
    pair_->zero_g_grads();
    for (int i = 0; i < 2; ++i) {
        NetLoss loss = stage_loss(i, labeled, unlabeled, epoch, false);
        backward(loss.total);
        rec.sup[i] = loss.sup;
        rec.uns[i] = loss.uns;
        rec.ind[i] = loss.ind;
        rec.con[i] = loss.con;
        rec.total[i] = loss.total.scalar();
    }
    for (int i = 0; i < 2; ++i) {
        opt_w_[i]->step();
        opt_beta_[i]->step();
    }
    return rec;
}

void Trainer::stage_arch(const Batch& labeled, const Batch* unlabeled, int epoch) {
    if (epoch <= tc_.arch_warmup) return; // warm-up: contractual no-op
    for (int i = 0; i < 2; ++i) pair_->net(i).registry().zero_grads();
    pair_->zero_g_grads();
    for (int i = 0; i < 2; ++i) {
        NetLoss loss = stage_loss(i, labeled, unlabeled, epoch, true);
        backward(loss.total);
    }
    for (int i = 0; i < 2; ++i) opt_arch_[i]->step();
}

TrainState Trainer::run_search(const Dataset& labeled, const Dataset& unlabeled,
                               const Dataset& test, const std::string& checkpoint_dir) {
    if (labeled.samples.empty()) throw ConfigError("run_search: labeled dataset is empty");
    const bool has_unlabeled = !unlabeled.samples.empty();

    Rng seeder(tc_.seed ^ 0xda7a5eed0000ull);
    IndexStream l_stream(static_cast<int>(labeled.size()), seeder.next_u64());
    IndexStream u_stream(has_unlabeled ? static_cast<int>(unlabeled.size()) : 1, seeder.next_u64());

    const int steps = (static_cast<int>(labeled.size()) + tc_.batch_labeled - 1) / tc_.batch_labeled;

    TrainState state;
    if (!test.samples.empty())
        for (int i = 0; i < 2; ++i)
            state.initial_dsc[i] = evaluate_mean_dsc(pair_->net(i), test, tc_.batch_labeled);

    for (int e = 1; e <= tc_.epochs; ++e) {
        stage_g();

        EpochRecord mean;
        mean.epoch = e;
        for (int s = 0; s < steps; ++s) {
            Batch bl = make_batch(labeled, l_stream.next(tc_.batch_labeled));
            Batch bu;
            if (has_unlabeled) bu = make_batch(unlabeled, u_stream.next(tc_.batch_unlabeled));
            EpochRecord rec = stage_weights(bl, has_unlabeled ? &bu : nullptr, e);
            for (int i = 0; i < 2; ++i) {
                mean.sup[i] += rec.sup[i] / steps;
                mean.uns[i] += rec.uns[i] / steps;
                mean.ind[i] += rec.ind[i] / steps;
                mean.con[i] += rec.con[i] / steps;
                mean.total[i] += rec.total[i] / steps;
            }
        }
        if (e > tc_.arch_warmup)
            for (int s = 0; s < steps; ++s) {
                Batch bl = make_batch(labeled, l_stream.next(tc_.batch_labeled));
                Batch bu;
                if (has_unlabeled) bu = make_batch(unlabeled, u_stream.next(tc_.batch_unlabeled));
                stage_arch(bl, has_unlabeled ? &bu : nullptr, e);
            }

        state.history.push_back(mean);
        if (!checkpoint_dir.empty()) {
            char sub[32];
            std::snprintf(sub, sizeof(sub), "epoch_%03d", e);
            const std::string dir = checkpoint_dir + "/" + sub;
            save_checkpoint(dir, *pair_, e, state.history);
            state.checkpoints.push_back(dir);
        }
    }

    if (!test.samples.empty())
        for (int i = 0; i < 2; ++i)
            state.final_dsc[i] = evaluate_mean_dsc(pair_->net(i), test, tc_.batch_labeled);
    return state;
}

std::string loss_history_csv(const TrainState& state) {
    std::string out = "epoch,net,sup,uns,ind,con,total\n";
    char buf[256];
    for (const EpochRecord& r : state.history)
        for (int i = 0; i < 2; ++i) {
            std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch,
                          i + 1, r.sup[i], r.uns[i], r.ind[i], r.con[i], r.total[i]);
            out += buf;
        }
    return out;
}

IntMask predict_masks(const SupernetModel& model, const Tensor& images) {
    NoGradGuard ng;
    auto out = model.forward(constant(images));
    return pseudo_label(kernels::softmax_channel_forward(out.trace.logits.value()));
}

double evaluate_mean_dsc(const SupernetModel& model, const Dataset& test, int batch_size) {
    if (test.samples.empty()) throw ContractError("evaluate_mean_dsc: empty dataset");
    double acc = 0.0;
    const int n = static_cast<int>(test.size());
    for (int start = 0; start < n; start += batch_size) {
        std::vector<int> idx;
        for (int i = start; i < std::min(n, start + batch_size); ++i) idx.push_back(i);
        Batch b = make_batch(test, idx);
        IntMask pred = predict_masks(model, b.images);
        const int h = pred.shape[1], w = pred.shape[2];
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const SegSample& s = test.samples[static_cast<std::size_t>(idx[i])];
            if (!s.mask) throw ContractError("evaluate_mean_dsc: unlabeled test sample");
            IntMask p({h, w});
            std::copy(pred.data.begin() + static_cast<std::ptrdiff_t>(i) * h * w,
                      pred.data.begin() + static_cast<std::ptrdiff_t>(i + 1) * h * w,
                      p.data.begin());
            acc += mean_foreground_dsc(p, *s.mask, test.num_classes);
        }
    }
    return acc / n;
}

} // namespace ssnas
