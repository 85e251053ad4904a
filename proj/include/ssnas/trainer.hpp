#pragma once

#include <functional>

#include "ssnas/data.hpp"
#include "ssnas/objectives.hpp"
#include "ssnas/optim.hpp"
#include "ssnas/supernet.hpp"

namespace ssnas {

struct TrainConfig {
    int epochs = 40;      // E
    int arch_warmup = 10; // E_A: architecture updates start after this epoch
    int g_steps = 6;      // E_B: ascent steps on G per epoch

    double lr_weights = 0.001, momentum = 0.9, wd_weights = 0.0003; // w and beta (SGD)
    double lr_arch = 0.003, wd_arch = 0.001;                        // alpha/gamma (Adam)
    double lr_g = 0.001;                                            // G (Adam)

    int batch_labeled = 4, batch_unlabeled = 4;
    std::uint64_t seed = 1;
    std::vector<int> contrastive_resolutions = {4, 8, 16};
    bool uncertainty_channel_mean = false;

    void validate() const {
        if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
        if (arch_warmup < 0) throw ConfigError("TrainConfig: arch_warmup must be >= 0");
        if (g_steps < 1) throw ConfigError("TrainConfig: g_steps must be >= 1");
        if (batch_labeled < 1 || batch_unlabeled < 1)
            throw ConfigError("TrainConfig: batch sizes must be >= 1");
        for (int r : contrastive_resolutions)
            if (r != 4 && r != 8 && r != 16 && r != 32)
                throw ConfigError("TrainConfig: contrastive resolutions must be in {4,8,16,32}");
    }
};

/// Two structurally identical supernets with independently seeded parameters
/// plus the per-layer combination matrices of the independence loss.
class SupernetPair {
public:
    SupernetPair(const SupernetConfig& cfg, std::uint64_t seed);

    SupernetModel& net(int i) { return i == 0 ? *net1_ : *net2_; }
    const SupernetModel& net(int i) const { return i == 0 ? *net1_ : *net2_; }
    std::vector<autodiff::Var>& gmat(int i) { return i == 0 ? g1_ : g2_; }
    const std::vector<autodiff::Var>& gmat(int i) const { return i == 0 ? g1_ : g2_; }
    std::uint64_t net_seed(int i) const { return i == 0 ? seed1_ : seed2_; }
    std::uint64_t pair_seed() const { return seed_; }
    const SupernetConfig& config() const { return cfg_; }

    std::vector<double> snapshot_g() const;
    void restore_g(const std::vector<double>& flat);
    void zero_g_grads();

private:
    SupernetConfig cfg_;
    std::uint64_t seed_, seed1_, seed2_;
    std::unique_ptr<SupernetModel> net1_, net2_;
    std::vector<autodiff::Var> g1_, g2_;
};

/// E_B gradient-ascent steps on L_ind,1(.;G2) + L_ind,2(.;G1) with the
/// network parameters frozen. Returns the objective value before each step
/// and after the last one.
std::vector<double> maximize_g(SupernetPair& pair, int steps, Adam& opt);

struct EpochRecord {
    int epoch = 0;
    double sup[2] = {0, 0}, uns[2] = {0, 0}, ind[2] = {0, 0}, con[2] = {0, 0}, total[2] = {0, 0};
};

struct TrainState {
    std::vector<EpochRecord> history; // one record per epoch, means over steps
    double initial_dsc[2] = {0, 0};   // held-out mean foreground DSC before training
    double final_dsc[2] = {0, 0};
    std::vector<std::string> checkpoints;
};

/// Deterministic cycling sampler; reshuffles on every wrap.
class IndexStream {
public:
    IndexStream(int n, std::uint64_t seed) : rng_(seed) {
        if (n > 0) order_ = rng_.permutation(n);
    }
    std::vector<int> next(int count) {
        std::vector<int> out;
        out.reserve(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i) {
            if (order_.empty()) throw ContractError("IndexStream: empty stream");
            out.push_back(order_[pos_++]);
            if (pos_ == order_.size()) {
                pos_ = 0;
                order_ = rng_.permutation(static_cast<int>(order_.size()));
            }
        }
        return out;
    }

private:
    Rng rng_;
    std::vector<int> order_;
    std::size_t pos_ = 0;
};

struct Batch {
    Tensor images;  // (B,1,H,W)
    IntMask labels; // (B,H,W); only meaningful when labeled
    bool labeled = false;
};

Batch make_batch(const Dataset& data, const std::vector<int>& indices);

/// Alg.-1 stage-wise optimizer over a co-trained pair.
class Trainer {
public:
    Trainer(const TrainConfig& tc, const LossWeights& lw, const SupernetConfig& model_cfg);

    /// Stage 1: update G only.
    std::vector<double> stage_g();
    /// Stage 2: one SGD step on w and beta of both networks.
    EpochRecord stage_weights(const Batch& labeled, const Batch* unlabeled, int epoch);
    /// Stage 3: one Adam step on alpha and gamma of both networks; a
    /// contractual no-op at epoch <= arch_warmup.
    void stage_arch(const Batch& labeled, const Batch* unlabeled, int epoch);

    /// Full search loop with per-epoch checkpointing (checkpoint_dir may be
    /// empty to skip saving).
    TrainState run_search(const Dataset& labeled, const Dataset& unlabeled, const Dataset& test,
                          const std::string& checkpoint_dir);

    SupernetPair& pair() { return *pair_; }
    const TrainConfig& train_config() const { return tc_; }
    const LossWeights& loss_weights() const { return lw_; }

    struct NetLoss {
        autodiff::Var total;
        double sup, uns, ind, con;
    };
    /// L_total of one network on the given batches; arch_stage drops the
    /// (alpha/gamma-independent) gradient path through the independence term.
    NetLoss stage_loss(int i, const Batch& labeled, const Batch* unlabeled, int epoch,
                       bool arch_stage);

private:

    TrainConfig tc_;
    LossWeights lw_;
    std::unique_ptr<SupernetPair> pair_;
    std::unique_ptr<SgdMomentum> opt_w_[2], opt_beta_[2];
    std::unique_ptr<Adam> opt_arch_[2];
    std::unique_ptr<Adam> opt_g_;
};

/// Canonical CSV rendering of a loss history (used for the run artifact and
/// byte-level determinism checks).
std::string loss_history_csv(const TrainState& state);

/// Mean foreground DSC of a model's argmax predictions over a dataset.
double evaluate_mean_dsc(const SupernetModel& model, const Dataset& test, int batch_size);
/// Argmax predictions for one image batch.
IntMask predict_masks(const SupernetModel& model, const Tensor& images);

} // namespace ssnas
