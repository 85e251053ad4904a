#include "ssnas/decoder.hpp"

#include <cmath>

namespace ssnas {

using namespace autodiff;

namespace {
const kernels::Conv2dSpec kPw{1, 0, 1, 1};
}

DecoderSupernet::DecoderSupernet(const EncoderConfig& enc_cfg, int num_classes,
                                 bool include_pool_zero, ParamRegistry& reg, Rng& rng)
    : num_classes_(num_classes), kinds_(decoder_op_set(include_pool_zero)) {
    if (num_classes_ < 2) throw ConfigError("DecoderSupernet: num_classes must be >= 2");
    num_ops_ = static_cast<int>(kinds_.size());
    gamma_.num_ops = num_ops_;

    int cell_index = 0;
    for (int r : kCellOrder) {
        const int c = enc_cfg.channels_at(r);
        const std::string name = "dec.r" + std::to_string(r);
        std::vector<OpInstance> ops;
        ops.reserve(kinds_.size());
        for (std::size_t i = 0; i < kinds_.size(); ++i) {
            OpInstance op = build_op(kinds_[i], c, rng);
            for (std::size_t p = 0; p < op.params.size(); ++p) {
                reg.adopt(ParamGroup::weights,
                          name + ".op" + std::to_string(i) + ".k" + std::to_string(p), op.params[p]);
                reg.register_independence(op.params[p]);
            }
            ops.push_back(std::move(op));
        }
        cell_ops_.push_back(std::move(ops));

        Tensor g({num_ops_});
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] = 1e-3 * rng.normal();
        gamma_.cells.push_back(
            reg.add(ParamGroup::gamma, "gamma.c" + std::to_string(cell_index++), std::move(g)));

        if (r < 32) {
            // after x2 upsample of the coarser decoder output, concat with the
            // encoder feature at r and project back to C(r)
            const int in_c = enc_cfg.channels_at(2 * r) + c;
            Tensor w({c, in_c, 1, 1});
            const double std = std::sqrt(1.0 / static_cast<double>(in_c));
            for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = std * rng.normal();
            Var v = reg.add(ParamGroup::weights, name + ".stage", std::move(w));
            reg.register_independence(v);
            stage_convs_[r] = v;
        }
    }

    const int c4 = enc_cfg.channels_at(4);
    Tensor w({num_classes_, c4, 1, 1});
    const double std = std::sqrt(1.0 / static_cast<double>(c4));
    for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = std * rng.normal();
    classifier_ = reg.add(ParamGroup::weights, "dec.classifier", std::move(w));
    reg.register_independence(classifier_);
}

Var DecoderSupernet::cell_forward(const Var& x, const Var& gamma,
                                  const std::vector<OpInstance>& ops, int plan_index) {
    if (plan_index >= 0) {
        if (plan_index >= static_cast<int>(ops.size()))
            throw ContractError("decoder cell: plan index out of range");
        return ops[static_cast<std::size_t>(plan_index)].forward(x);
    }
    if (gamma.value().numel() != static_cast<std::int64_t>(ops.size()))
        throw ContractError("decoder cell: gamma length does not match the op set");
    if (!gamma.value().all_finite()) throw ContractError("decoder cell: non-finite gamma");
    Var w = softmax_vec(gamma);
    double sum = 0.0;
    for (std::int64_t i = 0; i < w.value().numel(); ++i) sum += w.value()[i];
    if (std::abs(sum - 1.0) >= 1e-6)
        throw ContractError("decoder cell: softmax weights do not sum to 1");
    std::vector<Var> outs;
    outs.reserve(ops.size());
    for (const OpInstance& op : ops) outs.push_back(op.forward(x));
    return weighted_sum(outs, w);
}

DecoderTrace DecoderSupernet::forward(const FeaturePyramid& pyramid, const GammaParams& gamma,
                                      const std::vector<int>* plan) const {
    if (gamma.cells.size() != cell_ops_.size())
        throw ContractError("decoder forward: gamma cell count mismatch");
    DecoderTrace trace;
    Var x;
    int cell = 0;
    for (int r : kCellOrder) {
        if (r == 32) {
            x = pyramid.top(32);
        } else {
            Var up = upsample_nearest(x, 2);
            x = conv2d(concat_channels({up, pyramid.top(r)}), stage_convs_.at(r), kPw);
        }
        const int idx = plan ? (*plan)[static_cast<std::size_t>(cell)] : -1;
        x = cell_forward(x, gamma.cells[static_cast<std::size_t>(cell)],
                         cell_ops_[static_cast<std::size_t>(cell)], idx);
        trace.features[r] = x;
        ++cell;
    }
    trace.logits = conv2d(upsample_nearest(x, 4), classifier_, kPw);
    return trace;
}

} // namespace ssnas
