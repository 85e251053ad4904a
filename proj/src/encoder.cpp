#include "ssnas/encoder.hpp"

#include <cmath>

namespace ssnas {

using namespace autodiff;

namespace {

Var conv_kernel(ParamRegistry& reg, const std::string& name, int co, int cig, int k, Rng& rng,
                double gain = 1.0, ParamGroup group = ParamGroup::weights) {
    Tensor w({co, cig, k, k});
    const double std = gain * std::sqrt(1.0 / (static_cast<double>(cig) * k * k));
    for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = std * rng.normal();
    Var v = reg.add(group, name, std::move(w));
    reg.register_independence(v);
    return v;
}

const kernels::Conv2dSpec kPw{1, 0, 1, 1};
const kernels::Conv2dSpec kStride2{2, 1, 1, 1};

int first_active_layer(int r) {
    switch (r) {
        case 4:
        case 8: return 0;  // stem seeds
        case 16: return 1; // first reachable via Down from r=8
        case 32: return 2;
        default: throw ContractError("unknown resolution");
    }
}

} // namespace

void EncoderConfig::validate() const {
    if (layers < 2) throw ConfigError("EncoderConfig: layers must be >= 2");
    if (nodes < 1) throw ConfigError("EncoderConfig: nodes must be >= 1");
    if (base_channels < 1) throw ConfigError("EncoderConfig: base_channels must be >= 1");
    if (in_channels < 1) throw ConfigError("EncoderConfig: in_channels must be >= 1");
    for (int r : kResolutions) {
        NasVitConfig vit;
        vit.f = vit.d = channels_at(r);
        vit.channel_fraction = channel_fraction;
        vit.validate();
    }
}

bool EncoderSupernet::cell_exists(int layer, int resolution, int /*total_layers*/) {
    return layer >= 1 && layer - 1 >= first_active_layer(resolution);
}

bool EncoderSupernet::output_exists(int layer, int resolution, int /*total_layers*/) {
    return layer >= first_active_layer(resolution);
}

EncoderCell::EncoderCell(int resolution, const EncoderConfig& cfg, ParamRegistry& reg,
                         const std::string& name, Rng& rng)
    : resolution_(resolution), channels_(cfg.channels_at(resolution)), nodes_(cfg.nodes) {
    pre0_ = conv_kernel(reg, name + ".pre0", channels_, channels_, 1, rng);
    pre1_ = conv_kernel(reg, name + ".pre1", channels_, channels_, 1, rng);
    NasVitConfig vit;
    vit.f = vit.d = channels_;
    vit.channel_fraction = cfg.channel_fraction;
    int e = 0;
    for (int n = 0; n < nodes_; ++n)
        for (int j = 0; j < 2 + n; ++j, ++e)
            edges_.emplace_back(vit, reg, name + ".e" + std::to_string(e), rng);
    double node_gain = 0.0;
    for (int n = 0; n < nodes_; ++n) node_gain += 2.0 + n;
    node_gain /= nodes_;
    out_conv_ = conv_kernel(reg, name + ".out", channels_, nodes_ * channels_, 1, rng,
                            1.0 / std::sqrt(node_gain));
}

Var EncoderCell::forward(const Var& h_prev, const Var& h_prevprev,
                         const std::vector<Var>& alpha, const std::vector<int>* plan) const {
    const Tensor& a = h_prev.value();
    const Tensor& b = h_prevprev.value();
    if (a.ndim() != 4 || b.ndim() != 4 || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3) ||
        a.dim(1) != channels_ || b.dim(1) != channels_)
        throw ContractError("EncoderCell: inputs must match the cell resolution and width");
    if (!plan && static_cast<int>(alpha.size()) != num_edges())
        throw ContractError("EncoderCell: alpha slice count does not match edge count");
    if (plan && static_cast<int>(plan->size()) != num_edges())
        throw ContractError("EncoderCell: plan length does not match edge count");

    std::vector<Var> inputs = {conv2d(h_prev, pre0_, kPw), conv2d(h_prevprev, pre1_, kPw)};
    std::vector<Var> node_outs;
    int e = 0;
    for (int n = 0; n < nodes_; ++n) {
        Var acc;
        for (int j = 0; j < 2 + n; ++j, ++e) {
            const NasVitBlock& edge = edges_[static_cast<std::size_t>(e)];
            Var out = plan ? edge.forward_discrete(inputs[static_cast<std::size_t>(j)],
                                                   (*plan)[static_cast<std::size_t>(e)])
                           : edge.forward(inputs[static_cast<std::size_t>(j)],
                                          alpha[static_cast<std::size_t>(e)]);
            acc = acc.defined() ? add(acc, out) : out;
        }
        node_outs.push_back(acc);
        inputs.push_back(acc);
    }
    Var cat = node_outs.size() == 1 ? node_outs[0] : concat_channels(node_outs);
    return conv2d(cat, out_conv_, kPw);
}

EncoderSupernet::EncoderSupernet(const EncoderConfig& cfg, ParamRegistry& reg, Rng& rng)
    : cfg_(cfg) {
    cfg_.validate();
    const int c4 = cfg_.channels_at(4);
    stem1_ = conv_kernel(reg, "stem.1", c4, cfg_.in_channels, 3, rng);
    stem2_ = conv_kernel(reg, "stem.2", c4, c4, 3, rng);
    stem3_ = conv_kernel(reg, "stem.3", cfg_.channels_at(8), c4, 3, rng);

    alpha_.num_ops = 8;
    layers_.resize(static_cast<std::size_t>(cfg_.layers));
    for (int l = 1; l <= cfg_.layers; ++l) {
        auto& slots = layers_[static_cast<std::size_t>(l - 1)];
        const std::string lname = "enc.l" + std::to_string(l);
        for (int r : kResolutions) {
            LayerSlot slot;
            if (cell_exists(l, r, cfg_.layers)) {
                slot.cell.emplace(r, cfg_, reg, lname + ".r" + std::to_string(r) + ".cell", rng);
                slot.cell_index = static_cast<int>(cell_infos_.size());
                cell_infos_.push_back({l, r, slot.cell->num_edges()});
                std::vector<Var> slices;
                for (int e = 0; e < slot.cell->num_edges(); ++e) {
                    Tensor init({alpha_.num_ops});
                    for (std::int64_t i = 0; i < init.numel(); ++i) init[i] = 1e-3 * rng.normal();
                    slices.push_back(reg.add(ParamGroup::alpha,
                                             "alpha.c" + std::to_string(slot.cell_index) + ".e" +
                                                 std::to_string(e),
                                             std::move(init)));
                }
                alpha_.cells.push_back(std::move(slices));
            }
            slots.emplace(r, std::move(slot));
        }
        for (int r : kResolutions) {
            LayerSlot& slot = slots[r];
            const std::string rname = lname + ".r" + std::to_string(r);
            slot.has_down = r / 2 >= 4 && cell_exists(l, r / 2, cfg_.layers);
            slot.has_up = 2 * r <= 32 && cell_exists(l, 2 * r, cfg_.layers);
            const bool has_same = slot.cell.has_value();
            slot.has_output = slot.has_down || slot.has_up || has_same;
            if (!slot.has_output) continue;
            const int c = cfg_.channels_at(r);
            if (slot.has_down)
                slot.down_conv = conv_kernel(reg, rname + ".down", c, cfg_.channels_at(r / 2), 3, rng);
            if (slot.has_up)
                slot.up_conv = conv_kernel(reg, rname + ".up", c, cfg_.channels_at(2 * r), 1, rng);
            slot.history_len = std::max(0, l - first_active_layer(r));
            const int branches = (slot.has_down ? 1 : 0) + (slot.has_up ? 1 : 0) + (has_same ? 1 : 0);
            Tensor w({c, c * (branches + slot.history_len), 1, 1});
            const double std = std::sqrt(1.0 / static_cast<double>(w.dim(1)));
            for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = std * rng.normal();
            slot.fusion_conv = reg.add(ParamGroup::fusion, rname + ".fuse", std::move(w));
            reg.register_independence(slot.fusion_conv);
        }
    }
}

FeaturePyramid EncoderSupernet::stem(const Var& image) const {
    const Tensor& img = image.value();
    if (img.ndim() != 4 || img.dim(1) != cfg_.in_channels)
        throw ContractError("stem: image must be (B," + std::to_string(cfg_.in_channels) + ",H,W)");
    if (img.dim(2) % 32 != 0 || img.dim(3) % 32 != 0)
        throw ContractError("stem: H and W must be divisible by 32 (pad the input)");
    FeaturePyramid p;
    Var r2 = conv2d(image, stem1_, kStride2);
    Var r4 = conv2d(r2, stem2_, kStride2);
    Var r8 = conv2d(r4, stem3_, kStride2);
    p.history[4].push_back(r4);
    p.history[8].push_back(r8);
    return p;
}

FeaturePyramid EncoderSupernet::forward(const Var& image, const AlphaParams& alpha,
                                        const EncoderPlan* plan) const {
    if (alpha.cells.size() != cell_infos_.size())
        throw ContractError("encoder forward: alpha cell count mismatch");
    FeaturePyramid p = stem(image);
    for (int l = 1; l <= cfg_.layers; ++l) {
        const auto& slots = layers_[static_cast<std::size_t>(l - 1)];
        std::map<int, Var> cellout;
        for (int r : kResolutions) {
            const LayerSlot& slot = slots.at(r);
            if (!slot.cell) continue;
            const auto& hist = p.history.at(r);
            const int base = first_active_layer(r);
            const Var& prev = hist[static_cast<std::size_t>(l - 1 - base)];
            const Var& prevprev =
                (l - 2 >= base) ? hist[static_cast<std::size_t>(l - 2 - base)] : prev;
            const std::vector<int>* cell_plan =
                plan ? &plan->choices[static_cast<std::size_t>(slot.cell_index)] : nullptr;
            cellout[r] = slot.cell->forward(
                prev, prevprev, alpha.cells[static_cast<std::size_t>(slot.cell_index)], cell_plan);
        }
        for (int r : kResolutions) {
            const LayerSlot& slot = slots.at(r);
            if (!slot.has_output) continue;
            std::vector<Var> branches;
            if (slot.has_down) branches.push_back(conv2d(cellout.at(r / 2), slot.down_conv, kStride2));
            if (slot.has_up)
                branches.push_back(conv2d(upsample_nearest(cellout.at(2 * r), 2), slot.up_conv, kPw));
            if (slot.cell) branches.push_back(cellout.at(r));
            if (p.history.count(r))
                for (const Var& h : p.history.at(r)) branches.push_back(h);
            Var cat = branches.size() == 1 ? branches[0] : concat_channels(branches);
            p.history[r].push_back(conv2d(cat, slot.fusion_conv, kPw));
        }
    }
    return p;
}

} // namespace ssnas
