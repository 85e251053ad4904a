#pragma once

#include <map>
#include <optional>

#include "ssnas/nasvit.hpp"

namespace ssnas {

/// Active resolution grid of the encoder. r=1,2 exist only inside the stem.
inline constexpr int kResolutions[4] = {4, 8, 16, 32};

struct EncoderConfig {
    int layers = 8;        // L
    int nodes = 5;         // N intermediate nodes per cell
    int base_channels = 8; // node channels at r=4
    double channel_fraction = 0.25;
    int in_channels = 1;

    int channels_at(int r) const { return base_channels * (r / 4); }
    void validate() const;
};

/// Multi-resolution features with full same-resolution history:
/// history[r][l] is the layer-l output at resolution r (l=0 is the stem seed).
struct FeaturePyramid {
    std::map<int, std::vector<autodiff::Var>> history;

    const autodiff::Var& top(int r) const {
        auto it = history.find(r);
        if (it == history.end() || it->second.empty())
            throw ContractError("FeaturePyramid: no features at resolution " + std::to_string(r));
        return it->second.back();
    }
};

/// Architecture relaxation parameters of the encoder, one (num_ops,) leaf per
/// (cell, edge). Cells own independent slices.
struct AlphaParams {
    int num_ops = 8;
    std::vector<std::vector<autodiff::Var>> cells; // [cell][edge]
};

/// Chosen op index per (cell, edge); empty means relaxed (mixture) forward.
struct EncoderPlan {
    std::vector<std::vector<int>> choices;
};

/// One searchable cell: N nodes whose edges are NAS-ViT blocks; inputs are
/// preprocessed by 1x1 convolutions and the node outputs are concatenated and
/// projected back to the cell width.
class EncoderCell {
public:
    EncoderCell(int resolution, const EncoderConfig& cfg, ParamRegistry& reg,
                const std::string& name, Rng& rng);

    /// alpha holds one logit vector per edge; plan (if non-null) forces ops.
    autodiff::Var forward(const autodiff::Var& h_prev, const autodiff::Var& h_prevprev,
                          const std::vector<autodiff::Var>& alpha,
                          const std::vector<int>* plan) const;

    int num_edges() const { return static_cast<int>(edges_.size()); }
    int resolution() const { return resolution_; }
    int nodes() const { return nodes_; }
    const autodiff::Var& pre0() const { return pre0_; }
    const autodiff::Var& pre1() const { return pre1_; }
    const autodiff::Var& out_conv() const { return out_conv_; }
    const std::vector<NasVitBlock>& edges() const { return edges_; }

private:
    int resolution_;
    int channels_;
    int nodes_;
    autodiff::Var pre0_, pre1_, out_conv_;
    std::vector<NasVitBlock> edges_; // node-major: node n owns edges for its 2+n inputs
};

/// Hierarchical encoder: stem to r=4 and r=8 seeds, then L layers of cells
/// with layer-level multi-resolution fusion and dense same-resolution skips.
class EncoderSupernet {
public:
    struct CellInfo {
        int layer;      // 1-based
        int resolution;
        int num_edges;
    };

    EncoderSupernet(const EncoderConfig& cfg, ParamRegistry& reg, Rng& rng);

    /// image (B,in_channels,H,W) with H, W divisible by 32.
    FeaturePyramid forward(const autodiff::Var& image, const AlphaParams& alpha,
                           const EncoderPlan* plan) const;

    /// Stem seeds only (layer-0 features at r=4 and r=8).
    FeaturePyramid stem(const autodiff::Var& image) const;

    const EncoderConfig& config() const { return cfg_; }
    const std::vector<CellInfo>& cell_infos() const { return cell_infos_; }
    const AlphaParams& alpha() const { return alpha_; }
    AlphaParams& alpha() { return alpha_; }

    static bool cell_exists(int layer, int resolution, int total_layers);
    static bool output_exists(int layer, int resolution, int total_layers);

    struct LayerSlot {
        std::optional<EncoderCell> cell;            // cell at (l, r)
        autodiff::Var down_conv;                    // from cell at r/2, 3x3 stride 2
        autodiff::Var up_conv;                      // from cell at 2r, 1x1 after x2 upsample
        autodiff::Var fusion_conv;                  // beta: 1x1 over the concatenation
        int cell_index = -1;                        // into alpha.cells
        bool has_down = false, has_up = false, has_output = false;
        int history_len = 0;
    };

    const LayerSlot& slot(int layer, int resolution) const {
        return layers_.at(static_cast<std::size_t>(layer - 1)).at(resolution);
    }
    const autodiff::Var& stem_kernel(int i) const {
        return i == 0 ? stem1_ : (i == 1 ? stem2_ : stem3_);
    }

private:
    EncoderConfig cfg_;
    autodiff::Var stem1_, stem2_, stem3_;
    std::vector<std::map<int, LayerSlot>> layers_; // [layer-1][r]
    std::vector<CellInfo> cell_infos_;
    AlphaParams alpha_;
};

} // namespace ssnas
