#pragma once

#include "ssnas/decoder.hpp"

namespace ssnas {

struct SupernetConfig {
    EncoderConfig encoder;
    int num_classes = 3;
    bool include_pool_zero = false; // decoder op-set ablation variant

    void validate() const {
        encoder.validate();
        if (num_classes < 2) throw ConfigError("SupernetConfig: num_classes must be >= 2");
    }
};

/// Chosen op per encoder (cell, edge) and per decoder cell.
struct ArchPlan {
    EncoderPlan encoder;
    std::vector<int> decoder;
};

/// One complete network: encoder supernet, decoder supernet, and their
/// architecture parameters, with every learnable leaf registered.
class SupernetModel {
public:
    SupernetModel(const SupernetConfig& cfg, std::uint64_t seed);

    struct Output {
        FeaturePyramid pyramid;
        DecoderTrace trace;
    };

    /// Relaxed forward with this network's own alpha/gamma.
    Output forward(const autodiff::Var& image) const;
    /// Mixtures replaced by the plan's single ops (exact one-hot weights).
    Output forward_discrete(const autodiff::Var& image, const ArchPlan& plan) const;

    const SupernetConfig& config() const { return cfg_; }
    ParamRegistry& registry() { return reg_; }
    const ParamRegistry& registry() const { return reg_; }
    EncoderSupernet& encoder() { return *encoder_; }
    const EncoderSupernet& encoder() const { return *encoder_; }
    DecoderSupernet& decoder() { return *decoder_; }
    const DecoderSupernet& decoder() const { return *decoder_; }
    AlphaParams& alpha() { return encoder_->alpha(); }
    const AlphaParams& alpha() const { return encoder_->alpha(); }
    GammaParams& gamma() { return decoder_->gamma(); }
    const GammaParams& gamma() const { return decoder_->gamma(); }

private:
    SupernetConfig cfg_;
    ParamRegistry reg_;
    std::unique_ptr<EncoderSupernet> encoder_;
    std::unique_ptr<DecoderSupernet> decoder_;
};

} // namespace ssnas
