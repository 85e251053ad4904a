#include "ssnas/supernet.hpp"

namespace ssnas {

SupernetModel::SupernetModel(const SupernetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    encoder_ = std::make_unique<EncoderSupernet>(cfg_.encoder, reg_, rng);
    decoder_ = std::make_unique<DecoderSupernet>(cfg_.encoder, cfg_.num_classes,
                                                 cfg_.include_pool_zero, reg_, rng);
    if (!reg_.audit_partition())
        throw ContractError("SupernetModel: parameter groups are not a partition");
}

SupernetModel::Output SupernetModel::forward(const autodiff::Var& image) const {
    Output out;
    out.pyramid = encoder_->forward(image, encoder_->alpha(), nullptr);
    out.trace = decoder_->forward(out.pyramid, decoder_->gamma(), nullptr);
    return out;
}

SupernetModel::Output SupernetModel::forward_discrete(const autodiff::Var& image,
                                                      const ArchPlan& plan) const {
    Output out;
    out.pyramid = encoder_->forward(image, encoder_->alpha(), &plan.encoder);
    out.trace = decoder_->forward(out.pyramid, decoder_->gamma(), &plan.decoder);
    return out;
}

} // namespace ssnas
