#pragma once

#include <string>

#include "ssnas/data.hpp"
#include "ssnas/objectives.hpp"
#include "ssnas/supernet.hpp"
#include "ssnas/trainer.hpp"

namespace ssnas {

/// One flat configuration per run. Unknown keys are rejected; every field has
/// a default except what a given subcommand requires.
struct RunConfig {
    std::uint64_t seed = 1;
    std::string output_dir;

    // data
    std::string data_source = "phantom"; // "phantom" | "directory"
    std::string data_dir;
    int phantom_count = 200;
    int phantom_size = 64;
    double speckle = 0.08;
    double bias = 0.10;
    int num_classes = 3;
    double test_fraction = 0.2;
    double labeled_fraction = 0.5;

    // model
    int layers = 8;
    int nodes = 5;
    int base_channels = 8;
    double channel_fraction = 0.25;
    int in_channels = 1;
    std::string decoder_op_set = "exclude_pool_zero"; // | "include_pool_zero"

    // optimization
    int epochs = 40;
    int arch_warmup = 10;
    int g_steps = 6;
    int batch_labeled = 4;
    int batch_unlabeled = 4;
    double lr_weights = 0.001;
    double momentum = 0.9;
    double wd_weights = 0.0003;
    double lr_arch = 0.003;
    double wd_arch = 0.001;
    double lr_g = 0.001;

    // objectives
    double lambda1 = 1.0;
    double lambda3 = 2.0;
    int ramp_epochs = 50;
    std::vector<int> contrastive_resolutions = {4, 8, 16};
    std::string uncertainty_mean = "spatial"; // | "channel"

    static RunConfig from_json_file(const std::string& path);
    static RunConfig from_json_text(const std::string& text);
    std::string to_json_text() const;

    void validate() const;

    SupernetConfig supernet_config() const;
    TrainConfig train_config() const;
    LossWeights loss_weights() const;
    PhantomSpec phantom_spec() const;
};

} // namespace ssnas
