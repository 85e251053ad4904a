// Command-line entry point: search / derive / eval / report over a flat JSON
// run configuration. Exit codes: 0 success, 1 runtime failure, 2 invalid
// configuration or arguments.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ssnas/checkpoint.hpp"
#include "ssnas/config.hpp"
#include "ssnas/metrics.hpp"
#include "ssnas/png_io.hpp"
#include "ssnas/report.hpp"

namespace fs = std::filesystem;
using namespace ssnas;

namespace {

struct SearchArgs {
    std::string config_path;
    std::string out_override;
    std::int64_t seed_override = -1;
    double labeled_fraction_override = -1.0;
    int layers_override = -1;
    std::string contrastive_override; // "none" or comma-separated resolutions
};

std::vector<int> parse_resolutions(const std::string& text) {
    if (text == "none") return {};
    std::vector<int> out;
    std::string token;
    for (char ch : text + ",") {
        if (ch == ',') {
            if (!token.empty()) out.push_back(std::stoi(token));
            token.clear();
        } else {
            token.push_back(ch);
        }
    }
    return out;
}

void write_loss_history_csv(const std::string& path, const TrainState& state) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << loss_history_csv(state);
}

Dataset build_dataset(const RunConfig& cfg) {
    if (cfg.data_source == "directory") return load_directory(cfg.data_dir, cfg.num_classes);
    return generate_phantom_dataset(cfg.phantom_spec(), cfg.phantom_count,
                                    cfg.seed * 1000003ull + 17ull);
}

int cmd_search(const SearchArgs& args) {
    RunConfig cfg = RunConfig::from_json_file(args.config_path);
    if (args.seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed_override);
    if (args.labeled_fraction_override >= 0.0) cfg.labeled_fraction = args.labeled_fraction_override;
    if (args.layers_override >= 0) cfg.layers = args.layers_override;
    if (!args.contrastive_override.empty())
        cfg.contrastive_resolutions = parse_resolutions(args.contrastive_override);
    if (!args.out_override.empty()) cfg.output_dir = args.out_override;
    if (cfg.output_dir.empty())
        throw ConfigError("config: missing required key 'output_dir'");
    cfg.validate();

    Dataset data = build_dataset(cfg);
    SplitResult sp = split(data, cfg.labeled_fraction, cfg.test_fraction,
                           cfg.seed * 1000003ull + 29ull);

    fs::create_directories(cfg.output_dir);
    {
        std::ofstream out(fs::path(cfg.output_dir) / "config.json");
        out << cfg.to_json_text();
    }

    Trainer trainer(cfg.train_config(), cfg.loss_weights(), cfg.supernet_config());
    TrainState state = trainer.run_search(sp.labeled, sp.unlabeled, sp.test,
                                          (fs::path(cfg.output_dir) / "checkpoints").string());

    write_loss_history_csv((fs::path(cfg.output_dir) / "loss_history.csv").string(), state);
    {
        nlohmann::json summary;
        summary["epochs"] = static_cast<int>(state.history.size());
        summary["initial_dsc"] = {state.initial_dsc[0], state.initial_dsc[1]};
        summary["final_dsc"] = {state.final_dsc[0], state.final_dsc[1]};
        summary["checkpoints"] = state.checkpoints;
        std::ofstream out(fs::path(cfg.output_dir) / "summary.json");
        out << summary.dump(2) << "\n";
    }
    std::printf("search complete: %zu epochs, checkpoints under %s\n", state.history.size(),
                cfg.output_dir.c_str());
    for (int i = 0; i < 2; ++i)
        std::printf("net%d held-out mean foreground DSC: %.4f -> %.4f\n", i + 1,
                    state.initial_dsc[i], state.final_dsc[i]);
    return 0;
}

int cmd_derive(const std::string& checkpoint, const std::string& out) {
    LoadedCheckpoint loaded = load_checkpoint(checkpoint);
    for (int i = 0; i < 2; ++i) {
        const SupernetModel& model = loaded.pair->net(i);
        export_report(derive(model), proportions(model), {},
                      (fs::path(out) / ("net" + std::to_string(i + 1))).string());
    }
    std::printf("genotypes written under %s\n", out.c_str());
    return 0;
}

struct Scores {
    std::vector<double> dsc, iou, hd;
};

void append_scores(Scores& s, const IntMask& pred, const IntMask& gt, int num_classes) {
    s.dsc.push_back(mean_foreground_dsc(pred, gt, num_classes));
    s.iou.push_back(mean_foreground_iou(pred, gt, num_classes));
    s.hd.push_back(mean_foreground_hd95(pred, gt, num_classes));
}

std::vector<MetricsRow> score_rows(const std::string& split, const Scores& s) {
    auto stats = [](const std::vector<double>& v) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
        return std::make_pair(mean, sd);
    };
    std::vector<MetricsRow> rows;
    const auto [dm, ds] = stats(s.dsc);
    const auto [im, is] = stats(s.iou);
    const auto [hm, hs] = stats(s.hd);
    rows.push_back({split, "dsc", dm, ds});
    rows.push_back({split, "iou", im, is});
    rows.push_back({split, "hd95", hm, hs});
    return rows;
}

IntMask slice_mask(const IntMask& batch, int i) {
    const int h = batch.shape[1], w = batch.shape[2];
    IntMask out({h, w});
    std::copy(batch.data.begin() + static_cast<std::ptrdiff_t>(i) * h * w,
              batch.data.begin() + static_cast<std::ptrdiff_t>(i + 1) * h * w, out.data.begin());
    return out;
}

int cmd_eval_checkpoint(const std::string& checkpoint, const std::string& data_dir,
                        const std::string& out) {
    LoadedCheckpoint loaded = load_checkpoint(checkpoint);
    const int num_classes = loaded.pair->config().num_classes;
    Dataset data = load_directory(data_dir, num_classes);

    std::vector<MetricsRow> rows;
    for (int i = 0; i < 2; ++i) {
        Scores s;
        for (const SegSample& sample : data.samples) {
            if (!sample.mask) continue;
            Tensor img({1, 1, sample.image.dim(1), sample.image.dim(2)},
                       std::vector<double>(sample.image.data(),
                                           sample.image.data() + sample.image.numel()));
            IntMask pred = predict_masks(loaded.pair->net(i), img);
            append_scores(s, slice_mask(pred, 0), *sample.mask, num_classes);
        }
        if (s.dsc.empty()) throw ConfigError("eval: no labeled samples under '" + data_dir + "'");
        auto net_rows = score_rows("net" + std::to_string(i + 1), s);
        rows.insert(rows.end(), net_rows.begin(), net_rows.end());
    }
    fs::create_directories(out);
    write_metrics_csv((fs::path(out) / "metrics.csv").string(), rows);
    std::printf("metrics written to %s\n", (fs::path(out) / "metrics.csv").c_str());
    return 0;
}

int cmd_eval_dirs(const std::string& pred_dir, const std::string& gt_dir, const std::string& out,
                  int num_classes) {
    auto load_masks = [](const std::string& dir) {
        std::vector<std::pair<std::string, IntMask>> masks;
        std::vector<std::string> ids;
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.path().extension() == ".png") ids.push_back(entry.path().stem().string());
        std::sort(ids.begin(), ids.end());
        for (const std::string& id : ids) {
            png_io::GrayImage img = png_io::read_gray8((fs::path(dir) / (id + ".png")).string());
            IntMask m({img.height, img.width});
            for (std::int64_t i = 0; i < m.numel(); ++i)
                m[i] = img.pixels[static_cast<std::size_t>(i)];
            masks.emplace_back(id, std::move(m));
        }
        return masks;
    };
    auto preds = load_masks(pred_dir);
    auto gts = load_masks(gt_dir);
    if (preds.empty() || preds.size() != gts.size())
        throw ConfigError("eval: prediction and ground-truth directories do not match");

    if (num_classes <= 0) {
        int mx = 0;
        for (const auto& [id, m] : gts)
            for (std::int64_t i = 0; i < m.numel(); ++i) mx = std::max(mx, m[i]);
        num_classes = mx + 1;
    }
    Scores s;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].first != gts[i].first)
            throw ConfigError("eval: sample ids differ between directories");
        append_scores(s, preds[i].second, gts[i].second, std::max(2, num_classes));
    }
    fs::create_directories(out);
    write_metrics_csv((fs::path(out) / "metrics.csv").string(), score_rows("pred", s));
    std::printf("metrics written to %s\n", (fs::path(out) / "metrics.csv").c_str());
    return 0;
}

int cmd_report(const std::string& run_dir, const std::string& out) {
    const fs::path ckpts = fs::path(run_dir) / "checkpoints";
    if (!fs::is_directory(ckpts))
        throw ConfigError("report: no checkpoints under '" + run_dir + "'");
    std::vector<std::string> dirs;
    for (const auto& entry : fs::directory_iterator(ckpts))
        if (entry.is_directory()) dirs.push_back(entry.path().string());
    if (dirs.empty()) throw ConfigError("report: no checkpoint epochs under '" + run_dir + "'");
    std::sort(dirs.begin(), dirs.end());

    LoadedCheckpoint loaded = load_checkpoint(dirs.back());
    fs::create_directories(out);
    std::vector<std::pair<std::string, std::vector<ProportionRow>>> merged;
    for (int i = 0; i < 2; ++i) {
        const SupernetModel& model = loaded.pair->net(i);
        merged.emplace_back("net" + std::to_string(i + 1), proportions(model));
        export_report(derive(model), merged.back().second, {},
                      (fs::path(out) / ("net" + std::to_string(i + 1))).string());
    }
    write_merged_proportions_csv((fs::path(out) / "proportions.csv").string(), merged);
    std::printf("report written under %s (from %s)\n", out.c_str(), dirs.back().c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"token-level NAS with co-trained semi-supervised segmentation supernets"};
    app.require_subcommand(1);

    SearchArgs sargs;
    CLI::App* search = app.add_subcommand("search", "run the stage-wise architecture search");
    search->add_option("--config", sargs.config_path, "run configuration (JSON)")->required();
    search->add_option("--out", sargs.out_override, "override output_dir");
    search->add_option("--seed", sargs.seed_override, "override seed");
    search->add_option("--labeled-fraction", sargs.labeled_fraction_override,
                       "override labeled_fraction");
    search->add_option("--layers", sargs.layers_override, "override encoder layer count");
    search->add_option("--contrastive-res", sargs.contrastive_override,
                       "override contrastive resolutions, e.g. '4,8,16' or 'none'");

    std::string ckpt, out_dir, data_dir, run_dir, pred_dir, gt_dir;
    int num_classes = 0;
    CLI::App* derive_cmd = app.add_subcommand("derive", "discretize a checkpoint to genotypes");
    derive_cmd->add_option("--checkpoint", ckpt, "checkpoint directory")->required();
    derive_cmd->add_option("--out", out_dir, "output directory")->required();

    CLI::App* eval_cmd = app.add_subcommand("eval", "segmentation metrics for a checkpoint or mask directories");
    eval_cmd->add_option("--checkpoint", ckpt, "checkpoint directory");
    eval_cmd->add_option("--data", data_dir, "dataset directory (images/ + masks/)");
    eval_cmd->add_option("--pred-masks", pred_dir, "predicted mask directory");
    eval_cmd->add_option("--gt-masks", gt_dir, "ground-truth mask directory");
    eval_cmd->add_option("--num-classes", num_classes, "class count for directory mode");
    eval_cmd->add_option("--out", out_dir, "output directory")->required();

    CLI::App* report_cmd = app.add_subcommand("report", "aggregate genotypes and proportions of a run");
    report_cmd->add_option("--run", run_dir, "search output directory")->required();
    report_cmd->add_option("--out", out_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
        if (search->parsed()) return cmd_search(sargs);
        if (derive_cmd->parsed()) return cmd_derive(ckpt, out_dir);
        if (eval_cmd->parsed()) {
            if (!pred_dir.empty() || !gt_dir.empty()) {
                if (pred_dir.empty() || gt_dir.empty())
                    throw ConfigError("eval: both --pred-masks and --gt-masks are required");
                return cmd_eval_dirs(pred_dir, gt_dir, out_dir, num_classes);
            }
            if (ckpt.empty() || data_dir.empty())
                throw ConfigError("eval: provide --checkpoint with --data, or mask directories");
            return cmd_eval_checkpoint(ckpt, data_dir, out_dir);
        }
        if (report_cmd->parsed()) return cmd_report(run_dir, out_dir);
        return 2;
    } catch (const CLI::ParseError& e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp")
            return app.exit(e);
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
