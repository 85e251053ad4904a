#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ssnas/checkpoint.hpp"
#include "ssnas/report.hpp"

using namespace ssnas;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "ssnas_cli_test";

struct CliResult {
    int exit_code = -1;
    std::string output; // stdout + stderr
};

CliResult run_cli(const std::string& args) {
    const fs::path log = kWork / "cli_log.txt";
    const std::string cmd = std::string(SSNAS_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WEXITSTATUS(status);
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    return r;
}

std::string tiny_config_json(const std::string& out_dir, int seed = 5) {
    std::ostringstream os;
    os << "{\n"
       << "  \"seed\": " << seed << ",\n"
       << "  \"output_dir\": \"" << out_dir << "\",\n"
       << "  \"phantom_count\": 8,\n"
       << "  \"phantom_size\": 32,\n"
       << "  \"test_fraction\": 0.25,\n"
       << "  \"labeled_fraction\": 0.5,\n"
       << "  \"layers\": 2,\n"
       << "  \"nodes\": 1,\n"
       << "  \"base_channels\": 4,\n"
       << "  \"epochs\": 2,\n"
       << "  \"arch_warmup\": 0,\n"
       << "  \"g_steps\": 2,\n"
       << "  \"batch_labeled\": 2,\n"
       << "  \"batch_unlabeled\": 2\n"
       << "}\n";
    return os.str();
}

std::string write_file(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path);
    out << text;
    return path.string();
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("validation failures exit with code 2 and name the problem") {
    fs::remove_all(kWork);
    fs::create_directories(kWork);

    CliResult missing = run_cli("search --config " + (kWork / "nope.json").string());
    CHECK(missing.exit_code == 2);

    // config without output_dir: rejected naming the key
    const std::string cfg = write_file(kWork / "no_out.json", "{\n  \"phantom_size\": 32\n}\n");
    CliResult no_out = run_cli("search --config " + cfg);
    CHECK(no_out.exit_code == 2);
    CHECK(no_out.output.find("output_dir") != std::string::npos);

    const std::string unknown =
        write_file(kWork / "unknown.json", "{\n  \"output_dir\": \"x\",\n  \"lr\": 0.1\n}\n");
    CliResult bad_key = run_cli("search --config " + unknown);
    CHECK(bad_key.exit_code == 2);
    CHECK(bad_key.output.find("unknown key 'lr'") != std::string::npos);

    CliResult bad_sub = run_cli("unknown-subcommand");
    CHECK(bad_sub.exit_code == 2);
}

TEST_CASE("search writes checkpoints, history, and is byte-deterministic per seed") {
    fs::remove_all(kWork);
    const fs::path run_a = kWork / "run_a";
    const fs::path run_b = kWork / "run_b";
    const std::string cfg_a = write_file(kWork / "a.json", tiny_config_json(run_a.string()));
    const std::string cfg_b = write_file(kWork / "b.json", tiny_config_json(run_b.string()));

    CliResult a = run_cli("search --config " + cfg_a);
    REQUIRE(a.exit_code == 0);
    CHECK(fs::exists(run_a / "loss_history.csv"));
    CHECK(fs::exists(run_a / "config.json"));
    CHECK(fs::exists(run_a / "summary.json"));
    CHECK(fs::is_directory(run_a / "checkpoints" / "epoch_001"));
    CHECK(fs::is_directory(run_a / "checkpoints" / "epoch_002"));

    CliResult b = run_cli("search --config " + cfg_b);
    REQUIRE(b.exit_code == 0);
    CHECK(read_file(run_a / "loss_history.csv") == read_file(run_b / "loss_history.csv"));

    // a different seed produces a different history
    const fs::path run_c = kWork / "run_c";
    const std::string cfg_c = write_file(kWork / "c.json", tiny_config_json(run_c.string(), 6));
    CliResult c = run_cli("search --config " + cfg_c);
    REQUIRE(c.exit_code == 0);
    CHECK(read_file(run_a / "loss_history.csv") != read_file(run_c / "loss_history.csv"));

    // seed override on the command line beats the config
    const fs::path run_d = kWork / "run_d";
    const std::string cfg_d = write_file(kWork / "d.json", tiny_config_json(run_d.string(), 6));
    CliResult d = run_cli("search --config " + cfg_d + " --seed 5");
    REQUIRE(d.exit_code == 0);
    CHECK(read_file(run_a / "loss_history.csv") == read_file(run_d / "loss_history.csv"));
}

TEST_CASE("derive reproduces a forced one-hot genotype") {
    fs::remove_all(kWork);
    fs::create_directories(kWork);

    SupernetConfig cfg;
    cfg.encoder.layers = 2;
    cfg.encoder.nodes = 1;
    cfg.encoder.base_channels = 4;
    cfg.encoder.in_channels = 1;
    cfg.num_classes = 3;
    SupernetPair pair(cfg, 77);
    Rng rng(3);
    std::vector<std::vector<int>> forced;
    for (auto& cell : pair.net(0).alpha().cells) {
        std::vector<int> row;
        for (auto& edge : cell) {
            const int k = rng.uniform_int(0, 7);
            edge.mutable_value().fill(0.0);
            edge.mutable_value()[k] = 12.0;
            row.push_back(k);
        }
        forced.push_back(std::move(row));
    }
    const fs::path ckpt = kWork / "ckpt";
    save_checkpoint(ckpt.string(), pair, 1, {});

    const fs::path out = kWork / "derived";
    CliResult r = run_cli("derive --checkpoint " + ckpt.string() + " --out " + out.string());
    REQUIRE(r.exit_code == 0);

    Genotype g = load_genotype((out / "net1" / "genotype.json").string());
    const auto enc_ops = op_set(OpSetRole::encoder);
    for (std::size_t c = 0; c < forced.size(); ++c)
        for (std::size_t e = 0; e < forced[c].size(); ++e)
            CHECK(g.encoder[c].edges[e] == enc_ops[static_cast<std::size_t>(forced[c][e])]);
    CHECK(fs::exists(out / "net2" / "genotype.json"));
    CHECK(fs::exists(out / "net1" / "proportions.csv"));
}

TEST_CASE("eval on identical mask directories gives perfect scores") {
    fs::remove_all(kWork);
    PhantomSpec spec;
    spec.size = 32;
    Dataset data = generate_phantom_dataset(spec, 3, 9);
    save_dataset(data, (kWork / "data").string());

    const fs::path out = kWork / "eval_out";
    CliResult r = run_cli("eval --pred-masks " + (kWork / "data" / "masks").string() +
                          " --gt-masks " + (kWork / "data" / "masks").string() + " --out " +
                          out.string());
    REQUIRE(r.exit_code == 0);

    std::ifstream csv(out / "metrics.csv");
    std::string header, line;
    std::getline(csv, header);
    CHECK(header == "split,metric,mean,std");
    bool saw_dsc = false, saw_hd = false;
    while (std::getline(csv, line)) {
        if (line.rfind("pred,dsc,", 0) == 0) {
            CHECK(line.find("pred,dsc,1.000000000,0.000000000") == 0);
            saw_dsc = true;
        }
        if (line.rfind("pred,hd95,", 0) == 0) {
            CHECK(line.find("pred,hd95,0.000000000,0.000000000") == 0);
            saw_hd = true;
        }
    }
    CHECK(saw_dsc);
    CHECK(saw_hd);
}

TEST_CASE("report merges both networks' proportions with a network column") {
    fs::remove_all(kWork);
    const fs::path run = kWork / "run";
    const std::string cfg = write_file(kWork / "cfg.json", tiny_config_json(run.string()));
    REQUIRE(run_cli("search --config " + cfg).exit_code == 0);

    const fs::path out = kWork / "report";
    CliResult r = run_cli("report --run " + run.string() + " --out " + out.string());
    REQUIRE(r.exit_code == 0);

    std::ifstream csv(out / "proportions.csv");
    std::string header, line;
    std::getline(csv, header);
    CHECK(header == "network,role,op,fraction");
    std::map<std::string, double> sums;
    while (std::getline(csv, line)) {
        std::stringstream ss(line);
        std::string network, role, op, frac;
        std::getline(ss, network, ',');
        std::getline(ss, role, ',');
        std::getline(ss, op, ',');
        std::getline(ss, frac, ',');
        sums[network + "/" + role] += std::stod(frac);
    }
    REQUIRE(sums.size() == 4); // two networks x two roles
    for (const auto& [key, total] : sums) CHECK(std::abs(total - 1.0) < 1e-9);

    CHECK(fs::exists(out / "net1" / "genotype.json"));
    CHECK(fs::exists(out / "net2" / "genotype.json"));

    // eval through a checkpoint end-to-end
    save_dataset(generate_phantom_dataset(PhantomSpec{.size = 32}, 3, 11),
                 (kWork / "evaldata").string());
    CliResult ev = run_cli("eval --checkpoint " + (run / "checkpoints" / "epoch_002").string() +
                           " --data " + (kWork / "evaldata").string() + " --out " +
                           (kWork / "eval_ckpt").string());
    REQUIRE(ev.exit_code == 0);
    std::ifstream mc(kWork / "eval_ckpt" / "metrics.csv");
    std::getline(mc, header);
    int rows = 0;
    while (std::getline(mc, line)) ++rows;
    CHECK(rows == 6); // {net1,net2} x {dsc,iou,hd95}
    fs::remove_all(kWork);
}
