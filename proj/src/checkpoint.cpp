#include "ssnas/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace ssnas {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kBlobMagic[4] = {'S', 'S', 'N', 'B'};

void write_blob(const fs::path& path, const std::vector<double>& values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out.write(kBlobMagic, 4);
    const std::uint32_t version = 1;
    const std::uint64_t count = values.size();
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!out) throw IoError("short write to '" + path.string() + "'");
}

std::vector<double> read_blob(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    char magic[4];
    std::uint32_t version = 0;
    std::uint64_t count = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!in || std::memcmp(magic, kBlobMagic, 4) != 0 || version != 1)
        throw IoError("bad blob header in '" + path.string() + "'");
    std::vector<double> values(count);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw IoError("truncated blob '" + path.string() + "'");
    return values;
}

std::vector<double> concat(std::vector<double> a, const std::vector<double>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

json history_to_json(const std::vector<EpochRecord>& history) {
    json arr = json::array();
    for (const EpochRecord& r : history) {
        json row;
        row["epoch"] = r.epoch;
        for (int i = 0; i < 2; ++i) {
            json net;
            net["sup"] = r.sup[i];
            net["uns"] = r.uns[i];
            net["ind"] = r.ind[i];
            net["con"] = r.con[i];
            net["total"] = r.total[i];
            row[i == 0 ? "net1" : "net2"] = net;
        }
        arr.push_back(row);
    }
    return arr;
}

std::vector<EpochRecord> history_from_json(const json& arr) {
    std::vector<EpochRecord> out;
    for (const json& row : arr) {
        EpochRecord r;
        r.epoch = row.at("epoch").get<int>();
        for (int i = 0; i < 2; ++i) {
            const json& net = row.at(i == 0 ? "net1" : "net2");
            r.sup[i] = net.at("sup").get<double>();
            r.uns[i] = net.at("uns").get<double>();
            r.ind[i] = net.at("ind").get<double>();
            r.con[i] = net.at("con").get<double>();
            r.total[i] = net.at("total").get<double>();
        }
        out.push_back(r);
    }
    return out;
}

} // namespace

void save_checkpoint(const std::string& dir, const SupernetPair& pair, int epoch,
                     const std::vector<EpochRecord>& history) {
    fs::create_directories(dir);
    const SupernetConfig& cfg = pair.config();

    json manifest;
    manifest["schema_version"] = kCheckpointSchemaVersion;
    manifest["epoch"] = epoch;
    manifest["pair_seed"] = pair.pair_seed();
    manifest["model"] = {{"layers", cfg.encoder.layers},
                         {"nodes", cfg.encoder.nodes},
                         {"base_channels", cfg.encoder.base_channels},
                         {"channel_fraction", cfg.encoder.channel_fraction},
                         {"in_channels", cfg.encoder.in_channels},
                         {"num_classes", cfg.num_classes},
                         {"include_pool_zero", cfg.include_pool_zero}};
    manifest["history"] = history_to_json(history);
    manifest["blobs"] = {{"weights", "weights.bin"},
                         {"fusion", "fusion.bin"},
                         {"arch", "arch.bin"},
                         {"gmat", "gmat.bin"}};

    std::ofstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw IoError("cannot write manifest under '" + dir + "'");
    mf << manifest.dump(2) << "\n";

    const ParamRegistry& r1 = pair.net(0).registry();
    const ParamRegistry& r2 = pair.net(1).registry();
    write_blob(fs::path(dir) / "weights.bin",
               concat(r1.snapshot(ParamGroup::weights), r2.snapshot(ParamGroup::weights)));
    write_blob(fs::path(dir) / "fusion.bin",
               concat(r1.snapshot(ParamGroup::fusion), r2.snapshot(ParamGroup::fusion)));
    write_blob(
        fs::path(dir) / "arch.bin",
        concat(concat(r1.snapshot(ParamGroup::alpha), r1.snapshot(ParamGroup::gamma)),
               concat(r2.snapshot(ParamGroup::alpha), r2.snapshot(ParamGroup::gamma))));
    write_blob(fs::path(dir) / "gmat.bin", pair.snapshot_g());
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw IoError("cannot read manifest under '" + dir + "'");
    json manifest = json::parse(mf);
    if (manifest.at("schema_version").get<int>() != kCheckpointSchemaVersion)
        throw IoError("unsupported checkpoint schema version");

    const json& m = manifest.at("model");
    SupernetConfig cfg;
    cfg.encoder.layers = m.at("layers").get<int>();
    cfg.encoder.nodes = m.at("nodes").get<int>();
    cfg.encoder.base_channels = m.at("base_channels").get<int>();
    cfg.encoder.channel_fraction = m.at("channel_fraction").get<double>();
    cfg.encoder.in_channels = m.at("in_channels").get<int>();
    cfg.num_classes = m.at("num_classes").get<int>();
    cfg.include_pool_zero = m.at("include_pool_zero").get<bool>();

    LoadedCheckpoint loaded;
    loaded.epoch = manifest.at("epoch").get<int>();
    loaded.history = history_from_json(manifest.at("history"));
    loaded.pair = std::make_unique<SupernetPair>(cfg, manifest.at("pair_seed").get<std::uint64_t>());

    auto split_restore = [&](const std::string& blob, ParamGroup g) {
        std::vector<double> all = read_blob(fs::path(dir) / blob);
        ParamRegistry& r1 = loaded.pair->net(0).registry();
        ParamRegistry& r2 = loaded.pair->net(1).registry();
        const std::size_t n1 = static_cast<std::size_t>(r1.group_numel(g));
        if (all.size() != n1 + static_cast<std::size_t>(r2.group_numel(g)))
            throw IoError("blob '" + blob + "' does not match the model");
        r1.restore(g, std::vector<double>(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n1)));
        r2.restore(g, std::vector<double>(all.begin() + static_cast<std::ptrdiff_t>(n1), all.end()));
    };
    split_restore("weights.bin", ParamGroup::weights);
    split_restore("fusion.bin", ParamGroup::fusion);

    {
        std::vector<double> all = read_blob(fs::path(dir) / "arch.bin");
        std::size_t off = 0;
        for (int i = 0; i < 2; ++i) {
            ParamRegistry& reg = loaded.pair->net(i).registry();
            for (ParamGroup g : {ParamGroup::alpha, ParamGroup::gamma}) {
                const std::size_t n = static_cast<std::size_t>(reg.group_numel(g));
                if (off + n > all.size()) throw IoError("arch blob does not match the model");
                reg.restore(g, std::vector<double>(all.begin() + static_cast<std::ptrdiff_t>(off),
                                                   all.begin() + static_cast<std::ptrdiff_t>(off + n)));
                off += n;
            }
        }
        if (off != all.size()) throw IoError("arch blob does not match the model");
    }
    loaded.pair->restore_g(read_blob(fs::path(dir) / "gmat.bin"));
    return loaded;
}

} // namespace ssnas
