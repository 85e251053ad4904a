#include "ssnas/report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace ssnas {

using nlohmann::json;

namespace {

std::vector<double> softmax_values(const Tensor& logits) {
    std::vector<double> out(static_cast<std::size_t>(logits.numel()));
    double mx = logits[0];
    for (std::int64_t i = 1; i < logits.numel(); ++i) mx = std::max(mx, logits[i]);
    double z = 0.0;
    for (std::int64_t i = 0; i < logits.numel(); ++i) {
        out[static_cast<std::size_t>(i)] = std::exp(logits[i] - mx);
        z += out[static_cast<std::size_t>(i)];
    }
    for (double& v : out) v /= z;
    return out;
}

int argmax_lowest_tie(const std::vector<double>& v) {
    int best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    return best;
}

} // namespace

Genotype derive(const SupernetModel& model) {
    Genotype g;
    g.encoder_ops = op_set(OpSetRole::encoder);
    g.decoder_ops = model.decoder().op_kinds();

    const auto& infos = model.encoder().cell_infos();
    const AlphaParams& alpha = model.alpha();
    for (std::size_t c = 0; c < alpha.cells.size(); ++c) {
        if (!alpha.cells[c].front().value().all_finite())
            throw ContractError("derive: non-finite alpha");
        Genotype::EncoderCellChoice cell;
        cell.cell = static_cast<int>(c);
        cell.layer = infos[c].layer;
        cell.resolution = infos[c].resolution;
        for (const auto& edge : alpha.cells[c]) {
            const int k = argmax_lowest_tie(softmax_values(edge.value()));
            cell.edges.push_back(g.encoder_ops[static_cast<std::size_t>(k)]);
        }
        g.encoder.push_back(std::move(cell));
    }

    const GammaParams& gamma = model.gamma();
    for (std::size_t c = 0; c < gamma.cells.size(); ++c) {
        Genotype::DecoderCellChoice cell;
        cell.cell = static_cast<int>(c);
        cell.resolution = DecoderSupernet::kCellOrder[c];
        cell.op = g.decoder_ops[static_cast<std::size_t>(
            argmax_lowest_tie(softmax_values(gamma.cells[c].value())))];
        g.decoder.push_back(cell);
    }
    return g;
}

ArchPlan genotype_to_plan(const Genotype& genotype, const SupernetModel& model) {
    auto index_of = [](const std::vector<OpKind>& kinds, OpKind k) {
        for (std::size_t i = 0; i < kinds.size(); ++i)
            if (kinds[i] == k) return static_cast<int>(i);
        throw ContractError("genotype_to_plan: op not in the model's op set");
    };
    ArchPlan plan;
    for (const auto& cell : genotype.encoder) {
        std::vector<int> edges;
        for (OpKind k : cell.edges) edges.push_back(index_of(op_set(OpSetRole::encoder), k));
        plan.encoder.choices.push_back(std::move(edges));
    }
    for (const auto& cell : genotype.decoder)
        plan.decoder.push_back(index_of(model.decoder().op_kinds(), cell.op));
    return plan;
}

std::vector<ProportionRow> proportions(const SupernetModel& model) {
    std::vector<ProportionRow> rows;
    const AlphaParams& alpha = model.alpha();
    std::vector<double> enc_mass(8, 0.0);
    std::int64_t n_edges = 0;
    for (const auto& cell : alpha.cells)
        for (const auto& edge : cell) {
            const auto w = softmax_values(edge.value());
            for (std::size_t k = 0; k < w.size(); ++k) enc_mass[k] += w[k];
            ++n_edges;
        }
    const auto enc_kinds = op_set(OpSetRole::encoder);
    for (std::size_t k = 0; k < enc_kinds.size(); ++k)
        rows.push_back({"encoder", op_name(enc_kinds[k]),
                        enc_mass[k] / static_cast<double>(n_edges)});

    const GammaParams& gamma = model.gamma();
    const auto& dec_kinds = model.decoder().op_kinds();
    std::vector<double> dec_mass(dec_kinds.size(), 0.0);
    for (const auto& cell : gamma.cells) {
        const auto w = softmax_values(cell.value());
        for (std::size_t k = 0; k < w.size(); ++k) dec_mass[k] += w[k];
    }
    for (std::size_t k = 0; k < dec_kinds.size(); ++k)
        rows.push_back({"decoder", op_name(dec_kinds[k]),
                        dec_mass[k] / static_cast<double>(gamma.cells.size())});
    return rows;
}

namespace {

json genotype_to_json(const Genotype& g) {
    json j;
    j["schema_version"] = kGenotypeSchemaVersion;
    j["encoder_ops"] = json::array();
    for (OpKind k : g.encoder_ops) j["encoder_ops"].push_back(op_name(k));
    j["decoder_ops"] = json::array();
    for (OpKind k : g.decoder_ops) j["decoder_ops"].push_back(op_name(k));
    j["encoder"] = json::array();
    for (const auto& cell : g.encoder) {
        json c;
        c["cell"] = cell.cell;
        c["layer"] = cell.layer;
        c["resolution"] = cell.resolution;
        c["edges"] = json::array();
        for (OpKind k : cell.edges) c["edges"].push_back(op_name(k));
        j["encoder"].push_back(c);
    }
    j["decoder"] = json::array();
    for (const auto& cell : g.decoder) {
        json c;
        c["cell"] = cell.cell;
        c["resolution"] = cell.resolution;
        c["op"] = op_name(cell.op);
        j["decoder"].push_back(c);
    }
    return j;
}

} // namespace

void export_report(const Genotype& genotype, const std::vector<ProportionRow>& props,
                   const std::vector<MetricsRow>& metrics, const std::string& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(std::filesystem::path(dir) / "genotype.json");
        if (!out) throw IoError("export_report: cannot write under '" + dir + "'");
        out << genotype_to_json(genotype).dump(2) << "\n";
    }
    write_proportions_csv((std::filesystem::path(dir) / "proportions.csv").string(), props);
    write_metrics_csv((std::filesystem::path(dir) / "metrics.csv").string(), metrics);
}

Genotype load_genotype(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_genotype: cannot read '" + path + "'");
    json j = json::parse(in);
    if (j.at("schema_version").get<int>() != kGenotypeSchemaVersion)
        throw IoError("load_genotype: unsupported schema version");
    Genotype g;
    for (const auto& n : j.at("encoder_ops")) g.encoder_ops.push_back(op_from_name(n.get<std::string>()));
    for (const auto& n : j.at("decoder_ops")) g.decoder_ops.push_back(op_from_name(n.get<std::string>()));
    for (const auto& c : j.at("encoder")) {
        Genotype::EncoderCellChoice cell;
        cell.cell = c.at("cell").get<int>();
        cell.layer = c.at("layer").get<int>();
        cell.resolution = c.at("resolution").get<int>();
        for (const auto& e : c.at("edges")) cell.edges.push_back(op_from_name(e.get<std::string>()));
        g.encoder.push_back(std::move(cell));
    }
    for (const auto& c : j.at("decoder")) {
        Genotype::DecoderCellChoice cell;
        cell.cell = c.at("cell").get<int>();
        cell.resolution = c.at("resolution").get<int>();
        cell.op = op_from_name(c.at("op").get<std::string>());
        g.decoder.push_back(cell);
    }
    return g;
}

void write_proportions_csv(const std::string& path, const std::vector<ProportionRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    char buf[128];
    out << "role,op,fraction\n";
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.12f", r.fraction);
        out << r.role << "," << r.op << "," << buf << "\n";
    }
    if (!out) throw IoError("short write to '" + path + "'");
}

void write_merged_proportions_csv(
    const std::string& path,
    const std::vector<std::pair<std::string, std::vector<ProportionRow>>>& by_network) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    char buf[128];
    out << "network,role,op,fraction\n";
    for (const auto& [network, rows] : by_network)
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof(buf), "%.12f", r.fraction);
            out << network << "," << r.role << "," << r.op << "," << buf << "\n";
        }
    if (!out) throw IoError("short write to '" + path + "'");
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "split,metric,mean,std\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%.9f,%.9f", r.split.c_str(), r.metric.c_str(),
                      r.mean, r.std_dev);
        out << buf << "\n";
    }
    if (!out) throw IoError("short write to '" + path + "'");
}

} // namespace ssnas
