#pragma once

#include <map>

#include "ssnas/supernet.hpp"

namespace ssnas {

inline constexpr int kGenotypeSchemaVersion = 1;

/// Discretized architecture: one chosen op per encoder (cell, edge) and per
/// decoder cell, plus the op orderings the indices refer to. Fusion (beta)
/// parameters are weights and are never discretized.
struct Genotype {
    struct EncoderCellChoice {
        int cell = 0;
        int layer = 0;
        int resolution = 0;
        std::vector<OpKind> edges;
    };
    struct DecoderCellChoice {
        int cell = 0;
        int resolution = 0;
        OpKind op = OpKind::skip;
    };

    std::vector<OpKind> encoder_ops; // ordering reference for edge indices
    std::vector<OpKind> decoder_ops;
    std::vector<EncoderCellChoice> encoder;
    std::vector<DecoderCellChoice> decoder;
};

/// Per-edge/per-cell argmax of the softmaxed parameters; ties break to the
/// lowest op index.
Genotype derive(const SupernetModel& model);

/// Op indices for SupernetModel::forward_discrete.
ArchPlan genotype_to_plan(const Genotype& genotype, const SupernetModel& model);

struct ProportionRow {
    std::string role; // "encoder" or "decoder"
    std::string op;
    double fraction = 0.0;
};

/// Mean softmax mass of every candidate op over the encoder's (cell, edge)
/// grid and over the decoder cells; fractions sum to 1 per role.
std::vector<ProportionRow> proportions(const SupernetModel& model);

struct MetricsRow {
    std::string split;
    std::string metric;
    double mean = 0.0;
    double std_dev = 0.0;
};

/// Writes genotype.json, proportions.csv (role,op,fraction) and metrics.csv
/// (split,metric,mean,std) with deterministic ordering.
void export_report(const Genotype& genotype, const std::vector<ProportionRow>& props,
                   const std::vector<MetricsRow>& metrics, const std::string& dir);

Genotype load_genotype(const std::string& path);
void write_proportions_csv(const std::string& path, const std::vector<ProportionRow>& rows);
/// Same rows prefixed by a network column, both networks in one file.
void write_merged_proportions_csv(
    const std::string& path,
    const std::vector<std::pair<std::string, std::vector<ProportionRow>>>& by_network);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

} // namespace ssnas
