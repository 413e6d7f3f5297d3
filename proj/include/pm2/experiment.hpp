#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pm2/config.hpp"
#include "pm2/eval.hpp"

namespace pm2 {

struct GeneratedFiles {
    std::filesystem::path source;        // triples, labeled
    std::filesystem::path target_train;  // target features, labels hidden
    std::filesystem::path target_eval;   // target with labels, for evaluation only
    std::filesystem::path meta;
};

/// Writes the three dataset files plus a metadata file with the resolved
/// base rates.
GeneratedFiles write_generated(const Dataset& data, const GenConfig& config, const std::filesystem::path& out_dir);

/// One (mode, weights, seed) training run.
struct Cell {
    TrainMode mode = TrainMode::FullPm2;
    LossWeights weights;
    std::uint64_t seed = 0;       // training and init seed
    std::uint64_t gen_seed = 0;   // data seed (unused with pre-generated data)
    std::string name() const;
};

struct CellResult {
    Cell cell;
    std::filesystem::path dir;
    bool ok = false;
    std::string error;
    MetricsReport report;
};

/// Seeds are spec.train.seed + i and spec.gen.seed + i for i in [0, repeats).
std::vector<Cell> plan_cells(const ExperimentSpec& spec);

using CellCallback = std::function<void(const CellResult&, double seconds)>;

/// Trains and evaluates every cell, writing per-cell report, sidecar, meta,
/// history and checkpoint under spec.output_dir. A failing cell is recorded
/// and the remaining cells still run.
std::vector<CellResult> run_experiment(const ExperimentSpec& spec, const CellCallback& on_cell = {});

/// Runs a single cell on already loaded data and returns the trained
/// parameters alongside its report.
struct CellRun {
    TrainResult trained;
    MetricsReport report;
};
CellRun run_cell(const ExperimentSpec& spec, const Cell& cell, const std::vector<PairedTriple>& source,
                 const std::vector<Sample>& target_labeled);

enum class TableKind { F1, Eo, Spd, Ablation };
TableKind table_kind_from_name(const std::string& name);

struct Table {
    std::vector<std::string> columns;  // first column is the row label
    std::vector<std::vector<std::string>> rows;
    std::string to_text() const;
    std::string to_csv() const;
};

/// Report files plus the cell metadata stored next to them.
struct LoadedReport {
    std::filesystem::path path;
    std::map<std::string, std::string> meta;
    MetricsReport report;
};

/// Expands a glob (or a directory, meaning every report below it).
std::vector<std::filesystem::path> find_reports(const std::string& pattern);
LoadedReport load_report(const std::filesystem::path& report_csv);

/// Aggregates mean and sample std across seeds, in percent with one decimal.
/// Rejects reports that disagree on n_aus.
Table build_table(const std::vector<LoadedReport>& reports, TableKind kind);

}  // namespace pm2
