#include "pm2/experiment.hpp"

#include <glob.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pm2/text.hpp"

namespace fs = std::filesystem;

namespace pm2 {

namespace {

std::string join_rates(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + text::format_exact(v[i]);
    return s;
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::map<std::string, std::string> read_meta(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::map<std::string, std::string> meta;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return meta;
}

struct SeedData {
    std::vector<PairedTriple> source;
    std::vector<Sample> target;  // labeled
};

SeedData load_files(const ExperimentSpec& spec) {
    const DatasetFile src = load_dataset(*spec.source_data);
    const DatasetFile tgt = load_dataset(*spec.target_data);
    if (src.n_aus != spec.gen.n_aus || src.feature_dim != spec.gen.feature_dim || tgt.n_aus != src.n_aus ||
        tgt.feature_dim != src.feature_dim) {
        throw std::invalid_argument("dataset widths do not match n_aus/feature_dim of the config");
    }
    SeedData d{regroup_triples(src.samples), tgt.samples};
    for (const Sample& s : d.target) {
        if (!s.labeled) throw std::invalid_argument("target_data must be the labeled evaluation file");
    }
    return d;
}

}  // namespace

GeneratedFiles write_generated(const Dataset& data, const GenConfig& config, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    GeneratedFiles files{out_dir / "source.csv", out_dir / "target_train.csv", out_dir / "target_eval.csv",
                         out_dir / "dataset.meta"};
    save_dataset(flatten(data.source), data.n_aus, data.feature_dim, files.source);
    save_dataset(without_labels(data.target), data.n_aus, data.feature_dim, files.target_train);
    save_dataset(data.target, data.n_aus, data.feature_dim, files.target_eval);
    std::ostringstream meta;
    meta << "gen_seed=" << config.seed << "\n"
         << "base_rates=" << join_rates(data.base_rates) << "\n"
         << "n_source=" << data.source.size() << "\n"
         << "n_target=" << data.target.size() << "\n";
    write_text(files.meta, meta.str());
    return files;
}

std::string Cell::name() const {
    return std::string(mode_name(mode)) + "_a" + text::format_short(weights.alpha) + "_b" +
           text::format_short(weights.beta) + "_s" + std::to_string(seed);
}

std::vector<Cell> plan_cells(const ExperimentSpec& spec) {
    std::vector<Cell> cells;
    for (int i = 0; i < spec.repeats; ++i) {
        const auto offset = static_cast<std::uint64_t>(i);
        for (TrainMode m : spec.modes) {
            cells.push_back(Cell{m, spec.train.weights, spec.train.seed + offset, spec.gen.seed + offset});
        }
        for (double a : spec.alphas) {
            for (double b : spec.betas) {
                LossWeights w = spec.train.weights;
                w.alpha = a;
                w.beta = b;
                cells.push_back(Cell{TrainMode::FullPm2, w, spec.train.seed + offset, spec.gen.seed + offset});
            }
        }
    }
    return cells;
}

CellRun run_cell(const ExperimentSpec& spec, const Cell& cell, const std::vector<PairedTriple>& source,
                 const std::vector<Sample>& target_labeled) {
    TrainConfig tc = spec.train;
    tc.mode = cell.mode;
    tc.weights = cell.weights;
    tc.seed = cell.seed;
    const ModelParams init = init_params(spec.model_config(), cell.seed);
    CellRun run{train(init, source, without_labels(target_labeled), tc), {}};
    run.report = evaluate(run.trained.params, target_labeled);
    return run;
}

std::vector<CellResult> run_experiment(const ExperimentSpec& spec, const CellCallback& on_cell) {
    spec.validate();
    fs::create_directories(spec.output_dir);
    write_text(spec.output_dir / "spec.resolved", render_spec(spec));

    std::map<std::uint64_t, SeedData> data_by_seed;
    auto data_for = [&](const Cell& c) -> const SeedData& {
        const std::uint64_t key = spec.source_data ? 0 : c.gen_seed;
        auto it = data_by_seed.find(key);
        if (it != data_by_seed.end()) return it->second;
        SeedData d;
        if (spec.source_data) {
            d = load_files(spec);
        } else {
            GenConfig g = spec.gen;
            g.seed = c.gen_seed;
            Dataset ds = generate(g);
            d = SeedData{std::move(ds.source), std::move(ds.target)};
        }
        return data_by_seed.emplace(key, std::move(d)).first->second;
    };

    std::vector<CellResult> results;
    for (const Cell& cell : plan_cells(spec)) {
        const auto start = std::chrono::steady_clock::now();
        CellResult r{cell, spec.output_dir / cell.name(), false, {}, {}};
        fs::create_directories(r.dir);
        TrainConfig tc = spec.train;
        tc.mode = cell.mode;
        tc.weights = cell.weights;
        const ModePlan plan = plan_for(tc);
        std::ostringstream meta;
        meta << "mode=" << mode_name(cell.mode) << "\n"
             << "alpha=" << text::format_exact(cell.weights.alpha) << "\n"
             << "beta=" << text::format_exact(cell.weights.beta) << "\n"
             << "alpha_eff=" << text::format_exact(plan.weights.alpha) << "\n"
             << "beta_eff=" << text::format_exact(plan.weights.beta) << "\n"
             << "moment_order=" << cell.weights.moment_order << "\n"
             << "seed=" << cell.seed << "\n"
             << "gen_seed=" << (spec.source_data ? std::string("-") : std::to_string(cell.gen_seed)) << "\n"
             << "n_aus=" << spec.gen.n_aus << "\n";
        try {
            const SeedData& d = data_for(cell);
            CellRun run = run_cell(spec, cell, d.source, d.target);
            write_report(run.report, r.dir / "report.csv", r.dir / "report.full.csv");
            write_history_csv(run.trained.history, r.dir / "history.csv");
            save_checkpoint(run.trained.params, r.dir / "checkpoint.txt");
            r.report = std::move(run.report);
            r.ok = true;
            meta << "status=ok\n";
        } catch (const std::exception& e) {
            r.error = e.what();
            meta << "status=failed\nerror=" << r.error << "\n";
        }
        write_text(r.dir / "cell.meta", meta.str());
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (on_cell) on_cell(r, secs);
        results.push_back(std::move(r));
    }
    return results;
}

TableKind table_kind_from_name(const std::string& name) {
    if (name == "f1") return TableKind::F1;
    if (name == "eo") return TableKind::Eo;
    if (name == "spd") return TableKind::Spd;
    if (name == "ablation") return TableKind::Ablation;
    throw std::invalid_argument("unknown table kind '" + name + "' (expected f1, eo, spd or ablation)");
}

std::vector<fs::path> find_reports(const std::string& pattern) {
    std::vector<fs::path> out;
    if (fs::is_directory(pattern)) {
        for (const auto& entry : fs::recursive_directory_iterator(pattern)) {
            if (entry.is_regular_file() && entry.path().filename() == "report.csv") out.push_back(entry.path());
        }
    } else {
        glob_t g{};
        if (::glob(pattern.c_str(), 0, nullptr, &g) == 0) {
            for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
        }
        ::globfree(&g);
    }
    std::sort(out.begin(), out.end());
    return out;
}

LoadedReport load_report(const fs::path& report_csv) {
    const fs::path dir = report_csv.parent_path();
    LoadedReport r;
    r.path = report_csv;
    r.meta = read_meta(dir / "cell.meta");
    fs::path sidecar = report_csv;
    sidecar.replace_extension(".full.csv");
    r.report = read_report(sidecar);
    return r;
}

namespace {

std::string mean_std(const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    const double sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
    return text::format_fixed(100.0 * mean, 1) + "±" + text::format_fixed(100.0 * sd, 1);
}

std::string meta_value(const LoadedReport& r, const std::string& key) {
    const auto it = r.meta.find(key);
    if (it == r.meta.end()) throw std::runtime_error(r.path.string() + ": cell.meta lacks " + key);
    return it->second;
}

}  // namespace

Table build_table(const std::vector<LoadedReport>& reports, TableKind kind) {
    if (reports.empty()) throw std::invalid_argument("table: no reports");
    const std::size_t n = reports.front().report.per_au.size();
    for (const LoadedReport& r : reports) {
        if (r.report.per_au.size() != n || meta_value(r, "n_aus") != std::to_string(n)) {
            throw std::invalid_argument("table: mixed n_aus across reports (" + r.path.string() + ")");
        }
    }

    // Row key -> reports, in first-seen order after sorting by key.
    struct RowKey {
        int mode_rank = 0;
        double alpha = 0.0, beta = 0.0;
        std::string label;
        bool operator<(const RowKey& o) const {
            if (mode_rank != o.mode_rank) return mode_rank < o.mode_rank;
            if (alpha != o.alpha) return alpha < o.alpha;
            return beta < o.beta;
        }
    };
    std::map<RowKey, std::vector<const MetricsReport*>> rows;
    for (const LoadedReport& r : reports) {
        RowKey key;
        if (kind == TableKind::Ablation) {
            key.alpha = *text::parse_double(meta_value(r, "alpha_eff"));
            key.beta = *text::parse_double(meta_value(r, "beta_eff"));
            key.label = "a=" + text::format_short(key.alpha) + " b=" + text::format_short(key.beta);
        } else {
            const TrainMode m = mode_from_name(meta_value(r, "mode"));
            key.mode_rank = static_cast<int>(std::find(std::begin(kAllModes), std::end(kAllModes), m) -
                                             std::begin(kAllModes));
            key.alpha = *text::parse_double(meta_value(r, "alpha"));
            key.beta = *text::parse_double(meta_value(r, "beta"));
            key.label = std::string(mode_name(m));
        }
        rows[key].push_back(&r.report);
    }
    // Modes run with non-default weights get the weights in their label.
    if (kind != TableKind::Ablation) {
        std::map<int, int> per_mode;
        for (const auto& [key, _] : rows) ++per_mode[key.mode_rank];
        std::map<RowKey, std::vector<const MetricsReport*>> relabeled;
        for (auto& [key, v] : rows) {
            RowKey k = key;
            if (per_mode[key.mode_rank] > 1) {
                k.label += " (a=" + text::format_short(key.alpha) + " b=" + text::format_short(key.beta) + ")";
            }
            relabeled.emplace(k, std::move(v));
        }
        rows = std::move(relabeled);
    }

    Table t;
    t.columns.push_back(kind == TableKind::Ablation ? "weights" : "mode");
    for (std::size_t k = 0; k < n; ++k) t.columns.push_back("AU" + std::to_string(k + 1));
    t.columns.push_back("Avg");
    t.columns.push_back("n");

    auto au_value = [kind](const MetricsReport& m, std::size_t k) {
        switch (kind) {
            case TableKind::Eo: return m.per_au[k].eo.value;
            case TableKind::Spd: return m.per_au[k].spd.value;
            default: return m.per_au[k].f1.value;
        }
    };
    auto avg_value = [kind](const MetricsReport& m) {
        switch (kind) {
            case TableKind::Eo: return m.mean_eo;
            case TableKind::Spd: return m.mean_spd;
            default: return m.macro_f1;
        }
    };
    for (const auto& [key, group] : rows) {
        std::vector<std::string> row{key.label};
        for (std::size_t k = 0; k < n; ++k) {
            std::vector<double> xs;
            for (const MetricsReport* m : group) xs.push_back(au_value(*m, k));
            row.push_back(mean_std(xs));
        }
        std::vector<double> avg;
        for (const MetricsReport* m : group) avg.push_back(avg_value(*m));
        row.push_back(mean_std(avg));
        row.push_back(std::to_string(group.size()));
        t.rows.push_back(std::move(row));
    }
    return t;
}

namespace {

// Display width that counts the UTF-8 "±" as one column.
std::size_t display_width(const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s) {
        if ((c & 0xC0) != 0x80) ++w;
    }
    return w;
}

}  // namespace

std::string Table::to_text() const {
    std::vector<std::size_t> widths(columns.size());
    for (std::size_t c = 0; c < columns.size(); ++c) {
        widths[c] = display_width(columns[c]);
        for (const auto& r : rows) widths[c] = std::max(widths[c], display_width(r[c]));
    }
    auto emit = [&](const std::vector<std::string>& cells, std::ostringstream& o) {
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const std::string pad(widths[c] - display_width(cells[c]), ' ');
            o << (c ? "  " : "") << (c == 0 ? cells[c] + pad : pad + cells[c]);
        }
        o << '\n';
    };
    std::ostringstream o;
    emit(columns, o);
    std::size_t total = 0;
    for (std::size_t w : widths) total += w;
    o << std::string(total + 2 * (widths.size() - 1), '-') << '\n';
    for (const auto& r : rows) emit(r, o);
    return o.str();
}

std::string Table::to_csv() const {
    std::ostringstream o;
    auto emit = [&](const std::vector<std::string>& cells) {
        for (std::size_t c = 0; c < cells.size(); ++c) o << (c ? "," : "") << cells[c];
        o << '\n';
    };
    emit(columns);
    for (const auto& r : rows) emit(r);
    return o.str();
}

}  // namespace pm2
