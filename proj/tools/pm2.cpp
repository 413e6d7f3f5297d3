// Command-line front end: generate, run, evaluate, table.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pm2/experiment.hpp"
#include "pm2/text.hpp"

namespace fs = std::filesystem;

namespace {

constexpr const char* kOutputEnv = "PM2_OUTPUT_DIR";

std::vector<pm2::TrainMode> parse_modes(const std::string& list) {
    std::vector<pm2::TrainMode> modes;
    for (auto m : pm2::text::split(list, ',')) modes.push_back(pm2::mode_from_name(pm2::text::trim(m)));
    return modes;
}

pm2::ExperimentSpec spec_from(const std::string& config_path) {
    return config_path.empty() ? pm2::parse_spec("") : pm2::load_spec(config_path);
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << content;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Paired moment matching domain adaptation lab"};
    app.require_subcommand(1);

    std::string config, out, modes, kind = "f1", reports, checkpoint, data;
    int seeds = 0;

    auto* gen = app.add_subcommand("generate", "Generate a paired benchmark dataset");
    gen->add_option("--config", config, "key=value config (defaults when omitted)");
    gen->add_option("--out", out, "output directory")->required();

    auto* run = app.add_subcommand("run", "Train and evaluate every (mode, seed) cell");
    run->add_option("--config", config, "key=value experiment spec")->required();
    run->add_option("--out", out, "output directory (overrides " + std::string(kOutputEnv) + " and the spec)");
    run->add_option("--seeds", seeds, "number of seeds (overrides repeats)");
    run->add_option("--modes", modes, "comma-separated modes to run");

    auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on a labeled dataset");
    ev->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    ev->add_option("--data", data, "labeled dataset file")->required();
    ev->add_option("--out", out, "report CSV path (sidecar written next to it)")->required();

    auto* tab = app.add_subcommand("table", "Aggregate reports into a table");
    tab->add_option("--reports", reports, "glob or directory of report.csv files")->required();
    tab->add_option("--kind", kind, "f1, eo, spd or ablation");
    tab->add_option("--out", out, "write <out>.txt and <out>.csv");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            const pm2::ExperimentSpec spec = spec_from(config);
            const pm2::Dataset d = pm2::generate(spec.gen);
            const auto files = pm2::write_generated(d, spec.gen, out);
            std::cout << "wrote " << files.source << ", " << files.target_train << ", " << files.target_eval << "\n";
            return 0;
        }
        if (*run) {
            pm2::ExperimentSpec spec = pm2::load_spec(config);
            if (const char* env = std::getenv(kOutputEnv); env && *env) spec.output_dir = env;
            if (!out.empty()) spec.output_dir = out;
            if (seeds > 0) spec.repeats = seeds;
            if (!modes.empty()) spec.modes = parse_modes(modes);
            std::size_t failed = 0;
            pm2::run_experiment(spec, [&](const pm2::CellResult& r, double secs) {
                if (r.ok) {
                    std::cout << r.cell.name() << "  macro_f1=" << pm2::text::format_fixed(100 * r.report.macro_f1, 1)
                              << "  eo=" << pm2::text::format_fixed(100 * r.report.mean_eo, 1)
                              << "  spd=" << pm2::text::format_fixed(100 * r.report.mean_spd, 1) << "  ("
                              << pm2::text::format_fixed(secs, 1) << "s)\n";
                } else {
                    ++failed;
                    std::cout << r.cell.name() << "  FAILED: " << r.error << "\n";
                }
                std::cout.flush();
            });
            return failed == 0 ? 0 : 1;
        }
        if (*ev) {
            const pm2::ModelParams params = pm2::load_checkpoint(checkpoint);
            const pm2::DatasetFile file = pm2::load_dataset(data);
            const pm2::MetricsReport report = pm2::evaluate(params, file.samples);
            fs::path sidecar = out;
            sidecar.replace_extension(".full.csv");
            pm2::write_report(report, out, sidecar);
            std::cout << "macro_f1=" << pm2::text::format_fixed(100 * report.macro_f1, 1)
                      << " eo=" << pm2::text::format_fixed(100 * report.mean_eo, 1)
                      << " spd=" << pm2::text::format_fixed(100 * report.mean_spd, 1) << "\n";
            return 0;
        }
        if (*tab) {
            std::vector<pm2::LoadedReport> loaded;
            for (const auto& p : pm2::find_reports(reports)) loaded.push_back(pm2::load_report(p));
            const pm2::Table t = pm2::build_table(loaded, pm2::table_kind_from_name(kind));
            std::cout << t.to_text();
            if (!out.empty()) {
                write_file(out + ".txt", t.to_text());
                write_file(out + ".csv", t.to_csv());
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
