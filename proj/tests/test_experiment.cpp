#include <doctest.h>

#include <fstream>
#include <sstream>

#include "pm2/experiment.hpp"
#include "pm2/text.hpp"
#include "support.hpp"

using namespace pm2;
namespace fs = std::filesystem;

namespace {

ExperimentSpec tiny_spec(const fs::path& out) {
    ExperimentSpec s = parse_spec(
        "n_aus=3\nfeature_dim=6\nn_source=48\nn_target=40\n"
        "hidden_dims=8\nembed_dim=4\nclassifier_hidden=4\n"
        "epochs=2\nbatch_size=16\nrepeats=2\nseed=3\ngen_seed=5\n");
    s.output_dir = out;
    return s;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<LoadedReport> load_all(const fs::path& dir) {
    std::vector<LoadedReport> out;
    for (const auto& p : find_reports(dir.string())) out.push_back(load_report(p));
    return out;
}

}  // namespace

TEST_CASE("spec parsing") {
    const ExperimentSpec s = parse_spec("# comment\nalpha=0.25\nmodes=mcd_only,full_pm2\nrepeats=3\n");
    CHECK(s.train.weights.alpha == 0.25);
    CHECK(s.repeats == 3);
    REQUIRE(s.modes.size() == 2);
    CHECK(s.modes[1] == TrainMode::FullPm2);
    CHECK(parse_spec(render_spec(s)).train.weights.alpha == 0.25);

    CHECK_THROWS_WITH_AS(parse_spec("colour=blue\n"), doctest::Contains("colour"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_spec("epochs=\nalpha=x\n"), doctest::Contains(":1: epochs"), std::invalid_argument);
    CHECK_THROWS_AS(parse_spec("modes=nonsense\n"), std::invalid_argument);
}

TEST_CASE("cell plan") {
    ExperimentSpec s = tiny_spec("unused");
    s.modes = {TrainMode::DirectTransfer, TrainMode::FullPm2};
    s.alphas = {0.0, 0.3};
    s.betas = {0.5};
    const std::vector<Cell> cells = plan_cells(s);
    REQUIRE(cells.size() == 8);
    CHECK(cells[0].seed == 3);
    CHECK(cells[0].gen_seed == 5);
    CHECK(cells[4].seed == 4);
    CHECK(cells[4].gen_seed == 6);
    CHECK(cells[2].weights.alpha == 0.0);
    CHECK(cells[2].mode == TrainMode::FullPm2);
    CHECK(cells[0].name() == "direct_transfer_a0.3_b0.5_s3");
}

TEST_CASE("an experiment writes reports and reruns byte-identically") {
    const fs::path root = pm2::testing::scratch_dir("experiment");
    ExperimentSpec s = tiny_spec(root / "a");
    s.modes = {TrainMode::DirectTransfer, TrainMode::FullPm2};
    int called = 0;
    const std::vector<CellResult> first = run_experiment(s, [&](const CellResult&, double) { ++called; });
    REQUIRE(first.size() == 4);
    CHECK(called == 4);
    for (const CellResult& r : first) {
        CHECK(r.ok);
        for (const char* f : {"report.csv", "report.full.csv", "cell.meta", "history.csv", "checkpoint.txt"}) {
            CHECK(fs::exists(r.dir / f));
        }
    }

    s.output_dir = root / "b";
    run_experiment(s);
    for (const CellResult& r : first) {
        const fs::path twin = root / "b" / r.dir.filename();
        for (const char* f : {"report.csv", "report.full.csv", "history.csv", "checkpoint.txt"}) {
            CHECK(slurp(r.dir / f) == slurp(twin / f));
        }
    }

    const Table t = build_table(load_all(root / "a"), TableKind::F1);
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][0] == "direct_transfer");
    CHECK(t.rows[1][0] == "full_pm2");
    CHECK(t.columns == std::vector<std::string>{"mode", "AU1", "AU2", "AU3", "Avg", "n"});
    CHECK(t.rows[0].back() == "2");
    CHECK(t.to_csv().rfind("mode,AU1,AU2,AU3,Avg,n\n", 0) == 0);
}

TEST_CASE("a single report gives zero spread") {
    const fs::path root = pm2::testing::scratch_dir("single");
    ExperimentSpec s = tiny_spec(root);
    s.repeats = 1;
    s.modes = {TrainMode::McdOnly};
    const std::vector<CellResult> r = run_experiment(s);
    REQUIRE(r.size() == 1);
    const Table t = build_table(load_all(root), TableKind::Spd);
    REQUIRE(t.rows.size() == 1);
    for (std::size_t c = 1; c + 1 < t.columns.size(); ++c) CHECK(t.rows[0][c].ends_with("±0.0"));
    const std::string expect = text::format_fixed(100.0 * r[0].report.mean_spd, 1) + "±0.0";
    CHECK(t.rows[0][t.columns.size() - 2] == expect);
}

TEST_CASE("ablation grid groups by effective weights") {
    const fs::path root = pm2::testing::scratch_dir("ablation");
    ExperimentSpec s = tiny_spec(root);
    s.repeats = 1;
    s.train.epochs = 1;
    s.modes = {};
    s.alphas = {0.0, 0.3, 1.0};
    s.betas = {0.0, 0.5, 1.0};
    REQUIRE(run_experiment(s).size() == 9);
    const Table t = build_table(load_all(root), TableKind::Ablation);
    REQUIRE(t.rows.size() == 9);
    CHECK(t.rows.front()[0] == "a=0 b=0");
    CHECK(t.rows.back()[0] == "a=1 b=1");
    CHECK(t.columns.front() == "weights");
}

TEST_CASE("tables reject mixed n_aus") {
    const fs::path root = pm2::testing::scratch_dir("mixed");
    ExperimentSpec s = tiny_spec(root / "three");
    s.repeats = 1;
    s.train.epochs = 1;
    s.modes = {TrainMode::DirectTransfer};
    run_experiment(s);
    s.gen.n_aus = 2;
    s.output_dir = root / "two";
    run_experiment(s);
    CHECK_THROWS_WITH_AS(build_table(load_all(root), TableKind::F1), doctest::Contains("n_aus"),
                         std::invalid_argument);
    CHECK_THROWS_AS(build_table({}, TableKind::F1), std::invalid_argument);
    CHECK_THROWS_AS(table_kind_from_name("median"), std::invalid_argument);
}

TEST_CASE("pre-generated data files") {
    const fs::path root = pm2::testing::scratch_dir("files");
    ExperimentSpec s = tiny_spec(root / "run");
    const Dataset d = generate(s.gen);
    const GeneratedFiles f = write_generated(d, s.gen, root / "data");
    CHECK(slurp(f.meta).rfind("gen_seed=5\nbase_rates=", 0) == 0);

    s.repeats = 1;
    s.modes = {TrainMode::DirectTransfer};
    s.source_data = f.source;
    s.target_data = f.target_eval;
    const std::vector<CellResult> r = run_experiment(s);
    REQUIRE(r.size() == 1);
    CHECK(r[0].ok);
    CHECK(slurp(r[0].dir / "cell.meta").find("gen_seed=-\n") != std::string::npos);

    // Unlabeled target data cannot be evaluated; the cell fails and is recorded.
    s.target_data = f.target_train;
    s.output_dir = root / "bad";
    const std::vector<CellResult> bad = run_experiment(s);
    REQUIRE(bad.size() == 1);
    CHECK_FALSE(bad[0].ok);
    CHECK(slurp(bad[0].dir / "cell.meta").find("status=failed") != std::string::npos);
}
