#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "pm2/datagen.hpp"
#include "pm2/eval.hpp"
#include "pm2/trainer.hpp"
#include "support.hpp"

using namespace pm2;

namespace {

GenConfig small(std::uint64_t seed = 0) {
    GenConfig c;
    c.n_source = 200;
    c.n_target = 150;
    c.seed = seed;
    return c;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

std::string load_error(const std::filesystem::path& p) {
    try {
        load_dataset(p);
    } catch (const std::runtime_error& e) {
        return e.what();
    }
    return {};
}

// Per-AU logistic regression on raw features, full-batch gradient descent.
struct Probe {
    std::vector<std::vector<double>> w;
    std::vector<double> b;
};

Probe fit_probe(const std::vector<Sample>& rows, std::size_t n_aus, std::size_t d) {
    Probe p{std::vector<std::vector<double>>(n_aus, std::vector<double>(d, 0.0)), std::vector<double>(n_aus, 0.0)};
    const double lr = 0.5;
    for (int it = 0; it < 300; ++it) {
        for (std::size_t k = 0; k < n_aus; ++k) {
            std::vector<double> gw(d, 0.0);
            double gb = 0.0;
            for (const Sample& s : rows) {
                double z = p.b[k];
                for (std::size_t j = 0; j < d; ++j) z += p.w[k][j] * s.features[j];
                const double err = 1.0 / (1.0 + std::exp(-z)) - s.labels[k];
                for (std::size_t j = 0; j < d; ++j) gw[j] += err * s.features[j];
                gb += err;
            }
            const double inv = 1.0 / static_cast<double>(rows.size());
            for (std::size_t j = 0; j < d; ++j) p.w[k][j] -= lr * gw[j] * inv;
            p.b[k] -= lr * gb * inv;
        }
    }
    return p;
}

double probe_macro_f1(const Probe& p, const std::vector<Sample>& rows, std::size_t n_aus) {
    std::vector<std::uint8_t> pred;
    for (const Sample& s : rows) {
        for (std::size_t k = 0; k < n_aus; ++k) {
            double z = p.b[k];
            for (std::size_t j = 0; j < s.features.size(); ++j) z += p.w[k][j] * s.features[j];
            pred.push_back(z > 0.0 ? 1 : 0);
        }
    }
    return evaluate_predictions(rows, pred).macro_f1;
}

}  // namespace

TEST_CASE("triples are balanced and share labels") {
    const Dataset d = generate(small(3));
    REQUIRE(d.source.size() == 200);
    REQUIRE(d.target.size() == 150);
    std::size_t g0 = 0, g1 = 0;
    for (const PairedTriple& t : d.source) {
        CHECK(t.real.labels == t.syn_f.labels);
        CHECK(t.real.labels == t.syn_m.labels);
        CHECK(t.syn_f.group == 0);
        CHECK(t.syn_m.group == 1);
        CHECK(t.real.pair_id == t.syn_f.pair_id);
        CHECK(t.real.pair_id == t.syn_m.pair_id);
        CHECK(t.real.domain == Domain::SourceReal);
        CHECK(t.syn_f.domain == Domain::SynGroup0);
        CHECK(t.syn_m.domain == Domain::SynGroup1);
        CHECK(t.real.features.size() == 20);
        g0 += t.syn_f.group == 0;
        g1 += t.syn_m.group == 1;
    }
    CHECK(g0 == g1);
    for (const Sample& s : d.target) {
        CHECK(s.domain == Domain::Target);
        CHECK(s.pair_id == -1);
        CHECK(s.labeled);
    }
}

TEST_CASE("source group imbalance follows the config") {
    GenConfig c = small(4);
    c.n_source = 4000;
    const Dataset d = generate(c);
    double ones = 0;
    for (const PairedTriple& t : d.source) ones += t.real.group;
    CHECK(ones / 4000.0 == doctest::Approx(0.25).epsilon(0.1));
}

TEST_CASE("empirical AU rates match the base rates") {
    GenConfig c = small(5);
    c.n_source = 5000;
    const Dataset d = generate(c);
    REQUIRE(d.base_rates.size() == 5);
    for (std::size_t k = 0; k < 5; ++k) {
        CHECK(d.base_rates[k] >= 0.1);
        CHECK(d.base_rates[k] <= 0.5);
        double hits = 0;
        for (const PairedTriple& t : d.source) hits += t.real.labels[k];
        CHECK(std::abs(hits / 5000.0 - d.base_rates[k]) <= 0.03);
    }
    c.base_rates = {0.2, 0.2, 0.3, 0.4, 0.5};
    CHECK(resolve_base_rates(c) == c.base_rates);
}

TEST_CASE("generation is deterministic in the seed") {
    const Dataset a = generate(small(9)), b = generate(small(9)), c = generate(small(10));
    CHECK(flatten(a.source) == flatten(b.source));
    CHECK(a.target == b.target);
    CHECK_FALSE(flatten(a.source) == flatten(c.source));
}

TEST_CASE("zero shift makes target and source renders coincide") {
    GenConfig c = small(2);
    c.domain_shift_scale = 0.0;
    c.noise_std = 0.0;
    c.group_shift_scale = 0.0;
    c.base_rates = {0.3, 0.3, 0.3, 0.3, 0.3};
    const Dataset d = generate(c);
    // Same labels give the same features in every domain.
    const PairedTriple& t = d.source.front();
    CHECK(t.real.features == t.syn_f.features);
    CHECK(t.real.features == t.syn_m.features);
    for (const Sample& s : d.target) {
        for (const PairedTriple& src : d.source) {
            if (src.real.labels == s.labels) {
                CHECK(src.real.features == s.features);
                break;
            }
        }
    }
}

TEST_CASE("config validation") {
    GenConfig c = small();
    c.base_rates = {0.2, 1.5, 0.2, 0.2, 0.2};
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("base_rates"), std::invalid_argument);
    c.base_rates = {0.0, 1.0, 0.0, 0.0, 1.0};
    CHECK_THROWS_AS(generate(c), std::invalid_argument);
    c.base_rates = {0.2, 0.2};
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = small();
    c.n_source = 0;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("n_source"), std::invalid_argument);
    c = small();
    c.noise_std = -1.0;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("noise_std"), std::invalid_argument);
    c = small();
    c.source_group_imbalance = 1.2;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("dataset files") {
    const auto dir = pm2::testing::scratch_dir("datagen");
    const Dataset d = generate(small(1));
    std::vector<Sample> rows = flatten(d.source);
    rows.insert(rows.end(), d.target.begin(), d.target.end());

    SUBCASE("round trip is bit-identical") {
        save_dataset(rows, 5, 20, dir / "all.csv");
        const DatasetFile f = load_dataset(dir / "all.csv");
        CHECK(f.n_aus == 5);
        CHECK(f.feature_dim == 20);
        CHECK(f.samples == rows);
        CHECK(regroup_triples(f.samples).size() == d.source.size());
        const std::string text = read_file(dir / "all.csv");
        CHECK(text.rfind("pm2-dataset v1 n_aus=5 feature_dim=20\n", 0) == 0);
    }
    SUBCASE("hidden labels are written as -1 and read back unlabeled") {
        save_dataset(without_labels(d.target), 5, 20, dir / "t.csv");
        const DatasetFile f = load_dataset(dir / "t.csv");
        for (const Sample& s : f.samples) CHECK_FALSE(s.labeled);
        const std::string text = read_file(dir / "t.csv");
        CHECK(text.find(",target,-1,") != std::string::npos);
        CHECK(text.find(",-1,-1,-1,-1,-1,") != std::string::npos);
    }
    SUBCASE("truncated file names the row") {
        save_dataset(rows, 5, 20, dir / "all.csv");
        std::string text = read_file(dir / "all.csv");
        text.resize(text.size() - 15);
        write_file(dir / "cut.csv", text);
        const std::string err = load_error(dir / "cut.csv");
        CHECK(err.find("line " + std::to_string(rows.size() + 1)) != std::string::npos);
    }
    SUBCASE("row width must agree with the header") {
        save_dataset(rows, 5, 20, dir / "all.csv");
        std::string text = read_file(dir / "all.csv");
        text.replace(text.find("feature_dim=20"), 14, "feature_dim=21");
        write_file(dir / "wide.csv", text);
        const std::string err = load_error(dir / "wide.csv");
        CHECK(err.find("line 2") != std::string::npos);
    }
    SUBCASE("bad fields and headers") {
        write_file(dir / "h.csv", "not a dataset\n");
        CHECK_FALSE(load_error(dir / "h.csv").empty());
        save_dataset(rows, 5, 20, dir / "all.csv");
        std::string text = read_file(dir / "all.csv");
        text.replace(text.find("source_real"), 11, "elsewhere_x");
        write_file(dir / "dom.csv", text);
        CHECK(load_error(dir / "dom.csv").find("domain") != std::string::npos);
        CHECK_FALSE(load_error(dir / "nope.csv").empty());
    }
}

TEST_CASE("a linear probe learns the real source domain") {
    GenConfig c;
    c.n_source = 1000;
    const Dataset d = generate(c);
    std::vector<Sample> real;
    for (const PairedTriple& t : d.source) real.push_back(t.real);
    const std::vector<Sample> train(real.begin(), real.begin() + 700), held(real.begin() + 700, real.end());
    const Probe p = fit_probe(train, 5, 20);
    CHECK(probe_macro_f1(p, held, 5) >= 0.8);
}

TEST_CASE("direct transfer degrades with domain shift") {
    auto dt_f1 = [](double shift) {
        GenConfig c;
        c.domain_shift_scale = shift;
        c.seed = 1;
        const Dataset d = generate(c);
        TrainConfig tc;
        tc.mode = TrainMode::DirectTransfer;
        tc.epochs = 10;
        ModelConfig mc;
        const TrainResult r = train(init_params(mc, 1), d.source, {}, tc);
        return evaluate(r.params, d.target).macro_f1;
    };
    const double aligned = dt_f1(0.0), shifted = dt_f1(1.0);
    CHECK(aligned > shifted);
    CHECK(aligned > 0.8);
}
