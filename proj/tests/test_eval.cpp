#include <doctest.h>

#include <fstream>

#include "pm2/eval.hpp"
#include "support.hpp"

using namespace pm2;

namespace {

Sample make(int group, std::vector<std::uint8_t> labels) {
    Sample s;
    s.domain = Domain::Target;
    s.group = group;
    s.labels = std::move(labels);
    s.features = {0.0};
    return s;
}

// 20 samples, 2 AUs. Group 0 has rows 0..9, group 1 rows 10..19.
struct Fixture {
    std::vector<Sample> samples;
    std::vector<std::uint8_t> pred;
};

Fixture hand_fixture() {
    // AU1: group 0  tp=3 fp=1 fn=1 tn=5, predicted positive 4/10
    //      group 1  tp=2 fp=0 fn=2 tn=6, predicted positive 2/10
    // AU2: never true, never predicted in group 1; group 0 has one false positive.
    const int au1_label[20] = {1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
    const int au1_pred[20] = {1, 1, 1, 0, 1, 0, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0};
    const int au2_pred[20] = {0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
    Fixture f;
    for (int i = 0; i < 20; ++i) {
        f.samples.push_back(make(i < 10 ? 0 : 1, {static_cast<std::uint8_t>(au1_label[i]), 0}));
        f.pred.push_back(static_cast<std::uint8_t>(au1_pred[i]));
        f.pred.push_back(static_cast<std::uint8_t>(au2_pred[i]));
    }
    return f;
}

}  // namespace

TEST_CASE("F1") {
    const int preds[] = {1, 1, 0, 0, 1};
    const int labels[] = {1, 0, 1, 0, 1};
    const Metric m = f1(preds, labels);
    CHECK(m.value == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK_FALSE(m.undefined);

    const int zeros[] = {0, 0, 0};
    const Metric none = f1(zeros, zeros);
    CHECK(none.value == 0.0);
    CHECK(none.undefined);

    const int bad[] = {0, 2, 0};
    CHECK_THROWS_AS(f1(bad, zeros), std::invalid_argument);
    CHECK_THROWS_AS(f1(std::span<const int>(preds, 4), std::span<const int>(labels, 5)), std::invalid_argument);

    const Confusion c{4, 2, 2, 10};
    CHECK(f1_from_counts(c).value == doctest::Approx(0.666666666666667));
}

TEST_CASE("equal opportunity and parity") {
    const Metric eo = equal_opportunity(0.8, 0.4);
    CHECK(eo.value == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(equal_opportunity(0.4, 0.8).value == eo.value);
    CHECK(equal_opportunity(0.7, 0.7).value == 1.0);
    const Metric both_zero = equal_opportunity(0.0, 0.0);
    CHECK(both_zero.value == 1.0);
    CHECK(both_zero.undefined);

    CHECK(statistical_parity_difference(0.6, 0.45) == doctest::Approx(0.15).epsilon(1e-14));
    CHECK(statistical_parity_difference(0.45, 0.6) == statistical_parity_difference(0.6, 0.45));
    CHECK(statistical_parity_difference(0.3, 0.3) == 0.0);
}

TEST_CASE("hand-built 20-sample report") {
    const Fixture f = hand_fixture();
    const MetricsReport r = evaluate_predictions(f.samples, f.pred);
    REQUIRE(r.per_au.size() == 2);

    const AuMetrics& a = r.per_au[0];
    CHECK(a.overall == Confusion{5, 1, 3, 11});
    CHECK(a.by_group[0] == Confusion{3, 1, 1, 5});
    CHECK(a.by_group[1] == Confusion{2, 0, 2, 6});
    CHECK(a.f1.value == doctest::Approx(10.0 / 14.0));
    CHECK(a.f1_group0.value == doctest::Approx(6.0 / 8.0));
    CHECK(a.f1_group1.value == doctest::Approx(4.0 / 6.0));
    CHECK(a.eo.value == doctest::Approx((4.0 / 6.0) / (6.0 / 8.0)));
    CHECK(a.spd.value == doctest::Approx(0.2));
    CHECK_FALSE(a.eo.undefined);

    // No positives and one false positive: F1 is 0 and defined, group 1 F1 undefined.
    const AuMetrics& b = r.per_au[1];
    CHECK(b.f1.value == 0.0);
    CHECK_FALSE(b.f1.undefined);
    CHECK(b.f1_group1.undefined);
    CHECK(b.eo.undefined);
    CHECK(b.spd.value == doctest::Approx(0.1));

    CHECK(r.macro_f1 == doctest::Approx(0.5 * (10.0 / 14.0)));
    CHECK(r.mean_eo == doctest::Approx(a.eo.value));
    CHECK(r.eo_skipped == 1);
    CHECK(r.spd_skipped == 0);
    CHECK(r.mean_spd == doctest::Approx(0.15));
}

TEST_CASE("constant predictors") {
    std::vector<Sample> s;
    for (int i = 0; i < 8; ++i) s.push_back(make(i % 2, {static_cast<std::uint8_t>(i < 3)}));
    const MetricsReport all_on = evaluate_predictions(s, std::vector<std::uint8_t>(8, 1));
    CHECK(all_on.per_au[0].spd.value == 0.0);
    CHECK(all_on.per_au[0].f1.value == doctest::Approx(6.0 / 11.0));
    const MetricsReport all_off = evaluate_predictions(s, std::vector<std::uint8_t>(8, 0));
    CHECK(all_off.per_au[0].f1.value == 0.0);
    CHECK(all_off.per_au[0].spd.value == 0.0);
    CHECK(all_off.per_au[0].eo.undefined);
}

TEST_CASE("swapping group ids leaves EO and SPD unchanged") {
    Fixture f = hand_fixture();
    const MetricsReport a = evaluate_predictions(f.samples, f.pred);
    for (Sample& s : f.samples) s.group = 1 - s.group;
    const MetricsReport b = evaluate_predictions(f.samples, f.pred);
    for (std::size_t k = 0; k < 2; ++k) {
        CHECK(a.per_au[k].eo.value == b.per_au[k].eo.value);
        CHECK(a.per_au[k].spd.value == doctest::Approx(b.per_au[k].spd.value).epsilon(1e-15));
        CHECK(a.per_au[k].f1.value == b.per_au[k].f1.value);
    }
}

TEST_CASE("an empty group makes SPD undefined") {
    std::vector<Sample> s;
    for (int i = 0; i < 4; ++i) s.push_back(make(0, {static_cast<std::uint8_t>(i % 2)}));
    const MetricsReport r = evaluate_predictions(s, std::vector<std::uint8_t>{1, 1, 0, 0});
    CHECK(r.per_au[0].spd.undefined);
    CHECK(r.spd_skipped == 1);
}

TEST_CASE("input checks") {
    const Fixture f = hand_fixture();
    CHECK_THROWS_AS(evaluate_predictions(f.samples, std::vector<std::uint8_t>(39)), std::invalid_argument);
    std::vector<Sample> unlabeled = without_labels(f.samples);
    CHECK_THROWS_AS(evaluate_predictions(unlabeled, f.pred), std::invalid_argument);
}

TEST_CASE("report files") {
    const auto dir = pm2::testing::scratch_dir("eval");
    const Fixture f = hand_fixture();
    const MetricsReport r = evaluate_predictions(f.samples, f.pred);
    write_report(r, dir / "report.csv", dir / "report.full.csv");

    std::ifstream in(dir / "report.csv");
    std::string header, first;
    std::getline(in, header);
    std::getline(in, first);
    CHECK(header ==
          "au,f1,f1_g0,f1_g1,eo,spd,tp,fp,fn,tn,tp0,fp0,fn0,tn0,tp1,fp1,fn1,tn1");
    CHECK(first.rfind("1,0.7143,0.7500,0.6667,0.8889,0.2000,5,1,3,11,", 0) == 0);

    const MetricsReport back = read_report(dir / "report.full.csv");
    REQUIRE(back.per_au.size() == 2);
    CHECK(back.per_au[0].f1.value == r.per_au[0].f1.value);
    CHECK(back.per_au[1].eo.undefined);
    CHECK(back.per_au[1].f1_group1.undefined);
    CHECK(back.macro_f1 == r.macro_f1);
    CHECK(back.eo_skipped == 1);
    CHECK(back.per_au[0].by_group[1] == r.per_au[0].by_group[1]);
}
