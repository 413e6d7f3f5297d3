#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pm2/datagen.hpp"
#include "pm2/model.hpp"

namespace pm2 {

struct Confusion {
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;

    void add(bool predicted, bool actual);
    std::int64_t total() const noexcept { return tp + fp + fn + tn; }
    Confusion& operator+=(const Confusion& o);
    friend bool operator==(const Confusion&, const Confusion&) = default;
};

/// A metric value with a flag for degenerate denominators.
struct Metric {
    double value = 0.0;
    bool undefined = false;
};

/// 2TP / (2TP + FP + FN); 0 flagged undefined when the denominator is 0.
Metric f1_from_counts(const Confusion& c);
/// Throws std::invalid_argument on non-binary values or unequal lengths.
Metric f1(std::span<const int> preds, std::span<const int> labels);
/// min / max of the two group scores; 1 flagged when both are 0.
Metric equal_opportunity(double f_group0, double f_group1);
/// |rate1 - rate0|.
double statistical_parity_difference(double rate0, double rate1);

struct AuMetrics {
    Metric f1;
    Metric f1_group0;
    Metric f1_group1;
    Metric eo;
    Metric spd;  // undefined when a group has no samples
    Confusion overall;
    std::array<Confusion, 2> by_group;
};

struct MetricsReport {
    std::vector<AuMetrics> per_au;
    double macro_f1 = 0.0;
    double mean_eo = 0.0;
    double mean_spd = 0.0;
    std::size_t eo_skipped = 0;
    std::size_t spd_skipped = 0;
};

/// Builds a report from binary predictions laid out [sample x au].
MetricsReport evaluate_predictions(const std::vector<Sample>& samples, std::span<const std::uint8_t> predicted);
/// Runs head-averaged inference and fills the report.
MetricsReport evaluate(const ModelParams& model, const std::vector<Sample>& samples);

/// Table CSV (4 decimals) at path and a full-precision sidecar next to it.
void write_report(const MetricsReport& report, const std::filesystem::path& path,
                  const std::filesystem::path& full_precision_path);

/// Reads the full-precision sidecar back.
MetricsReport read_report(const std::filesystem::path& full_precision_path);

}  // namespace pm2
