#include "pm2/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "pm2/text.hpp"

namespace pm2 {

void Confusion::add(bool predicted, bool actual) {
    if (predicted && actual) ++tp;
    else if (predicted) ++fp;
    else if (actual) ++fn;
    else ++tn;
}

Confusion& Confusion::operator+=(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
}

Metric f1_from_counts(const Confusion& c) {
    const std::int64_t denom = 2 * c.tp + c.fp + c.fn;
    if (denom == 0) return Metric{0.0, true};
    return Metric{static_cast<double>(2 * c.tp) / static_cast<double>(denom), false};
}

Metric f1(std::span<const int> preds, std::span<const int> labels) {
    if (preds.size() != labels.size()) {
        throw std::invalid_argument("f1: " + std::to_string(preds.size()) + " predictions vs " +
                                    std::to_string(labels.size()) + " labels");
    }
    Confusion c;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if ((preds[i] != 0 && preds[i] != 1) || (labels[i] != 0 && labels[i] != 1)) {
            throw std::invalid_argument("f1: values must be 0 or 1 (index " + std::to_string(i) + ")");
        }
        c.add(preds[i] == 1, labels[i] == 1);
    }
    return f1_from_counts(c);
}

Metric equal_opportunity(double f_group0, double f_group1) {
    const double hi = std::max(f_group0, f_group1);
    if (hi == 0.0) return Metric{1.0, true};
    return Metric{std::min(f_group0, f_group1) / hi, false};
}

double statistical_parity_difference(double rate0, double rate1) { return std::fabs(rate1 - rate0); }

MetricsReport evaluate_predictions(const std::vector<Sample>& samples, std::span<const std::uint8_t> predicted) {
    if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
    const std::size_t n = samples.front().labels.size();
    if (n == 0) throw std::invalid_argument("evaluate: samples must be labeled");
    if (predicted.size() != samples.size() * n) throw std::invalid_argument("evaluate: prediction count mismatch");

    MetricsReport r;
    r.per_au.resize(n);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = samples[i];
        if (!s.labeled || s.labels.size() != n) {
            throw std::invalid_argument("evaluate: sample " + std::to_string(s.id) + " is unlabeled");
        }
        for (std::size_t k = 0; k < n; ++k) {
            const bool p = predicted[i * n + k] != 0;
            const bool y = s.labels[k] != 0;
            r.per_au[k].overall.add(p, y);
            r.per_au[k].by_group[static_cast<std::size_t>(s.group)].add(p, y);
        }
    }

    double f1_sum = 0.0, eo_sum = 0.0, spd_sum = 0.0;
    for (AuMetrics& m : r.per_au) {
        m.f1 = f1_from_counts(m.overall);
        m.f1_group0 = f1_from_counts(m.by_group[0]);
        m.f1_group1 = f1_from_counts(m.by_group[1]);
        m.eo = equal_opportunity(m.f1_group0.value, m.f1_group1.value);
        m.eo.undefined = m.eo.undefined || m.f1_group0.undefined || m.f1_group1.undefined;
        const Confusion& g0 = m.by_group[0];
        const Confusion& g1 = m.by_group[1];
        if (g0.total() == 0 || g1.total() == 0) {
            m.spd = Metric{0.0, true};
        } else {
            const double rate0 = static_cast<double>(g0.tp + g0.fp) / static_cast<double>(g0.total());
            const double rate1 = static_cast<double>(g1.tp + g1.fp) / static_cast<double>(g1.total());
            m.spd = Metric{statistical_parity_difference(rate0, rate1), false};
        }
        f1_sum += m.f1.value;
        if (m.eo.undefined) ++r.eo_skipped;
        else eo_sum += m.eo.value;
        if (m.spd.undefined) ++r.spd_skipped;
        else spd_sum += m.spd.value;
    }
    r.macro_f1 = f1_sum / static_cast<double>(n);
    const std::size_t eo_n = n - r.eo_skipped, spd_n = n - r.spd_skipped;
    r.mean_eo = eo_n ? eo_sum / static_cast<double>(eo_n) : 0.0;
    r.mean_spd = spd_n ? spd_sum / static_cast<double>(spd_n) : 0.0;
    return r;
}

MetricsReport evaluate(const ModelParams& model, const std::vector<Sample>& samples) {
    if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
    const Prediction pred = predict(model, feature_matrix(samples));
    return evaluate_predictions(samples, pred.labels);
}

namespace {

constexpr const char* kHeader = "au,f1,f1_g0,f1_g1,eo,spd,tp,fp,fn,tn,tp0,fp0,fn0,tn0,tp1,fp1,fn1,tn1";

constexpr const char* kMetricNames[5] = {"f1", "f1_g0", "f1_g1", "eo", "spd"};

// The sidecar carries one extra column listing the metrics flagged undefined.
template <typename Fmt>
void write_rows(std::ostream& out, const MetricsReport& r, Fmt fmt, bool sidecar) {
    out << kHeader << (sidecar ? ",undefined" : "") << '\n';
    for (std::size_t k = 0; k < r.per_au.size(); ++k) {
        const AuMetrics& m = r.per_au[k];
        const Metric* metrics[5] = {&m.f1, &m.f1_group0, &m.f1_group1, &m.eo, &m.spd};
        out << (k + 1);
        for (const Metric* v : metrics) out << ',' << fmt(v->value);
        for (const Confusion* c : {&m.overall, &m.by_group[0], &m.by_group[1]}) {
            out << ',' << c->tp << ',' << c->fp << ',' << c->fn << ',' << c->tn;
        }
        if (sidecar) {
            std::string flags;
            for (std::size_t i = 0; i < 5; ++i) {
                if (!metrics[i]->undefined) continue;
                if (!flags.empty()) flags += ';';
                flags += kMetricNames[i];
            }
            out << ',' << (flags.empty() ? "-" : flags);
        }
        out << '\n';
    }
    // Summary row: macro F1, mean group F1s, mean EO and SPD over defined AUs,
    // and the skip counts in the first two count columns.
    double g0 = 0.0, g1 = 0.0;
    for (const AuMetrics& m : r.per_au) {
        g0 += m.f1_group0.value;
        g1 += m.f1_group1.value;
    }
    const double n = static_cast<double>(r.per_au.size());
    out << "mean," << fmt(r.macro_f1) << ',' << fmt(g0 / n) << ',' << fmt(g1 / n) << ',' << fmt(r.mean_eo) << ','
        << fmt(r.mean_spd) << ',' << r.eo_skipped << ',' << r.spd_skipped;
    for (int i = 0; i < 10; ++i) out << ",0";
    out << (sidecar ? ",-\n" : "\n");
}

}  // namespace

void write_report(const MetricsReport& report, const std::filesystem::path& path,
                  const std::filesystem::path& full_precision_path) {
    {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("write_report: cannot open " + path.string());
        write_rows(out, report, [](double v) { return text::format_fixed(v, 4); }, false);
    }
    std::ofstream full(full_precision_path, std::ios::binary);
    if (!full) throw std::runtime_error("write_report: cannot open " + full_precision_path.string());
    write_rows(full, report, [](double v) { return text::format_exact(v); }, true);
}

MetricsReport read_report(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_report: cannot open " + path.string());
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line) || text::trim(line) != std::string(kHeader) + ",undefined") {
        throw std::runtime_error("read_report: " + path.string() + ": bad header");
    }
    MetricsReport r;
    bool saw_summary = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        auto fail = [&](const std::string& why) {
            return std::runtime_error("read_report: " + path.string() + ": line " + std::to_string(line_no) + ": " + why);
        };
        const auto f = text::split(text::trim(line), ',');
        if (f.size() != 19) throw fail("expected 19 fields");
        const auto flags = text::split(f[18], ';');
        auto metric = [&](std::size_t i) {
            const auto v = text::parse_double(f[i]);
            if (!v) throw fail("bad number '" + std::string(f[i]) + "'");
            const bool undefined = std::find(flags.begin(), flags.end(), kMetricNames[i - 1]) != flags.end();
            return Metric{*v, undefined};
        };
        auto count = [&](std::size_t i) {
            const auto v = text::parse_int(f[i]);
            if (!v) throw fail("bad count '" + std::string(f[i]) + "'");
            return *v;
        };
        if (f[0] == "mean") {
            r.macro_f1 = metric(1).value;
            r.mean_eo = metric(4).value;
            r.mean_spd = metric(5).value;
            r.eo_skipped = static_cast<std::size_t>(count(6));
            r.spd_skipped = static_cast<std::size_t>(count(7));
            saw_summary = true;
            continue;
        }
        AuMetrics m;
        m.f1 = metric(1);
        m.f1_group0 = metric(2);
        m.f1_group1 = metric(3);
        m.eo = metric(4);
        m.spd = metric(5);
        Confusion* cs[3] = {&m.overall, &m.by_group[0], &m.by_group[1]};
        for (std::size_t c = 0; c < 3; ++c) {
            cs[c]->tp = count(6 + 4 * c);
            cs[c]->fp = count(7 + 4 * c);
            cs[c]->fn = count(8 + 4 * c);
            cs[c]->tn = count(9 + 4 * c);
        }
        r.per_au.push_back(m);
    }
    if (!saw_summary) throw std::runtime_error("read_report: " + path.string() + ": missing summary row");
    return r;
}

}  // namespace pm2
