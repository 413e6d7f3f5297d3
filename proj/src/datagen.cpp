#include "pm2/datagen.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include "pm2/random.hpp"
#include "pm2/text.hpp"

namespace pm2 {

namespace {

// Independent random streams so that, e.g., changing n_target leaves the
// render maps and the source rows untouched.
enum Stream : std::uint64_t {
    kStreamRates = 1,
    kStreamRender = 2,
    kStreamSource = 3,
    kStreamTarget = 4,
};

// Low-rank structure of the scene. Every domain renders AUs through the same
// map; domains differ by offsets. The synthetic and target offsets lie in a
// shared appearance subspace, each avatar render adds its own draw there, and
// the target also moves along directions of its own. Group membership
// displaces features inside a group subspace and changes how AUs render.
constexpr std::size_t kAppearanceRank = 4;
constexpr std::size_t kTargetRank = 2;
constexpr std::size_t kGroupRank = 2;
constexpr double kBaseStd = 0.3;
constexpr double kAppearanceOffsetStd = 0.3;
constexpr double kAvatarJitterStd = 0.6;
constexpr double kTargetOffsetStd = 0.09;
constexpr double kGroupOffsetStd = 0.3;
constexpr double kGroupMapStd = 0.3;
// Group 1 renders AUs at (1 - c) of the base contrast, group 0 at (1 + c).
constexpr double kGroupContrast = 0.4;

struct Scene {
    Array base;                          // [feature_dim x n_aus]
    Array appearance;                    // [feature_dim x kAppearanceRank]
    std::vector<double> syn_offset;      // feature_dim
    std::vector<double> target_offset;   // feature_dim
    Array group_map;                     // [feature_dim x n_aus]
    std::vector<double> group_offset;    // feature_dim
};

Array gaussian(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
    Array a = Array::matrix(rows, cols);
    for (double& v : a.data) v = stddev * rng.normal();
    return a;
}

// out += scale * basis * coeff, basis [d x r], coeff [r x c]
void add_product(Array& out, const Array& basis, const Array& coeff, double scale) {
    const std::size_t d = basis.shape[0], r = basis.shape[1], c = coeff.cols();
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t k = 0; k < r; ++k) {
            for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] += scale * basis(i, k) * coeff.data[k * c + j];
        }
    }
}

std::vector<double> in_span(const Array& basis, double stddev, double scale, Rng& rng) {
    Array v = Array::matrix(basis.shape[0], 1);
    add_product(v, basis, gaussian(basis.shape[1], 1, stddev, rng), scale);
    return v.data;
}

Scene make_scene(const GenConfig& c) {
    const std::size_t d = c.feature_dim, n = c.n_aus;
    const double shift = c.domain_shift_scale;
    Rng rng(c.seed, kStreamRender);
    Scene s;
    s.base = gaussian(d, n, kBaseStd, rng);
    s.appearance = gaussian(d, kAppearanceRank, 1.0, rng);
    const Array target_only = gaussian(d, kTargetRank, 1.0, rng);
    const Array group_basis = gaussian(d, kGroupRank, 1.0, rng);

    s.syn_offset = in_span(s.appearance, kAppearanceOffsetStd, shift, rng);
    s.target_offset = in_span(s.appearance, kAppearanceOffsetStd, shift, rng);
    const std::vector<double> extra = in_span(target_only, kTargetOffsetStd, shift, rng);
    for (std::size_t f = 0; f < d; ++f) s.target_offset[f] += extra[f];

    s.group_map = Array::matrix(d, n);
    add_product(s.group_map, group_basis, gaussian(kGroupRank, n, kGroupMapStd, rng), 1.0);
    for (std::size_t i = 0; i < s.group_map.size(); ++i) s.group_map.data[i] -= kGroupContrast * s.base.data[i];
    s.group_offset = in_span(group_basis, kGroupOffsetStd, 1.0, rng);
    return s;
}

std::vector<double> render(Domain domain, const std::vector<std::uint8_t>& z, int group, const Scene& scene,
                           const GenConfig& c, Rng& rng) {
    const std::size_t d = c.feature_dim;
    std::vector<double> offset(d, 0.0);
    if (domain == Domain::Target) {
        offset = scene.target_offset;
    } else if (domain != Domain::SourceReal) {
        // Each avatar render varies its look inside the appearance subspace.
        offset = in_span(scene.appearance, kAvatarJitterStd, c.domain_shift_scale, rng);
        for (std::size_t f = 0; f < d; ++f) offset[f] += scene.syn_offset[f];
    }
    std::vector<double> x(d);
    const double g = c.group_shift_scale * (2.0 * group - 1.0);
    for (std::size_t f = 0; f < d; ++f) {
        double acc = offset[f] + g * scene.group_offset[f];
        for (std::size_t k = 0; k < z.size(); ++k) {
            if (z[k]) acc += scene.base(f, k) + g * scene.group_map(f, k);
        }
        x[f] = acc + c.noise_std * rng.normal();
    }
    return x;
}

std::vector<std::uint8_t> draw_labels(const std::vector<double>& rates, Rng& rng) {
    std::vector<std::uint8_t> z(rates.size());
    for (std::size_t k = 0; k < rates.size(); ++k) z[k] = rng.bernoulli(rates[k]) ? 1 : 0;
    return z;
}

}  // namespace

std::string_view domain_name(Domain d) noexcept {
    switch (d) {
        case Domain::SourceReal: return "source_real";
        case Domain::SynGroup0: return "syn_group0";
        case Domain::SynGroup1: return "syn_group1";
        case Domain::Target: return "target";
    }
    return "unknown";
}

Domain domain_from_name(std::string_view name) {
    for (Domain d : {Domain::SourceReal, Domain::SynGroup0, Domain::SynGroup1, Domain::Target}) {
        if (domain_name(d) == name) return d;
    }
    throw std::invalid_argument("unknown domain '" + std::string(name) + "'");
}

void GenConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw std::invalid_argument("GenConfig." + field + ": " + why);
    };
    auto probability = [&](double p, const std::string& field) {
        if (!(p >= 0.0 && p <= 1.0)) fail(field, "must lie in [0, 1], got " + text::format_exact(p));
    };
    auto nonnegative = [&](double v, const std::string& field) {
        if (!(v >= 0.0) || !std::isfinite(v)) fail(field, "must be finite and >= 0");
    };
    if (n_aus < 1) fail("n_aus", "must be >= 1");
    if (feature_dim < 1) fail("feature_dim", "must be >= 1");
    if (n_source < 1) fail("n_source", "must be >= 1");
    if (n_target < 1) fail("n_target", "must be >= 1");
    if (!base_rates.empty()) {
        if (base_rates.size() != n_aus) {
            fail("base_rates", "expected " + std::to_string(n_aus) + " rates, got " + std::to_string(base_rates.size()));
        }
        bool degenerate = true;
        for (double p : base_rates) {
            probability(p, "base_rates");
            degenerate = degenerate && (p == 0.0 || p == 1.0);
        }
        if (degenerate) fail("base_rates", "all rates are 0 or 1, no learnable signal");
    }
    probability(source_group_imbalance, "source_group_imbalance");
    probability(target_group_fraction, "target_group_fraction");
    nonnegative(domain_shift_scale, "domain_shift_scale");
    nonnegative(group_shift_scale, "group_shift_scale");
    nonnegative(noise_std, "noise_std");
}

std::vector<double> resolve_base_rates(const GenConfig& c) {
    if (!c.base_rates.empty()) return c.base_rates;
    Rng rng(c.seed, kStreamRates);
    std::vector<double> rates(c.n_aus);
    for (double& p : rates) p = rng.uniform(0.1, 0.5);
    return rates;
}

Dataset generate(const GenConfig& config) {
    config.validate();
    Dataset out;
    out.n_aus = config.n_aus;
    out.feature_dim = config.feature_dim;
    out.base_rates = resolve_base_rates(config);
    const Scene scene = make_scene(config);

    Rng src(config.seed, kStreamSource);
    out.source.reserve(config.n_source);
    for (std::size_t i = 0; i < config.n_source; ++i) {
        const auto z = draw_labels(out.base_rates, src);
        const int group = src.bernoulli(config.source_group_imbalance) ? 1 : 0;
        const auto pair = static_cast<std::int64_t>(i);
        PairedTriple t;
        t.real = Sample{3 * pair, Domain::SourceReal, pair, group, true, z,
                        render(Domain::SourceReal, z, group, scene, config, src)};
        t.syn_f = Sample{3 * pair + 1, Domain::SynGroup0, pair, 0, true, z,
                         render(Domain::SynGroup0, z, 0, scene, config, src)};
        t.syn_m = Sample{3 * pair + 2, Domain::SynGroup1, pair, 1, true, z,
                         render(Domain::SynGroup1, z, 1, scene, config, src)};
        out.source.push_back(std::move(t));
    }

    Rng tgt(config.seed, kStreamTarget);
    const auto first_target = static_cast<std::int64_t>(3 * config.n_source);
    out.target.reserve(config.n_target);
    for (std::size_t j = 0; j < config.n_target; ++j) {
        const auto z = draw_labels(out.base_rates, tgt);
        const int group = tgt.bernoulli(config.target_group_fraction) ? 1 : 0;
        out.target.push_back(Sample{first_target + static_cast<std::int64_t>(j), Domain::Target, -1, group, true, z,
                                    render(Domain::Target, z, group, scene, config, tgt)});
    }
    return out;
}

std::vector<Sample> flatten(const std::vector<PairedTriple>& triples) {
    std::vector<Sample> out;
    out.reserve(3 * triples.size());
    for (const PairedTriple& t : triples) {
        out.push_back(t.real);
        out.push_back(t.syn_f);
        out.push_back(t.syn_m);
    }
    return out;
}

std::vector<PairedTriple> regroup_triples(const std::vector<Sample>& samples) {
    struct Slots {
        const Sample* real = nullptr;
        const Sample* f = nullptr;
        const Sample* m = nullptr;
    };
    std::map<std::int64_t, Slots> by_pair;
    std::vector<std::int64_t> order;
    for (const Sample& s : samples) {
        if (s.domain == Domain::Target) continue;
        if (s.pair_id < 0) throw std::runtime_error("sample " + std::to_string(s.id) + " has no pair_id");
        auto [it, inserted] = by_pair.try_emplace(s.pair_id);
        if (inserted) order.push_back(s.pair_id);
        const Sample** slot = s.domain == Domain::SourceReal  ? &it->second.real
                              : s.domain == Domain::SynGroup0 ? &it->second.f
                                                              : &it->second.m;
        if (*slot) throw std::runtime_error("pair " + std::to_string(s.pair_id) + " has duplicate " +
                                            std::string(domain_name(s.domain)) + " rows");
        *slot = &s;
    }
    std::vector<PairedTriple> out;
    out.reserve(order.size());
    for (std::int64_t pair : order) {
        const Slots& sl = by_pair[pair];
        if (!sl.real || !sl.f || !sl.m) throw std::runtime_error("pair " + std::to_string(pair) + " is incomplete");
        out.push_back(PairedTriple{*sl.real, *sl.f, *sl.m});
    }
    return out;
}

Array feature_matrix(const std::vector<const Sample*>& samples) {
    if (samples.empty()) throw std::invalid_argument("feature_matrix: no samples");
    const std::size_t d = samples.front()->features.size();
    Array out = Array::matrix(samples.size(), d);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i]->features.size() != d) throw std::invalid_argument("feature_matrix: ragged features");
        std::copy(samples[i]->features.begin(), samples[i]->features.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    return out;
}

Array feature_matrix(const std::vector<Sample>& samples) {
    std::vector<const Sample*> ptrs;
    ptrs.reserve(samples.size());
    for (const Sample& s : samples) ptrs.push_back(&s);
    return feature_matrix(ptrs);
}

std::vector<Sample> without_labels(std::vector<Sample> samples) {
    for (Sample& s : samples) {
        s.labeled = false;
        s.labels.clear();
    }
    return samples;
}

void save_dataset(const std::vector<Sample>& samples, std::size_t n_aus, std::size_t feature_dim,
                  const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_dataset: cannot open " + path.string());
    out << "pm2-dataset v1 n_aus=" << n_aus << " feature_dim=" << feature_dim << "\n";
    for (const Sample& s : samples) {
        if (s.features.size() != feature_dim || (s.labeled && s.labels.size() != n_aus)) {
            throw std::invalid_argument("save_dataset: sample " + std::to_string(s.id) + " does not match header widths");
        }
        out << s.id << ',' << domain_name(s.domain) << ',' << s.pair_id << ',' << s.group;
        for (std::size_t k = 0; k < n_aus; ++k) out << ',' << (s.labeled ? static_cast<int>(s.labels[k]) : -1);
        for (double x : s.features) out << ',' << text::format_exact(x);
        out << '\n';
    }
    if (!out) throw std::runtime_error("save_dataset: write failed for " + path.string());
}

DatasetFile load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_dataset: " + path.string() + ": empty file");

    DatasetFile file;
    {
        const auto parts = text::split(text::trim(line), ' ');
        auto header_value = [&](std::size_t idx, std::string_view key) -> std::size_t {
            if (parts.size() != 4 || parts[0] != "pm2-dataset" || parts[1] != "v1" ||
                parts[idx].substr(0, key.size()) != key) {
                throw std::runtime_error("load_dataset: line 1: malformed header '" + line + "'");
            }
            const auto v = text::parse_int(parts[idx].substr(key.size()));
            if (!v || *v < 1) throw std::runtime_error("load_dataset: line 1: bad value for " + std::string(key));
            return static_cast<std::size_t>(*v);
        };
        file.n_aus = header_value(2, "n_aus=");
        file.feature_dim = header_value(3, "feature_dim=");
    }

    const std::size_t width = 4 + file.n_aus + file.feature_dim;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fail = [&](const std::string& field, const std::string& why) -> std::runtime_error {
            return std::runtime_error("load_dataset: " + path.string() + ": line " + std::to_string(line_no) +
                                      ", field " + field + ": " + why);
        };
        if (in.eof()) throw fail("row", "truncated (no line terminator)");
        const auto fields = text::split(line, ',');
        if (fields.size() != width) {
            throw fail("count", "expected " + std::to_string(width) + " fields, got " + std::to_string(fields.size()));
        }
        Sample s;
        const auto id = text::parse_int(fields[0]);
        if (!id) throw fail("id", "not an integer");
        s.id = *id;
        try {
            s.domain = domain_from_name(fields[1]);
        } catch (const std::invalid_argument&) {
            throw fail("domain", "unknown domain '" + std::string(fields[1]) + "'");
        }
        const auto pair = text::parse_int(fields[2]);
        if (!pair || *pair < -1) throw fail("pair_id", "not an integer >= -1");
        s.pair_id = *pair;
        const auto group = text::parse_int(fields[3]);
        if (!group || (*group != 0 && *group != 1)) throw fail("group", "must be 0 or 1");
        s.group = static_cast<int>(*group);

        std::size_t unlabeled = 0;
        s.labels.resize(file.n_aus);
        for (std::size_t k = 0; k < file.n_aus; ++k) {
            const auto v = text::parse_int(fields[4 + k]);
            if (!v || *v < -1 || *v > 1) throw fail("label_" + std::to_string(k + 1), "must be -1, 0 or 1");
            if (*v == -1) ++unlabeled;
            s.labels[k] = *v == 1 ? 1 : 0;
        }
        if (unlabeled != 0 && unlabeled != file.n_aus) throw fail("label", "partially unlabeled row");
        if (unlabeled == file.n_aus) {
            s.labeled = false;
            s.labels.clear();
        }
        if (!s.labeled && s.domain != Domain::Target) throw fail("label", "only target rows may be unlabeled");

        s.features.resize(file.feature_dim);
        for (std::size_t f = 0; f < file.feature_dim; ++f) {
            const auto v = text::parse_double(fields[4 + file.n_aus + f]);
            if (!v) throw fail("feat_" + std::to_string(f + 1), "not a number");
            s.features[f] = *v;
        }
        file.samples.push_back(std::move(s));
    }
    return file;
}

}  // namespace pm2
