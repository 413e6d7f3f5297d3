#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pm2/array.hpp"

namespace pm2 {

enum class Domain { SourceReal, SynGroup0, SynGroup1, Target };

std::string_view domain_name(Domain d) noexcept;
Domain domain_from_name(std::string_view name);

struct GenConfig {
    std::size_t n_aus = 5;
    std::size_t feature_dim = 20;
    std::size_t n_source = 1000;  // paired triples
    std::size_t n_target = 1000;
    /// Empty means: draw each rate uniformly from [0.1, 0.5] using the seed.
    std::vector<double> base_rates;
    double source_group_imbalance = 0.25;  // fraction of group-1 subjects among source_real rows
    double target_group_fraction = 0.5;    // fraction of group-1 subjects in the target
    double domain_shift_scale = 1.0;
    double group_shift_scale = 1.0;
    double noise_std = 0.1;
    std::uint64_t seed = 0;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

struct Sample {
    std::int64_t id = 0;
    Domain domain = Domain::SourceReal;
    std::int64_t pair_id = -1;
    int group = 0;
    bool labeled = true;
    std::vector<std::uint8_t> labels;
    std::vector<double> features;

    friend bool operator==(const Sample&, const Sample&) = default;
};

/// One real source sample with its two rendered counterparts.
struct PairedTriple {
    Sample real;
    Sample syn_f;  // group 0
    Sample syn_m;  // group 1
};

struct Dataset {
    std::size_t n_aus = 0;
    std::size_t feature_dim = 0;
    std::vector<double> base_rates;  // resolved rates
    std::vector<PairedTriple> source;
    std::vector<Sample> target;
};

/// Shared-latent generator. Each triple shares one Bernoulli label vector z;
/// features are a per-domain linear render of z plus a group displacement,
/// a domain offset and Gaussian noise.
Dataset generate(const GenConfig& config);

std::vector<double> resolve_base_rates(const GenConfig& config);

/// real, syn_f, syn_m for every triple in order.
std::vector<Sample> flatten(const std::vector<PairedTriple>& triples);
/// Regroups samples by pair_id. Throws if a triple is incomplete.
std::vector<PairedTriple> regroup_triples(const std::vector<Sample>& samples);

/// Stacks the feature vectors into a [count x feature_dim] batch.
Array feature_matrix(const std::vector<const Sample*>& samples);
Array feature_matrix(const std::vector<Sample>& samples);

struct DatasetFile {
    std::size_t n_aus = 0;
    std::size_t feature_dim = 0;
    std::vector<Sample> samples;
};

void save_dataset(const std::vector<Sample>& samples, std::size_t n_aus, std::size_t feature_dim,
                  const std::filesystem::path& path);
/// Throws std::runtime_error naming the line and field on malformed input.
DatasetFile load_dataset(const std::filesystem::path& path);

/// Strips labels, as seen by training.
std::vector<Sample> without_labels(std::vector<Sample> samples);

}  // namespace pm2
