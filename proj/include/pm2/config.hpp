#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pm2/datagen.hpp"
#include "pm2/model.hpp"
#include "pm2/trainer.hpp"

namespace pm2 {

/// Everything a run needs: data generation, model shape, training, and the
/// grid of cells to execute.
struct ExperimentSpec {
    GenConfig gen;
    ModelConfig model;
    TrainConfig train;
    int repeats = 1;
    std::filesystem::path output_dir = "runs";
    std::vector<TrainMode> modes{std::begin(kAllModes), std::end(kAllModes)};
    /// Ablation grid over the full_pm2 objective; empty means no grid.
    std::vector<double> alphas;
    std::vector<double> betas;
    /// Pre-generated datasets; when absent, data is generated per seed.
    std::optional<std::filesystem::path> source_data;
    std::optional<std::filesystem::path> target_data;

    /// Model widths follow the generator's n_aus and feature_dim.
    ModelConfig model_config() const;
    void validate() const;
};

/// Parses `key=value` lines; `#` starts a comment. Unknown keys and bad
/// values throw std::invalid_argument naming the key and line.
ExperimentSpec parse_spec(std::string_view text, const std::string& origin = "<config>");
ExperimentSpec load_spec(const std::filesystem::path& path);
std::string render_spec(const ExperimentSpec& spec);

}  // namespace pm2
