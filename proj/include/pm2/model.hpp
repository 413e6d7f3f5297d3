#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pm2/array.hpp"
#include "pm2/autodiff.hpp"

namespace pm2 {

struct ModelConfig {
    std::size_t feature_dim = 20;
    std::vector<std::size_t> hidden_dims{64, 64};
    std::size_t embed_dim = 32;
    std::size_t n_aus = 5;
    std::vector<std::size_t> classifier_hidden{32};

    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Dense layer: y = x * weight + bias, weight is [in x out].
struct Layer {
    Array weight;
    Array bias;
    friend bool operator==(const Layer&, const Layer&) = default;
};

using Mlp = std::vector<Layer>;

enum class Head { First = 1, Second = 2 };

/// Encoder E and the two classifier heads C1, C2.
struct ModelParams {
    ModelConfig config;
    Mlp encoder;
    Mlp classifier1;
    Mlp classifier2;

    const Mlp& head(Head h) const { return h == Head::First ? classifier1 : classifier2; }
    bool all_finite() const;
    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Glorot-uniform weights, zero biases.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Converts an integer head id (1 or 2) into a Head; throws otherwise.
Head head_from_id(int id);

/// Layer parameters placed on a graph, either as variables or constants.
struct MlpVars {
    std::vector<ad::Var> weights;
    std::vector<ad::Var> biases;
};

MlpVars bind_mlp(ad::Graph& g, const Mlp& mlp, bool trainable);

/// ReLU between layers, linear output.
ad::Var mlp_forward(ad::Graph& g, const MlpVars& mlp, ad::Var x);
/// Classifier head: MLP followed by a sigmoid, so outputs lie in (0, 1).
ad::Var head_forward(ad::Graph& g, const MlpVars& head, ad::Var embeddings);

Array encode(const ModelParams& params, const Array& batch);
Array classify(const ModelParams& params, const Array& embeddings, Head head);

struct Prediction {
    Array probs;                       // (p1 + p2) / 2
    std::vector<std::uint8_t> labels;  // probs > 0.5, row-major like probs
};

/// Averages both heads, then thresholds at 0.5 (strictly greater is active).
Prediction predict(const ModelParams& params, const Array& batch);
Prediction combine_heads(const Array& p1, const Array& p2);

inline constexpr double kDecisionThreshold = 0.5;

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace pm2
