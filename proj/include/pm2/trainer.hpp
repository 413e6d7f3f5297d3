#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pm2/datagen.hpp"
#include "pm2/losses.hpp"
#include "pm2/model.hpp"

namespace pm2 {

enum class TrainMode { DirectTransfer, McdOnly, Pm2Only, FullPm2, OverallMm };

std::string_view mode_name(TrainMode m) noexcept;
TrainMode mode_from_name(std::string_view name);
inline constexpr TrainMode kAllModes[] = {TrainMode::DirectTransfer, TrainMode::McdOnly, TrainMode::Pm2Only,
                                          TrainMode::OverallMm, TrainMode::FullPm2};

struct TrainConfig {
    int epochs = 30;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    double weight_decay = 1e-4;
    LossWeights weights;
    TrainMode mode = TrainMode::FullPm2;
    std::uint64_t seed = 0;
    /// Encoder-only discrepancy updates per cycle.
    int step3_repeats = 1;
    /// Records the target discrepancy after each Step-3 update (one extra pass).
    bool track_step3 = false;

    void validate() const;
};

/// Which terms a configuration optimizes and the weights it applies.
struct ModePlan {
    enum class Moment { None, Paired, Overall };
    Moment moment = Moment::None;
    bool adversarial = false;  // Steps 2 and 3 run
    LossWeights weights;       // effective weights (zeroed for unused terms)
};

ModePlan plan_for(const TrainConfig& config);

/// Parameter groups that a step may update.
struct ParamGroups {
    bool encoder = false;
    bool classifier1 = false;
    bool classifier2 = false;
    friend bool operator==(const ParamGroups&, const ParamGroups&) = default;
};

/// Step 1 updates everything; step 2 only the classifiers; step 3 only the
/// encoder.
ParamGroups freeze_mask(int step);

/// Per-tensor AdamW state (first/second moments and a step count).
struct AdamState {
    Array m;
    Array v;
    std::int64_t step = 0;
};

struct AdamW {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    /// One decoupled-weight-decay update of param in place. Throws on a
    /// non-finite gradient or a shape mismatch.
    void step(Array& param, const Array& grad, AdamState& state, double lr, double weight_decay) const;
};

/// Optimizer state for every tensor of a ModelParams, in the order
/// encoder, classifier1, classifier2 (weight then bias per layer).
struct OptimizerState {
    std::vector<AdamState> encoder;
    std::vector<AdamState> classifier1;
    std::vector<AdamState> classifier2;

    static OptimizerState for_params(const ModelParams& params);
};

struct HistoryRow {
    std::int64_t iter = 0;
    int step = 1;
    double l1 = 0.0, l2 = 0.0, l3 = 0.0;
    double au1 = 0.0, au2 = 0.0, dis = 0.0, pm2 = 0.0;
    /// Step 3 with track_step3: discrepancy on the same batch after the update.
    double dis_after = 0.0;
};

struct TrainResult {
    ModelParams params;
    std::vector<HistoryRow> history;
};

class TrainingAborted : public std::runtime_error {
public:
    TrainingAborted(std::int64_t iter, int step, std::string term);
    std::int64_t iter() const noexcept { return iter_; }
    int step() const noexcept { return step_; }
    const std::string& term() const noexcept { return term_; }

private:
    std::int64_t iter_;
    int step_;
    std::string term_;
};

/// Alternating three-step training. Only the features of target samples are
/// read; their labels are never touched.
TrainResult train(const ModelParams& init, const std::vector<PairedTriple>& source,
                  const std::vector<Sample>& target, const TrainConfig& config);

/// Gradients of one step objective with respect to the parameter groups the
/// step updates (or those in `wrt`); other groups come back empty. Exposed so
/// tests can compare against finite differences.
struct StepGradients {
    double loss = 0.0;
    LossParts parts;
    std::vector<Array> encoder;
    std::vector<Array> classifier1;
    std::vector<Array> classifier2;
};

struct StepBatch {
    Array real;     // [b x d]
    Array syn_f;    // [b x d]
    Array syn_m;    // [b x d]
    Array labels;   // [b x n]
    Array target;   // [bt x d]
};

StepGradients step_gradients(const ModelParams& params, const StepBatch& batch, const TrainConfig& config, int step,
                             std::optional<ParamGroups> wrt = std::nullopt);

void write_history_csv(const std::vector<HistoryRow>& history, const std::filesystem::path& path);

}  // namespace pm2
