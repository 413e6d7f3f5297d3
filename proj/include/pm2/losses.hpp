#pragma once

#include "pm2/array.hpp"
#include "pm2/autodiff.hpp"

namespace pm2 {

struct LossWeights {
    double alpha = 0.3;  // discrepancy weight
    double beta = 0.5;   // paired moment matching weight
    int moment_order = 2;

    void validate() const;
};

inline constexpr double kBceEpsilon = 1e-7;

namespace loss {

// Graph builders. Batch reductions are means; sums run over AUs and moments.

/// Sum over AUs of batch-mean binary cross-entropy. Predictions are clamped
/// to [eps, 1 - eps] before the logs.
ad::Var au(ad::Graph& g, ad::Var preds, const Array& labels);
/// Batch mean of the per-sample L1 distance between the two heads.
ad::Var discrepancy(ad::Graph& g, ad::Var p1, ad::Var p2);
/// Batch mean of sum_k || e1^k - e2^k ||_2 with elementwise powers.
ad::Var pair_moment_distance(ad::Graph& g, ad::Var e1, ad::Var e2, int order);
/// Mean over triples of the three pairwise moment distances divided by 3.
ad::Var paired_moment_matching(ad::Graph& g, ad::Var real, ad::Var syn_f, ad::Var syn_m, int order);
/// sum_k || mean_A(e^k) - mean_B(e^k) ||_2.
ad::Var overall_moment_distance(ad::Graph& g, ad::Var batch_a, ad::Var batch_b, int order);

}  // namespace loss

// Value-level wrappers over the graph builders.
double au_loss(const Array& preds, const Array& labels);
double discrepancy_loss(const Array& p1, const Array& p2);
double pair_moment_distance(const Array& e1, const Array& e2, int order);
double pm2_loss(const Array& real, const Array& syn_f, const Array& syn_m, int order);
double overall_moment_distance(const Array& batch_a, const Array& batch_b, int order);

struct LossParts {
    double au1 = 0.0;
    double au2 = 0.0;
    double dis = 0.0;
    double pm2 = 0.0;
};

struct StepLosses {
    double l1 = 0.0;
    double l2 = 0.0;
    double l3 = 0.0;
};

/// L1 = mean AU loss + beta * pm2; L2 = L1 - alpha * dis; L3 = alpha * dis.
StepLosses step_losses(const LossWeights& w, const LossParts& parts);

}  // namespace pm2
