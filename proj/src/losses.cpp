#include "pm2/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pm2 {

void LossWeights::validate() const {
    if (!(alpha >= 0.0)) throw std::invalid_argument("LossWeights: alpha must be >= 0");
    if (!(beta >= 0.0)) throw std::invalid_argument("LossWeights: beta must be >= 0");
    if (moment_order < 1) throw std::invalid_argument("LossWeights: moment_order must be >= 1");
}

namespace loss {

namespace {

void require_same_shape(const Array& a, const Array& b, const char* what) {
    if (a.shape != b.shape) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_string(a.shape) + " vs " +
                                    shape_string(b.shape));
    }
}

void require_order(int order, const char* what) {
    if (order < 1) throw std::invalid_argument(std::string(what) + ": moment order must be >= 1");
}

}  // namespace

ad::Var au(ad::Graph& g, ad::Var preds, const Array& labels) {
    const Array& p = g.value(preds);
    require_same_shape(p, labels, "au_loss");
    if (p.rank() != 2 || p.rows() == 0) throw std::invalid_argument("au_loss: expects a nonempty [b x n] batch");
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (std::isnan(p.data[i]) || std::isnan(labels.data[i])) throw std::invalid_argument("au_loss: NaN input");
        if (labels.data[i] != 0.0 && labels.data[i] != 1.0) {
            throw std::invalid_argument("au_loss: labels must be 0 or 1");
        }
    }
    Array negated(labels.shape);
    for (std::size_t i = 0; i < labels.size(); ++i) negated.data[i] = 1.0 - labels.data[i];

    const ad::Var clamped = g.clamp(preds, kBceEpsilon, 1.0 - kBceEpsilon);
    const ad::Var pos = g.mul(g.constant(labels), g.log(clamped));
    const ad::Var neg = g.mul(g.constant(std::move(negated)), g.log(g.affine(clamped, -1.0, 1.0)));
    const double batch = static_cast<double>(p.rows());
    return g.scale(g.sum(g.add(pos, neg)), -1.0 / batch);
}

ad::Var discrepancy(ad::Graph& g, ad::Var p1, ad::Var p2) {
    const Array& a = g.value(p1);
    require_same_shape(a, g.value(p2), "discrepancy_loss");
    if (a.rows() == 0) throw std::invalid_argument("discrepancy_loss: empty batch");
    return g.scale(g.sum(g.abs(g.sub(p1, p2))), 1.0 / static_cast<double>(a.rows()));
}

ad::Var pair_moment_distance(ad::Graph& g, ad::Var e1, ad::Var e2, int order) {
    require_same_shape(g.value(e1), g.value(e2), "pair_moment_distance");
    require_order(order, "pair_moment_distance");
    if (g.value(e1).size() == 0) throw std::invalid_argument("pair_moment_distance: empty input");
    ad::Var total{};
    for (int k = 1; k <= order; ++k) {
        const ad::Var a = k == 1 ? e1 : g.pow(e1, k);
        const ad::Var b = k == 1 ? e2 : g.pow(e2, k);
        const ad::Var d = g.mean(g.norm2(g.sub(a, b)));
        total = k == 1 ? d : g.add(total, d);
    }
    return total;
}

ad::Var paired_moment_matching(ad::Graph& g, ad::Var real, ad::Var syn_f, ad::Var syn_m, int order) {
    if (g.value(real).rows() == 0) throw std::invalid_argument("pm2_loss: empty batch of triples");
    const ad::Var d_rf = pair_moment_distance(g, real, syn_f, order);
    const ad::Var d_rm = pair_moment_distance(g, real, syn_m, order);
    const ad::Var d_fm = pair_moment_distance(g, syn_f, syn_m, order);
    return g.scale(g.add(g.add(d_rf, d_rm), d_fm), 1.0 / 3.0);
}

ad::Var overall_moment_distance(ad::Graph& g, ad::Var batch_a, ad::Var batch_b, int order) {
    const Array& a = g.value(batch_a);
    const Array& b = g.value(batch_b);
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
        throw std::invalid_argument("overall_moment_distance: embedding widths differ " + shape_string(a.shape) +
                                    " vs " + shape_string(b.shape));
    }
    if (a.rows() == 0 || b.rows() == 0) throw std::invalid_argument("overall_moment_distance: empty batch");
    require_order(order, "overall_moment_distance");
    ad::Var total{};
    for (int k = 1; k <= order; ++k) {
        const ad::Var ma = g.mean_rows(k == 1 ? batch_a : g.pow(batch_a, k));
        const ad::Var mb = g.mean_rows(k == 1 ? batch_b : g.pow(batch_b, k));
        const ad::Var d = g.norm2(g.sub(ma, mb));
        total = k == 1 ? d : g.add(total, d);
    }
    return total;
}

}  // namespace loss

namespace {

// Treats a single vector as a batch of one sample.
Array as_batch(const Array& a) {
    if (a.rank() == 1) return Array({1, a.size()}, a.data);
    return a;
}

}  // namespace

double au_loss(const Array& preds, const Array& labels) {
    ad::Graph g;
    return g.value(loss::au(g, g.constant(as_batch(preds)), as_batch(labels))).item();
}

double discrepancy_loss(const Array& p1, const Array& p2) {
    ad::Graph g;
    return g.value(loss::discrepancy(g, g.constant(as_batch(p1)), g.constant(as_batch(p2)))).item();
}

double pair_moment_distance(const Array& e1, const Array& e2, int order) {
    ad::Graph g;
    return g.value(loss::pair_moment_distance(g, g.constant(as_batch(e1)), g.constant(as_batch(e2)), order)).item();
}

double pm2_loss(const Array& real, const Array& syn_f, const Array& syn_m, int order) {
    ad::Graph g;
    return g
        .value(loss::paired_moment_matching(g, g.constant(as_batch(real)), g.constant(as_batch(syn_f)),
                                            g.constant(as_batch(syn_m)), order))
        .item();
}

double overall_moment_distance(const Array& batch_a, const Array& batch_b, int order) {
    ad::Graph g;
    return g
        .value(loss::overall_moment_distance(g, g.constant(as_batch(batch_a)), g.constant(as_batch(batch_b)), order))
        .item();
}

StepLosses step_losses(const LossWeights& w, const LossParts& parts) {
    const double l1 = 0.5 * (parts.au1 + parts.au2) + w.beta * parts.pm2;
    return StepLosses{l1, l1 - w.alpha * parts.dis, w.alpha * parts.dis};
}

}  // namespace pm2
