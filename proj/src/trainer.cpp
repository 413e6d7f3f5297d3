#include "pm2/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "pm2/random.hpp"
#include "pm2/text.hpp"

namespace pm2 {

namespace {

using Moment = ModePlan::Moment;

struct Bound {
    MlpVars encoder, head1, head2;
};

Bound bind_all(ad::Graph& g, const ModelParams& p, ParamGroups trainable) {
    return Bound{bind_mlp(g, p.encoder, trainable.encoder), bind_mlp(g, p.classifier1, trainable.classifier1),
                 bind_mlp(g, p.classifier2, trainable.classifier2)};
}

struct SourceTerms {
    ad::Var au1, au2;
    ad::Var moment;
    bool has_moment = false;
};

// The AU loss rejects NaN input outright; during training that is an abort.
ad::Var au_term(ad::Graph& g, ad::Var preds, const Array& labels, const char* name) {
    if (!g.value(preds).all_finite()) throw TrainingAborted(-1, 0, name);
    return loss::au(g, preds, labels);
}

// Encodes real, syn_f and syn_m in one pass and builds the source-side terms.
SourceTerms source_terms(ad::Graph& g, const Bound& b, const StepBatch& batch, const ModePlan& terms) {
    const std::size_t n = batch.real.rows();
    ad::Var x = g.constant(batch.real);
    if (terms.moment != Moment::None) {
        x = g.concat_rows(g.concat_rows(x, g.constant(batch.syn_f)), g.constant(batch.syn_m));
    }
    const ad::Var e = mlp_forward(g, b.encoder, x);
    const ad::Var e_real = terms.moment == Moment::None ? e : g.slice_rows(e, 0, n);
    SourceTerms s;
    s.au1 = au_term(g, head_forward(g, b.head1, e_real), batch.labels, "au1");
    s.au2 = au_term(g, head_forward(g, b.head2, e_real), batch.labels, "au2");
    const int order = terms.weights.moment_order;
    if (terms.moment == Moment::Paired) {
        s.moment = loss::paired_moment_matching(g, e_real, g.slice_rows(e, n, 2 * n), g.slice_rows(e, 2 * n, 3 * n),
                                                order);
        s.has_moment = true;
    } else if (terms.moment == Moment::Overall) {
        s.moment = loss::overall_moment_distance(g, e_real, g.slice_rows(e, n, 3 * n), order);
        s.has_moment = true;
    }
    return s;
}

ad::Var target_discrepancy(ad::Graph& g, const Bound& b, const Array& target) {
    const ad::Var e = mlp_forward(g, b.encoder, g.constant(target));
    return loss::discrepancy(g, head_forward(g, b.head1, e), head_forward(g, b.head2, e));
}

double eval_discrepancy(const ModelParams& p, const Array& target) {
    ad::Graph g;
    const Bound b = bind_all(g, p, ParamGroups{});
    return g.value(target_discrepancy(g, b, target)).item();
}

LossParts eval_source_parts(const ModelParams& p, const StepBatch& batch, const ModePlan& terms) {
    ad::Graph g;
    const Bound b = bind_all(g, p, ParamGroups{});
    const SourceTerms s = source_terms(g, b, batch, terms);
    LossParts parts;
    parts.au1 = g.value(s.au1).item();
    parts.au2 = g.value(s.au2).item();
    if (s.has_moment) parts.pm2 = g.value(s.moment).item();
    return parts;
}

std::vector<Array> collect(const ad::Graph& g, const MlpVars& vars, bool wanted) {
    std::vector<Array> out;
    if (!wanted) return out;
    for (std::size_t i = 0; i < vars.weights.size(); ++i) {
        out.push_back(g.grad(vars.weights[i]));
        out.push_back(g.grad(vars.biases[i]));
    }
    return out;
}

void apply_updates(Mlp& mlp, const std::vector<Array>& grads, std::vector<AdamState>& states, const AdamW& opt,
                   const TrainConfig& c) {
    for (std::size_t i = 0; i < mlp.size(); ++i) {
        opt.step(mlp[i].weight, grads[2 * i], states[2 * i], c.learning_rate, c.weight_decay);
        opt.step(mlp[i].bias, grads[2 * i + 1], states[2 * i + 1], c.learning_rate, c.weight_decay);
    }
}

void check_finite(const LossParts& p, std::int64_t iter, int step) {
    const std::pair<const char*, double> terms[] = {{"au1", p.au1}, {"au2", p.au2}, {"dis", p.dis}, {"pm2", p.pm2}};
    for (const auto& [name, v] : terms) {
        if (!std::isfinite(v)) throw TrainingAborted(iter, step, name);
    }
}

HistoryRow make_row(std::int64_t iter, int step, const LossWeights& w, const LossParts& p) {
    const StepLosses l = step_losses(w, p);
    return HistoryRow{iter, step, l.l1, l.l2, l.l3, p.au1, p.au2, p.dis, p.pm2, 0.0};
}

}  // namespace

ModePlan plan_for(const TrainConfig& c) {
    ModePlan t;
    t.weights = c.weights;
    switch (c.mode) {
        case TrainMode::DirectTransfer:
            t.weights.alpha = 0.0;
            t.weights.beta = 0.0;
            break;
        case TrainMode::McdOnly:
            t.weights.beta = 0.0;
            t.adversarial = true;
            break;
        case TrainMode::Pm2Only:
            t.weights.alpha = 0.0;
            t.moment = Moment::Paired;
            break;
        case TrainMode::FullPm2:
            t.moment = Moment::Paired;
            t.adversarial = true;
            break;
        case TrainMode::OverallMm:
            t.moment = Moment::Overall;
            t.adversarial = true;
            break;
    }
    // A zero weight removes the term, so alpha = beta = 0 is direct transfer.
    if (t.weights.beta == 0.0) t.moment = Moment::None;
    if (t.weights.alpha == 0.0) t.adversarial = false;
    return t;
}

std::string_view mode_name(TrainMode m) noexcept {
    switch (m) {
        case TrainMode::DirectTransfer: return "direct_transfer";
        case TrainMode::McdOnly: return "mcd_only";
        case TrainMode::Pm2Only: return "pm2_only";
        case TrainMode::FullPm2: return "full_pm2";
        case TrainMode::OverallMm: return "overall_mm";
    }
    return "unknown";
}

TrainMode mode_from_name(std::string_view name) {
    for (TrainMode m : kAllModes) {
        if (mode_name(m) == name) return m;
    }
    throw std::invalid_argument("unknown training mode '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig.epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig.batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig.learning_rate must be > 0");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("TrainConfig.weight_decay must be >= 0");
    if (step3_repeats < 1) throw std::invalid_argument("TrainConfig.step3_repeats must be >= 1");
    weights.validate();
}

TrainingAborted::TrainingAborted(std::int64_t iter, int step, std::string term)
    : std::runtime_error("training aborted at iteration " + std::to_string(iter) + ", step " + std::to_string(step) +
                         ": non-finite " + term),
      iter_(iter),
      step_(step),
      term_(std::move(term)) {}

StepGradients step_gradients(const ModelParams& params, const StepBatch& batch, const TrainConfig& config, int step,
                             std::optional<ParamGroups> wrt) {
    const ParamGroups mask = wrt.value_or(freeze_mask(step));
    const ModePlan terms = plan_for(config);
    const LossWeights& w = terms.weights;

    ad::Graph g;
    const Bound b = bind_all(g, params, mask);
    StepGradients out;
    auto objective = [&]() -> ad::Var {
        if (step == 3) {
            const ad::Var dis = target_discrepancy(g, b, batch.target);
            out.parts.dis = g.value(dis).item();
            return g.scale(dis, w.alpha);
        }
        const SourceTerms s = source_terms(g, b, batch, terms);
        out.parts.au1 = g.value(s.au1).item();
        out.parts.au2 = g.value(s.au2).item();
        ad::Var root = g.scale(g.add(s.au1, s.au2), 0.5);
        if (s.has_moment) {
            out.parts.pm2 = g.value(s.moment).item();
            root = g.add(root, g.scale(s.moment, w.beta));
        }
        if (step == 2) {
            const ad::Var dis = target_discrepancy(g, b, batch.target);
            out.parts.dis = g.value(dis).item();
            root = g.sub(root, g.scale(dis, w.alpha));
        }
        return root;
    };
    ad::Var root{};
    try {
        root = objective();
    } catch (const TrainingAborted& e) {
        throw TrainingAborted(e.iter(), step, e.term());
    }
    out.loss = g.value(root).item();
    g.backward(root);
    out.encoder = collect(g, b.encoder, mask.encoder);
    out.classifier1 = collect(g, b.head1, mask.classifier1);
    out.classifier2 = collect(g, b.head2, mask.classifier2);
    return out;
}

namespace {

StepGradients checked_step(const ModelParams& p, const StepBatch& batch, const TrainConfig& config, int step,
                           std::int64_t iter) {
    try {
        return step_gradients(p, batch, config, step);
    } catch (const TrainingAborted& e) {
        throw TrainingAborted(iter, e.step(), e.term());
    }
}

}  // namespace

TrainResult train(const ModelParams& init, const std::vector<PairedTriple>& source, const std::vector<Sample>& target,
                  const TrainConfig& config) {
    config.validate();
    const ModePlan terms = plan_for(config);
    if (source.empty()) throw std::invalid_argument("train: no source triples");
    if (terms.adversarial && target.empty()) throw std::invalid_argument("train: mode needs target samples");
    const std::size_t n_aus = init.config.n_aus;

    TrainResult result{init, {}};
    ModelParams& p = result.params;
    OptimizerState state = OptimizerState::for_params(p);
    const AdamW opt;

    Rng source_rng(config.seed, 1);
    Rng target_rng(config.seed, 2);
    std::vector<std::size_t> source_order(source.size());
    std::iota(source_order.begin(), source_order.end(), std::size_t{0});
    std::vector<std::size_t> target_order(target.size());
    std::iota(target_order.begin(), target_order.end(), std::size_t{0});
    std::size_t target_cursor = target.size();

    std::int64_t iter = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        source_rng.shuffle(source_order);
        for (std::size_t start = 0; start < source.size(); start += config.batch_size) {
            const std::size_t b = std::min(config.batch_size, source.size() - start);
            std::vector<const Sample*> real, syn_f, syn_m, tgt;
            StepBatch batch;
            batch.labels = Array::matrix(b, n_aus);
            for (std::size_t i = 0; i < b; ++i) {
                const PairedTriple& t = source[source_order[start + i]];
                real.push_back(&t.real);
                syn_f.push_back(&t.syn_f);
                syn_m.push_back(&t.syn_m);
                for (std::size_t k = 0; k < n_aus; ++k) batch.labels(i, k) = t.real.labels.at(k);
            }
            batch.real = feature_matrix(real);
            batch.syn_f = feature_matrix(syn_f);
            batch.syn_m = feature_matrix(syn_m);
            if (terms.adversarial) {
                for (std::size_t i = 0; i < b; ++i) {
                    if (target_cursor == target.size()) {
                        target_rng.shuffle(target_order);
                        target_cursor = 0;
                    }
                    tgt.push_back(&target[target_order[target_cursor++]]);
                }
                batch.target = feature_matrix(tgt);
            }

            // Step 1: source classification plus real/synthetic alignment.
            {
                StepGradients sg = checked_step(p, batch, config, 1, iter);
                if (terms.adversarial) sg.parts.dis = eval_discrepancy(p, batch.target);
                check_finite(sg.parts, iter, 1);
                result.history.push_back(make_row(iter, 1, terms.weights, sg.parts));
                apply_updates(p.encoder, sg.encoder, state.encoder, opt, config);
                apply_updates(p.classifier1, sg.classifier1, state.classifier1, opt, config);
                apply_updates(p.classifier2, sg.classifier2, state.classifier2, opt, config);
            }
            if (terms.adversarial) {
                // Step 2: classifiers maximize target discrepancy, encoder fixed.
                StepGradients sg = checked_step(p, batch, config, 2, iter);
                check_finite(sg.parts, iter, 2);
                result.history.push_back(make_row(iter, 2, terms.weights, sg.parts));
                apply_updates(p.classifier1, sg.classifier1, state.classifier1, opt, config);
                apply_updates(p.classifier2, sg.classifier2, state.classifier2, opt, config);

                // Step 3: encoder minimizes target discrepancy, classifiers fixed.
                for (int r = 0; r < config.step3_repeats; ++r) {
                    StepGradients sg3 = checked_step(p, batch, config, 3, iter);
                    LossParts parts = eval_source_parts(p, batch, terms);
                    parts.dis = sg3.parts.dis;
                    check_finite(parts, iter, 3);
                    HistoryRow row = make_row(iter, 3, terms.weights, parts);
                    apply_updates(p.encoder, sg3.encoder, state.encoder, opt, config);
                    if (config.track_step3) row.dis_after = eval_discrepancy(p, batch.target);
                    result.history.push_back(row);
                }
            }
            ++iter;
        }
    }
    return result;
}

void write_history_csv(const std::vector<HistoryRow>& history, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_history_csv: cannot open " + path.string());
    out << "iter,step,L1,L2,L3,au1,au2,dis,pm2\n";
    for (const HistoryRow& r : history) {
        out << r.iter << ',' << r.step;
        for (double v : {r.l1, r.l2, r.l3, r.au1, r.au2, r.dis, r.pm2}) out << ',' << text::format_exact(v);
        out << '\n';
    }
    if (!out) throw std::runtime_error("write_history_csv: write failed for " + path.string());
}

}  // namespace pm2
