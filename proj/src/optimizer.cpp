#include <cmath>
#include <stdexcept>

#include "pm2/trainer.hpp"

namespace pm2 {

void AdamW::step(Array& param, const Array& grad, AdamState& state, double lr, double weight_decay) const {
    if (param.shape != grad.shape) {
        throw std::invalid_argument("AdamW: gradient shape " + shape_string(grad.shape) + " does not match parameter " +
                                    shape_string(param.shape));
    }
    if (!grad.all_finite()) throw std::invalid_argument("AdamW: non-finite gradient");
    if (state.m.shape != param.shape || state.m.size() != param.size()) {
        state.m = Array(param.shape);
        state.v = Array(param.shape);
        state.step = 0;
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad.data[i];
        state.m.data[i] = beta1 * state.m.data[i] + (1.0 - beta1) * g;
        state.v.data[i] = beta2 * state.v.data[i] + (1.0 - beta2) * g * g;
        const double m_hat = state.m.data[i] / c1;
        const double v_hat = state.v.data[i] / c2;
        param.data[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps) + weight_decay * param.data[i]);
    }
}

OptimizerState OptimizerState::for_params(const ModelParams& params) {
    auto states = [](const Mlp& mlp) {
        std::vector<AdamState> s;
        for (const Layer& l : mlp) {
            s.push_back(AdamState{Array(l.weight.shape), Array(l.weight.shape), 0});
            s.push_back(AdamState{Array(l.bias.shape), Array(l.bias.shape), 0});
        }
        return s;
    };
    return OptimizerState{states(params.encoder), states(params.classifier1), states(params.classifier2)};
}

ParamGroups freeze_mask(int step) {
    switch (step) {
        case 1: return ParamGroups{true, true, true};
        case 2: return ParamGroups{false, true, true};
        case 3: return ParamGroups{true, false, false};
        default: throw std::invalid_argument("freeze_mask: step must be 1, 2 or 3, got " + std::to_string(step));
    }
}

}  // namespace pm2
