#pragma once

// global magnitude pruning over mixing weights, with reachability masking of
// pre-activation parameters and optional fine-tuning sweeps

#include "train.hpp"

namespace mixfunn {

struct PruneReport {
    double ratio = 0;
    int removed = 0;         // masked mixing weights, cumulative
    int params_before = 0;   // unmasked params before the call
    int params_after = 0;    // unmasked params after
    int effective = 0;       // kept mixing weights + pre params of live neurons
    double residual_error = std::numeric_limits<double>::quiet_NaN();
};

// mean squared residual over a uniform train-domain grid plus the IC/BC loss;
// the selection metric for "best" runs (never uses the oracle)
inline double residual_error(const Model& model, const ProblemDef& prob, int n = 512,
                             double temperature = 1.0) {
    JetSpec js = prob.jet_spec();
    Tape tape(&js, model.view());
    EmitCtx ctx;
    ctx.temperature = temperature;
    std::vector<double> pts = eval_grid(prob, false, n);
    int res = residual_loss(tape, model, prob, pts, ctx);
    int ib = icbc_loss(tape, model, prob, ctx);
    return tape.value(res) + tape.value(ib);
}

// masks the floor(ratio*K) smallest-magnitude mixing weights (K = total mixing
// weights, already-masked ones counted first, ties by parameter index), then
// masks pre-activation rows of neurons whose slots are all gone
inline PruneReport magnitude_prune(Model& model, double ratio) {
    if (!model.arch.is_mixed()) throw error("magnitude_prune: model has no mixing weights");
    if (ratio < 0 || ratio > 1) throw error("magnitude_prune: ratio out of [0, 1]");
    const MixArch& a = model.arch.mix;
    PruneReport rep;
    rep.ratio = ratio;
    rep.params_before = model.n_effective();
    const int K = a.n_mix();
    const int target = int(std::floor(ratio * K + 1e-9));

    std::vector<int> order(K);
    for (int i = 0; i < K; ++i) order[i] = i;
    auto key = [&](int i) {
        int pi = a.mix_off() + i;
        return model.mask[pi] == 0.0 ? -1.0 : std::abs(model.params[pi]);
    };
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return key(x) < key(y); });
    for (int r = 0; r < target; ++r) model.mask[a.mix_off() + order[r]] = 0.0;

    int kept_mix = 0;
    for (int i = 0; i < K; ++i) kept_mix += model.mask[a.mix_off() + i] != 0.0;
    rep.removed = K - kept_mix;

    int live_neurons = 0;
    for (int m = 0; m < a.neurons; ++m) {
        bool alive = false;
        for (int q = 0; q < a.q(); ++q) alive |= model.mask[a.mix_index(m, q)] != 0.0;
        if (alive) {
            ++live_neurons;
            continue;
        }
        model.mask[a.pre_bias_off() + m] = 0.0;
        for (int c = 0; c < a.pre_cols(); ++c)
            model.mask[a.pre_w_off() + m * a.pre_cols() + c] = 0.0;
    }
    rep.params_after = model.n_effective();
    rep.effective = kept_mix + live_neurons * (1 + a.pre_cols());
    return rep;
}

// per ratio: clone the trained model, mask, optionally fine-tune (keeping the
// best-loss snapshot), and record the residual error
inline std::vector<PruneReport> prune_sweep(const Model& trained, const ProblemDef& prob,
                                            const std::vector<double>& ratios,
                                            const TrainConfig& fine_tune_cfg,
                                            int fine_tune_epochs = 1000,
                                            std::vector<Model>* out_models = nullptr) {
    std::vector<PruneReport> reps;
    const double eval_T = fine_tune_cfg.T_min;
    for (double r : ratios) {
        Model clone = trained;
        PruneReport rep = magnitude_prune(clone, r);
        if (fine_tune_epochs > 0) {
            TrainConfig ft = fine_tune_cfg;
            ft.epochs = fine_tune_epochs;
            ft.T0 = ft.T_min;  // no re-annealing during fine-tune
            train(clone, prob, ft);
        }
        rep.residual_error = residual_error(clone, prob, 512, eval_T);
        reps.push_back(rep);
        if (out_models) out_models->push_back(std::move(clone));
    }
    return reps;
}

}  // namespace mixfunn
