#pragma once

// Adam training loop over the physics objective, with per-slot dropout on the
// mixed-function outputs and an annealed softmax temperature

#include <chrono>
#include <limits>

#include "physics.hpp"

namespace mixfunn {

struct TrainConfig {
    int epochs = 10000;
    double lr = 0.1;  // 0.01 works better for the tanh MLP baseline
    double beta1 = 0.9, beta2 = 0.9;
    double eps = 1e-8;
    int collocation = 128;
    bool resample = true;  // fresh collocation batch each epoch
    double dropout = 0.1;  // per-slot drop probability inside mixed neurons
    double T0 = 1.0, T_min = 0.1;
    double anneal_frac = 0.8;   // T reaches T_min at this fraction of epochs
    double weight_decay = 0.0;  // decoupled; mixing weights are exempt
    // residual weight ramps 0 -> w_res over this fraction of epochs (0 = off).
    // Breaks the small-amplitude deadlock where the residual crushes growth
    // before shape parameters ever see a gradient.
    double res_warmup_frac = 0.0;
    std::uint64_t seed = 0;  // collocation + dropout stream
};

// exponential decay, clipped at T_min; constant when T0 == T_min
inline double anneal_temperature(int epoch, const TrainConfig& cfg) {
    if (cfg.T_min <= 0) throw error("anneal_temperature: T_min must be > 0");
    if (cfg.T0 <= cfg.T_min) return cfg.T0;
    double span = cfg.anneal_frac * cfg.epochs;
    if (span < 1) return cfg.T_min;
    double gamma = std::pow(cfg.T_min / cfg.T0, 1.0 / span);
    return std::max(cfg.T_min, cfg.T0 * std::pow(gamma, double(epoch)));
}

// inverted dropout: survivors scaled by 1/(1-p) so the mean is preserved and
// evaluation needs no rescaling
inline std::vector<double> dropout_multipliers(int n, double p, std::mt19937_64& rng) {
    if (p < 0 || p >= 1) throw error("dropout: p must be in [0, 1)");
    std::vector<double> m(n, 1.0);
    if (p == 0) return m;
    const double keep = 1.0 / (1.0 - p);
    for (int i = 0; i < n; ++i) m[i] = uniform(rng, 0, 1) < p ? 0.0 : keep;
    return m;
}

inline std::vector<double> apply_dropout(const std::vector<double>& values, double p,
                                         std::mt19937_64& rng, bool training = true) {
    if (!training || p == 0) return values;
    auto m = dropout_multipliers(int(values.size()), p, rng);
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] * m[i];
    return out;
}

struct AdamState {
    std::vector<double> m, v;
    long step = 0;
    explicit AdamState(int n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// standard Adam with bias correction; masked parameters are left untouched
// decay marks parameters subject to decoupled weight decay (nullptr = all).
// Decay is what lets a weight the loss does not constrain actually reach zero:
// Adam alone random-walks it at the lr scale forever.
inline void adam_step(std::vector<double>& params, const std::vector<double>& grads,
                      const std::vector<double>& mask, AdamState& st, const TrainConfig& cfg,
                      const std::vector<double>* decay = nullptr) {
    if (params.size() != grads.size() || params.size() != st.m.size())
        throw error("adam_step: shape mismatch");
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (mask[i] != 0.0 && !std::isfinite(grads[i]))
            throw error("adam_step: non-finite gradient at parameter " + std::to_string(i));
    ++st.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(st.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(st.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (mask[i] == 0.0) continue;
        st.m[i] = cfg.beta1 * st.m[i] + (1 - cfg.beta1) * grads[i];
        st.v[i] = cfg.beta2 * st.v[i] + (1 - cfg.beta2) * grads[i] * grads[i];
        const double mh = st.m[i] / bc1, vh = st.v[i] / bc2;
        params[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
        if (cfg.weight_decay > 0 && (!decay || (*decay)[i] != 0.0))
            params[i] -= cfg.lr * cfg.weight_decay * params[i];
    }
}

struct EpochRecord {
    int epoch = 0;
    double res = 0, icbc = 0, data = 0, anchor = 0, total = 0, T = 1;
};

struct TrainHistory {
    std::vector<EpochRecord> records;
    std::vector<double> best_params;
    int best_epoch = -1;
    double best_total = std::numeric_limits<double>::infinity();
    std::vector<double> final_params;
    bool failed = false;
    std::string fail_reason;
    double wall_seconds = 0;
};

// Trains in place; on return the model carries the best-total-loss snapshot
// and history.final_params the last iterate. Deterministic per (model, seed).
inline TrainHistory train(Model& model, const ProblemDef& prob, const TrainConfig& cfg) {
    TrainHistory hist;
    if (cfg.epochs <= 0) return hist;
    const auto t_start = std::chrono::steady_clock::now();
    auto rng = rng_stream(cfg.seed, "train");
    AdamState st(model.n_params());
    const bool mixed = model.arch.is_mixed();
    const int n_slots = mixed ? model.arch.mix.n_mix() : 0;
    JetSpec js = prob.jet_spec();
    std::vector<double> pts = sample_collocation(prob, cfg.collocation, rng);
    // fixed yardstick for the per-epoch records and the best-snapshot choice;
    // resampled training batches would otherwise let a lucky draw win
    auto mon_rng = rng_stream(cfg.seed, "monitor");
    std::vector<double> mon = sample_collocation(prob, cfg.collocation, mon_rng);
    // mixing weights are exempt from decay: under softmax, pulling the logits
    // toward uniform would resurrect suppressed function slots
    std::vector<double> decay(model.n_params(), 1.0);
    if (mixed)
        for (int i = 0; i < model.arch.mix.n_mix(); ++i)
            decay[std::size_t(model.arch.mix.mix_off() + i)] = 0.0;

    for (int e = 0; e < cfg.epochs; ++e) {
        if (cfg.resample && e > 0) pts = sample_collocation(prob, cfg.collocation, rng);
        EmitCtx ctx;
        ctx.temperature = anneal_temperature(e, cfg);
        std::vector<double> drop;
        if (mixed && cfg.dropout > 0) {
            drop = dropout_multipliers(n_slots, cfg.dropout, rng);
            ctx.dropout = &drop;
        }
        Tape tape(&js, model.view());
        LossNodes ln;
        double ramp = 1.0;
        if (cfg.res_warmup_frac > 0) {
            double span = cfg.res_warmup_frac * cfg.epochs;
            if (span >= 1 && e < span) ramp = e / span;
        }
        try {
            if (ramp < 1.0) {
                ProblemDef warm = prob;
                warm.w_res = prob.w_res * ramp;
                ln = total_loss(tape, model, warm, pts, ctx);
            } else {
                ln = total_loss(tape, model, prob, pts, ctx);
            }
        } catch (const error& err) {
            hist.failed = true;
            hist.fail_reason = err.what();
            break;
        }
        // recorded losses (and the best-snapshot choice) come from the
        // deliverable network on the fixed monitor set: no dropout, final
        // temperature. A lucky dropout mask or batch draw must not win
        // selection, and losses at different softmax temperatures are not
        // comparable across epochs.
        EmitCtx clean;
        clean.temperature = std::min(ctx.temperature, cfg.T_min);
        EpochRecord rec;
        rec.epoch = e;
        {
            Tape ev(&js, model.view());
            try {
                LossNodes cl = total_loss(ev, model, prob, mon, clean);
                rec.res = ev.value(cl.res);
                rec.icbc = ev.value(cl.icbc);
                rec.data = ev.value(cl.data);
                rec.anchor = ev.value(cl.anchor);
                rec.total = ev.value(cl.total);
            } catch (const error& err) {
                hist.failed = true;
                hist.fail_reason = err.what();
                break;
            }
        }
        rec.T = ctx.temperature;
        hist.records.push_back(rec);
        if (!std::isfinite(rec.total)) {
            hist.failed = true;
            hist.fail_reason = "non-finite total loss at epoch " + std::to_string(e);
            break;
        }
        if (rec.total < hist.best_total) {
            hist.best_total = rec.total;
            hist.best_epoch = e;
            hist.best_params = model.params;
        }
        try {
            std::vector<double> grads = tape.backward(ln.total);
            adam_step(model.params, grads, model.mask, st, cfg, &decay);
        } catch (const error& err) {
            hist.failed = true;
            hist.fail_reason = err.what();
            break;
        }
        model.epoch = e + 1;
    }
    hist.final_params = model.params;
    if (hist.best_epoch >= 0) model.params = hist.best_params;
    hist.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return hist;
}

}  // namespace mixfunn
