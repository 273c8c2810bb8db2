#pragma once

// model variants: mixed-function networks (first- or second-order
// pre-activations), a dense tanh MLP baseline, the hybrid MLP whose first
// layer has second-order pre-activations, and analytic stubs for oracle
// plumbing. parameters live in one flat vector with a documented layout so
// pruning, checkpoints and extraction can address them stably.

#include <functional>
#include <string>
#include <vector>

#include "common.hpp"
#include "functions.hpp"
#include "jet.hpp"
#include "neuron.hpp"
#include "tape.hpp"

namespace mixfunn {

enum class Variant { MixFunn, Mix2Funn, MlpPinn, Hybrid, Analytic };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::MixFunn: return "mixfunn";
        case Variant::Mix2Funn: return "mix2funn";
        case Variant::MlpPinn: return "mlp_pinn";
        case Variant::Hybrid: return "hybrid";
        case Variant::Analytic: return "analytic";
    }
    return "?";
}

inline Variant variant_from_name(std::string_view s) {
    for (Variant v : {Variant::MixFunn, Variant::Mix2Funn, Variant::MlpPinn, Variant::Hybrid,
                      Variant::Analytic})
        if (variant_name(v) == s) return v;
    throw error("unknown variant: " + std::string(s));
}

// bank of M mixed-function neurons. each neuron has ONE pre-activation over
// the raw inputs (second-order for mix2funn, affine for mixfunn) feeding its
// Q function slots; the output neuron combines [bank ++ optionally inputs]
// linearly or as a second-order form.
//
// flat parameter layout, in order:
//   [pre biases: M] [pre weights: M x (N + tri(N) if second-order)]
//   [mix weights: M x Q, row-major]
//   [output weights: Z] [output pair weights: tri(Z) if second-order output]
//   [output bias: 1 if enabled]           where Z = M (+ N if inputs passed)
struct MixArch {
    int n_inputs = 1;
    int neurons = 5;
    std::vector<FunctionKind> kinds{all_function_kinds.begin(), all_function_kinds.end()};
    bool second_order_pre = true;
    bool output_second_order = true;
    bool output_include_inputs = true;
    bool output_bias = false;
    MixNormalization normalization = MixNormalization::Raw;
    double safelog_k = default_safelog_k;
    // init-range multiplier for first-order pre weights. Periodic solutions
    // need the init population to span the frequency range: a weight far from
    // the target frequency gets no gradient until the amplitude has grown, and
    // by then the residual has crushed the amplitude.
    double pre_gain = 1.0;

    int q() const { return int(kinds.size()); }
    int pre_cols() const { return n_inputs + (second_order_pre ? tri_size(n_inputs) : 0); }
    int z() const { return neurons + (output_include_inputs ? n_inputs : 0); }
    int out_cols() const { return z() + (output_second_order ? tri_size(z()) : 0); }

    int pre_bias_off() const { return 0; }
    int pre_w_off() const { return neurons; }
    int mix_off() const { return neurons + neurons * pre_cols(); }
    int out_w_off() const { return mix_off() + neurons * q(); }
    int out_b_off() const { return output_bias ? out_w_off() + out_cols() : -1; }
    int n_params() const { return out_w_off() + out_cols() + (output_bias ? 1 : 0); }
    int n_mix() const { return neurons * q(); }
    int mix_index(int m, int qq) const { return mix_off() + m * q() + qq; }
};

// dense tanh layers; hybrid variants feed the first layer a second-order map
// of the inputs
struct MlpArch {
    int n_inputs = 1;
    std::vector<int> hidden{256, 256};
    bool second_order_first = false;

    int first_cols() const { return n_inputs + (second_order_first ? tri_size(n_inputs) : 0); }
    int n_params() const {
        int n = 0, in = first_cols();
        for (int h : hidden) {
            n += h * in + h;
            in = h;
        }
        return n + in + 1;  // output row + bias
    }
};

struct ArchSpec {
    Variant variant = Variant::Mix2Funn;
    MixArch mix;
    MlpArch mlp;
    // per-input magnitude over the training box (empty = unit). Mixed
    // variants consume x_i / scale_i so pre-activations and parameters stay
    // O(1) on wide domains, where e^|s| would otherwise start astronomically
    // large and a fixed Adam step would dwarf the natural scale of the
    // wide-column weights. The MLP baseline always takes raw inputs.
    std::vector<double> input_scales;

    double input_scale(int i) const {
        return i < int(input_scales.size()) ? input_scales[std::size_t(i)] : 1.0;
    }
    int n_inputs() const {
        return variant == Variant::MlpPinn || variant == Variant::Hybrid ? mlp.n_inputs
                                                                         : mix.n_inputs;
    }
    bool is_mixed() const {
        return variant == Variant::MixFunn || variant == Variant::Mix2Funn;
    }
    int n_params() const {
        if (is_mixed()) return mix.n_params();
        if (variant == Variant::Analytic) return 0;
        return mlp.n_params();
    }
};

// analytic stand-in evaluated through jets; no parameters
using AnalyticFn = std::function<JetScalar(const std::vector<JetScalar>&)>;

struct Model {
    ArchSpec arch;
    std::vector<double> params;
    std::vector<double> mask;  // 1.0 live, 0.0 pruned
    AnalyticFn analytic;       // only for Variant::Analytic

    // metadata carried into checkpoints
    std::uint64_t seed = 0;
    std::string problem;
    int epoch = 0;

    int n_params() const { return int(params.size()); }
    int n_effective() const {
        int n = 0;
        for (double m : mask) n += m != 0.0;
        return n;
    }
    ParamView view() const { return {params.data(), mask.data(), int(params.size())}; }
};

inline Model make_analytic_model(int n_inputs, AnalyticFn fn) {
    Model m;
    m.arch.variant = Variant::Analytic;
    m.arch.mix.n_inputs = n_inputs;
    m.arch.mlp.n_inputs = n_inputs;
    m.analytic = std::move(fn);
    return m;
}

// deterministic init: walk the layout in order; mix weights U[-1,1],
// affine/second-order weights U[-1/sqrt(fan_in), 1/sqrt(fan_in)], biases 0
inline Model build_model(const ArchSpec& spec, std::uint64_t seed) {
    Model m;
    m.arch = spec;
    m.seed = seed;
    if (spec.variant == Variant::Analytic) throw error("build_model: analytic has no parameters");
    m.params.assign(spec.n_params(), 0.0);
    m.mask.assign(spec.n_params(), 1.0);
    auto rng = rng_stream(seed, "init");

    if (spec.is_mixed()) {
        const MixArch& a = spec.mix;
        double pre_r = 1.0 / std::sqrt(double(a.pre_cols()));
        for (int i = 0; i < a.neurons * a.pre_cols(); ++i) {
            double g = i % a.pre_cols() < a.n_inputs ? a.pre_gain : 1.0;
            m.params[a.pre_w_off() + i] = uniform(rng, -g * pre_r, g * pre_r);
        }
        for (int i = 0; i < a.n_mix(); ++i) m.params[a.mix_off() + i] = uniform(rng, -1, 1);
        double out_r = 1.0 / std::sqrt(double(a.z()));
        for (int c = 0; c < a.out_cols(); ++c)
            m.params[a.out_w_off() + c] = uniform(rng, -out_r, out_r);
    } else {
        const MlpArch& a = spec.mlp;
        int off = 0, in = a.first_cols(), fan = a.n_inputs;
        for (std::size_t l = 0; l <= a.hidden.size(); ++l) {
            int rows = l < a.hidden.size() ? a.hidden[l] : 1;
            double r = 1.0 / std::sqrt(double(fan));
            for (int i = 0; i < rows * in; ++i) m.params[off + i] = uniform(rng, -r, r);
            off += rows * in + rows;  // weights + zero biases
            fan = in = rows;
        }
    }
    return m;
}

inline int count_params(const Model& m) { return m.n_params(); }
inline int count_mix_weights(const Model& m) {
    return m.arch.is_mixed() ? m.arch.mix.n_mix() : 0;
}

// ---- tape emission ----

struct EmitCtx {
    double temperature = 1.0;                    // softmax T at this step
    const std::vector<double>* dropout = nullptr;  // per-slot multipliers, M*Q
};

// emit the model's output jets for a batch of points; returns a (batch,1,k) node
inline int emit_model(Tape& tape, const Model& model, const double* pts, int batch,
                      const EmitCtx& ctx = {}) {
    const ArchSpec& spec = model.arch;
    const int N = spec.n_inputs();

    if (spec.variant == Variant::Analytic) {
        const JetSpec& js = tape.spec();
        JetTensor t(batch, 1, js.k());
        std::vector<double> point(N);
        for (int b = 0; b < batch; ++b) {
            for (int i = 0; i < N; ++i) point[i] = pts[b * N + i];
            JetScalar u = model.analytic(make_input_jets(&js, point));
            for (int c = 0; c < js.k(); ++c) t.at(c, b, 0) = u[c];
        }
        return tape.const_jet(std::move(t));
    }

    if (spec.is_mixed()) {
        // mixed variants consume normalized inputs x_i / scale_i so that
        // pre-activations, and with them every parameter, live at O(1) on
        // wide domains; derivatives stay w.r.t. the raw inputs
        std::vector<double> scales(std::size_t(N), 1.0);
        for (int i = 0; i < N; ++i) scales[std::size_t(i)] = spec.input_scale(i);
        int x = tape.input_jets(pts, batch, N, scales.data());
        const MixArch& a = spec.mix;
        int pre_in = a.second_order_pre ? tape.concat(x, tape.pair_products(x)) : x;
        int s = tape.affine(pre_in, a.pre_w_off(), a.neurons, a.pre_cols(), a.pre_bias_off());
        std::vector<int> kinds(a.neurons * a.q()), imap(a.neurons * a.q());
        for (int m = 0; m < a.neurons; ++m)
            for (int q = 0; q < a.q(); ++q) {
                kinds[m * a.q() + q] = int(a.kinds[q]);
                imap[m * a.q() + q] = m;
            }
        int f = tape.function_bank(s, std::move(kinds), std::move(imap), a.safelog_k);
        std::vector<double> drop = ctx.dropout ? *ctx.dropout : std::vector<double>{};
        int bank = tape.mixed_combine(f, a.mix_off(), a.neurons, a.q(),
                                      a.normalization == MixNormalization::Softmax,
                                      ctx.temperature, std::move(drop));
        int zin = a.output_include_inputs ? tape.concat(bank, x) : bank;
        int out_in = a.output_second_order ? tape.concat(zin, tape.pair_products(zin)) : zin;
        return tape.affine(out_in, a.out_w_off(), 1, a.out_cols(), a.out_b_off());
    }

    int x = tape.input_jets(pts, batch, N);
    const MlpArch& a = spec.mlp;
    int h = a.second_order_first ? tape.concat(x, tape.pair_products(x)) : x;
    int off = 0, in = a.first_cols();
    for (int width : a.hidden) {
        h = tape.tanh_map(tape.affine(h, off, width, in, off + width * in));
        off += width * in + width;
        in = width;
    }
    return tape.affine(h, off, 1, in, off + in);
}

// plain forward values on a batch of points (evaluation mode: no dropout)
inline std::vector<double> eval_values(const Model& model, const double* pts, int batch,
                                       const EmitCtx& ctx = {}) {
    JetSpec js{model.arch.n_inputs(), {}, 0};
    Tape tape(&js, model.view());
    int u = emit_model(tape, model, pts, batch, ctx);
    const JetTensor& t = tape.out(u);
    return {t.d.begin(), t.d.end()};
}

inline double forward(const Model& model, std::span<const double> point,
                      const EmitCtx& ctx = {}) {
    return eval_values(model, point.data(), 1, ctx)[0];
}

// jets of the model output at one point w.r.t. chosen inputs
inline JetValue eval_jet(const Model& model, std::span<const double> point, std::vector<int> wrt,
                         int order) {
    JetSpec js{model.arch.n_inputs(), std::move(wrt), order};
    Tape tape(&js, model.view());
    int u = emit_model(tape, model, point.data(), 1);
    const JetTensor& t = tape.out(u);
    JetValue v;
    v.value = t.at(0, 0, 0);
    for (int a = 0; a < js.m(); ++a) v.d1[js.wrt[a]] = t.at(js.d1_at(a), 0, 0);
    if (js.order >= 2)
        for (int a = 0; a < js.m(); ++a)
            for (int b = a; b < js.m(); ++b)
                v.d2[{js.wrt[a], js.wrt[b]}] = t.at(js.d2_at(a, b), 0, 0);
    return v;
}

// ---- per-problem defaults; counts are logged by callers ----

inline ArchSpec default_arch(Variant v, const std::string& problem, int n_inputs) {
    ArchSpec s;
    s.variant = v;
    s.mix.n_inputs = n_inputs;
    s.mlp.n_inputs = n_inputs;
    switch (v) {
        case Variant::Mix2Funn:
            s.mix.second_order_pre = true;
            if (problem == "burgers") {
                s.mix.neurons = 4;  // 56 params
                s.mix.output_second_order = false;
                s.mix.output_include_inputs = false;
            } else if (problem == "quantum_well") {
                s.mix.neurons = 5;  // 70 params
                s.mix.output_second_order = false;
                s.mix.output_include_inputs = false;
            } else {
                s.mix.neurons = 5;  // oscillators: 77 params, 35 mixing weights
                s.mix.output_second_order = true;
                s.mix.output_include_inputs = true;
            }
            break;
        case Variant::MixFunn:
            s.mix.neurons = 5;
            s.mix.second_order_pre = false;
            s.mix.output_second_order = false;
            s.mix.output_include_inputs = false;
            break;
        case Variant::MlpPinn: s.mlp.hidden = {256, 256}; break;
        case Variant::Hybrid:
            s.mlp.hidden = {5, 6};  // 73 params on 2 inputs
            s.mlp.second_order_first = true;
            break;
        case Variant::Analytic: break;
    }
    return s;
}

}  // namespace mixfunn
