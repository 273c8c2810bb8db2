#pragma once

// problem definitions and the composite physics-informed objective:
//   total = w_res * mean(residual^2)
//         + w_icbc * sum((u - target)^2 over IC/BC rows)
//         + w_data * mean((u - y)^2 over supervised points)
//         + w_anchor * optional problem-specific penalty

#include <array>
#include <functional>
#include <sstream>
#include <vector>

#include "common.hpp"
#include "model.hpp"
#include "tape.hpp"

namespace mixfunn {

struct Box {
    std::vector<std::array<double, 2>> axes;  // [lo, hi] per input
    int dim() const { return int(axes.size()); }
};

// per-axis magnitude, floored at 1 so narrow domains keep the unit scheme
inline std::vector<double> box_input_scales(const Box& box) {
    std::vector<double> s;
    s.reserve(box.axes.size());
    for (const auto& ax : box.axes)
        s.push_back(std::max({1.0, std::fabs(ax[0]), std::fabs(ax[1])}));
    return s;
}

struct IcbcRow {
    std::vector<double> point;
    int d_axis = -1;  // -1: condition on u itself, else on du/d input[d_axis]
    double target = 0;
};

struct ProblemDef {
    std::string name;
    int n_inputs = 1;
    std::vector<std::string> input_names;
    std::vector<int> wrt{0};
    int order = 2;
    Box train_box, test_box;
    std::vector<IcbcRow> icbc;
    double w_res = 1, w_icbc = 1, w_data = 1, w_anchor = 1;

    // per-point residual node (batch,1,1) from the model's jet node
    std::function<int(Tape&, int u, const std::vector<double>& pts, int batch)> residual;
    // optional scalar penalty (e.g. normalization anchor)
    std::function<int(Tape&, const Model&, const EmitCtx&)> anchor;
    // optional custom collocation sampler (row-major points)
    std::function<std::vector<double>(int n, std::mt19937_64&)> sampler;
    // optional custom evaluation grid (test? -> points)
    std::function<std::vector<double>(bool test, int n)> grid;

    std::function<double(const std::vector<double>&)> oracle;
    bool has_oracle = false;
    bool oracle_sign_invariant = false;  // eigenfunctions: compare up to +-1

    std::vector<double> data_points;  // row-major, optional
    std::vector<double> data_values;

    JetSpec jet_spec() const { return {n_inputs, wrt, order}; }
};

inline std::vector<double> sample_collocation(const Box& box, int n, std::mt19937_64& rng) {
    for (auto& ax : box.axes)
        if (!(ax[1] > ax[0]))
            throw error("sample_collocation: degenerate axis [" + std::to_string(ax[0]) + ", " +
                        std::to_string(ax[1]) + "]");
    std::vector<double> pts(std::size_t(n) * box.dim());
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < box.dim(); ++a)
            pts[std::size_t(i) * box.dim() + a] = uniform(rng, box.axes[a][0], box.axes[a][1]);
    return pts;
}

inline std::vector<double> sample_collocation(const ProblemDef& prob, int n,
                                              std::mt19937_64& rng) {
    return prob.sampler ? prob.sampler(n, rng) : sample_collocation(prob.train_box, n, rng);
}

inline int zero_scalar(Tape& tape) { return tape.const_vec({0.0}, 1, 1); }

// mean(residual^2) over the batch; non-finite residuals are reported with the
// offending point
inline int residual_loss(Tape& tape, const Model& model, const ProblemDef& prob,
                         const std::vector<double>& pts, const EmitCtx& ctx = {}) {
    const int batch = int(pts.size()) / prob.n_inputs;
    int u = emit_model(tape, model, pts.data(), batch, ctx);
    int r = prob.residual(tape, u, pts, batch);
    const JetTensor& rv = tape.out(r);
    for (int b = 0; b < batch; ++b)
        if (!std::isfinite(rv.d[b])) {
            std::ostringstream os;
            os << "non-finite residual at point (";
            for (int a = 0; a < prob.n_inputs; ++a)
                os << (a ? ", " : "") << pts[std::size_t(b) * prob.n_inputs + a];
            os << ")";
            throw error(os.str());
        }
    return tape.mean(tape.mul(r, r));
}

// sum of squared IC/BC violations (value or first-derivative conditions)
inline int icbc_loss(Tape& tape, const Model& model, const ProblemDef& prob,
                     const EmitCtx& ctx = {}) {
    if (prob.icbc.empty()) return zero_scalar(tape);
    const int n = int(prob.icbc.size());
    std::vector<double> pts(std::size_t(n) * prob.n_inputs);
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < prob.n_inputs; ++a)
            pts[std::size_t(i) * prob.n_inputs + a] = prob.icbc[i].point[a];
    int u = emit_model(tape, model, pts.data(), n, ctx);
    const JetSpec& js = tape.spec();
    std::vector<std::pair<int, int>> entries;
    std::vector<double> targets;
    for (int i = 0; i < n; ++i) {
        int comp = 0;
        if (prob.icbc[i].d_axis >= 0) {
            int slot = js.slot_of_input(prob.icbc[i].d_axis);
            if (slot < 0 || js.order < 1)
                throw error("icbc derivative condition on untracked input");
            comp = js.d1_at(slot);
        }
        entries.push_back({i, comp});
        targets.push_back(prob.icbc[i].target);
    }
    int e = tape.extract_entries(u, std::move(entries));
    int diff = tape.sub(e, tape.const_vec(std::move(targets), n, 1));
    return tape.sum(tape.mul(diff, diff));
}

// mean squared error on supervised pairs, 0 if none
inline int data_loss(Tape& tape, const Model& model, const ProblemDef& prob,
                     const EmitCtx& ctx = {}) {
    if (prob.data_values.empty()) return zero_scalar(tape);
    const int n = int(prob.data_values.size());
    int u = emit_model(tape, model, prob.data_points.data(), n, ctx);
    int diff = tape.sub(tape.extract_comp(u, 0), tape.const_vec(prob.data_values, n, 1));
    return tape.mean(tape.mul(diff, diff));
}

struct LossNodes {
    int total = -1, res = -1, icbc = -1, data = -1, anchor = -1;
};

inline LossNodes total_loss(Tape& tape, const Model& model, const ProblemDef& prob,
                            const std::vector<double>& pts, const EmitCtx& ctx = {}) {
    LossNodes ln;
    ln.res = residual_loss(tape, model, prob, pts, ctx);
    ln.icbc = icbc_loss(tape, model, prob, ctx);
    ln.data = data_loss(tape, model, prob, ctx);
    ln.anchor = prob.anchor ? prob.anchor(tape, model, ctx) : zero_scalar(tape);
    ln.total = tape.add(tape.add(tape.scale(ln.res, prob.w_res), tape.scale(ln.icbc, prob.w_icbc)),
                        tape.add(tape.scale(ln.data, prob.w_data),
                                 tape.scale(ln.anchor, prob.w_anchor)));
    return ln;
}

}  // namespace mixfunn
