#pragma once

// symbolic expression trees extracted from (pruned) mixed-function models:
// construction, constant-folding simplification, rendering, and verification
// against the masked model

#include <cstdio>

#include "model.hpp"
#include "physics.hpp"

namespace mixfunn {

struct Expr {
    enum class Kind { Const, Var, Add, Mul, Func };
    Kind kind = Kind::Const;
    double value = 0;                          // Const
    int var = 0;                               // Var: input index
    FunctionKind fn = FunctionKind::Identity;  // Func, one child
    double safelog_k = default_safelog_k;
    std::vector<Expr> kids;
};

inline Expr e_const(double v) {
    Expr e;
    e.value = v;
    return e;
}
inline Expr e_var(int i) {
    Expr e;
    e.kind = Expr::Kind::Var;
    e.var = i;
    return e;
}
inline Expr e_add(std::vector<Expr> kids) {
    Expr e;
    e.kind = Expr::Kind::Add;
    e.kids = std::move(kids);
    return e;
}
inline Expr e_mul(std::vector<Expr> kids) {
    Expr e;
    e.kind = Expr::Kind::Mul;
    e.kids = std::move(kids);
    return e;
}
inline Expr e_fn(FunctionKind fn, Expr child, double safelog_k = default_safelog_k) {
    Expr e;
    e.kind = Expr::Kind::Func;
    e.fn = fn;
    e.safelog_k = safelog_k;
    e.kids.push_back(std::move(child));
    return e;
}

template <class V>
V eval_expr_t(const Expr& e, const std::vector<V>& inputs) {
    switch (e.kind) {
        case Expr::Kind::Const:
            if constexpr (std::is_same_v<V, double>)
                return e.value;
            else
                return V(inputs.at(0).spec(), e.value);
        case Expr::Kind::Var: return inputs.at(std::size_t(e.var));
        case Expr::Kind::Add: {
            V acc = eval_expr_t(e.kids[0], inputs);
            for (std::size_t i = 1; i < e.kids.size(); ++i)
                acc = acc + eval_expr_t(e.kids[i], inputs);
            return acc;
        }
        case Expr::Kind::Mul: {
            V acc = eval_expr_t(e.kids[0], inputs);
            for (std::size_t i = 1; i < e.kids.size(); ++i)
                acc = acc * eval_expr_t(e.kids[i], inputs);
            return acc;
        }
        case Expr::Kind::Func: {
            V x = eval_expr_t(e.kids[0], inputs);
            if constexpr (std::is_same_v<V, double>)
                return apply_function(e.fn, x, e.safelog_k);
            else
                return apply_function(e.fn, x, e.safelog_k);
        }
    }
    throw error("eval_expr: bad node");
}

inline double eval_expr(const Expr& e, const std::vector<double>& inputs) {
    return eval_expr_t<double>(e, inputs);
}
inline JetScalar eval_expr_jet(const Expr& e, const std::vector<JetScalar>& inputs) {
    return eval_expr_t<JetScalar>(e, inputs);
}

// bottom-up constant folding: flattens +/x, folds constants (product constants
// collect into a single leading coefficient), drops zero terms and factors
inline Expr simplify(const Expr& e) {
    if (e.kind == Expr::Kind::Const || e.kind == Expr::Kind::Var) return e;
    if (e.kind == Expr::Kind::Func) {
        Expr c = simplify(e.kids[0]);
        if (c.kind == Expr::Kind::Const)
            return e_const(apply_function(e.fn, c.value, e.safelog_k));
        if (e.fn == FunctionKind::Identity) return c;
        Expr r = e;
        r.kids = {std::move(c)};
        return r;
    }
    std::vector<Expr> flat;
    for (const Expr& kid : e.kids) {
        Expr s = simplify(kid);
        if (s.kind == e.kind)
            for (Expr& g : s.kids) flat.push_back(std::move(g));
        else
            flat.push_back(std::move(s));
    }
    if (e.kind == Expr::Kind::Add) {
        double c = 0;
        std::vector<Expr> terms;
        for (Expr& t : flat) {
            if (t.kind == Expr::Kind::Const)
                c += t.value;
            else
                terms.push_back(std::move(t));
        }
        if (c != 0 || terms.empty()) terms.push_back(e_const(c));
        if (terms.size() == 1) return terms[0];
        return e_add(std::move(terms));
    }
    double c = 1;
    std::vector<Expr> factors;
    for (Expr& f : flat) {
        if (f.kind == Expr::Kind::Const)
            c *= f.value;
        else
            factors.push_back(std::move(f));
    }
    if (c == 0 || factors.empty()) return e_const(c);
    if (c != 1) factors.insert(factors.begin(), e_const(c));
    if (factors.size() == 1) return factors[0];
    return e_mul(std::move(factors));
}

// ---------------------------------------------------------------- extraction

struct ExtractOptions {
    double temperature = 1.0;  // softmax temperature baked into coefficients
};

namespace detail {

inline double masked_param(const Model& m, int i) { return m.params[i] * m.mask[i]; }

// b + sum w_i x_i (+ sum u_ij x_i x_j), all coefficients as stored
inline Expr second_order_expr(const std::vector<double>& coef, bool second_order,
                              const std::vector<Expr>& x, double bias, bool with_bias) {
    const int n = int(x.size());
    std::vector<Expr> terms;
    if (with_bias) terms.push_back(e_const(bias));
    for (int i = 0; i < n; ++i) terms.push_back(e_mul({e_const(coef[i]), x[i]}));
    if (second_order)
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j)
                terms.push_back(
                    e_mul({e_const(coef[n + tri_index(i, j, n)]), x[i], x[j]}));
    return e_add(std::move(terms));
}

}  // namespace detail

// composes surviving w*f(s) paths and the output map into a tree; constants
// use the masked parameter values at full precision. Stored weights act on
// normalized inputs x_i / scale_i, so each coefficient is divided by its
// column's scale to express the tree in the raw variables.
inline Expr extract_expression(const Model& model, const ExtractOptions& opt = {}) {
    if (!model.arch.is_mixed())
        throw error("extract_expression: only mixed-function variants supported");
    const MixArch& a = model.arch.mix;
    const int N = a.n_inputs, M = a.neurons, Q = a.q();
    std::vector<Expr> xs;
    for (int i = 0; i < N; ++i) xs.push_back(e_var(i));

    auto pre_col_scale = [&](int c) {
        if (c < N) return model.arch.input_scale(c);
        auto [i, j] = tri_unindex(c - N, N);
        return model.arch.input_scale(i) * model.arch.input_scale(j);
    };
    std::vector<Expr> z;
    for (int m = 0; m < M; ++m) {
        std::vector<double> pre(a.pre_cols());
        for (int c = 0; c < a.pre_cols(); ++c)
            pre[c] = detail::masked_param(model, a.pre_w_off() + m * a.pre_cols() + c) /
                     pre_col_scale(c);
        Expr s = detail::second_order_expr(pre, a.second_order_pre, xs,
                                           detail::masked_param(model, a.pre_bias_off() + m),
                                           true);
        std::vector<double> w(Q);
        if (a.normalization == MixNormalization::Softmax) {
            std::vector<double> alpha(Q), mask(Q);
            for (int q = 0; q < Q; ++q) {
                alpha[q] = model.params[a.mix_index(m, q)];
                mask[q] = model.mask[a.mix_index(m, q)];
            }
            w = softmax_weights(alpha, opt.temperature, mask);
        } else {
            for (int q = 0; q < Q; ++q) w[q] = detail::masked_param(model, a.mix_index(m, q));
        }
        std::vector<Expr> terms;
        for (int q = 0; q < Q; ++q)
            terms.push_back(e_mul({e_const(w[q]), e_fn(a.kinds[q], s, a.safelog_k)}));
        z.push_back(e_add(std::move(terms)));
    }
    if (a.output_include_inputs)
        for (int i = 0; i < N; ++i) z.push_back(xs[i]);

    auto z_scale = [&](int c) {
        return c < M || !a.output_include_inputs ? 1.0 : model.arch.input_scale(c - M);
    };
    auto out_col_scale = [&](int c) {
        if (c < a.z()) return z_scale(c);
        auto [i, j] = tri_unindex(c - a.z(), a.z());
        return z_scale(i) * z_scale(j);
    };
    std::vector<double> out(a.out_cols());
    for (int c = 0; c < a.out_cols(); ++c)
        out[c] = detail::masked_param(model, a.out_w_off() + c) / out_col_scale(c);
    double bias = a.output_bias ? detail::masked_param(model, a.out_b_off()) : 0.0;
    Expr full = detail::second_order_expr(out, a.output_second_order, z, bias, a.output_bias);
    return simplify(full);
}

// max |expr - forward| over n uniform in-domain points
inline double verify_expression(const Expr& expr, const Model& model, const Box& box, int n,
                                std::uint64_t seed, const ExtractOptions& opt = {}) {
    auto rng = rng_stream(seed, "verify_expression");
    EmitCtx ctx;
    ctx.temperature = opt.temperature;
    double worst = 0;
    std::vector<double> pt(box.dim());
    for (int i = 0; i < n; ++i) {
        for (int a = 0; a < box.dim(); ++a) pt[a] = uniform(rng, box.axes[a][0], box.axes[a][1]);
        worst = std::max(worst, std::abs(eval_expr(expr, pt) - forward(model, pt, ctx)));
    }
    return worst;
}

// ----------------------------------------------------------------- rendering

inline std::string render_const(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    std::string s = buf;
    if (s.find('.') != std::string::npos) {
        while (s.back() == '0') s.pop_back();
        if (s.back() == '.') s.pop_back();
    }
    if (s == "-0") s = "0";
    return s;
}

inline std::string render(const Expr& e, int digits = 3,
                          const std::vector<std::string>& names = {});

namespace detail {

inline std::string render_atom(const Expr& e, int digits, const std::vector<std::string>& names) {
    std::string s = render(e, digits, names);
    bool needs_parens = e.kind == Expr::Kind::Add ||
                        (e.kind == Expr::Kind::Const && e.value < 0);
    return needs_parens ? "(" + s + ")" : s;
}

}  // namespace detail

inline std::string render(const Expr& e, int digits, const std::vector<std::string>& names) {
    if (digits < 1) throw error("render: digits must be >= 1");
    switch (e.kind) {
        case Expr::Kind::Const: return render_const(e.value, digits);
        case Expr::Kind::Var:
            return e.var < int(names.size()) ? names[std::size_t(e.var)]
                                             : "x" + std::to_string(e.var);
        case Expr::Kind::Func: {
            std::string arg = render(e.kids[0], digits, names);
            switch (e.fn) {
                case FunctionKind::Sin: return "sin(" + arg + ")";
                case FunctionKind::Cos: return "cos(" + arg + ")";
                case FunctionKind::ExpAbs: return "exp(|" + arg + "|)";
                case FunctionKind::ExpNegAbs: return "exp(-|" + arg + "|)";
                case FunctionKind::SqrtAbs: return "sqrt(|" + arg + "|)";
                case FunctionKind::SafeLog:
                    return "log(" + render_const(e.safelog_k, digits) + " + relu(" + arg + "))";
                case FunctionKind::Identity: return arg;
            }
            return arg;
        }
        case Expr::Kind::Mul: {
            std::string s;
            bool lead_neg = false;
            std::size_t start = 0;
            if (e.kids[0].kind == Expr::Kind::Const && e.kids[0].value < 0) {
                double av = -e.kids[0].value;
                lead_neg = true;
                start = 1;
                if (av != 1 || e.kids.size() == 1) s = render_const(av, digits);
            } else if (e.kids[0].kind == Expr::Kind::Const && e.kids[0].value == 1 &&
                       e.kids.size() > 1) {
                start = 1;
            }
            for (std::size_t i = start; i < e.kids.size(); ++i) {
                if (!s.empty()) s += "·";
                s += detail::render_atom(e.kids[i], digits, names);
            }
            return lead_neg ? "-" + s : s;
        }
        case Expr::Kind::Add: {
            std::string s = render(e.kids[0], digits, names);
            for (std::size_t i = 1; i < e.kids.size(); ++i) {
                std::string t = render(e.kids[i], digits, names);
                if (!t.empty() && t[0] == '-')
                    s += " - " + t.substr(1);
                else
                    s += " + " + t;
            }
            return s;
        }
    }
    throw error("render: bad node");
}

}  // namespace mixfunn
