#pragma once

// reverse-mode tape over batched jet tensors.
//
// forward pass propagates truncated Taylor jets (value, d1, d2 w.r.t. chosen
// model inputs) through layer-granular ops; the reverse pass propagates jet
// adjoints and accumulates gradients w.r.t. the flat parameter vector. this
// yields d(loss that mixes u, du, d2u)/d(params) in one sweep, which is all a
// physics-informed objective needs. dense affine layers go through dgemm.

#include <cblas.h>

#include <cmath>
#include <cstring>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "functions.hpp"
#include "jet.hpp"

extern "C" void openblas_set_num_threads(int) __attribute__((weak));

namespace mixfunn {

// multithreaded blas would make run-to-run summation order nondeterministic
inline void pin_blas_single_thread() {
    if (openblas_set_num_threads) openblas_set_num_threads(1);
}

struct JetTensor {
    int batch = 0, units = 0, k = 1;
    std::vector<double> d;

    JetTensor() = default;
    JetTensor(int b, int u, int kk) : batch(b), units(u), k(kk), d(std::size_t(b) * u * kk, 0.0) {}

    double& at(int c, int b, int u) { return d[(std::size_t(c) * batch + b) * units + u]; }
    double at(int c, int b, int u) const { return d[(std::size_t(c) * batch + b) * units + u]; }
    double* slice(int c) { return d.data() + std::size_t(c) * batch * units; }
    const double* slice(int c) const { return d.data() + std::size_t(c) * batch * units; }
    std::size_t elems() const { return d.size(); }
};

// masked read of the flat parameter vector: masked entries are exactly 0 in
// every forward pass and receive zero gradient
struct ParamView {
    const double* p = nullptr;
    const double* mask01 = nullptr;  // optional, 0.0 or 1.0 per entry
    int n = 0;

    double get(int i) const { return mask01 ? p[i] * mask01[i] : p[i]; }
    double mask(int i) const { return mask01 ? mask01[i] : 1.0; }
};

enum class Op {
    ConstJet,
    InputJets,
    ParamGather,
    Affine,
    PairProducts,
    Concat,
    FunctionBank,
    TanhMap,
    MixedCombine,
    ExtractComp,
    ExtractEntries,
    Add,
    Sub,
    Mul,
    Scale,
    Mean,
    Sum,
    DotConst,
};

inline const char* op_name(Op op) {
    switch (op) {
        case Op::ConstJet: return "const_jet";
        case Op::InputJets: return "input_jets";
        case Op::ParamGather: return "param_gather";
        case Op::Affine: return "affine";
        case Op::PairProducts: return "pair_products";
        case Op::Concat: return "concat";
        case Op::FunctionBank: return "function_bank";
        case Op::TanhMap: return "tanh_map";
        case Op::MixedCombine: return "mixed_combine";
        case Op::ExtractComp: return "extract_comp";
        case Op::ExtractEntries: return "extract_entries";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Scale: return "scale";
        case Op::Mean: return "mean";
        case Op::Sum: return "sum";
        case Op::DotConst: return "dot_const";
    }
    return "?";
}

class Tape {
public:
    Tape(const JetSpec* spec, ParamView params) : spec_(spec), pv_(params) {
        const int m = spec_->m();
        if (spec_->order >= 2)
            for (int a = 0; a < m; ++a)
                for (int b = a; b < m; ++b) pairs_.push_back({a, b, spec_->d2_at(a, b)});
    }

    const JetSpec& spec() const { return *spec_; }
    int size() const { return int(nodes_.size()); }
    const JetTensor& out(int id) const { return nodes_[id].out; }

    double value(int id) const {
        const JetTensor& t = nodes_[id].out;
        if (t.batch != 1 || t.units != 1 || t.k != 1) throw error("value() needs a scalar node");
        return t.d[0];
    }

    // ---- builders (forward runs eagerly) ----

    int const_jet(JetTensor t) {
        Node n(Op::ConstJet);
        n.out = std::move(t);
        return push(std::move(n));
    }

    int const_vec(std::vector<double> v, int batch, int units) {
        JetTensor t(batch, units, 1);
        t.d = std::move(v);
        return const_jet(std::move(t));
    }

    // points row-major (batch x n_inputs); seeds d1 = 1 on tracked inputs.
    // optional scales feed the network x_i / scales[i] while derivatives stay
    // w.r.t. the raw inputs (the seed becomes 1 / scales[i])
    int input_jets(const double* pts, int batch, int n_inputs, const double* scales = nullptr) {
        Node n(Op::InputJets);
        n.out = JetTensor(batch, n_inputs, spec_->k());
        for (int b = 0; b < batch; ++b)
            for (int i = 0; i < n_inputs; ++i) {
                double s = scales ? scales[i] : 1.0;
                n.out.at(0, b, i) = pts[b * n_inputs + i] / s;
            }
        if (spec_->order >= 1)
            for (int a = 0; a < spec_->m(); ++a) {
                int input = spec_->wrt[size_t(a)];
                double s = scales ? scales[input] : 1.0;
                for (int b = 0; b < batch; ++b) n.out.at(spec_->d1_at(a), b, input) = 1.0 / s;
            }
        return push(std::move(n));
    }

    int param_gather(int off, int count) {
        Node n(Op::ParamGather);
        n.p_off = off;
        n.p_rows = count;
        n.out = JetTensor(1, count, 1);
        return push(std::move(n));
    }

    // y = x W^T (+ b on the value component); W is (rows x cols) at w_off
    int affine(int a, int w_off, int rows, int cols, int b_off = -1) {
        Node n(Op::Affine, a);
        n.p_off = w_off;
        n.p_rows = rows;
        n.p_cols = cols;
        n.pb_off = b_off;
        const JetTensor& x = nodes_[a].out;
        if (x.units != cols) throw error("affine: unit mismatch");
        n.out = JetTensor(x.batch, rows, x.k);
        return push(std::move(n));
    }

    // all unordered products x_i x_j (i <= j) as jets
    int pair_products(int a) {
        const JetTensor& x = nodes_[a].out;
        Node n(Op::PairProducts, a);
        n.out = JetTensor(x.batch, x.units * (x.units + 1) / 2, x.k);
        return push(std::move(n));
    }

    int concat(int a, int b) {
        const JetTensor& x = nodes_[a].out;
        const JetTensor& y = nodes_[b].out;
        if (x.batch != y.batch || x.k != y.k) throw error("concat: shape mismatch");
        Node n(Op::Concat, a, b);
        n.out = JetTensor(x.batch, x.units + y.units, x.k);
        return push(std::move(n));
    }

    // slot s reads pre-activation unit imap[s] and applies kinds[s]
    int function_bank(int a, std::vector<int> kinds, std::vector<int> imap, double safelog_k) {
        Node n(Op::FunctionBank, a);
        n.kinds = std::move(kinds);
        n.imap = std::move(imap);
        n.slog_k = safelog_k;
        n.out = JetTensor(nodes_[a].out.batch, int(n.kinds.size()), nodes_[a].out.k);
        return push(std::move(n));
    }

    int tanh_map(int a) {
        Node n(Op::TanhMap, a);
        n.out = nodes_[a].out;  // shape only; exec overwrites
        return push(std::move(n));
    }

    // neuron m output = sum_q w_eff[m,q] * slot(m*Q+q); w_eff is the (masked)
    // raw weight or softmax(alpha/T) over unmasked slots, times the dropout
    // multiplier if given
    int mixed_combine(int a, int mix_off, int M, int Q, bool softmax, double T,
                      std::vector<double> dropout) {
        const JetTensor& x = nodes_[a].out;
        if (x.units != M * Q) throw error("mixed_combine: slot count mismatch");
        Node n(Op::MixedCombine, a);
        n.p_off = mix_off;
        n.p_rows = M;
        n.p_cols = Q;
        n.softmax = softmax;
        n.T = T;
        n.cdata = std::move(dropout);
        n.out = JetTensor(x.batch, M, x.k);
        return push(std::move(n));
    }

    int extract_comp(int a, int comp) {
        const JetTensor& x = nodes_[a].out;
        if (comp >= x.k) throw error("extract_comp: component out of range");
        Node n(Op::ExtractComp, a);
        n.comp = comp;
        n.out = JetTensor(x.batch, x.units, 1);
        return push(std::move(n));
    }

    // pick (row, component) entries of a single-unit jet tensor
    int extract_entries(int a, std::vector<std::pair<int, int>> entries) {
        Node n(Op::ExtractEntries, a);
        n.entries = std::move(entries);
        n.out = JetTensor(int(n.entries.size()), 1, 1);
        return push(std::move(n));
    }

    int add(int a, int b) { return binary(Op::Add, a, b); }
    int sub(int a, int b) { return binary(Op::Sub, a, b); }
    int mul(int a, int b) { return binary(Op::Mul, a, b); }

    int scale(int a, double c) {
        Node n(Op::Scale, a);
        n.scal = c;
        n.out = nodes_[a].out;
        return push(std::move(n));
    }

    int mean(int a) { return reduce(Op::Mean, a); }
    int sum(int a) { return reduce(Op::Sum, a); }

    int dot_const(int a, std::vector<double> w) {
        const JetTensor& x = nodes_[a].out;
        if (x.units != 1 || x.k != 1 || int(w.size()) != x.batch)
            throw error("dot_const: wants (n,1,1) and n weights");
        Node n(Op::DotConst, a);
        n.cdata = std::move(w);
        n.out = JetTensor(1, 1, 1);
        return push(std::move(n));
    }

    // ---- reverse ----

    // d value(loss_id) / d params, masked entries get 0
    std::vector<double> backward(int loss_id) {
        if (nodes_[loss_id].out.elems() != 1) throw error("backward needs a scalar loss node");
        grad_.assign(pv_.n, 0.0);
        adj_.assign(nodes_.size(), {});
        adj_at(loss_id).d[0] = 1.0;
        for (int id = loss_id; id >= 0; --id) {
            if (adj_[id].d.empty()) continue;  // not on a path to the loss
            adjoint(nodes_[id], adj_[id]);
        }
        for (double g : grad_)
            if (!std::isfinite(g)) {
                for (std::size_t i = 0; i < nodes_.size(); ++i) {
                    if (!adj_[i].d.empty() && !all_finite(adj_[i].d))
                        throw error(std::string("non-finite gradient at op ") +
                                    op_name(nodes_[i].op));
                    if (!all_finite(nodes_[i].out.d))
                        throw error(std::string("non-finite forward value at op ") +
                                    op_name(nodes_[i].op));
                }
                throw error("non-finite gradient");
            }
        return grad_;
    }

    // re-execute every node and check forward values reproduce bit-for-bit
    bool replay_bitexact() {
        for (Node& n : nodes_) {
            JetTensor saved = n.out;
            exec(n);
            if (saved.d.size() != n.out.d.size() ||
                std::memcmp(saved.d.data(), n.out.d.data(), saved.d.size() * sizeof(double)) != 0)
                return false;
        }
        return true;
    }

private:
    struct Node {
        explicit Node(Op o, int a_ = -1, int b_ = -1) : op(o), a(a_), b(b_) {}
        Op op;
        int a, b;
        JetTensor out;
        int p_off = -1, p_rows = 0, p_cols = 0, pb_off = -1;
        int comp = 0;
        double scal = 0, T = 1, slog_k = default_safelog_k;
        bool softmax = false;
        std::vector<int> kinds, imap;
        std::vector<std::pair<int, int>> entries;
        std::vector<double> cdata, weff;
    };

    struct PairIdx {
        int a, b, comp;
    };

    const JetSpec* spec_;
    ParamView pv_;
    std::vector<Node> nodes_;
    std::vector<PairIdx> pairs_;
    std::vector<JetTensor> adj_;
    std::vector<double> grad_;
    std::vector<double> scratch_w_, scratch_gw_;

    int push(Node&& n) {
        nodes_.push_back(std::move(n));
        exec(nodes_.back());
        return int(nodes_.size()) - 1;
    }

    int binary(Op op, int a, int b) {
        const JetTensor& x = nodes_[a].out;
        const JetTensor& y = nodes_[b].out;
        if (x.batch != y.batch || x.units != y.units || x.k != y.k)
            throw error(std::string(op_name(op)) + ": shape mismatch");
        Node n(op, a, b);
        n.out = JetTensor(x.batch, x.units, x.k);
        return push(std::move(n));
    }

    int reduce(Op op, int a) {
        const JetTensor& x = nodes_[a].out;
        if (x.units != 1 || x.k != 1) throw error("reduce wants (n,1,1)");
        Node n(op, a);
        n.out = JetTensor(1, 1, 1);
        return push(std::move(n));
    }

    JetTensor& adj_at(int id) {
        if (adj_[id].d.empty())
            adj_[id] = JetTensor(nodes_[id].out.batch, nodes_[id].out.units, nodes_[id].out.k);
        return adj_[id];
    }

    void grad_add(int idx, double v) { grad_[idx] += v * pv_.mask(idx); }

    // ---- jet kernels; components of one scalar live at stride apart ----

    // c = a (x) b, truncated Taylor product
    void jet_mul(const double* a, const double* b, double* c, std::size_t sa, std::size_t sb,
                 std::size_t sc, int k) const {
        c[0] = a[0] * b[0];
        if (k == 1) return;
        const int m = spec_->m();
        for (int i = 1; i <= m; ++i)
            c[i * sc] = a[i * sa] * b[0] + a[0] * b[i * sb];
        for (const PairIdx& p : pairs_) {
            std::size_t ia = (1 + p.a), ib = (1 + p.b), ip = p.comp;
            c[ip * sc] = a[ip * sa] * b[0] + a[ia * sa] * b[ib * sb] + a[ib * sa] * b[ia * sb] +
                         a[0] * b[ip * sb];
        }
    }

    // xbar += d(a (x) b)/da^T cbar, with "other" = b
    void jet_mul_adj(const double* cbar, const double* other, double* xbar, std::size_t sc,
                     std::size_t so, std::size_t sx, int k) const {
        xbar[0] += cbar[0] * other[0];
        if (k == 1) return;
        const int m = spec_->m();
        for (int i = 1; i <= m; ++i) {
            xbar[0] += cbar[i * sc] * other[i * so];
            xbar[i * sx] += cbar[i * sc] * other[0];
        }
        for (const PairIdx& p : pairs_) {
            std::size_t ia = (1 + p.a), ib = (1 + p.b), ip = p.comp;
            double cb = cbar[ip * sc];
            xbar[0] += cb * other[ip * so];
            xbar[ia * sx] += cb * other[ib * so];
            xbar[ib * sx] += cb * other[ia * so];
            xbar[ip * sx] += cb * other[0];
        }
    }

    // c = f(a) by composition with derivatives at the value component
    void jet_unary(const Derivs& f, const double* a, double* c, std::size_t sa, std::size_t sc,
                   int k) const {
        c[0] = f.f0;
        if (k == 1) return;
        const int m = spec_->m();
        for (int i = 1; i <= m; ++i) c[i * sc] = f.f1 * a[i * sa];
        for (const PairIdx& p : pairs_) {
            std::size_t ia = (1 + p.a), ib = (1 + p.b), ip = p.comp;
            c[ip * sc] = f.f2 * a[ia * sa] * a[ib * sa] + f.f1 * a[ip * sa];
        }
    }

    // abar += d(f jet rule)/da^T cbar; needs f3 because d2 outputs depend on
    // the input value through f2
    void jet_unary_adj(const Derivs& f, const double* a, const double* cbar, double* abar,
                       std::size_t sa, std::size_t sc, std::size_t sb, int k) const {
        abar[0] += cbar[0] * f.f1;
        if (k == 1) return;
        const int m = spec_->m();
        for (int i = 1; i <= m; ++i) {
            abar[0] += cbar[i * sc] * f.f2 * a[i * sa];
            abar[i * sb] += cbar[i * sc] * f.f1;
        }
        for (const PairIdx& p : pairs_) {
            std::size_t ia = (1 + p.a), ib = (1 + p.b), ip = p.comp;
            double cb = cbar[ip * sc];
            abar[0] += cb * (f.f3 * a[ia * sa] * a[ib * sa] + f.f2 * a[ip * sa]);
            abar[ia * sb] += cb * f.f2 * a[ib * sa];
            abar[ib * sb] += cb * f.f2 * a[ia * sa];
            abar[ip * sb] += cb * f.f1;
        }
    }

    // ---- forward ----

    void materialize_weights(const Node& n) {
        scratch_w_.assign(std::size_t(n.p_rows) * n.p_cols, 0.0);
        for (int r = 0; r < n.p_rows; ++r)
            for (int c = 0; c < n.p_cols; ++c)
                scratch_w_[std::size_t(r) * n.p_cols + c] = pv_.get(n.p_off + r * n.p_cols + c);
    }

    void compute_weff(Node& n) {
        const int M = n.p_rows, Q = n.p_cols;
        n.weff.assign(std::size_t(M) * Q, 0.0);
        for (int m = 0; m < M; ++m) {
            if (n.softmax) {
                double mx = -HUGE_VAL;
                for (int q = 0; q < Q; ++q)
                    if (pv_.mask(n.p_off + m * Q + q) != 0.0)
                        mx = std::max(mx, pv_.p[n.p_off + m * Q + q] / n.T);
                double z = 0;
                if (mx != -HUGE_VAL) {
                    for (int q = 0; q < Q; ++q)
                        if (pv_.mask(n.p_off + m * Q + q) != 0.0) {
                            n.weff[m * Q + q] = std::exp(pv_.p[n.p_off + m * Q + q] / n.T - mx);
                            z += n.weff[m * Q + q];
                        }
                    for (int q = 0; q < Q; ++q) n.weff[m * Q + q] /= z;
                }
            } else {
                for (int q = 0; q < Q; ++q) n.weff[m * Q + q] = pv_.get(n.p_off + m * Q + q);
            }
            if (!n.cdata.empty())
                for (int q = 0; q < Q; ++q) n.weff[m * Q + q] *= n.cdata[m * Q + q];
        }
    }

    void exec(Node& n) {
        switch (n.op) {
            case Op::ConstJet:
            case Op::InputJets: return;  // filled at build time
            case Op::ParamGather: {
                for (int i = 0; i < n.p_rows; ++i) n.out.at(0, 0, i) = pv_.get(n.p_off + i);
                return;
            }
            case Op::Affine: {
                const JetTensor& x = nodes_[n.a].out;
                materialize_weights(n);
                for (int c = 0; c < x.k; ++c)
                    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, x.batch, n.p_rows,
                                n.p_cols, 1.0, x.slice(c), x.units, scratch_w_.data(), n.p_cols,
                                0.0, n.out.slice(c), n.p_rows);
                if (n.pb_off >= 0)
                    for (int b = 0; b < x.batch; ++b)
                        for (int r = 0; r < n.p_rows; ++r) n.out.at(0, b, r) += pv_.get(n.pb_off + r);
                return;
            }
            case Op::PairProducts: {
                const JetTensor& x = nodes_[n.a].out;
                const std::size_t st = std::size_t(x.batch) * x.units;
                const std::size_t so = std::size_t(n.out.batch) * n.out.units;
                for (int b = 0; b < x.batch; ++b) {
                    int p = 0;
                    for (int i = 0; i < x.units; ++i)
                        for (int j = i; j < x.units; ++j, ++p)
                            jet_mul(&x.d[std::size_t(b) * x.units + i],
                                    &x.d[std::size_t(b) * x.units + j],
                                    &n.out.d[std::size_t(b) * n.out.units + p], st, st, so, x.k);
                }
                return;
            }
            case Op::Concat: {
                const JetTensor& x = nodes_[n.a].out;
                const JetTensor& y = nodes_[n.b].out;
                for (int c = 0; c < x.k; ++c)
                    for (int b = 0; b < x.batch; ++b) {
                        for (int u = 0; u < x.units; ++u) n.out.at(c, b, u) = x.at(c, b, u);
                        for (int u = 0; u < y.units; ++u) n.out.at(c, b, x.units + u) = y.at(c, b, u);
                    }
                return;
            }
            case Op::FunctionBank: {
                const JetTensor& x = nodes_[n.a].out;
                const std::size_t sx = std::size_t(x.batch) * x.units;
                const std::size_t so = std::size_t(n.out.batch) * n.out.units;
                for (int b = 0; b < x.batch; ++b)
                    for (int s = 0; s < n.out.units; ++s) {
                        const double* a = &x.d[std::size_t(b) * x.units + n.imap[s]];
                        Derivs f = function_derivs(FunctionKind(n.kinds[s]), a[0], n.slog_k);
                        jet_unary(f, a, &n.out.d[std::size_t(b) * n.out.units + s], sx, so, x.k);
                    }
                return;
            }
            case Op::TanhMap: {
                const JetTensor& x = nodes_[n.a].out;
                n.out = JetTensor(x.batch, x.units, x.k);
                const std::size_t st = std::size_t(x.batch) * x.units;
                for (std::size_t e = 0; e < st; ++e) {
                    Derivs f = tanh_derivs(x.d[e]);
                    jet_unary(f, &x.d[e], &n.out.d[e], st, st, x.k);
                }
                return;
            }
            case Op::MixedCombine: {
                const JetTensor& x = nodes_[n.a].out;
                compute_weff(n);
                const int M = n.p_rows, Q = n.p_cols;
                std::fill(n.out.d.begin(), n.out.d.end(), 0.0);
                for (int c = 0; c < x.k; ++c)
                    for (int b = 0; b < x.batch; ++b)
                        for (int m = 0; m < M; ++m) {
                            double acc = 0;
                            for (int q = 0; q < Q; ++q)
                                acc += n.weff[m * Q + q] * x.at(c, b, m * Q + q);
                            n.out.at(c, b, m) = acc;
                        }
                return;
            }
            case Op::ExtractComp: {
                const JetTensor& x = nodes_[n.a].out;
                std::memcpy(n.out.d.data(), x.slice(n.comp),
                            std::size_t(x.batch) * x.units * sizeof(double));
                return;
            }
            case Op::ExtractEntries: {
                const JetTensor& x = nodes_[n.a].out;
                for (std::size_t i = 0; i < n.entries.size(); ++i)
                    n.out.d[i] = x.at(n.entries[i].second, n.entries[i].first, 0);
                return;
            }
            case Op::Add:
            case Op::Sub: {
                const JetTensor& x = nodes_[n.a].out;
                const JetTensor& y = nodes_[n.b].out;
                double sgn = n.op == Op::Add ? 1.0 : -1.0;
                for (std::size_t e = 0; e < x.d.size(); ++e) n.out.d[e] = x.d[e] + sgn * y.d[e];
                return;
            }
            case Op::Mul: {
                const JetTensor& x = nodes_[n.a].out;
                const JetTensor& y = nodes_[n.b].out;
                const std::size_t st = std::size_t(x.batch) * x.units;
                for (std::size_t e = 0; e < st; ++e)
                    jet_mul(&x.d[e], &y.d[e], &n.out.d[e], st, st, st, x.k);
                return;
            }
            case Op::Scale: {
                const JetTensor& x = nodes_[n.a].out;
                n.out = JetTensor(x.batch, x.units, x.k);
                for (std::size_t e = 0; e < x.d.size(); ++e) n.out.d[e] = n.scal * x.d[e];
                return;
            }
            case Op::Mean:
            case Op::Sum: {
                const JetTensor& x = nodes_[n.a].out;
                double acc = 0;
                for (double v : x.d) acc += v;
                n.out.d[0] = n.op == Op::Mean ? acc / x.batch : acc;
                return;
            }
            case Op::DotConst: {
                const JetTensor& x = nodes_[n.a].out;
                double acc = 0;
                for (int b = 0; b < x.batch; ++b) acc += n.cdata[b] * x.d[b];
                n.out.d[0] = acc;
                return;
            }
        }
    }

    // ---- reverse ----

    void adjoint(const Node& n, const JetTensor& nbar) {
        switch (n.op) {
            case Op::ConstJet:
            case Op::InputJets: return;
            case Op::ParamGather: {
                for (int i = 0; i < n.p_rows; ++i) grad_add(n.p_off + i, nbar.d[i]);
                return;
            }
            case Op::Affine: {
                const JetTensor& x = nodes_[n.a].out;
                JetTensor& xbar = adj_at(n.a);
                materialize_weights(n);
                for (int c = 0; c < x.k; ++c)
                    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, x.batch, n.p_cols,
                                n.p_rows, 1.0, nbar.slice(c), n.p_rows, scratch_w_.data(),
                                n.p_cols, 1.0, xbar.slice(c), x.units);
                scratch_gw_.assign(std::size_t(n.p_rows) * n.p_cols, 0.0);
                for (int c = 0; c < x.k; ++c)
                    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, n.p_rows, n.p_cols,
                                x.batch, 1.0, nbar.slice(c), n.p_rows, x.slice(c), x.units, 1.0,
                                scratch_gw_.data(), n.p_cols);
                for (int r = 0; r < n.p_rows; ++r)
                    for (int c = 0; c < n.p_cols; ++c)
                        grad_add(n.p_off + r * n.p_cols + c, scratch_gw_[std::size_t(r) * n.p_cols + c]);
                if (n.pb_off >= 0)
                    for (int r = 0; r < n.p_rows; ++r) {
                        double acc = 0;
                        for (int b = 0; b < x.batch; ++b) acc += nbar.at(0, b, r);
                        grad_add(n.pb_off + r, acc);
                    }
                return;
            }
            case Op::PairProducts: {
                const JetTensor& x = nodes_[n.a].out;
                JetTensor& xbar = adj_at(n.a);
                const std::size_t st = std::size_t(x.batch) * x.units;
                const std::size_t so = std::size_t(n.out.batch) * n.out.units;
                for (int b = 0; b < x.batch; ++b) {
                    int p = 0;
                    for (int i = 0; i < x.units; ++i)
                        for (int j = i; j < x.units; ++j, ++p) {
                            const double* cb = &nbar.d[std::size_t(b) * n.out.units + p];
                            jet_mul_adj(cb, &x.d[std::size_t(b) * x.units + j],
                                        &xbar.d[std::size_t(b) * x.units + i], so, st, st, x.k);
                            jet_mul_adj(cb, &x.d[std::size_t(b) * x.units + i],
                                        &xbar.d[std::size_t(b) * x.units + j], so, st, st, x.k);
                        }
                }
                return;
            }
            case Op::Concat: {
                const JetTensor& x = nodes_[n.a].out;
                const JetTensor& y = nodes_[n.b].out;
                JetTensor& xbar = adj_at(n.a);
                JetTensor& ybar = adj_at(n.b);
                for (int c = 0; c < x.k; ++c)
                    for (int b = 0; b < x.batch; ++b) {
                        for (int u = 0; u < x.units; ++u) xbar.at(c, b, u) += nbar.at(c, b, u);
                        for (int u = 0; u < y.units; ++u)
                            ybar.at(c, b, u) += nbar.at(c, b, x.units + u);
                    }
                return;
            }
            case Op::FunctionBank: {
                const JetTensor& x = nodes_[n.a].out;
                JetTensor& xbar = adj_at(n.a);
                const std::size_t sx = std::size_t(x.batch) * x.units;
                const std::size_t so = std::size_t(n.out.batch) * n.out.units;
                for (int b = 0; b < x.batch; ++b)
                    for (int s = 0; s < n.out.units; ++s) {
                        const double* a = &x.d[std::size_t(b) * x.units + n.imap[s]];
                        Derivs f = function_derivs(FunctionKind(n.kinds[s]), a[0], n.slog_k);
                        jet_unary_adj(f, a, &nbar.d[std::size_t(b) * n.out.units + s],
                                      &xbar.d[std::size_t(b) * x.units + n.imap[s]], sx, so, sx,
                                      x.k);
                    }
                return;
            }
            case Op::TanhMap: {
                const JetTensor& x = nodes_[n.a].out;
                JetTensor& xbar = adj_at(n.a);
                const std::size_t st = std::size_t(x.batch) * x.units;
                for (std::size_t e = 0; e < st; ++e) {
                    Derivs f = tanh_derivs(x.d[e]);
                    jet_unary_adj(f, &x.d[e], &nbar.d[e], &xbar.d[e], st, st, st, x.k);
                }
                return;
            }
            case Op::MixedCombine: {
                const JetTensor& x = nodes_[n.a].out;
                JetTensor& xbar = adj_at(n.a);
                const int M = n.p_rows, Q = n.p_cols;
                for (int c = 0; c < x.k; ++c)
                    for (int b = 0; b < x.batch; ++b)
                        for (int m = 0; m < M; ++m) {
                            double ab = nbar.at(c, b, m);
                            for (int q = 0; q < Q; ++q)
                                xbar.at(c, b, m * Q + q) += n.weff[m * Q + q] * ab;
                        }
                // sensitivity w.r.t. the effective (post-dropout) weight
                std::vector<double> y(std::size_t(M) * Q, 0.0);
                for (int c = 0; c < x.k; ++c)
                    for (int b = 0; b < x.batch; ++b)
                        for (int m = 0; m < M; ++m) {
                            double ab = nbar.at(c, b, m);
                            for (int q = 0; q < Q; ++q)
                                y[m * Q + q] += ab * x.at(c, b, m * Q + q);
                        }
                if (!n.cdata.empty())
                    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= n.cdata[i];
                if (!n.softmax) {
                    for (int m = 0; m < M; ++m)
                        for (int q = 0; q < Q; ++q) grad_add(n.p_off + m * Q + q, y[m * Q + q]);
                } else {
                    for (int m = 0; m < M; ++m) {
                        // recover the pre-dropout softmax weights
                        std::vector<double> w(Q, 0.0);
                        for (int q = 0; q < Q; ++q) {
                            w[q] = n.weff[m * Q + q];
                            if (!n.cdata.empty() && n.cdata[m * Q + q] != 0.0)
                                w[q] /= n.cdata[m * Q + q];
                        }
                        double dot = 0;
                        for (int q = 0; q < Q; ++q) dot += w[q] * y[m * Q + q];
                        for (int q = 0; q < Q; ++q)
                            grad_add(n.p_off + m * Q + q, w[q] * (y[m * Q + q] - dot) / n.T);
                    }
                }
                return;
            }
            case Op::ExtractComp: {
                const JetTensor& x = nodes_[n.a].out;
                JetTensor& xbar = adj_at(n.a);
                double* dst = xbar.slice(n.comp);
                for (std::size_t e = 0; e < std::size_t(x.batch) * x.units; ++e)
                    dst[e] += nbar.d[e];
                return;
            }
            case Op::ExtractEntries: {
                JetTensor& xbar = adj_at(n.a);
                for (std::size_t i = 0; i < n.entries.size(); ++i)
                    xbar.at(n.entries[i].second, n.entries[i].first, 0) += nbar.d[i];
                return;
            }
            case Op::Add:
            case Op::Sub: {
                JetTensor& xbar = adj_at(n.a);
                JetTensor& ybar = adj_at(n.b);
                double sgn = n.op == Op::Add ? 1.0 : -1.0;
                for (std::size_t e = 0; e < nbar.d.size(); ++e) {
                    xbar.d[e] += nbar.d[e];
                    ybar.d[e] += sgn * nbar.d[e];
                }
                return;
            }
            case Op::Mul: {
                const JetTensor& x = nodes_[n.a].out;
                const JetTensor& y = nodes_[n.b].out;
                JetTensor& xbar = adj_at(n.a);
                JetTensor& ybar = adj_at(n.b);
                const std::size_t st = std::size_t(x.batch) * x.units;
                for (std::size_t e = 0; e < st; ++e) {
                    jet_mul_adj(&nbar.d[e], &y.d[e], &xbar.d[e], st, st, st, x.k);
                    jet_mul_adj(&nbar.d[e], &x.d[e], &ybar.d[e], st, st, st, x.k);
                }
                return;
            }
            case Op::Scale: {
                JetTensor& xbar = adj_at(n.a);
                for (std::size_t e = 0; e < nbar.d.size(); ++e) xbar.d[e] += n.scal * nbar.d[e];
                return;
            }
            case Op::Mean: {
                const JetTensor& x = nodes_[n.a].out;
                JetTensor& xbar = adj_at(n.a);
                double g = nbar.d[0] / x.batch;
                for (double& v : xbar.d) v += g;
                return;
            }
            case Op::Sum: {
                JetTensor& xbar = adj_at(n.a);
                for (double& v : xbar.d) v += nbar.d[0];
                return;
            }
            case Op::DotConst: {
                const JetTensor& x = nodes_[n.a].out;
                JetTensor& xbar = adj_at(n.a);
                for (int b = 0; b < x.batch; ++b) xbar.d[b] += n.cdata[b] * nbar.d[0];
                return;
            }
        }
    }
};

// central-difference gradient check for any (value, gradient) oracle.
// precondition: x0 must keep at least 10h away from kinks of |.| / relu;
// callers that know their kink geometry pass kink_distance.
struct GradCheckReport {
    bool ok = true;
    double max_rel = 0;
    int worst_index = -1;
    double analytic = 0, numeric = 0;
};

template <class F>
GradCheckReport check_gradients(F&& f, std::vector<double> x0, double h = 1e-4,
                                const std::function<double(const std::vector<double>&)>&
                                    kink_distance = {}) {
    if (kink_distance) {
        double d = kink_distance(x0);
        if (d < 10 * h)
            throw error("check_gradients: x0 is " + std::to_string(d) +
                        " from a kink, need at least 10h");
    }
    auto [v0, g] = f(x0);
    (void)v0;
    GradCheckReport rep;
    for (std::size_t i = 0; i < x0.size(); ++i) {
        double keep = x0[i];
        x0[i] = keep + h;
        double vp = f(x0).first;
        x0[i] = keep - h;
        double vm = f(x0).first;
        x0[i] = keep;
        double fd = (vp - vm) / (2 * h);
        double rel = std::fabs(g[i] - fd) / std::max(1.0, std::fabs(g[i]));
        if (rel > rep.max_rel) {
            rep.max_rel = rel;
            rep.worst_index = int(i);
            rep.analytic = g[i];
            rep.numeric = fd;
        }
    }
    return rep;
}

}  // namespace mixfunn
