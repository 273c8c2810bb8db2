#pragma once

// benchmark problems and their reference solutions:
//   damped / forced harmonic oscillator (closed form, RK4 cross-check)
//   1d viscous Burgers (central FD in x + RK4 in t)
//   infinite square well on [-1,1] (analytic eigenfunctions)

#include <cmath>
#include <memory>

#include "physics.hpp"

namespace mixfunn {

inline constexpr double pi = 3.14159265358979323846;

// ---------------------------------------------------------------- oscillator

struct OscillatorParams {
    double m = 1, gamma = 0.1, k = 1;
    double F0 = 0, omega = 0;  // forcing F0*sin(omega*t)
    double x0 = 1, v0 = 0;
};

// particular solution A*sin(wt) + B*cos(wt) of the forced equation
inline std::array<double, 2> oscillator_steady_state(const OscillatorParams& p) {
    if (p.F0 == 0) return {0, 0};
    const double c = p.k - p.m * p.omega * p.omega, d = p.gamma * p.omega;
    const double det = c * c + d * d;
    return {p.F0 * c / det, -p.F0 * d / det};
}

inline double oscillator_damped_freq(const OscillatorParams& p) {
    const double w2 = p.k / p.m - p.gamma * p.gamma / (4 * p.m * p.m);
    if (!(w2 > 0)) throw error("oscillator_reference: not underdamped");
    return std::sqrt(w2);
}

inline double oscillator_reference(const OscillatorParams& p, double t) {
    const double wd = oscillator_damped_freq(p), decay = p.gamma / (2 * p.m);
    const auto [A, B] = oscillator_steady_state(p);
    const double c1 = p.x0 - B;
    const double c2 = (p.v0 + decay * c1 - p.omega * A) / wd;
    return std::exp(-decay * t) * (c1 * std::cos(wd * t) + c2 * std::sin(wd * t)) +
           A * std::sin(p.omega * t) + B * std::cos(p.omega * t);
}

// RK4 on (x, v); returns x at t (independent check of the closed form)
inline double oscillator_rk4(const OscillatorParams& p, double t, double dt = 1e-3) {
    auto acc = [&](double ti, double x, double v) {
        return (p.F0 * std::sin(p.omega * ti) - p.gamma * v - p.k * x) / p.m;
    };
    double x = p.x0, v = p.v0, ti = 0;
    long n = std::lround(t / dt);
    double h = n > 0 ? t / double(n) : 0;
    for (long s = 0; s < n; ++s) {
        double k1x = v, k1v = acc(ti, x, v);
        double k2x = v + 0.5 * h * k1v, k2v = acc(ti + 0.5 * h, x + 0.5 * h * k1x, v + 0.5 * h * k1v);
        double k3x = v + 0.5 * h * k2v, k3v = acc(ti + 0.5 * h, x + 0.5 * h * k2x, v + 0.5 * h * k2v);
        double k4x = v + h * k3v, k4v = acc(ti + h, x + h * k3x, v + h * k3v);
        x += h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x);
        v += h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
        ti += h;
    }
    return x;
}

inline ProblemDef oscillator_problem(const OscillatorParams& p, const std::string& name) {
    ProblemDef prob;
    prob.name = name;
    prob.n_inputs = 1;
    prob.input_names = {"t"};
    prob.wrt = {0};
    prob.order = 2;
    prob.train_box = {{{0.0, 20.0}}};
    prob.test_box = {{{20.0, 50.0}}};
    prob.icbc = {{{0.0}, -1, p.x0}, {{0.0}, 0, p.v0}};
    prob.residual = [p](Tape& tape, int u, const std::vector<double>& pts, int batch) {
        const JetSpec& js = tape.spec();
        int u_tt = tape.extract_comp(u, js.d2_at(0, 0));
        int u_t = tape.extract_comp(u, js.d1_at(0));
        int u0 = tape.extract_comp(u, 0);
        int r = tape.add(tape.scale(u_tt, p.m),
                         tape.add(tape.scale(u_t, p.gamma), tape.scale(u0, p.k)));
        if (p.F0 != 0) {
            std::vector<double> f(batch);
            for (int b = 0; b < batch; ++b) f[b] = p.F0 * std::sin(p.omega * pts[b]);
            r = tape.sub(r, tape.const_vec(std::move(f), batch, 1));
        }
        return r;
    };
    prob.oracle = [p](const std::vector<double>& v) { return oscillator_reference(p, v[0]); };
    prob.has_oracle = true;
    return prob;
}

inline ProblemDef damped_oscillator(const OscillatorParams& p = {}) {
    if (p.F0 != 0) throw error("damped_oscillator: F0 must be 0");
    return oscillator_problem(p, "damped_oscillator");
}

inline ProblemDef forced_oscillator(OscillatorParams p = {}) {
    if (p.F0 == 0) {
        p.F0 = 1;
        p.omega = 0.9;
    }
    return oscillator_problem(p, "forced_oscillator");
}

// analytic stub satisfying ODE and ICs exactly
inline Model oscillator_stub(const OscillatorParams& p) {
    const double wd = oscillator_damped_freq(p), decay = p.gamma / (2 * p.m);
    const auto [A, B] = oscillator_steady_state(p);
    const double c1 = p.x0 - B, c2 = (p.v0 + decay * c1 - p.omega * A) / wd;
    const double om = p.omega;
    return make_analytic_model(1, [=](const std::vector<JetScalar>& in) {
        const JetScalar& t = in[0];
        JetScalar r = exp(t * (-decay)) * (c1 * cos(t * wd) + c2 * sin(t * wd));
        if (A != 0 || B != 0) r = r + A * sin(t * om) + B * cos(t * om);
        return r;
    });
}

// steady-state particular solution only (no transient)
inline Model oscillator_steady_stub(const OscillatorParams& p) {
    const auto [A, B] = oscillator_steady_state(p);
    const double om = p.omega;
    return make_analytic_model(1, [=](const std::vector<JetScalar>& in) {
        return A * sin(in[0] * om) + B * cos(in[0] * om);
    });
}

inline Model zero_stub(int n_inputs) {
    return make_analytic_model(n_inputs, [](const std::vector<JetScalar>& in) {
        return JetScalar(in[0].spec(), 0.0);
    });
}

// -------------------------------------------------------------------- burgers

struct BurgersParams {
    double kappa = 0.01 / pi;
    double x_lo = -1, x_hi = 1;
    double t_train_hi = 1, t_test_hi = 2;
};

struct BurgersField {
    double x_lo = 0, x_hi = 0, dx = 0, dt = 0;
    int nx = 0, nt = 0;  // nt stored time levels including t=0
    std::vector<double> u;  // u[j*nx + i]

    double at(int j, int i) const { return u[std::size_t(j) * nx + i]; }
    double t_hi() const { return dt * (nt - 1); }

    int snap_x(double x) const {
        int i = int(std::lround((x - x_lo) / dx));
        return std::min(std::max(i, 0), nx - 1);
    }
    int snap_t(double t) const {
        int j = int(std::lround(t / dt));
        return std::min(std::max(j, 0), nt - 1);
    }

    // bilinear interpolation, clamped to the field extent
    double sample(double x, double t) const {
        double fx = std::min(std::max((x - x_lo) / dx, 0.0), double(nx - 1));
        double ft = std::min(std::max(t / dt, 0.0), double(nt - 1));
        int i = std::min(int(fx), nx - 2), j = std::min(int(ft), nt - 2);
        double ax = fx - i, at_ = ft - j;
        return (1 - ax) * (1 - at_) * at(j, i) + ax * (1 - at_) * at(j, i + 1) +
               (1 - ax) * at_ * at(j + 1, i) + ax * at_ * at(j + 1, i + 1);
    }
};

inline double burgers_ic(double x) { return -std::sin(pi * x); }

// central differences in x, RK4 in t, Dirichlet u(+-1)=0; every store_stride-th
// step kept (field time step becomes dt*store_stride)
inline BurgersField burgers_reference(const BurgersParams& p, int nx = 513, double t_end = 2,
                                      double dt = 1e-3, long store_stride = 1) {
    if (nx < 3) throw error("burgers_reference: nx too small");
    BurgersField f;
    f.x_lo = p.x_lo;
    f.x_hi = p.x_hi;
    f.nx = nx;
    f.dx = (p.x_hi - p.x_lo) / (nx - 1);
    const double bound = std::min(0.6975 * f.dx * f.dx / p.kappa, 0.9 * f.dx);
    if (dt > bound)
        throw error("burgers_reference: dt " + std::to_string(dt) + " exceeds stability bound " +
                    std::to_string(bound));
    long steps = std::lround(t_end / dt);
    if (store_stride < 1 || steps % store_stride)
        throw error("burgers_reference: store_stride must divide the step count");
    const double h = t_end / double(steps);
    f.dt = h * double(store_stride);
    f.nt = int(steps / store_stride) + 1;
    f.u.assign(std::size_t(f.nt) * nx, 0.0);
    std::vector<double> cur(nx), k1(nx), k2(nx), k3(nx), k4(nx), tmp(nx);
    for (int i = 0; i < nx; ++i) cur[i] = burgers_ic(p.x_lo + i * f.dx);
    cur[0] = cur[nx - 1] = 0;
    auto rhs = [&](const std::vector<double>& v, std::vector<double>& out) {
        out[0] = out[nx - 1] = 0;
        const double i2dx = 1 / (2 * f.dx), idx2 = 1 / (f.dx * f.dx);
        for (int i = 1; i < nx - 1; ++i)
            out[i] = -v[i] * (v[i + 1] - v[i - 1]) * i2dx +
                     p.kappa * (v[i + 1] - 2 * v[i] + v[i - 1]) * idx2;
    };
    std::copy(cur.begin(), cur.end(), f.u.begin());
    for (long s = 0; s < steps; ++s) {
        rhs(cur, k1);
        for (int i = 0; i < nx; ++i) tmp[i] = cur[i] + 0.5 * h * k1[i];
        rhs(tmp, k2);
        for (int i = 0; i < nx; ++i) tmp[i] = cur[i] + 0.5 * h * k2[i];
        rhs(tmp, k3);
        for (int i = 0; i < nx; ++i) tmp[i] = cur[i] + h * k3[i];
        rhs(tmp, k4);
        for (int i = 0; i < nx; ++i)
            cur[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
        cur[0] = cur[nx - 1] = 0;
        if ((s + 1) % store_stride == 0)
            std::copy(cur.begin(), cur.end(),
                      f.u.begin() + std::size_t((s + 1) / store_stride) * nx);
    }
    for (int i = 0; i < nx; ++i)
        if (!std::isfinite(cur[i]))
            throw error("burgers_reference: blew up; cell Reynolds number u*dx/kappa likely > 2");
    return f;
}

// L2 ratio of successive grid differences at t=1; ~4 for a second-order
// scheme.  Grids start at 513: coarser ones put the cell Reynolds number
// u*dx/kappa above 2 and the central advection term goes unstable near the
// shock.  One dt for all three runs keeps the time error out of the ratio.
inline double burgers_convergence_ratio(const BurgersParams& p = {}, double dt = 1e-4) {
    long steps = std::lround(1.0 / dt);
    BurgersField fa = burgers_reference(p, 513, 1.0, dt, steps);
    BurgersField fb = burgers_reference(p, 1025, 1.0, dt, steps);
    BurgersField fc = burgers_reference(p, 2049, 1.0, dt, steps);
    int j = fa.nt - 1;
    double e1 = 0, e2 = 0;
    for (int i = 0; i < fa.nx; ++i) {
        double da = fa.at(j, i) - fb.at(j, 2 * i);
        double db = fb.at(j, 2 * i) - fc.at(j, 4 * i);
        e1 += da * da;
        e2 += db * db;
    }
    return std::sqrt(e1 / e2);
}

inline ProblemDef burgers(const BurgersParams& p = {}, std::shared_ptr<BurgersField> field = {}) {
    if (!field) field = std::make_shared<BurgersField>(burgers_reference(p, 513, p.t_test_hi));
    ProblemDef prob;
    prob.name = "burgers";
    prob.n_inputs = 2;
    prob.input_names = {"x", "t"};
    prob.wrt = {0, 1};
    prob.order = 2;
    prob.train_box = {{{p.x_lo, p.x_hi}, {0.0, p.t_train_hi}}};
    prob.test_box = {{{p.x_lo, p.x_hi}, {p.t_train_hi, p.t_test_hi}}};
    for (int i = 0; i < 65; ++i) {  // IC rows on solver grid nodes
        double x = p.x_lo + (p.x_hi - p.x_lo) * i / 64.0;
        prob.icbc.push_back({{x, 0.0}, -1, burgers_ic(x)});
    }
    for (int i = 0; i < 33; ++i) {  // Dirichlet rows on both walls
        double t = p.t_train_hi * i / 32.0;
        prob.icbc.push_back({{p.x_lo, t}, -1, 0.0});
        prob.icbc.push_back({{p.x_hi, t}, -1, 0.0});
    }
    const double kappa = p.kappa;
    prob.residual = [kappa](Tape& tape, int u, const std::vector<double>&, int) {
        const JetSpec& js = tape.spec();
        int u0 = tape.extract_comp(u, 0);
        int u_x = tape.extract_comp(u, js.d1_at(js.slot_of_input(0)));
        int u_t = tape.extract_comp(u, js.d1_at(js.slot_of_input(1)));
        int u_xx = tape.extract_comp(u, js.d2_at(0, 0));
        return tape.add(u_t, tape.sub(tape.mul(u0, u_x), tape.scale(u_xx, kappa)));
    };
    auto fp = field;
    prob.oracle = [fp](const std::vector<double>& v) { return fp->sample(v[0], v[1]); };
    prob.has_oracle = true;
    return prob;
}

// jets read off the solver grid: central differences inside, one-sided
// second-order stencils at the ends of either axis
inline Model burgers_stub(std::shared_ptr<BurgersField> field) {
    auto f = std::move(field);
    return make_analytic_model(2, [f](const std::vector<JetScalar>& in) {
        const JetSpec* js = in[0].spec();
        const int i = f->snap_x(in[0][0]);
        const int j = f->snap_t(in[1][0]);
        const int nx = f->nx;
        const double dx = f->dx, dt = f->dt;
        auto U = [&](int jj, int ii) { return f->at(jj, ii); };
        auto ddx = [&](auto g) {
            if (i == 0) return (-3 * g(0) + 4 * g(1) - g(2)) / (2 * dx);
            if (i == nx - 1) return (3 * g(i) - 4 * g(i - 1) + g(i - 2)) / (2 * dx);
            return (g(i + 1) - g(i - 1)) / (2 * dx);
        };
        auto ddxx = [&](auto g) {
            if (i == 0) return (2 * g(0) - 5 * g(1) + 4 * g(2) - g(3)) / (dx * dx);
            if (i == nx - 1)
                return (2 * g(i) - 5 * g(i - 1) + 4 * g(i - 2) - g(i - 3)) / (dx * dx);
            return (g(i + 1) - 2 * g(i) + g(i - 1)) / (dx * dx);
        };
        auto row = [&](int ii) { return U(j, ii); };
        auto t_deriv = [&](int ii) {
            if (j == 0) return (-3 * U(0, ii) + 4 * U(1, ii) - U(2, ii)) / (2 * dt);
            if (j == f->nt - 1)
                return (3 * U(j, ii) - 4 * U(j - 1, ii) + U(j - 2, ii)) / (2 * dt);
            return (U(j + 1, ii) - U(j - 1, ii)) / (2 * dt);
        };
        JetScalar r(js, U(j, i));
        double d1x = ddx(row);
        double d2xx = ddxx(row);
        double d1t = t_deriv(i);
        double d2tt;
        if (j == 0)
            d2tt = (2 * U(0, i) - 5 * U(1, i) + 4 * U(2, i) - U(3, i)) / (dt * dt);
        else if (j == f->nt - 1)
            d2tt = (2 * U(j, i) - 5 * U(j - 1, i) + 4 * U(j - 2, i) - U(j - 3, i)) / (dt * dt);
        else
            d2tt = (U(j + 1, i) - 2 * U(j, i) + U(j - 1, i)) / (dt * dt);
        double d2xt = ddx(t_deriv);
        int sx = js->slot_of_input(0), st = js->slot_of_input(1);
        if (js->order >= 1) {
            if (sx >= 0) r[js->d1_at(sx)] = d1x;
            if (st >= 0) r[js->d1_at(st)] = d1t;
        }
        if (js->order >= 2) {
            if (sx >= 0) r[js->d2_at(sx, sx)] = d2xx;
            if (st >= 0) r[js->d2_at(st, st)] = d2tt;
            if (sx >= 0 && st >= 0)
                r[js->d2_at(std::min(sx, st), std::max(sx, st))] = d2xt;
        }
        return r;
    });
}

// ---------------------------------------------------------------- square well

// crossing number n >= 1; returns sqrt(E_n) for the well on [-1, 1]
inline double well_eigenvalue(int n) {
    if (n < 1) throw error("well_eigenvalue: n must be >= 1");
    return n * pi / 2;
}

// unit-normalized eigenfunction, zero at both walls
inline double well_eigenfunction(int n, double x) {
    return std::sin(n * pi * (x + 1) / 2);
}

struct WellParams {
    std::vector<int> states{2, 3};  // eigenstate indices used for training
    int norm_pts = 65;              // trapezoid nodes for the normalization anchor
};

// well problem pinned to arbitrary sqrt(E) values (eigenvalues or not); no
// oracle attached
inline ProblemDef quantum_well_at(std::vector<double> se, int norm_pts = 65) {
    if (se.empty()) throw error("quantum_well: no sqrtE values");
    ProblemDef prob;
    prob.name = "quantum_well";
    prob.n_inputs = 2;
    prob.input_names = {"x", "sqrtE"};
    prob.wrt = {0};
    prob.order = 2;
    double lo = *std::min_element(se.begin(), se.end());
    double hi = *std::max_element(se.begin(), se.end());
    prob.train_box = {{{-1.0, 1.0}, {lo, hi}}};
    prob.test_box = prob.train_box;
    for (double s : se) {
        prob.icbc.push_back({{-1.0, s}, -1, 0.0});
        prob.icbc.push_back({{1.0, s}, -1, 0.0});
    }
    prob.residual = [](Tape& tape, int u, const std::vector<double>& pts, int batch) {
        const JetSpec& js = tape.spec();
        int u_xx = tape.extract_comp(u, js.d2_at(0, 0));
        int u0 = tape.extract_comp(u, 0);
        std::vector<double> E(batch);
        for (int b = 0; b < batch; ++b) {
            double s = pts[std::size_t(b) * 2 + 1];
            E[b] = s * s;
        }
        int Eu = tape.mul(tape.const_vec(std::move(E), batch, 1), u0);
        return tape.scale(tape.add(u_xx, Eu), -1.0);
    };
    // (trapezoid(psi^2) - 1)^2 summed over training states; rules out psi = 0
    const int np = norm_pts;
    prob.anchor = [se, np](Tape& tape, const Model& model, const EmitCtx& ctx) {
        std::vector<double> w(np);
        const double h = 2.0 / (np - 1);
        for (int i = 0; i < np; ++i) w[i] = (i == 0 || i == np - 1) ? h / 2 : h;
        int acc = -1;
        for (double s : se) {
            std::vector<double> pts(std::size_t(np) * 2);
            for (int i = 0; i < np; ++i) {
                pts[std::size_t(i) * 2] = -1 + i * h;
                pts[std::size_t(i) * 2 + 1] = s;
            }
            int u = emit_model(tape, model, pts.data(), np, ctx);
            int v = tape.extract_comp(u, 0);
            int integral = tape.dot_const(tape.mul(v, v), w);
            int diff = tape.sub(integral, tape.const_vec({1.0}, 1, 1));
            int sq = tape.mul(diff, diff);
            acc = acc < 0 ? sq : tape.add(acc, sq);
        }
        return acc;
    };
    prob.sampler = [se](int n, std::mt19937_64& rng) {
        std::vector<double> pts(std::size_t(n) * 2);
        for (int i = 0; i < n; ++i) {
            pts[std::size_t(i) * 2] = uniform(rng, -1, 1);
            pts[std::size_t(i) * 2 + 1] = se[std::size_t(rng() % se.size())];
        }
        return pts;
    };
    prob.grid = [se](bool, int n) {
        int per = std::max(2, n / int(se.size()));
        std::vector<double> pts;
        for (double s : se)
            for (int i = 0; i < per; ++i) {
                pts.push_back(-1 + 2.0 * i / (per - 1));
                pts.push_back(s);
            }
        return pts;
    };
    return prob;
}

// well problem over training eigenstates, with the analytic oracle
inline ProblemDef quantum_well(const WellParams& wp = {}) {
    std::vector<double> se;
    for (int n : wp.states) se.push_back(well_eigenvalue(n));
    ProblemDef prob = quantum_well_at(se, wp.norm_pts);
    prob.oracle = [](const std::vector<double>& v) {
        int n = int(std::lround(2 * v[1] / pi));
        if (n < 1 || std::abs(well_eigenvalue(n) - v[1]) > 1e-9)
            throw error("well oracle: sqrtE " + std::to_string(v[1]) + " is not an eigenvalue");
        return well_eigenfunction(n, v[0]);
    };
    prob.has_oracle = true;
    prob.oracle_sign_invariant = true;
    return prob;
}

// exact eigenfunction as a jet stub: sin(sqrtE * (x + 1))
inline Model well_stub() {
    return make_analytic_model(2, [](const std::vector<JetScalar>& in) {
        return sin(in[1] * (in[0] + 1.0));
    });
}

// ------------------------------------------------------------------ factories

inline ProblemDef make_problem(const std::string& id) {
    if (id == "damped_oscillator") return damped_oscillator();
    if (id == "forced_oscillator") return forced_oscillator();
    if (id == "burgers") return burgers();
    if (id == "quantum_well") return quantum_well();
    throw error("unknown problem: " + id);
}

// uniform evaluation grid over a box: n points in 1d, 32 x (n/32) in 2d
inline std::vector<double> grid_points(const Box& box, int n) {
    if (box.dim() == 1) {
        std::vector<double> pts(n);
        for (int i = 0; i < n; ++i)
            pts[i] = box.axes[0][0] + (box.axes[0][1] - box.axes[0][0]) * i / double(n - 1);
        return pts;
    }
    if (box.dim() != 2) throw error("grid_points: unsupported dimension");
    int nx = 32, ny = std::max(2, n / nx);
    std::vector<double> pts;
    pts.reserve(std::size_t(nx) * ny * 2);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j) {
            pts.push_back(box.axes[0][0] + (box.axes[0][1] - box.axes[0][0]) * i / double(nx - 1));
            pts.push_back(box.axes[1][0] + (box.axes[1][1] - box.axes[1][0]) * j / double(ny - 1));
        }
    return pts;
}

inline std::vector<double> eval_grid(const ProblemDef& prob, bool test, int n = 512) {
    if (prob.grid) return prob.grid(test, n);
    return grid_points(test ? prob.test_box : prob.train_box, n);
}

}  // namespace mixfunn
