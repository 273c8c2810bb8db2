#pragma once

// truncated Taylor jets (order <= 2) over a chosen subset of model inputs.
// JetScalar is the reference scalar implementation used by analytic stub
// models, expression-tree checks and tests; the training engine in tape.hpp
// carries the same component layout through batched tensors.

#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include "common.hpp"
#include "functions.hpp"

namespace mixfunn {

struct JetSpec {
    int n_inputs = 1;
    std::vector<int> wrt;  // input indices derivatives are tracked for, ascending
    int order = 2;         // 0, 1 or 2

    int m() const { return int(wrt.size()); }
    int k() const {
        int n = m();
        return 1 + (order >= 1 ? n : 0) + (order >= 2 ? n * (n + 1) / 2 : 0);
    }
    // component index of d/dx_wrt[a]
    int d1_at(int a) const { return 1 + a; }
    // component index of d2/(dx_wrt[a] dx_wrt[b]) for a <= b
    int d2_at(int a, int b) const {
        if (a > b) std::swap(a, b);
        return 1 + m() + a * m() - a * (a + 1) / 2 + b;
    }
    int slot_of_input(int input) const {
        for (int a = 0; a < m(); ++a)
            if (wrt[a] == input) return a;
        return -1;
    }
    bool operator==(const JetSpec&) const = default;
};

// result type with derivative maps keyed by input index
struct JetValue {
    double value = 0;
    std::map<int, double> d1;
    std::map<std::pair<int, int>, double> d2;
};

class JetScalar {
public:
    JetScalar() = default;
    JetScalar(const JetSpec* spec, double value) : spec_(spec), c_(spec->k(), 0.0) {
        c_[0] = value;
    }

    static JetScalar input(const JetSpec* spec, int input_index, double value) {
        JetScalar j(spec, value);
        int a = spec->slot_of_input(input_index);
        if (a >= 0 && spec->order >= 1) j.c_[spec->d1_at(a)] = 1.0;
        return j;
    }

    const JetSpec* spec() const { return spec_; }
    double value() const { return c_[0]; }
    double& operator[](int i) { return c_[i]; }
    double operator[](int i) const { return c_[i]; }
    const std::vector<double>& components() const { return c_; }

    JetValue to_value() const {
        JetValue v;
        v.value = c_[0];
        int n = spec_->m();
        if (spec_->order >= 1)
            for (int a = 0; a < n; ++a) v.d1[spec_->wrt[a]] = c_[spec_->d1_at(a)];
        if (spec_->order >= 2)
            for (int a = 0; a < n; ++a)
                for (int b = a; b < n; ++b)
                    v.d2[{spec_->wrt[a], spec_->wrt[b]}] = c_[spec_->d2_at(a, b)];
        return v;
    }

    friend JetScalar operator+(const JetScalar& x, const JetScalar& y) {
        JetScalar r = x;
        for (std::size_t i = 0; i < r.c_.size(); ++i) r.c_[i] += y.c_[i];
        return r;
    }
    friend JetScalar operator-(const JetScalar& x, const JetScalar& y) {
        JetScalar r = x;
        for (std::size_t i = 0; i < r.c_.size(); ++i) r.c_[i] -= y.c_[i];
        return r;
    }
    friend JetScalar operator-(const JetScalar& x) {
        JetScalar r = x;
        for (double& v : r.c_) v = -v;
        return r;
    }
    friend JetScalar operator+(const JetScalar& x, double a) {
        JetScalar r = x;
        r.c_[0] += a;
        return r;
    }
    friend JetScalar operator+(double a, const JetScalar& x) { return x + a; }
    friend JetScalar operator-(const JetScalar& x, double a) { return x + (-a); }
    friend JetScalar operator-(double a, const JetScalar& x) { return (-x) + a; }
    friend JetScalar operator*(const JetScalar& x, double a) {
        JetScalar r = x;
        for (double& v : r.c_) v *= a;
        return r;
    }
    friend JetScalar operator*(double a, const JetScalar& x) { return x * a; }
    friend JetScalar operator/(const JetScalar& x, double a) { return x * (1.0 / a); }

    // truncated Taylor product
    friend JetScalar operator*(const JetScalar& x, const JetScalar& y) {
        const JetSpec* s = x.spec_;
        JetScalar r(s, 0.0);
        r.c_[0] = x.c_[0] * y.c_[0];
        int n = s->m();
        if (s->order >= 1)
            for (int a = 0; a < n; ++a) {
                int ia = s->d1_at(a);
                r.c_[ia] = x.c_[ia] * y.c_[0] + x.c_[0] * y.c_[ia];
            }
        if (s->order >= 2)
            for (int a = 0; a < n; ++a)
                for (int b = a; b < n; ++b) {
                    int ip = s->d2_at(a, b);
                    r.c_[ip] = x.c_[ip] * y.c_[0] + x.c_[s->d1_at(a)] * y.c_[s->d1_at(b)] +
                               x.c_[s->d1_at(b)] * y.c_[s->d1_at(a)] + x.c_[0] * y.c_[ip];
                }
        return r;
    }
    friend JetScalar operator/(const JetScalar& x, const JetScalar& y) {
        double v = y.c_[0];
        return x * unary(y, 1 / v, -1 / (v * v), 2 / (v * v * v));
    }

    // compose with f given f(v), f'(v), f''(v) at v = value
    static JetScalar unary(const JetScalar& x, double f0, double f1, double f2) {
        const JetSpec* s = x.spec_;
        JetScalar r(s, 0.0);
        r.c_[0] = f0;
        int n = s->m();
        if (s->order >= 1)
            for (int a = 0; a < n; ++a) r.c_[s->d1_at(a)] = f1 * x.c_[s->d1_at(a)];
        if (s->order >= 2)
            for (int a = 0; a < n; ++a)
                for (int b = a; b < n; ++b)
                    r.c_[s->d2_at(a, b)] = f2 * x.c_[s->d1_at(a)] * x.c_[s->d1_at(b)] +
                                           f1 * x.c_[s->d2_at(a, b)];
        return r;
    }

private:
    const JetSpec* spec_ = nullptr;
    std::vector<double> c_;
};

inline JetScalar sin(const JetScalar& x) {
    double v = x.value();
    return JetScalar::unary(x, std::sin(v), std::cos(v), -std::sin(v));
}
inline JetScalar cos(const JetScalar& x) {
    double v = x.value();
    return JetScalar::unary(x, std::cos(v), -std::sin(v), -std::cos(v));
}
inline JetScalar exp(const JetScalar& x) {
    double e = std::exp(x.value());
    return JetScalar::unary(x, e, e, e);
}
inline JetScalar abs(const JetScalar& x) {
    double v = x.value();
    double sg = (v > 0) - (v < 0);
    return JetScalar::unary(x, std::fabs(v), sg, 0.0);
}
inline JetScalar tanh(const JetScalar& x) {
    Derivs d = tanh_derivs(x.value());
    return JetScalar::unary(x, d.f0, d.f1, d.f2);
}
inline JetScalar apply_function(FunctionKind kind, const JetScalar& x,
                                double safelog_k = default_safelog_k) {
    Derivs d = function_derivs(kind, x.value(), safelog_k);
    return JetScalar::unary(x, d.f0, d.f1, d.f2);
}

inline std::vector<JetScalar> make_input_jets(const JetSpec* spec, std::span<const double> point) {
    std::vector<JetScalar> in;
    in.reserve(spec->n_inputs);
    for (int i = 0; i < spec->n_inputs; ++i) in.push_back(JetScalar::input(spec, i, point[i]));
    return in;
}

}  // namespace mixfunn
