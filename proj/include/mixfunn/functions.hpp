#pragma once

// the mixed-neuron function library and its derivative tables

#include <array>
#include <cmath>
#include <span>
#include <string_view>
#include <vector>

#include "common.hpp"

namespace mixfunn {

enum class FunctionKind : int {
    Sin = 0,
    Cos,
    ExpAbs,     // e^|x|
    ExpNegAbs,  // e^-|x|
    SqrtAbs,    // sqrt(|x|), derivative 0 at x = 0
    SafeLog,    // log(k + relu(x))
    Identity,
};

inline constexpr int n_function_kinds = 7;
inline constexpr double default_safelog_k = 0.01;
inline constexpr double exp_abs_cap = 60.0;  // see ExpAbs in function_derivs

inline constexpr std::array<FunctionKind, n_function_kinds> all_function_kinds{
    FunctionKind::Sin,      FunctionKind::Cos,     FunctionKind::ExpAbs,
    FunctionKind::ExpNegAbs, FunctionKind::SqrtAbs, FunctionKind::SafeLog,
    FunctionKind::Identity,
};

inline std::string_view function_name(FunctionKind k) {
    switch (k) {
        case FunctionKind::Sin: return "sin";
        case FunctionKind::Cos: return "cos";
        case FunctionKind::ExpAbs: return "exp_abs";
        case FunctionKind::ExpNegAbs: return "exp_neg_abs";
        case FunctionKind::SqrtAbs: return "sqrt_abs";
        case FunctionKind::SafeLog: return "safe_log";
        case FunctionKind::Identity: return "identity";
    }
    return "?";
}

inline FunctionKind function_from_name(std::string_view s) {
    for (FunctionKind k : all_function_kinds)
        if (function_name(k) == s) return k;
    throw error("unknown function kind: " + std::string(s));
}

// value and first three derivatives at x. kink conventions: sign(0) = 0,
// relu'(0) = 0, and second derivatives of |.| and relu are 0 everywhere,
// so e.g. (e^|x|)'' = sign(x)^2 e^|x| which is 0 at the origin.
struct Derivs {
    double f0, f1, f2, f3;
};

inline Derivs function_derivs(FunctionKind kind, double x, double safelog_k = default_safelog_k) {
    switch (kind) {
        case FunctionKind::Sin: {
            double s = std::sin(x), c = std::cos(x);
            return {s, c, -s, -c};
        }
        case FunctionKind::Cos: {
            double s = std::sin(x), c = std::cos(x);
            return {c, -s, -c, s};
        }
        case FunctionKind::ExpAbs: {
            // growth switches to linear far outside any trained region so
            // double-precision losses stay finite on wide domains while the
            // slope keeps pulling oversized pre-activations back into range
            if (std::fabs(x) > exp_abs_cap) {
                double sg = (x > 0) - (x < 0);
                double e = std::exp(exp_abs_cap);
                return {e * (1.0 + std::fabs(x) - exp_abs_cap), sg * e, 0.0, 0.0};
            }
            double sg = (x > 0) - (x < 0);
            double e = std::exp(std::fabs(x));
            return {e, sg * e, sg * sg * e, sg * e};
        }
        case FunctionKind::ExpNegAbs: {
            double sg = (x > 0) - (x < 0);
            double e = std::exp(-std::fabs(x));
            return {e, -sg * e, sg * sg * e, -sg * e};
        }
        case FunctionKind::SqrtAbs: {
            if (x == 0.0) return {0.0, 0.0, 0.0, 0.0};
            double sg = (x > 0) ? 1.0 : -1.0;
            double z = std::fabs(x);
            double r = std::sqrt(z);
            return {r, sg / (2 * r), -1.0 / (4 * z * r), sg * 3.0 / (8 * z * z * r)};
        }
        case FunctionKind::SafeLog: {
            if (x > 0) {
                double z = safelog_k + x;
                return {std::log(z), 1 / z, -1 / (z * z), 2 / (z * z * z)};
            }
            return {std::log(safelog_k), 0.0, 0.0, 0.0};
        }
        case FunctionKind::Identity: return {x, 1.0, 0.0, 0.0};
    }
    throw error("bad function kind");
}

inline double apply_function(FunctionKind kind, double x, double safelog_k = default_safelog_k) {
    return function_derivs(kind, x, safelog_k).f0;
}

inline Derivs tanh_derivs(double x) {
    double t = std::tanh(x);
    double d = 1 - t * t;
    return {t, d, -2 * t * d, -2 * d * (1 - 3 * t * t)};
}

// softmax over alpha/T with max subtraction. entries where mask01 (if given)
// is 0 are excluded from the normalization and get weight 0.
inline std::vector<double> softmax_weights(std::span<const double> alpha, double temperature,
                                           std::span<const double> mask01 = {}) {
    if (temperature <= 0) throw error("softmax temperature must be positive");
    const std::size_t n = alpha.size();
    std::vector<double> w(n, 0.0);
    auto live = [&](std::size_t i) { return mask01.empty() || mask01[i] != 0.0; };
    double mx = -HUGE_VAL;
    for (std::size_t i = 0; i < n; ++i)
        if (live(i)) mx = std::max(mx, alpha[i] / temperature);
    if (mx == -HUGE_VAL) return w;  // everything masked
    double z = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (live(i)) {
            w[i] = std::exp(alpha[i] / temperature - mx);
            z += w[i];
        }
    for (std::size_t i = 0; i < n; ++i) w[i] /= z;
    return w;
}

}  // namespace mixfunn
