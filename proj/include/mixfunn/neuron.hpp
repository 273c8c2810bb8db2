#pragma once

// second-order and mixed-function neurons, scalar reference forms

#include <span>
#include <vector>

#include "common.hpp"
#include "functions.hpp"

namespace mixfunn {

// number of unordered input pairs (i <= j), i.e. the reduced quadratic weight count
inline int tri_size(int n) { return n * (n + 1) / 2; }

// index of pair (i, j), i <= j, in row-major upper-triangular order
inline int tri_index(int i, int j, int n) {
    return i * n - i * (i + 1) / 2 + j;
}

// inverse of tri_index
inline std::pair<int, int> tri_unindex(int k, int n) {
    for (int i = 0; i < n; ++i) {
        int row = n - i;
        if (k < row) return {i, i + k};
        k -= row;
    }
    throw error("tri_unindex: index out of range");
}

// s = b + sum_i w_i x_i + sum_{i<=j} u_ij x_i x_j.
// equivalent to the full quadratic form with a symmetric weight matrix folded
// as u_ij = U_ij + U_ji (i < j), u_ii = U_ii.
struct SecondOrderNeuron {
    double b = 0;
    std::vector<double> w;  // n
    std::vector<double> u;  // tri_size(n)
};

template <class V>
V second_order_forward(double b, std::span<const double> w, std::span<const double> u,
                       std::span<const V> x) {
    const int n = int(w.size());
    V s = x[0] * 0.0 + b;  // typed zero + bias
    for (int i = 0; i < n; ++i) s = s + w[i] * x[i];
    int p = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) s = s + u[p++] * (x[i] * x[j]);
    return s;
}

inline double second_order_forward(const SecondOrderNeuron& nrn, std::span<const double> x) {
    const int n = int(nrn.w.size());
    double s = nrn.b;
    for (int i = 0; i < n; ++i) s += nrn.w[i] * x[i];
    int p = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) s += nrn.u[p++] * x[i] * x[j];
    return s;
}

enum class MixNormalization { Raw, Softmax };

// a = sum_q w_q f_q(s_q) with w either raw or softmax(alpha/T)
struct MixedFunctionNeuron {
    std::vector<FunctionKind> kinds;
    std::vector<double> mix;  // raw weights, or softmax logits alpha
    MixNormalization normalization = MixNormalization::Raw;
    double temperature = 1.0;
    double safelog_k = default_safelog_k;
};

inline double mixed_forward(const MixedFunctionNeuron& nrn, std::span<const double> pre) {
    std::vector<double> w = nrn.mix;
    if (nrn.normalization == MixNormalization::Softmax)
        w = softmax_weights(nrn.mix, nrn.temperature);
    double a = 0;
    for (std::size_t q = 0; q < nrn.kinds.size(); ++q)
        a += w[q] * apply_function(nrn.kinds[q], pre[q], nrn.safelog_k);
    return a;
}

}  // namespace mixfunn
