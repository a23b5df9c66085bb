#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "gmmcluster/mixture.hpp"

namespace gmmcluster {

/// n!! in exact integer arithmetic; (-1)!! = 0!! = 1.  Guarded so the result
/// fits in 64 bits.
inline std::int64_t double_factorial(int n) {
    if (n < -1) throw std::invalid_argument("double_factorial: n must be >= -1");
    if (n > 33) throw std::invalid_argument("double_factorial: n exceeds the 64-bit guard (33)");
    std::int64_t r = 1;
    for (int m = n; m > 1; m -= 2) r *= m;
    return r;
}

/// Coefficient tables of the scale-homogenized probabilists' Hermite
/// polynomials H_t(x, s) = sum_j coeff[t][j] x^{t-2j} s^{2j}, built by the
/// exact integer recurrence H_{t+1} = x H_t - t s^2 H_{t-1}.
struct HermiteTable {
    int max_order = 0;
    std::vector<std::vector<std::int64_t>> coefficients;
};

inline HermiteTable build_hermite_table(int max_order) {
    if (max_order < 0 || max_order > 24)
        throw std::invalid_argument("build_hermite_table: order must be in [0, 24]");
    HermiteTable t;
    t.max_order = max_order;
    t.coefficients.resize(max_order + 1);
    t.coefficients[0] = {1};
    if (max_order >= 1) t.coefficients[1] = {1};
    for (int n = 1; n < max_order; ++n) {
        std::vector<std::int64_t> next((n + 1) / 2 + 1, 0);
        for (size_t j = 0; j < t.coefficients[n].size(); ++j) next[j] += t.coefficients[n][j];
        for (size_t j = 0; j < t.coefficients[n - 1].size(); ++j)
            next[j + 1] -= static_cast<std::int64_t>(n) * t.coefficients[n - 1][j];
        t.coefficients[n + 1] = std::move(next);
    }
    return t;
}

inline double hermite_eval(const HermiteTable& table, int t, double x, double s) {
    if (t < 0 || t > table.max_order)
        throw std::invalid_argument("hermite_eval: order outside the table");
    const double s2 = s * s;
    double total = 0.0;
    for (size_t j = 0; j < table.coefficients[t].size(); ++j) {
        double term = static_cast<double>(table.coefficients[t][j]);
        for (int p = 0; p < t - 2 * static_cast<int>(j); ++p) term *= x;
        for (size_t p = 0; p < j; ++p) term *= s2;
        total += term;
    }
    return total;
}

/// E H_t(<x, v>, sqrt(v' S v)) for a shared-covariance mixture, computed via
/// the closed-form moments of the projected 1-D mixture.  Equals the t-th
/// moment of the projected mean distribution, sum_i w_i <mu_i, v>^t.
inline double hermite_mixture_moment(const MixtureModel& model, const VectorXd& v, int t,
                                     const HermiteTable& table) {
    if (!model.shared_covariance)
        throw std::invalid_argument("hermite_mixture_moment: model must share one covariance");
    if (v.size() != model.d)
        throw std::invalid_argument("hermite_mixture_moment: dimension mismatch");
    if (t < 0 || t > table.max_order)
        throw std::invalid_argument("hermite_mixture_moment: order outside the table");
    const double s2 = v.dot(model.covariances[0] * v);

    double total = 0.0;
    for (int i = 0; i < model.k; ++i) {
        const double a = model.means[i].dot(v);
        // 1-D Gaussian moments m_p = E y^p, y ~ N(a, s2).
        std::vector<double> m(t + 1);
        m[0] = 1.0;
        if (t >= 1) m[1] = a;
        for (int p = 2; p <= t; ++p) m[p] = a * m[p - 1] + (p - 1) * s2 * m[p - 2];

        double h = 0.0;
        double s2j = 1.0;
        for (size_t j = 0; j < table.coefficients[t].size(); ++j) {
            h += static_cast<double>(table.coefficients[t][j]) * s2j * m[t - 2 * j];
            s2j *= s2;
        }
        total += model.weights[i] * h;
    }
    return total;
}

}  // namespace gmmcluster
