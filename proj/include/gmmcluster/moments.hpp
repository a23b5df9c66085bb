#pragma once

#include <algorithm>
#include <map>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "gmmcluster/mixture.hpp"
#include "gmmcluster/monomial.hpp"

namespace gmmcluster {

/// Symmetric moment tensor of even order, stored sparsely: one entry per
/// distinct exponent vector of total degree == order.  The tensor value at a
/// position is independent of the ordering of its indices, so the exponent
/// vector is a canonical key.
struct SymMomentTensor {
    int order = 0;
    int d = 0;
    std::map<Exponents, double, GradedLexLess> entries;

    SymMomentTensor() = default;
    SymMomentTensor(int order_, int d_) : order(order_), d(d_) {
        if (order_ <= 0 || order_ % 2 != 0)
            throw std::invalid_argument("SymMomentTensor: order must be positive and even");
        if (d_ < 1) throw std::invalid_argument("SymMomentTensor: dimension must be positive");
    }

    /// Tensor value at an index multiset given as a coordinate list (any
    /// permutation yields the same value).  Missing entries read as zero.
    double at(const std::vector<int>& coords) const {
        if (static_cast<int>(coords.size()) != order)
            throw std::invalid_argument("SymMomentTensor: index length must equal order");
        Exponents e(d, 0);
        for (int c : coords) {
            if (c < 0 || c >= d) throw std::invalid_argument("SymMomentTensor: index out of range");
            ++e[c];
        }
        auto it = entries.find(e);
        return it == entries.end() ? 0.0 : it->second;
    }

    /// Full contraction <M, v^{ox order}>.
    double contract(const VectorXd& v) const {
        if (v.size() != d) throw std::invalid_argument("SymMomentTensor: dimension mismatch");
        double total = 0.0;
        for (const auto& [e, val] : entries) {
            double mono = 1.0;
            for (int j = 0; j < d; ++j)
                for (int k = 0; k < e[j]; ++k) mono *= v[j];
            total += multinomial(e) * val * mono;
        }
        return total;
    }
};

namespace detail {

/// E prod x^e for x ~ N(mu, sigma), by the Wick/Isserlis recursion on the
/// exponent multiset, memoized.
inline double gaussian_moment(const Exponents& e, const VectorXd& mu, const MatrixXd& sigma,
                              std::map<Exponents, double, GradedLexLess>& memo) {
    if (total_degree(e) == 0) return 1.0;
    auto it = memo.find(e);
    if (it != memo.end()) return it->second;

    const int d = static_cast<int>(e.size());
    int a = 0;
    while (e[a] == 0) ++a;
    Exponents rest = e;
    --rest[a];

    double total = mu[a] * gaussian_moment(rest, mu, sigma, memo);
    for (int b = 0; b < d; ++b) {
        if (rest[b] == 0) continue;
        Exponents rest2 = rest;
        --rest2[b];
        total += rest[b] * sigma(a, b) * gaussian_moment(rest2, mu, sigma, memo);
    }
    memo[e] = total;
    return total;
}

inline void check_order(int order) {
    if (order <= 0 || order % 2 != 0)
        throw std::invalid_argument("moment order must be positive and even");
    if (order > 20) throw std::invalid_argument("moment order exceeds the guard (20)");
}

}  // namespace detail

/// Exact population moment tensor E x^{ox order} of the mixture.
inline SymMomentTensor population_moment(const MixtureModel& model, int order) {
    detail::check_order(order);
    SymMomentTensor t(order, model.d);
    MonomialBasis basis(model.d, order);
    std::vector<std::map<Exponents, double, GradedLexLess>> memo(model.k);
    for (const Exponents& e : basis.monomials()) {
        if (total_degree(e) != order) continue;
        double val = 0.0;
        for (int i = 0; i < model.k; ++i)
            val += model.weights[i] *
                   detail::gaussian_moment(e, model.means[i], model.covariances[i], memo[i]);
        t.entries[e] = val;
    }
    return t;
}

/// Trimmed empirical moment tensor: drop the trim-fraction of points with
/// largest norm, then average x^{ox order} over the rest.
inline SymMomentTensor empirical_moment(const Dataset& data, int order, double trim) {
    detail::check_order(order);
    if (trim < 0.0 || trim >= 1.0)
        throw std::invalid_argument("empirical_moment: trim must be in [0, 1)");
    const int n = data.n(), d = data.d();
    if (n < 1) throw std::invalid_argument("empirical_moment: empty dataset");
    const int keep = n - static_cast<int>(std::floor(trim * n));
    if (keep < 1) throw std::invalid_argument("empirical_moment: no points retained");

    std::vector<std::pair<double, int>> scored(n);
    for (int i = 0; i < n; ++i) scored[i] = {data.points.row(i).squaredNorm(), i};
    std::stable_sort(scored.begin(), scored.end());

    MonomialBasis basis(d, order);
    VectorXd acc = VectorXd::Zero(basis.size());
    for (int s = 0; s < keep; ++s)
        acc += basis.evaluate(data.points.row(scored[s].second).transpose());
    acc /= static_cast<double>(keep);

    SymMomentTensor t(order, d);
    for (int i = 0; i < basis.size(); ++i)
        if (total_degree(basis[i]) == order) t.entries[basis[i]] = acc[i];
    return t;
}

/// Normalized fourth-moment deviation <M4, v^{ox4}>/3 - ||v||^4.  Vanishes
/// identically for a single standard Gaussian; for an exactly isotropic
/// centered mixture it equals the weighted squared variance spread
/// sum_i w_i (v' S_i v - ||v||^2)^2.
inline double eval_q(const SymMomentTensor& m4, const VectorXd& v) {
    if (m4.order != 4) throw std::invalid_argument("eval_q: tensor order must be 4");
    if (v.size() != m4.d) throw std::invalid_argument("eval_q: dimension mismatch");
    const double n2 = v.squaredNorm();
    return m4.contract(v) / 3.0 - n2 * n2;
}

/// Hessian of the quartic form v -> <M4, v^{ox4}>: H[a,b] = 12 M4(a,b,v,v).
inline MatrixXd eval_hessian_m4(const SymMomentTensor& m4, const VectorXd& v) {
    if (m4.order != 4) throw std::invalid_argument("eval_hessian_m4: tensor order must be 4");
    const int d = m4.d;
    if (v.size() != d) throw std::invalid_argument("eval_hessian_m4: dimension mismatch");
    MatrixXd h = MatrixXd::Zero(d, d);
    Exponents e(d, 0);
    for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) {
            double s = 0.0;
            for (int k = 0; k < d; ++k) {
                if (v[k] == 0.0) continue;
                for (int l = 0; l < d; ++l) {
                    if (v[l] == 0.0) continue;
                    ++e[a];
                    ++e[b];
                    ++e[k];
                    ++e[l];
                    auto it = m4.entries.find(e);
                    if (it != m4.entries.end()) s += it->second * v[k] * v[l];
                    --e[a];
                    --e[b];
                    --e[k];
                    --e[l];
                }
            }
            h(a, b) = h(b, a) = 12.0 * s;
        }
    return h;
}

/// Fourth-moment sphericity test at a unit direction; equals eval_q there.
inline double sphericity_score(const SymMomentTensor& m4, const VectorXd& v) {
    if (std::abs(v.norm() - 1.0) > 1e-8)
        throw std::invalid_argument("sphericity_score: direction must be a unit vector");
    return eval_q(m4, v);
}

inline nlohmann::json tensor_to_json(const SymMomentTensor& t) {
    nlohmann::json j;
    j["order"] = t.order;
    j["d"] = t.d;
    j["entries"] = nlohmann::json::array();
    for (const auto& [e, val] : t.entries) {
        std::vector<int> index;
        for (int c = 0; c < t.d; ++c)
            for (int k = 0; k < e[c]; ++k) index.push_back(c);
        j["entries"].push_back({{"index", index}, {"value", val}});
    }
    return j;
}

inline SymMomentTensor tensor_from_json(const nlohmann::json& j) {
    SymMomentTensor t(j.at("order").get<int>(), j.at("d").get<int>());
    for (const auto& entry : j.at("entries")) {
        const auto index = entry.at("index").get<std::vector<int>>();
        Exponents e(t.d, 0);
        for (int c : index) {
            if (c < 0 || c >= t.d) throw std::invalid_argument("tensor_from_json: bad index");
            ++e[c];
        }
        if (total_degree(e) != t.order)
            throw std::invalid_argument("tensor_from_json: index length mismatch");
        t.entries[e] = entry.at("value").get<double>();
    }
    return t;
}

}  // namespace gmmcluster
