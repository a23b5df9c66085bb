#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gmmcluster {

/// A monomial in d variables, stored as its exponent vector.
using Exponents = std::vector<int>;

inline int total_degree(const Exponents& e) {
    return std::accumulate(e.begin(), e.end(), 0);
}

/// Graded lexicographic order: lower total degree first; within a degree,
/// higher power on earlier variables first (so x^2 precedes xy precedes y^2).
struct GradedLexLess {
    bool operator()(const Exponents& a, const Exponents& b) const {
        const int da = total_degree(a), db = total_degree(b);
        if (da != db) return da < db;
        // Same degree: a precedes b when a is lexicographically larger.
        return std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end());
    }
};

inline Exponents exp_sum(const Exponents& a, const Exponents& b) {
    Exponents r(a.size());
    for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

inline std::uint64_t binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    k = std::min(k, n - k);
    std::uint64_t r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

/// Number of monomials of degree <= t in d variables: C(d + t, t).
inline std::uint64_t monomial_count(int d, int t) { return binomial(d + t, t); }

/// Multinomial coefficient k! / (e_1! e_2! ... e_d!) where k = sum(e).
inline double multinomial(const Exponents& e) {
    double r = 1.0;
    int n = 0;
    for (int ei : e)
        for (int j = 1; j <= ei; ++j) r *= static_cast<double>(++n) / j;
    return std::round(r);
}

/// Ordered basis of all monomials of degree <= max_degree in dim variables,
/// graded-lex, with the constant monomial at position 0.
class MonomialBasis {
public:
    MonomialBasis(int dim, int max_degree) : dim_(dim), max_degree_(max_degree) {
        if (dim < 1) throw std::invalid_argument("MonomialBasis: dim must be positive");
        if (max_degree < 0) throw std::invalid_argument("MonomialBasis: negative degree");
        const std::uint64_t n = monomial_count(dim, max_degree);
        if (n > 200000)
            throw std::invalid_argument("MonomialBasis: basis size " + std::to_string(n) +
                                        " exceeds the 200000 cap");
        Exponents cur(dim, 0);
        for (int deg = 0; deg <= max_degree; ++deg) enumerate(cur, 0, deg);
        for (size_t i = 0; i < list_.size(); ++i) index_[list_[i]] = static_cast<int>(i);

        // One-multiplication evaluation plan: each nonconstant monomial is a
        // variable times an earlier (lower-degree) monomial.
        plan_parent_.assign(list_.size(), 0);
        plan_var_.assign(list_.size(), 0);
        for (size_t i = 1; i < list_.size(); ++i) {
            Exponents e = list_[i];
            int j = 0;
            while (e[j] == 0) ++j;
            --e[j];
            plan_parent_[i] = index_.at(e);
            plan_var_[i] = j;
        }
    }

    int dim() const { return dim_; }
    int max_degree() const { return max_degree_; }
    int size() const { return static_cast<int>(list_.size()); }
    const Exponents& operator[](int i) const { return list_[i]; }
    const std::vector<Exponents>& monomials() const { return list_; }

    int index_of(const Exponents& e) const {
        auto it = index_.find(e);
        if (it == index_.end())
            throw std::out_of_range("MonomialBasis: monomial outside basis");
        return it->second;
    }

    bool contains(const Exponents& e) const { return index_.count(e) > 0; }

    /// Evaluate every basis monomial at the point v (one multiply each).
    Eigen::VectorXd evaluate(const Eigen::VectorXd& v) const {
        if (v.size() != dim_) throw std::invalid_argument("MonomialBasis: dimension mismatch");
        Eigen::VectorXd out(size());
        out[0] = 1.0;
        for (int i = 1; i < size(); ++i) out[i] = out[plan_parent_[i]] * v[plan_var_[i]];
        return out;
    }

private:
    void enumerate(Exponents& cur, int var, int remaining) {
        if (var == dim_ - 1) {
            cur[var] = remaining;
            list_.push_back(cur);
            cur[var] = 0;
            return;
        }
        for (int e = remaining; e >= 0; --e) {
            cur[var] = e;
            enumerate(cur, var + 1, remaining - e);
        }
        cur[var] = 0;
    }

    int dim_;
    int max_degree_;
    std::vector<Exponents> list_;
    std::map<Exponents, int, GradedLexLess> index_;
    std::vector<int> plan_parent_;
    std::vector<int> plan_var_;
};

/// Sparse polynomial: map from exponent vector to coefficient.  Zero
/// coefficients are never stored.
class Polynomial {
public:
    Polynomial() : dim_(0) {}
    explicit Polynomial(int dim) : dim_(dim) {}

    static Polynomial constant(int dim, double c) {
        Polynomial p(dim);
        p.add_term(Exponents(dim, 0), c);
        return p;
    }

    static Polynomial variable(int dim, int i, double c = 1.0) {
        Polynomial p(dim);
        Exponents e(dim, 0);
        e[i] = 1;
        p.add_term(e, c);
        return p;
    }

    /// ||v||^2 restricted to variables [lo, hi).
    static Polynomial squared_norm(int dim, int lo, int hi, double c = 1.0) {
        Polynomial p(dim);
        for (int i = lo; i < hi; ++i) {
            Exponents e(dim, 0);
            e[i] = 2;
            p.add_term(e, c);
        }
        return p;
    }

    int dim() const { return dim_; }
    bool empty() const { return terms_.empty(); }
    size_t term_count() const { return terms_.size(); }
    const std::map<Exponents, double, GradedLexLess>& terms() const { return terms_; }

    int degree() const {
        int d = 0;
        for (const auto& [e, c] : terms_) d = std::max(d, total_degree(e));
        return d;
    }

    double coefficient(const Exponents& e) const {
        auto it = terms_.find(e);
        return it == terms_.end() ? 0.0 : it->second;
    }

    void add_term(const Exponents& e, double c) {
        if (static_cast<int>(e.size()) != dim_)
            throw std::invalid_argument("Polynomial: exponent dimension mismatch");
        if (c == 0.0) return;
        auto [it, inserted] = terms_.emplace(e, c);
        if (!inserted) {
            it->second += c;
            if (it->second == 0.0) terms_.erase(it);
        }
    }

    Polynomial& operator+=(const Polynomial& o) {
        check_dim(o);
        for (const auto& [e, c] : o.terms_) add_term(e, c);
        return *this;
    }

    Polynomial& operator-=(const Polynomial& o) {
        check_dim(o);
        for (const auto& [e, c] : o.terms_) add_term(e, -c);
        return *this;
    }

    Polynomial operator+(const Polynomial& o) const { Polynomial r = *this; r += o; return r; }
    Polynomial operator-(const Polynomial& o) const { Polynomial r = *this; r -= o; return r; }

    Polynomial operator*(double s) const {
        Polynomial r(dim_);
        if (s == 0.0) return r;
        for (const auto& [e, c] : terms_) r.terms_[e] = c * s;
        return r;
    }

    Polynomial operator*(const Polynomial& o) const {
        check_dim(o);
        Polynomial r(dim_);
        for (const auto& [ea, ca] : terms_)
            for (const auto& [eb, cb] : o.terms_) r.add_term(exp_sum(ea, eb), ca * cb);
        return r;
    }

    double evaluate(const Eigen::VectorXd& v) const {
        double s = 0.0;
        for (const auto& [e, c] : terms_) {
            double p = c;
            for (int j = 0; j < dim_; ++j)
                for (int k = 0; k < e[j]; ++k) p *= v[j];
            s += p;
        }
        return s;
    }

    /// Euclidean norm of the coefficient vector.
    double coefficient_norm() const {
        double s = 0.0;
        for (const auto& [e, c] : terms_) s += c * c;
        return std::sqrt(s);
    }

    /// True when every term has even total degree.
    bool is_even() const {
        for (const auto& [e, c] : terms_)
            if (total_degree(e) % 2 != 0) return false;
        return true;
    }

    /// True when every term has even total degree within the variable block [lo, hi).
    bool is_even_in_block(int lo, int hi) const {
        for (const auto& [e, c] : terms_) {
            int deg = 0;
            for (int i = lo; i < hi; ++i) deg += e[i];
            if (deg % 2 != 0) return false;
        }
        return true;
    }

private:
    void check_dim(const Polynomial& o) const {
        if (o.dim_ != dim_) throw std::invalid_argument("Polynomial: dimension mismatch");
    }

    int dim_;
    std::map<Exponents, double, GradedLexLess> terms_;
};

inline Polynomial operator*(double s, const Polynomial& p) { return p * s; }

}  // namespace gmmcluster
