#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "gmmcluster/monomial.hpp"

namespace gmmcluster {

/// One constraint polynomial that a certificate is allowed to weigh against:
/// the SoS identity gains multiplier-times-axiom summands whose multiplier
/// variables stay linear in the encoded SDP.  The axiom shares the owning
/// constraint's variable split (system components first, then certificate
/// components) and may depend on the system variables up to degree two.
struct CertificateAxiom {
    Polynomial axiom;            // joint polynomial; system-block degree <= 2
    bool equality = false;       // h = 0 axiom: the multiplier is a free polynomial
    int shift_cap = -1;          // inequality: weights scaled by ||u||^{2j}, j <= cap (-1 = max)
    int multiplier_degree = -1;  // equality: multiplier degree in u (-1 = max admissible)
    std::string name;
};

/// Constraint asserting that a polynomial in (v, u) admits an SoS certificate
/// in the auxiliary indeterminate u, with coefficients affine in the moment
/// vector of v.  The target lives in d_v + d_u variables: v components first,
/// then u components.  When axioms are attached, the certificate reads
///   target = sos(u) + sum_j multiplier_j * axiom_j
/// with every multiplier constrained to be pointwise nonnegative on the
/// system's feasible set (free for equality axioms).
struct MatrixSosConstraint {
    Polynomial target;   // polynomial in (v, u)
    int d_v = 0;         // leading variables are the system indeterminate
    int d_u = 0;         // trailing variables are the certificate indeterminate
    int aux_degree = 0;  // total certificate degree in u (even)
    int gram_degree = 0;  // degree in u of the plain SoS part; 0 defaults to aux_degree
    bool sphere_system = false;  // system variables constrained to the unit sphere
    std::vector<CertificateAxiom> axioms;
    double slack = 0.0;  // the epsilon right-hand side, for reporting
    std::string description;

    void validate() const {
        if (d_v < 1 || d_u < 1) throw std::invalid_argument("MatrixSosConstraint: bad dimensions");
        if (target.dim() != d_v + d_u)
            throw std::invalid_argument("MatrixSosConstraint: target dimension mismatch");
        if (aux_degree <= 0 || aux_degree % 2 != 0)
            throw std::invalid_argument("MatrixSosConstraint: aux degree must be positive even");
        if (gram_degree < 0 || gram_degree % 2 != 0 || gram_degree > aux_degree)
            throw std::invalid_argument(
                "MatrixSosConstraint: gram degree must be even and at most the aux degree");
        for (const auto& [e, c] : target.terms()) {
            int udeg = 0;
            for (int i = d_v; i < d_v + d_u; ++i) udeg += e[i];
            if (udeg > aux_degree)
                throw std::invalid_argument("MatrixSosConstraint: target exceeds aux degree");
        }
        for (const auto& ax : axioms) {
            if (ax.axiom.dim() != d_v + d_u)
                throw std::invalid_argument("MatrixSosConstraint: axiom dimension mismatch");
            if (ax.axiom.empty())
                throw std::invalid_argument("MatrixSosConstraint: empty axiom polynomial");
            int sys_deg = 0, aux_deg = 0;
            for (const auto& [e, c] : ax.axiom.terms()) {
                int sd = 0, ud = 0;
                for (int i = 0; i < d_v; ++i) sd += e[i];
                for (int i = d_v; i < d_v + d_u; ++i) ud += e[i];
                sys_deg = std::max(sys_deg, sd);
                aux_deg = std::max(aux_deg, ud);
            }
            if (sys_deg > 2)
                throw std::invalid_argument(
                    "MatrixSosConstraint: axiom degree in the system block exceeds 2");
            if (sys_deg > 0 && !sphere_system)
                throw std::invalid_argument(
                    "MatrixSosConstraint: system-dependent axiom requires sphere_system");
            if (sys_deg > 0 && ax.equality)
                throw std::invalid_argument(
                    "MatrixSosConstraint: equality axiom must not involve the system block");
            if (aux_deg > aux_degree)
                throw std::invalid_argument("MatrixSosConstraint: axiom exceeds aux degree");
        }
    }

    int v_degree() const {
        int deg = 0;
        for (const auto& [e, c] : target.terms()) {
            int vdeg = 0;
            for (int i = 0; i < d_v; ++i) vdeg += e[i];
            deg = std::max(deg, vdeg);
        }
        for (const auto& ax : axioms)
            for (const auto& [e, c] : ax.axiom.terms()) {
                int vdeg = 0;
                for (int i = 0; i < d_v; ++i) vdeg += e[i];
                deg = std::max(deg, vdeg);
            }
        return deg;
    }
};

/// A polynomial feasibility system over one vector indeterminate, with an
/// explicit boundedness radius.  Equalities read h = 0, inequalities read
/// q >= 0.
struct PolynomialSystem {
    int d = 0;
    std::vector<Polynomial> equalities;
    std::vector<Polynomial> inequalities;
    std::vector<MatrixSosConstraint> certificate_constraints;
    double ball_bound = 0.0;  // B with ||v||^2 <= B among the inequalities
    std::vector<std::string> equality_names;
    std::vector<std::string> inequality_names;

    void add_equality(Polynomial p, std::string name) {
        equalities.push_back(std::move(p));
        equality_names.push_back(std::move(name));
    }

    void add_inequality(Polynomial p, std::string name) {
        inequalities.push_back(std::move(p));
        inequality_names.push_back(std::move(name));
    }

    void validate() const {
        if (d < 1) throw std::invalid_argument("PolynomialSystem: dimension must be positive");
        if (!(ball_bound > 0.0))
            throw std::invalid_argument("PolynomialSystem: explicit ball bound required");
        for (const auto& p : equalities)
            if (p.dim() != d) throw std::invalid_argument("PolynomialSystem: equality dimension");
        for (const auto& p : inequalities)
            if (p.dim() != d) throw std::invalid_argument("PolynomialSystem: inequality dimension");
        if (equality_names.size() != equalities.size() ||
            inequality_names.size() != inequalities.size())
            throw std::invalid_argument("PolynomialSystem: name bookkeeping out of sync");
        for (const auto& c : certificate_constraints) {
            c.validate();
            if (c.d_v != d)
                throw std::invalid_argument("PolynomialSystem: certificate dimension mismatch");
        }
    }

    int degree() const {
        int deg = 0;
        for (const auto& p : equalities) deg = std::max(deg, p.degree());
        for (const auto& p : inequalities) deg = std::max(deg, p.degree());
        for (const auto& c : certificate_constraints) deg = std::max(deg, c.v_degree());
        return deg;
    }

    /// True when every constraint is invariant under v -> -v (and, for
    /// certificate constraints, u -> -u separately).
    bool is_even() const {
        for (const auto& p : equalities)
            if (!p.is_even()) return false;
        for (const auto& p : inequalities)
            if (!p.is_even()) return false;
        for (const auto& c : certificate_constraints) {
            if (!c.target.is_even_in_block(0, c.d_v) ||
                !c.target.is_even_in_block(c.d_v, c.d_v + c.d_u))
                return false;
            for (const auto& ax : c.axioms)
                if (!ax.axiom.is_even_in_block(0, c.d_v) ||
                    !ax.axiom.is_even_in_block(c.d_v, c.d_v + c.d_u))
                    return false;
        }
        return true;
    }
};

}  // namespace gmmcluster
