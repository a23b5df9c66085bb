#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gmmcluster/common.hpp"
#include "gmmcluster/linalg.hpp"
#include "gmmcluster/monomial.hpp"
#include "gmmcluster/sdp.hpp"
#include "gmmcluster/solver.hpp"
#include "gmmcluster/system.hpp"

namespace gmmcluster {

inline MonomialBasis build_basis(int d, int t) { return MonomialBasis(d, t); }

/// A linear functional on polynomials of degree <= t, represented by its
/// values on every basis monomial, together with the induced symmetric matrix
/// over the degree-<= t/2 monomials.
struct PseudoExpectation {
    MonomialBasis basis;      // all monomials of degree <= t
    VectorXd moment_vector;   // one value per basis monomial
    MatrixXd moment_matrix;   // entry (a, b) = moment_vector[a + b]
    int d = 0;
    int t = 0;

    double value(const Polynomial& p) const {
        if (p.dim() != d) throw std::invalid_argument("PseudoExpectation: dimension mismatch");
        double s = 0.0;
        for (const auto& [e, c] : p.terms()) s += c * moment_vector[basis.index_of(e)];
        return s;
    }
};

inline PseudoExpectation make_pseudo_expectation(MonomialBasis basis, VectorXd moments) {
    if (moments.size() != basis.size())
        throw std::invalid_argument("make_pseudo_expectation: moment count mismatch");
    PseudoExpectation pe{std::move(basis), std::move(moments), MatrixXd(), 0, 0};
    pe.d = pe.basis.dim();
    pe.t = pe.basis.max_degree();
    const MonomialBasis half(pe.d, pe.t / 2);
    pe.moment_matrix.resize(half.size(), half.size());
    for (int a = 0; a < half.size(); ++a)
        for (int b = a; b < half.size(); ++b) {
            Exponents sum = half[a];
            for (int j = 0; j < pe.d; ++j) sum[j] += half[b][j];
            const double v = pe.moment_vector[pe.basis.index_of(sum)];
            pe.moment_matrix(a, b) = v;
            pe.moment_matrix(b, a) = v;
        }
    return pe;
}

/// The pseudo-expectation of the point distribution at x.
inline PseudoExpectation pe_from_point(const VectorXd& x, int t) {
    MonomialBasis basis(static_cast<int>(x.size()), t);
    VectorXd moments = basis.evaluate(x);
    return make_pseudo_expectation(std::move(basis), std::move(moments));
}

/// Ẽ vvᵀ.
inline MatrixXd second_moment(const PseudoExpectation& pe) {
    if (pe.t < 2) throw std::invalid_argument("second_moment: degree must be at least 2");
    MatrixXd m(pe.d, pe.d);
    for (int i = 0; i < pe.d; ++i)
        for (int j = i; j < pe.d; ++j) {
            Exponents e(pe.d, 0);
            e[i] += 1;
            e[j] += 1;
            const double v = pe.moment_vector[pe.basis.index_of(e)];
            m(i, j) = v;
            m(j, i) = v;
        }
    return m;
}

struct EncodeSettings {
    int q_max = 1;                  // localizers for products of up to q_max inequalities
    bool parity_reduction = false;  // exploit v -> -v symmetry (even systems only)
    // When set, the moment vector is pinned to this point's monomials (under
    // the parity split this pins the symmetrized point mass at +/- the point).
    std::optional<VectorXd> pin_point;
};

/// The assembled SDP for a polynomial system at pseudo-expectation degree t.
/// Variable layout: one variable per retained moment-vector entry, then the
/// upper-triangle entries of each certificate Gram block.
struct EncodedSdp {
    SdpDescription sdp;
    MonomialBasis y_basis;      // full degree-<= t monomial basis
    std::vector<int> y_var;     // basis index -> SDP variable, -1 when dropped
    int d = 0;
    int t = 0;
    int n_y_vars = 0;
    bool parity_reduction = false;
    std::vector<double> equality_scales;     // factor each equality was multiplied by
    std::vector<double> inequality_scales;   // factor each inequality was multiplied by
    std::vector<double> certificate_scales;  // factor each certificate target was multiplied by
};

namespace detail {

inline Exponents exp_sum(const Exponents& a, const Exponents& b) {
    Exponents s = a;
    for (size_t j = 0; j < s.size(); ++j) s[j] += b[j];
    return s;
}

inline bool exp_even(const Exponents& e) { return total_degree(e) % 2 == 0; }

/// Indices of basis monomials in each parity class (all in one class when the
/// split is disabled).
inline std::vector<std::vector<int>> parity_classes(const MonomialBasis& basis, bool split) {
    if (!split) {
        std::vector<int> all(basis.size());
        for (int i = 0; i < basis.size(); ++i) all[i] = i;
        return {all};
    }
    std::vector<std::vector<int>> classes(2);
    for (int i = 0; i < basis.size(); ++i) classes[total_degree(basis[i]) % 2].push_back(i);
    return classes;
}

inline Polynomial normalized(const Polynomial& p, double& scale_out) {
    const double nrm = p.coefficient_norm();
    if (!(nrm > 0.0)) throw std::invalid_argument("encode: zero constraint polynomial");
    scale_out = 1.0 / nrm;
    return p * (1.0 / nrm);
}

}  // namespace detail

/// Build the feasibility SDP whose solutions are degree-t pseudo-expectations
/// satisfying the system: a PSD moment matrix, one PSD localizing block per
/// inequality (and per admitted product of them), linear equalities for the
/// polynomial equalities and the normalization, and per certificate constraint
/// a PSD Gram block with coefficient-matching equalities.
inline EncodedSdp encode(const PolynomialSystem& system, int t, const EncodeSettings& settings = {}) {
    system.validate();
    if (t < 2 || t % 2 != 0) throw std::invalid_argument("encode: degree must be even and >= 2");
    if (system.degree() > t) throw std::invalid_argument("encode: constraint degree exceeds t");
    if (settings.q_max < 1 || settings.q_max > 2)
        throw std::invalid_argument("encode: q_max must be 1 or 2");
    if (settings.parity_reduction && !system.is_even())
        throw std::invalid_argument("encode: parity reduction requires a sign-symmetric system");

    EncodedSdp enc{SdpDescription{}, MonomialBasis(system.d, t), {}, system.d, t,
                   0, settings.parity_reduction, {}, {}, {}};
    const int d = system.d;
    const bool split = settings.parity_reduction;

    // Guard against index aliasing in the basis map.
    for (int i = 0; i < enc.y_basis.size(); ++i)
        if (enc.y_basis.index_of(enc.y_basis[i]) != i)
            throw std::logic_error("encode: duplicate monomial aliasing");

    // Moment-vector variables (odd monomials dropped under the parity split).
    enc.y_var.assign(enc.y_basis.size(), -1);
    for (int i = 0; i < enc.y_basis.size(); ++i) {
        if (split && !detail::exp_even(enc.y_basis[i])) continue;
        enc.y_var[i] = enc.n_y_vars++;
    }
    int n_vars = enc.n_y_vars;

    auto y_of = [&](const Exponents& e) {
        const int v = enc.y_var[enc.y_basis.index_of(e)];
        if (v < 0) throw std::logic_error("encode: dropped moment referenced");
        return v;
    };

    if (settings.pin_point) {
        if (settings.pin_point->size() != d)
            throw std::invalid_argument("encode: pin point dimension mismatch");
        // The scalar constraints are fully determined at the pin point, so
        // they are checked here once and their blocks are skipped below
        // (keeping them would put the moment matrix on the cone boundary).
        for (size_t i = 0; i < system.inequalities.size(); ++i)
            if (system.inequalities[i].evaluate(*settings.pin_point) <
                -1e-9 * std::max(1.0, system.inequalities[i].coefficient_norm()))
                throw std::invalid_argument("encode: pin point violates inequality " +
                                            system.inequality_names[i]);
        for (size_t i = 0; i < system.equalities.size(); ++i)
            if (std::abs(system.equalities[i].evaluate(*settings.pin_point)) >
                1e-9 * std::max(1.0, system.equalities[i].coefficient_norm()))
                throw std::invalid_argument("encode: pin point violates equality " +
                                            system.equality_names[i]);
        const VectorXd vals = enc.y_basis.evaluate(*settings.pin_point);
        for (int i = 1; i < enc.y_basis.size(); ++i) {
            if (enc.y_var[i] < 0) continue;
            SdpEquality eq;
            eq.name = "pin_" + std::to_string(i);
            eq.terms.push_back({enc.y_var[i], 1.0});
            eq.rhs = vals[i];
            enc.sdp.equalities.push_back(std::move(eq));
        }
    }

    // (a) Moment matrix block(s), skipped under a pin.
    const MonomialBasis half(d, t / 2);
    if (!settings.pin_point)
    for (const auto& cls : detail::parity_classes(half, split)) {
        if (cls.empty()) continue;
        SdpBlock blk;
        blk.side = static_cast<int>(cls.size());
        blk.name = split ? (detail::exp_even(half[cls[0]]) ? "moment_even" : "moment_odd")
                         : "moment";
        for (size_t a = 0; a < cls.size(); ++a)
            for (size_t b = a; b < cls.size(); ++b)
                blk.add(static_cast<int>(a), static_cast<int>(b),
                        y_of(detail::exp_sum(half[cls[a]], half[cls[b]])), 1.0);
        enc.sdp.blocks.push_back(std::move(blk));
    }

    // (b) Localizing blocks for inequalities and admitted products.
    std::vector<std::pair<Polynomial, std::string>> localizers;
    for (size_t i = 0; i < system.inequalities.size(); ++i) {
        double scale = 1.0;
        localizers.push_back({detail::normalized(system.inequalities[i], scale),
                              "localizer_" + system.inequality_names[i]});
        enc.inequality_scales.push_back(scale);
    }
    if (settings.q_max == 2) {
        const size_t singles = localizers.size();
        for (size_t i = 0; i < singles; ++i)
            for (size_t j = i + 1; j < singles; ++j) {
                Polynomial prod = localizers[i].first * localizers[j].first;
                if (prod.degree() > t) continue;
                double scale = 1.0;
                localizers.push_back({detail::normalized(prod, scale),
                                      "localizer_product_" + system.inequality_names[i] + "_" +
                                          system.inequality_names[j]});
            }
    }
    if (!settings.pin_point)
    for (const auto& [q, name] : localizers) {
        const int s = (t - q.degree()) / 2;
        const MonomialBasis lbasis(d, s);
        for (const auto& cls : detail::parity_classes(lbasis, split)) {
            if (cls.empty()) continue;
            SdpBlock blk;
            blk.side = static_cast<int>(cls.size());
            blk.name = name;
            if (split) blk.name += detail::exp_even(lbasis[cls[0]]) ? "_even" : "_odd";
            for (size_t a = 0; a < cls.size(); ++a)
                for (size_t b = a; b < cls.size(); ++b) {
                    const Exponents ab = detail::exp_sum(lbasis[cls[a]], lbasis[cls[b]]);
                    for (const auto& [g, qc] : q.terms())
                        blk.add(static_cast<int>(a), static_cast<int>(b),
                                y_of(detail::exp_sum(ab, g)), qc);
                }
            enc.sdp.blocks.push_back(std::move(blk));
        }
    }

    // (c) Linear equalities: normalization pin plus h * m = 0 rows.
    {
        Exponents one(d, 0);
        SdpEquality pin;
        pin.name = "normalization";
        pin.terms.push_back({y_of(one), 1.0});
        pin.rhs = 1.0;
        enc.sdp.equalities.push_back(std::move(pin));
    }
    for (size_t i = 0; i < system.equalities.size(); ++i) {
        double scale = 1.0;
        const Polynomial h = detail::normalized(system.equalities[i], scale);
        enc.equality_scales.push_back(scale);
        if (settings.pin_point) continue;
        const int room = t - h.degree();
        const MonomialBasis mult_basis(d, room);
        for (int m = 0; m < mult_basis.size(); ++m) {
            if (split && !detail::exp_even(mult_basis[m])) continue;
            SdpEquality eq;
            eq.name = "eq_" + system.equality_names[i] + "_x" + std::to_string(m);
            std::map<int, double> acc;
            for (const auto& [g, hc] : h.terms()) acc[y_of(detail::exp_sum(mult_basis[m], g))] += hc;
            for (const auto& [var, coef] : acc)
                if (coef != 0.0) eq.terms.push_back({var, coef});
            eq.rhs = 0.0;
            if (!eq.terms.empty()) enc.sdp.equalities.push_back(std::move(eq));
        }
    }

    // (d) Certificate Gram blocks + coefficient matching.  The certificate
    // identity, with every coefficient in the system variables replaced by its
    // pseudo-expectation, reads
    //   E[target] = sos(u) + sum over axioms of multiplier * E_mult[axiom]
    // where the multiplier weight of a system-dependent axiom is itself a
    // small localizing moment matrix over {1, v} tied to the unit sphere.
    for (size_t k = 0; k < system.certificate_constraints.size(); ++k) {
        const auto& cert = system.certificate_constraints[k];
        if (cert.v_degree() > t)
            throw std::invalid_argument("encode: certificate degree exceeds t");
        double scale = 1.0;
        const Polynomial target = detail::normalized(cert.target, scale);
        enc.certificate_scales.push_back(scale);
        const std::string tag = std::to_string(k);
        const int aux_deg = cert.aux_degree;
        const int gram_deg = cert.gram_degree > 0 ? cert.gram_degree : aux_deg;

        // Contributions per u-monomial: coefficient times variable (-1 = constant).
        std::map<Exponents, std::map<int, double>, GradedLexLess> match;

        // (d1) Plain SoS part, one Gram family per admitted ||u||^{2j} shift.
        const Polynomial aux_norm2 = Polynomial::squared_norm(cert.d_u, 0, cert.d_u);
        Polynomial shift_poly = Polynomial::constant(cert.d_u, 1.0);
        for (int j = 0; 2 * j + gram_deg <= aux_deg; ++j) {
            if (j > 0) shift_poly = shift_poly * aux_norm2;
            const MonomialBasis gram_basis(cert.d_u, gram_deg / 2);
            const int gb = gram_basis.size();
            // Gram variable index for the upper-triangle entry (a, b), a <= b.
            std::vector<std::vector<int>> gvar(gb, std::vector<int>(gb, -1));
            for (int a = 0; a < gb; ++a)
                for (int b = a; b < gb; ++b) gvar[a][b] = n_vars++;

            const std::string gname =
                "certificate_gram_" + tag + (j > 0 ? "_s" + std::to_string(j) : "");
            const bool u_split = split;  // everything is even in u whenever the split is on
            for (const auto& cls : detail::parity_classes(gram_basis, u_split)) {
                if (cls.empty()) continue;
                SdpBlock blk;
                blk.side = static_cast<int>(cls.size());
                blk.name = gname;
                if (u_split) blk.name += detail::exp_even(gram_basis[cls[0]]) ? "_even" : "_odd";
                for (size_t a = 0; a < cls.size(); ++a)
                    for (size_t b = a; b < cls.size(); ++b)
                        blk.add(static_cast<int>(a), static_cast<int>(b),
                                gvar[std::min(cls[a], cls[b])][std::max(cls[a], cls[b])], 1.0);
                enc.sdp.blocks.push_back(std::move(blk));
            }
            for (int a = 0; a < gb; ++a)
                for (int b = a; b < gb; ++b) {
                    if (u_split &&
                        detail::exp_even(gram_basis[a]) != detail::exp_even(gram_basis[b]))
                        continue;  // entry lives outside the split blocks, identically zero
                    const Exponents ab = detail::exp_sum(gram_basis[a], gram_basis[b]);
                    for (const auto& [se, sc] : shift_poly.terms())
                        match[detail::exp_sum(ab, se)][gvar[a][b]] += (a == b ? 1.0 : 2.0) * sc;
                }
        }

        // (d2) Target coefficients (affine in y) enter with negative sign.
        for (const auto& [e, c] : target.terms()) {
            Exponents ev(e.begin(), e.begin() + cert.d_v);
            Exponents eu(e.begin() + cert.d_v, e.end());
            match[eu][y_of(ev)] -= c;
        }

        // (d3) Axiom multipliers, scaled by the certificate normalization so
        // the identity stays exact.
        for (size_t ai = 0; ai < cert.axioms.size(); ++ai) {
            const auto& ax = cert.axioms[ai];
            const std::string aname =
                ax.name.empty() ? ("axiom" + std::to_string(ai)) : ax.name;
            int ax_aux_deg = 0, ax_sys_deg = 0;
            for (const auto& [e, c] : ax.axiom.terms()) {
                int sd = 0, ud = 0;
                for (int i = 0; i < cert.d_v; ++i) sd += e[i];
                for (int i = cert.d_v; i < cert.d_v + cert.d_u; ++i) ud += e[i];
                ax_sys_deg = std::max(ax_sys_deg, sd);
                ax_aux_deg = std::max(ax_aux_deg, ud);
            }

            if (ax.equality) {
                // Free polynomial multiplier lambda(u): one unconstrained
                // variable per admitted monomial.
                int cap = aux_deg - ax_aux_deg;
                if (ax.multiplier_degree >= 0) cap = std::min(cap, ax.multiplier_degree);
                const MonomialBasis mult_basis(cert.d_u, cap);
                for (int m = 0; m < mult_basis.size(); ++m) {
                    const int lam = n_vars++;
                    for (const auto& [e, c] : ax.axiom.terms()) {
                        Exponents eu(e.begin() + cert.d_v, e.end());
                        match[detail::exp_sum(mult_basis[m], eu)][lam] += scale * c;
                    }
                }
                continue;
            }

            int max_shift = (aux_deg - ax_aux_deg) / 2;
            if (ax.shift_cap >= 0) max_shift = std::min(max_shift, ax.shift_cap);
            Polynomial ax_shift = Polynomial::constant(cert.d_u, 1.0);
            for (int j = 0; j <= max_shift; ++j) {
                if (j > 0) ax_shift = ax_shift * aux_norm2;
                const std::string mname =
                    "certificate_mult_" + tag + "_" + aname + "_s" + std::to_string(j);
                if (ax_sys_deg == 0) {
                    // Nonnegative scalar weight: a 1x1 block.
                    const int zvar = n_vars++;
                    SdpBlock blk;
                    blk.side = 1;
                    blk.name = mname;
                    blk.add(0, 0, zvar, 1.0);
                    enc.sdp.blocks.push_back(std::move(blk));
                    for (const auto& [e, c] : ax.axiom.terms()) {
                        Exponents eu(e.begin() + cert.d_v, e.end());
                        for (const auto& [se, sc] : ax_shift.terms())
                            match[detail::exp_sum(eu, se)][zvar] += scale * c * sc;
                    }
                } else {
                    // Localizing moment matrix over {1, v}, tied to the unit
                    // sphere: Z is PSD and tr(Z_vv) = Z_00, so the weighted
                    // axiom average stays nonnegative at every system point.
                    const int side = 1 + cert.d_v;
                    std::vector<std::vector<int>> zvar(side, std::vector<int>(side, -1));
                    for (int a = 0; a < side; ++a)
                        for (int b = a; b < side; ++b) zvar[a][b] = n_vars++;
                    SdpBlock blk;
                    blk.side = side;
                    blk.name = mname;
                    for (int a = 0; a < side; ++a)
                        for (int b = a; b < side; ++b) blk.add(a, b, zvar[a][b], 1.0);
                    enc.sdp.blocks.push_back(std::move(blk));
                    SdpEquality tie;
                    tie.name = "certificate_tie_" + tag + "_" + aname + "_s" + std::to_string(j);
                    tie.terms.push_back({zvar[0][0], -1.0});
                    for (int i = 1; i < side; ++i) tie.terms.push_back({zvar[i][i], 1.0});
                    tie.rhs = 0.0;
                    enc.sdp.equalities.push_back(std::move(tie));

                    for (const auto& [e, c] : ax.axiom.terms()) {
                        int a = 0, b = 0;
                        int sys_deg_here = 0;
                        for (int i = 0; i < cert.d_v; ++i)
                            for (int rep = 0; rep < e[i]; ++rep) {
                                ++sys_deg_here;
                                if (sys_deg_here == 1) a = 1 + i;
                                else b = 1 + i;
                            }
                        if (sys_deg_here == 1) b = 0;
                        const int ra = std::min(a, b), rb = std::max(a, b);
                        Exponents eu(e.begin() + cert.d_v, e.end());
                        for (const auto& [se, sc] : ax_shift.terms())
                            match[detail::exp_sum(eu, se)][zvar[ra][rb]] += scale * c * sc;
                    }
                }
            }
        }

        // (d4) Emit one equality per u-monomial carrying any contribution.
        int row = 0;
        for (const auto& [mu, terms] : match) {
            SdpEquality eq;
            eq.name = "certificate_match_" + tag + "_u" + std::to_string(row++);
            for (const auto& [var, coef] : terms)
                if (coef != 0.0) eq.terms.push_back({var, coef});
            eq.rhs = 0.0;
            if (!eq.terms.empty()) enc.sdp.equalities.push_back(std::move(eq));
        }
    }

    enc.sdp.n_vars = n_vars;
    enc.sdp.validate();
    return enc;
}

struct SolveOutcome {
    SdpStatus status = SdpStatus::numerically_indeterminate;
    std::optional<PseudoExpectation> pe;  // present iff status == feasible
    SolveStats residuals;
};

/// Run the feasibility solver on an encoded system and reconstruct the
/// pseudo-expectation (dropped odd moments read back as zero).
inline SolveOutcome solve(const EncodedSdp& enc, const SolverSettings& settings = {}) {
    SolveOutcome out;
    SdpSolution sol = solve_sdp(enc.sdp, settings);
    out.status = sol.status;
    out.residuals = sol.stats;
    if (sol.status != SdpStatus::feasible) return out;

    VectorXd moments = VectorXd::Zero(enc.y_basis.size());
    for (int i = 0; i < enc.y_basis.size(); ++i)
        if (enc.y_var[i] >= 0) moments[i] = sol.w[enc.y_var[i]];
    PseudoExpectation pe = make_pseudo_expectation(enc.y_basis, std::move(moments));

    // Emitted pseudo-expectations must satisfy their own invariants; anything
    // else is reported as indeterminate rather than silently feasible.
    const double lmin = sym_eig(pe.moment_matrix).values.minCoeff();
    const double pin = std::abs(pe.moment_matrix(0, 0) - 1.0);
    const double scale = std::max(1.0, pe.moment_matrix.cwiseAbs().maxCoeff());
    if (lmin < -10.0 * settings.tol * scale || pin > 1e-9) {
        out.status = SdpStatus::numerically_indeterminate;
        out.residuals.detail = "moment-matrix invariant violated (min eig " +
                               std::to_string(lmin) + ", normalization error " +
                               std::to_string(pin) + ")";
        return out;
    }
    out.residuals.min_block_eigenvalue = std::min(out.residuals.min_block_eigenvalue, lmin);
    out.pe = std::move(pe);
    return out;
}

inline SolveOutcome solve_system(const PolynomialSystem& system, int t,
                                 const SolverSettings& settings = {},
                                 bool parity_reduction = false) {
    EncodeSettings es;
    es.q_max = settings.q_max;
    es.parity_reduction = parity_reduction;
    return solve(encode(system, t, es), settings);
}

struct ConstraintCheck {
    std::string name;
    double worst_violation = 0.0;  // equalities: max |E[h m]|; others: eigenvalue deficit
    double min_eigenvalue = 0.0;   // localizers: exact; certificates: sampled lower bound
    double threshold = 0.0;
    bool ok = true;
};

struct SatisfactionReport {
    double eta = 0.0;
    std::vector<ConstraintCheck> checks;
    bool satisfied = true;
};

/// Verify a pseudo-expectation against a system: every equality annihilated
/// against all admissible multipliers, every localizing matrix PSD, and every
/// certificate target nonnegative on sampled directions (a necessary
/// condition for the SoS certificate).  Thresholds scale with eta, the
/// constraint coefficient norm, and the moment magnitude.
inline SatisfactionReport check_satisfaction(const PseudoExpectation& pe,
                                             const PolynomialSystem& system, double eta) {
    system.validate();
    if (pe.d != system.d) throw std::invalid_argument("check_satisfaction: dimension mismatch");
    if (pe.t < system.degree())
        throw std::invalid_argument("check_satisfaction: pseudo-expectation degree too low");

    SatisfactionReport rep;
    rep.eta = eta;
    const double y_scale = std::max(1.0, pe.moment_vector.cwiseAbs().maxCoeff());
    const int d = pe.d, t = pe.t;

    for (size_t i = 0; i < system.equalities.size(); ++i) {
        const Polynomial& h = system.equalities[i];
        ConstraintCheck chk;
        chk.name = system.equality_names[i];
        chk.threshold = eta * h.coefficient_norm() * y_scale;
        const MonomialBasis mult_basis(d, t - h.degree());
        for (int m = 0; m < mult_basis.size(); ++m) {
            double val = 0.0;
            for (const auto& [g, hc] : h.terms())
                val += hc * pe.moment_vector[pe.basis.index_of(detail::exp_sum(mult_basis[m], g))];
            chk.worst_violation = std::max(chk.worst_violation, std::abs(val));
        }
        chk.ok = chk.worst_violation <= chk.threshold;
        rep.satisfied = rep.satisfied && chk.ok;
        rep.checks.push_back(std::move(chk));
    }

    for (size_t i = 0; i < system.inequalities.size(); ++i) {
        const Polynomial& q = system.inequalities[i];
        ConstraintCheck chk;
        chk.name = system.inequality_names[i];
        chk.threshold = eta * q.coefficient_norm() * y_scale;
        const int s = (t - q.degree()) / 2;
        const MonomialBasis lbasis(d, s);
        MatrixXd loc(lbasis.size(), lbasis.size());
        for (int a = 0; a < lbasis.size(); ++a)
            for (int b = a; b < lbasis.size(); ++b) {
                const Exponents ab = detail::exp_sum(lbasis[a], lbasis[b]);
                double val = 0.0;
                for (const auto& [g, qc] : q.terms())
                    val += qc * pe.moment_vector[pe.basis.index_of(detail::exp_sum(ab, g))];
                loc(a, b) = val;
                loc(b, a) = val;
            }
        chk.min_eigenvalue = sym_eig(loc).values.minCoeff();
        chk.worst_violation = std::max(0.0, -chk.min_eigenvalue);
        chk.ok = chk.min_eigenvalue >= -chk.threshold;
        rep.satisfied = rep.satisfied && chk.ok;
        rep.checks.push_back(std::move(chk));
    }

    Rng rng(derive_seed(0x736f73ULL, "satisfaction-sampling"));
    for (size_t k = 0; k < system.certificate_constraints.size(); ++k) {
        const auto& cert = system.certificate_constraints[k];
        ConstraintCheck chk;
        chk.name = cert.description.empty() ? ("certificate_" + std::to_string(k))
                                            : cert.description;
        chk.threshold = eta * cert.target.coefficient_norm() * y_scale;

        // Apply the pseudo-expectation to the v part, leaving a polynomial in u.
        Polynomial in_u(cert.d_u);
        for (const auto& [e, c] : cert.target.terms()) {
            Exponents ev(e.begin(), e.begin() + cert.d_v);
            Exponents eu(e.begin() + cert.d_v, e.end());
            in_u.add_term(eu, c * pe.moment_vector[pe.basis.index_of(ev)]);
        }
        // Nonnegativity of the applied target is only implied where every
        // admitted axiom holds, so samples violating an axiom are skipped.
        auto axiom_floor = [&](const CertificateAxiom& ax, const VectorXd& u) {
            double a0 = 0.0;
            VectorXd lin = VectorXd::Zero(cert.d_v);
            MatrixXd quad = MatrixXd::Zero(cert.d_v, cert.d_v);
            for (const auto& [e, c] : ax.axiom.terms()) {
                double umono = c;
                for (int i = cert.d_v; i < cert.d_v + cert.d_u; ++i)
                    for (int rep = 0; rep < e[i]; ++rep) umono *= u[i - cert.d_v];
                int idx1 = -1, idx2 = -1;
                for (int i = 0; i < cert.d_v; ++i)
                    for (int rep = 0; rep < e[i]; ++rep) (idx1 < 0 ? idx1 : idx2) = i;
                if (idx1 < 0) a0 += umono;
                else if (idx2 < 0) lin[idx1] += umono;
                else {
                    quad(idx1, idx2) += umono / (idx1 == idx2 ? 1.0 : 2.0);
                    quad(idx2, idx1) = quad(idx1, idx2);
                }
            }
            double floor = a0 - 2.0 * lin.norm();
            if (quad.cwiseAbs().maxCoeff() > 0.0) floor += sym_eig(quad).values.minCoeff();
            return floor;
        };
        auto probe = [&](const VectorXd& u, double& min_val) {
            for (const auto& ax : cert.axioms) {
                const double floor = axiom_floor(ax, u);
                if (ax.equality) {
                    if (std::abs(floor) > 1e-9 * std::max(1.0, ax.axiom.coefficient_norm()))
                        return;
                } else if (floor < 0.0) {
                    return;
                }
            }
            min_val = std::min(min_val, in_u.evaluate(u));
        };
        double min_val = std::numeric_limits<double>::infinity();
        for (int axis = 0; axis < cert.d_u; ++axis) {
            VectorXd u = VectorXd::Zero(cert.d_u);
            u[axis] = 1.0;
            probe(u, min_val);
        }
        for (int s = 0; s < 64; ++s) probe(random_unit(cert.d_u, rng), min_val);
        const bool vacuous = !std::isfinite(min_val);
        chk.min_eigenvalue = vacuous ? 0.0 : min_val;
        chk.worst_violation = vacuous ? 0.0 : std::max(0.0, -min_val);
        chk.ok = vacuous || min_val >= -chk.threshold;
        rep.satisfied = rep.satisfied && chk.ok;
        rep.checks.push_back(std::move(chk));
    }
    return rep;
}

}  // namespace gmmcluster
