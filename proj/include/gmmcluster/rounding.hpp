#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gmmcluster/common.hpp"
#include "gmmcluster/linalg.hpp"
#include "gmmcluster/monomial.hpp"
#include "gmmcluster/sdp.hpp"
#include "gmmcluster/sos.hpp"
#include "gmmcluster/system.hpp"

namespace gmmcluster {

/// Orthonormal basis of a subspace of R^d, possibly empty.
struct Subspace {
    int d = 0;
    MatrixXd basis;  // d x rank, orthonormal columns

    Subspace() = default;
    explicit Subspace(int dim) : d(dim), basis(dim, 0) {}

    int rank() const { return static_cast<int>(basis.cols()); }

    MatrixXd projection() const {
        if (rank() == 0) return MatrixXd::Zero(d, d);
        return basis * basis.transpose();
    }

    void validate() const {
        if (d < 1) throw std::invalid_argument("Subspace: dimension must be positive");
        if (basis.rows() != d && rank() > 0)
            throw std::invalid_argument("Subspace: basis row count mismatch");
        if (rank() > 0) {
            const MatrixXd gram = basis.transpose() * basis;
            const double dev =
                (gram - MatrixXd::Identity(rank(), rank())).cwiseAbs().maxCoeff();
            if (dev > 1e-10) throw std::invalid_argument("Subspace: basis not orthonormal");
        }
    }
};

/// Configuration of the iterative subspace rounding loop.
struct RoundingConfig {
    double gamma = 0.3;  // closeness parameter of the covering guarantee, in (0, 1)
    int t = 4;           // pseudo-expectation degree for the rounding solves
    int rank_cap = 0;    // hard iteration bound; 0 = min(d, ceil((16/gamma)^r_hint), 64)
    int r_hint = 2;      // expected rank of the planted subspace, for the default cap
    std::uint64_t seed = 1;
    SolverSettings solver;
    bool parity_reduction = false;
    double eps = 1e-3;             // certificate slack handed to complement_system
    int complement_pe_degree = 2;  // pseudo-expectation degree when rounding the complement
    bool verbose = false;

    int resolved_rank_cap(int d) const {
        if (rank_cap > 0) return std::min(rank_cap, d);
        const double packing = std::pow(16.0 / gamma, static_cast<double>(r_hint));
        const int cap = packing > 64.0 ? 64 : static_cast<int>(std::ceil(packing));
        return std::min(d, std::min(cap, 64));
    }

    void validate() const {
        if (!(gamma > 0.0) || !(gamma < 1.0))
            throw std::invalid_argument("RoundingConfig: gamma must lie in (0, 1)");
        if (t < 2 || t % 2 != 0)
            throw std::invalid_argument("RoundingConfig: degree must be even and at least 2");
        if (complement_pe_degree < 2 || complement_pe_degree % 2 != 0)
            throw std::invalid_argument(
                "RoundingConfig: complement degree must be even and at least 2");
        if (rank_cap < 0 || r_hint < 1)
            throw std::invalid_argument("RoundingConfig: bad rank cap parameters");
        if (!(eps > 0.0)) throw std::invalid_argument("RoundingConfig: eps must be positive");
    }
};

/// Outcome of a rounding run: the subspace, why the loop stopped, and an
/// optional per-iteration trace (JSON lines).
struct RoundingResult {
    Subspace subspace;
    bool truncated = false;     // true when the rank cap cut the loop short
    std::string stop_reason;    // "infeasible", "indeterminate", "vacuous-conditioning",
                                // "dependent-sample", or "rank-cap"
    int iterations = 0;         // solver calls performed
    std::vector<std::string> trace;
};

namespace detail {

inline std::string rounding_trace_line(int iteration, const std::string& status,
                                       double eigenvalue, double qnorm2) {
    std::ostringstream os;
    os << std::setprecision(12) << "{\"iteration\":" << iteration << ",\"status\":\"" << status
       << "\",\"eigenvalue\":" << eigenvalue << ",\"qnorm2\":" << qnorm2 << "}";
    return os.str();
}

}  // namespace detail

/// Iterative rounding: repeatedly solve the system intersected with "v leaves
/// the current subspace", sample an eigenvector of the second pseudo-moment
/// conditioned on the leaving event, and append it to the basis.  Stops when
/// the intersected system is no longer feasible or the rank cap is reached.
inline RoundingResult round_containing(const PolynomialSystem& system,
                                       const RoundingConfig& cfg) {
    cfg.validate();
    system.validate();
    const int d = system.d;
    const int cap = cfg.resolved_rank_cap(d);
    Rng rng(derive_seed(cfg.seed, "subspace-rounding"));

    RoundingResult result;
    result.subspace = Subspace(d);
    MatrixXd& basis = result.subspace.basis;

    const double solve_band = 1.0 - cfg.gamma * cfg.gamma / 2.0;
    const double accept_band = 1.0 - cfg.gamma * cfg.gamma / 4.0;

    while (result.subspace.rank() < cap) {
        PolynomialSystem work = system;
        const int rank = result.subspace.rank();
        if (rank > 0) {
            const MatrixXd proj = result.subspace.projection();
            Polynomial pnorm(d);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) {
                    Exponents e(d, 0);
                    e[i] += 1;
                    e[j] += 1;
                    pnorm.add_term(e, proj(i, j));
                }
            work.add_inequality(Polynomial::constant(d, solve_band) - pnorm,
                                "containment_r" + std::to_string(rank));
        }

        const bool parity = cfg.parity_reduction && work.is_even();
        ++result.iterations;
        const SolveOutcome outcome = solve_system(work, cfg.t, cfg.solver, parity);
        if (outcome.status == SdpStatus::infeasible) {
            result.stop_reason = "infeasible";
            result.trace.push_back(
                detail::rounding_trace_line(result.iterations, "infeasible", 0.0, 0.0));
            return result;
        }
        if (outcome.status != SdpStatus::feasible) {
            result.stop_reason = "indeterminate";
            result.trace.push_back(
                detail::rounding_trace_line(result.iterations, "indeterminate", 0.0, 0.0));
            return result;
        }

        // Second pseudo-moment matrix M(i, j) = E~[v_i v_j].
        const PseudoExpectation& pe = *outcome.pe;
        MatrixXd m(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j) {
                Exponents e(d, 0);
                e[i] += 1;
                e[j] += 1;
                const double val = pe.moment_vector[pe.basis.index_of(e)];
                m(i, j) = val;
                m(j, i) = val;
            }
        const SymEig eig = sym_eig(m);

        // Eigenvalue-weighted sampling conditioned on leaving the subspace.
        std::vector<int> admissible;
        std::vector<double> qnorms(d, 0.0);
        double mass = 0.0;
        for (int j = 0; j < d; ++j) {
            if (eig.values[j] <= 0.0) continue;
            const double qn2 =
                rank == 0 ? 0.0 : (basis.transpose() * eig.vectors.col(j)).squaredNorm();
            qnorms[j] = qn2;
            if (qn2 <= accept_band) {
                admissible.push_back(j);
                mass += eig.values[j];
            }
        }
        if (mass < 1e-9) {
            result.stop_reason = "vacuous-conditioning";
            result.trace.push_back(detail::rounding_trace_line(result.iterations,
                                                               "vacuous-conditioning", 0.0, 0.0));
            return result;
        }
        const double draw = rng.uniform() * mass;
        int pick = admissible.back();
        double cum = 0.0;
        for (int j : admissible) {
            cum += eig.values[j];
            if (draw < cum) {
                pick = j;
                break;
            }
        }

        VectorXd w = eig.vectors.col(pick);
        int arg = 0;
        for (int i = 1; i < d; ++i)
            if (std::abs(w[i]) > std::abs(w[arg])) arg = i;
        if (w[arg] < 0.0) w = -w;

        if (qnorms[pick] > accept_band + 1e-8)
            throw std::runtime_error("round_containing: conditioning event violated");
        result.trace.push_back(detail::rounding_trace_line(result.iterations, "accepted",
                                                           eig.values[pick], qnorms[pick]));
        if (!mgs_append(basis, w, 1e-8)) {
            result.stop_reason = "dependent-sample";
            result.trace.push_back(
                detail::rounding_trace_line(result.iterations, "dependent-sample", 0.0, 0.0));
            return result;
        }
    }

    result.truncated = true;
    result.stop_reason = "rank-cap";
    result.trace.push_back(detail::rounding_trace_line(result.iterations, "rank-cap", 0.0, 0.0));
    return result;
}

/// System over a fresh unit vector u asking for a degree-t certificate, from
/// the base system's constraints, that <v, u>^2 <= 4 eps.  Feasible u are the
/// directions that every feasible v of the base system avoids; rounding this
/// system recovers the orthogonal complement of the base system's span.
inline PolynomialSystem complement_system(const PolynomialSystem& system_a, int t, double eps) {
    system_a.validate();
    if (t < 2 || t % 2 != 0)
        throw std::invalid_argument("complement_system: certificate degree must be even");
    if (!(eps > 0.0)) throw std::invalid_argument("complement_system: eps must be positive");
    const int d = system_a.d;
    const int jd = 2 * d;

    PolynomialSystem b;
    b.d = d;
    b.ball_bound = 1.0;
    b.add_inequality(Polynomial::constant(d, 1.0) - Polynomial::squared_norm(d, 0, d), "ball");
    b.add_equality(Polynomial::constant(d, 1.0) - Polynomial::squared_norm(d, 0, d), "sphere");

    // Certificate target 4 eps - <v, u>^2 over (u | v), proved SoS in v.
    MatrixSosConstraint cert;
    cert.d_v = d;
    cert.d_u = d;
    cert.aux_degree = t;
    cert.gram_degree = std::min(t, 4);
    cert.sphere_system = true;
    cert.slack = eps;
    cert.description = "complement_certificate";
    Polynomial target = Polynomial::constant(jd, 4.0 * eps);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            Exponents e(jd, 0);
            e[i] += 1;
            e[j] += 1;
            e[d + i] += 1;
            e[d + j] += 1;
            target.add_term(e, -1.0);
        }
    cert.target = target;

    // Lift the base constraints into the certificate's auxiliary block.
    auto lift = [&](const Polynomial& p) {
        Polynomial q(jd);
        for (const auto& [e, c] : p.terms()) {
            Exponents ee(jd, 0);
            for (int i = 0; i < d; ++i) ee[d + i] = e[i];
            q.add_term(ee, c);
        }
        return q;
    };
    auto check_degree = [&](const Polynomial& p, const std::string& name) {
        if (p.degree() > t)
            throw std::invalid_argument("complement_system: degree overflow in axiom " + name);
    };
    for (size_t i = 0; i < system_a.inequalities.size(); ++i) {
        check_degree(system_a.inequalities[i], system_a.inequality_names[i]);
        cert.axioms.push_back(CertificateAxiom{lift(system_a.inequalities[i]), false, -1, -1,
                                               system_a.inequality_names[i]});
    }
    for (size_t i = 0; i < system_a.equalities.size(); ++i) {
        check_degree(system_a.equalities[i], system_a.equality_names[i]);
        cert.axioms.push_back(CertificateAxiom{lift(system_a.equalities[i]), true, -1, -1,
                                               system_a.equality_names[i]});
    }

    // The base system's own certificate constraints enter through their
    // pointwise consequence at the new indeterminate: the certificate block
    // variables are instantiated at u, and the resulting degree-4 terms in u
    // are reduced with ||u||^2 = 1.
    for (const auto& base_cert : system_a.certificate_constraints) {
        if (base_cert.d_u != d)
            throw std::invalid_argument(
                "complement_system: certificate block dimension mismatch");
        if (!base_cert.axioms.empty())
            throw std::invalid_argument(
                "complement_system: nested certificate axioms unsupported");
        Polynomial ax(jd);
        for (const auto& [e, c] : base_cert.target.terms()) {
            Exponents ee(jd, 0);
            for (int i = 0; i < d; ++i) ee[d + i] = e[i];            // base system vars -> v block
            for (int i = 0; i < base_cert.d_u; ++i) ee[i] = e[d + i];  // base aux vars -> u block
            ax.add_term(ee, c);
        }
        // Reduce ||u||^4 terms: coeff of u_0^4 determines the multiple.
        Exponents quartic(jd, 0);
        quartic[0] = 4;
        const double c4 = ax.coefficient(quartic);
        if (c4 != 0.0) {
            for (int i = 0; i < d; ++i)
                for (int j = i; j < d; ++j) {
                    Exponents e(jd, 0);
                    e[i] += 2;
                    e[j] += 2;
                    ax.add_term(e, i == j ? -c4 : -2.0 * c4);
                }
            ax.add_term(Exponents(jd, 0), c4);
        }
        for (const auto& [e, c] : ax.terms()) {
            int udeg = 0;
            for (int i = 0; i < d; ++i) udeg += e[i];
            if (udeg > 2)
                throw std::invalid_argument(
                    "complement_system: certificate constraint not sphere-reducible");
        }
        check_degree(ax, base_cert.description);
        std::string name = base_cert.description.empty() ? "certificate" : base_cert.description;
        cert.axioms.push_back(CertificateAxiom{std::move(ax), false, -1, -1, std::move(name)});
    }

    b.certificate_constraints.push_back(std::move(cert));
    b.validate();
    return b;
}

/// Round the orthogonal complement: build the complement system at the
/// caller's certificate degree and slack, then run the containing rounding on
/// it at the (low) complement pseudo-expectation degree.
inline RoundingResult round_orthogonal(const PolynomialSystem& system_a,
                                       const RoundingConfig& cfg) {
    cfg.validate();
    PolynomialSystem b = complement_system(system_a, cfg.t, cfg.eps);
    RoundingConfig inner = cfg;
    inner.t = cfg.complement_pe_degree;
    RoundingResult result = round_containing(b, inner);
    std::ostringstream os;
    os << std::setprecision(12) << "{\"precondition\":\"gamma >= 4 eps^(1/8)\",\"gamma\":"
       << cfg.gamma << ",\"required\":" << 4.0 * std::pow(cfg.eps, 0.125)
       << ",\"met\":" << (cfg.gamma >= 4.0 * std::pow(cfg.eps, 0.125) ? "true" : "false") << "}";
    result.trace.push_back(os.str());
    return result;
}

}  // namespace gmmcluster
