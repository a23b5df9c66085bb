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
#include "gmmcluster/mixture.hpp"
#include "gmmcluster/moments.hpp"
#include "gmmcluster/monomial.hpp"
#include "gmmcluster/sdp.hpp"
#include "gmmcluster/sos.hpp"
#include "gmmcluster/system.hpp"

namespace gmmcluster {

/// (2t - 1)!!, the order-2t moment of a one-dimensional standard Gaussian.
inline double gaussian_moment_constant(int t) {
    if (t < 0) throw std::invalid_argument("gaussian_moment_constant: negative order");
    double r = 1.0;
    for (int j = 3; j <= 2 * t - 1; j += 2) r *= static_cast<double>(j);
    return r;
}

namespace detail {

/// Full contraction <M, v^{(x) order}> as a polynomial over `dim` variables,
/// with the tensor's variables mapped to positions [offset, offset + M.d).
inline Polynomial tensor_contraction_poly(const SymMomentTensor& m, int dim, int offset,
                                          double scale) {
    if (offset < 0 || offset + m.d > dim)
        throw std::invalid_argument("tensor_contraction_poly: offset out of range");
    Polynomial p(dim);
    for (const auto& [e, val] : m.entries) {
        Exponents ee(dim, 0);
        for (int i = 0; i < m.d; ++i) ee[offset + i] = e[i];
        p.add_term(ee, scale * multinomial(e) * val);
    }
    return p;
}

/// ||v||^{2t} restricted to variables [lo, hi).
inline Polynomial norm_power(int dim, int lo, int hi, int t) {
    Polynomial r = Polynomial::constant(dim, 1.0);
    const Polynomial n2 = Polynomial::squared_norm(dim, lo, hi);
    for (int j = 0; j < t; ++j) r = r * n2;
    return r;
}

inline int pair_multiplicity(int a, int b) { return a == b ? 1 : 2; }

}  // namespace detail

/// Parameters of the centered fourth-moment constraint system.  The
/// admissibility schedules are evaluated and recorded verbatim; the
/// eigenvalue-band exponents they imply are vacuous at desk scale, so the
/// pragmatic half-widths below are what the pipeline consumes, with both
/// values exposed for audit output.
struct CenteredSystemParams {
    double eps = 1e-4;    // moment-estimation slack
    double gamma = 0.0;   // isotropy slack achieved by the caller; 0 = unrecorded
    double delta = 0.0;   // eigenvalue-band half-width; 0 = schedule w_min^3 eps^2
    double w_min = 0.5;   // minimum mixing weight
    double r = 4.0;       // bound on max_i ||Sigma_i - I||_F^2
    double c = 1.0;       // constant scaling the admissibility schedules

    double pragmatic_band = 0.25;     // band half-width used when pragmatic
    double pragmatic_union_band = 0.05;
    bool use_pragmatic_band = true;

    double delta_resolved() const {
        return delta > 0.0 ? delta : c * std::pow(w_min, 3) * eps * eps;
    }

    /// Admissible ceiling for eps.
    double eps_cap() const { return c * std::pow(w_min, 16); }

    /// The two gamma ceilings stated for this regime; the stricter binds.
    double gamma_cap_quartic() const { return c * std::pow(w_min, 4) * eps * eps; }
    double gamma_cap_sextic() const { return c * std::pow(w_min, 6) * eps; }
    double gamma_cap() const { return std::min(gamma_cap_quartic(), gamma_cap_sextic()); }

    /// Slack the system certifies after empirical substitution and isotropy
    /// error are accounted for.
    double eps_prime() const {
        return std::pow(w_min, -1.0) * std::pow(eps, 0.25) +
               (gamma > 0.0 ? std::pow(w_min, -2.0) * gamma : 0.0);
    }

    /// Band half-widths: schedule exponents verbatim, and the pragmatic
    /// values the pipeline uses.
    double component_band_verbatim() const { return std::pow(delta_resolved(), 1.0 / 2048.0); }
    double union_band_verbatim() const { return delta_resolved(); }
    double component_band() const {
        return use_pragmatic_band ? pragmatic_band : component_band_verbatim();
    }
    double union_band() const {
        return use_pragmatic_band ? pragmatic_union_band : union_band_verbatim();
    }

    void validate() const {
        if (!(eps > 0.0)) throw std::invalid_argument("CenteredSystemParams: eps must be positive");
        if (!(w_min > 0.0) || w_min > 0.5)
            throw std::invalid_argument("CenteredSystemParams: w_min must lie in (0, 1/2]");
        if (!(r > 0.0)) throw std::invalid_argument("CenteredSystemParams: r must be positive");
        if (!(c > 0.0)) throw std::invalid_argument("CenteredSystemParams: c must be positive");
        if (gamma < 0.0 || delta < 0.0)
            throw std::invalid_argument("CenteredSystemParams: negative slack parameter");
        if (eps > eps_cap())
            throw std::invalid_argument("CenteredSystemParams: eps exceeds the admissible schedule");
        if (gamma > 0.0 && gamma > gamma_cap())
            throw std::invalid_argument(
                "CenteredSystemParams: gamma exceeds the admissible schedule");
        if (!(pragmatic_band > 0.0) || !(pragmatic_union_band > 0.0))
            throw std::invalid_argument("CenteredSystemParams: bands must be positive");
    }
};

/// Constraint system over a direction v for a centered mixture, built from an
/// estimate of the fourth moment tensor.  Contains the unit-ball bound, the
/// scalar quartic-deviation bound, and the certificate constraint asking that
/// the quartic deviation stays small as a quadratic form (coefficients 4, 4, 8).
inline PolynomialSystem centered_system(const SymMomentTensor& m4_hat,
                                        const CenteredSystemParams& params) {
    params.validate();
    if (m4_hat.order != 4)
        throw std::invalid_argument("centered_system: moment tensor must have order 4");
    const int d = m4_hat.d;
    if (d < 1) throw std::invalid_argument("centered_system: tensor dimension must be positive");

    PolynomialSystem sys;
    sys.d = d;
    sys.ball_bound = 1.0;
    sys.add_inequality(Polynomial::constant(d, 1.0) - Polynomial::squared_norm(d, 0, d), "ball");

    // eps ||v||^4 - (<M4, v^4>/3 - ||v||^4) >= 0.
    Polynomial qhat = detail::tensor_contraction_poly(m4_hat, d, 0, 1.0 / 3.0) -
                      detail::norm_power(d, 0, d, 2);
    sys.add_inequality(detail::norm_power(d, 0, d, 2) * params.eps - qhat, "quartic_deviation");

    // sqrt(eps) (||v||^4 + ||u||^4) - (4 <M4, v^2 (x) u^2> - 4 ||v||^2 ||u||^2 - 8 <v,u>^2) >= 0.
    const int jd = 2 * d;
    Polynomial mixed(jd);
    for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b)
            for (int cc = 0; cc < d; ++cc)
                for (int e = cc; e < d; ++e) {
                    const double val = m4_hat.at({a, b, cc, e});
                    if (val == 0.0) continue;
                    Exponents ee(jd, 0);
                    ee[a] += 1;
                    ee[b] += 1;
                    ee[d + cc] += 1;
                    ee[d + e] += 1;
                    const double mult = 4.0 * detail::pair_multiplicity(a, b) *
                                        detail::pair_multiplicity(cc, e);
                    mixed.add_term(ee, mult * val);
                }
    Polynomial cross(jd);
    for (int i = 0; i < d; ++i) {
        Exponents ee(jd, 0);
        ee[i] = 1;
        ee[d + i] = 1;
        cross.add_term(ee, 1.0);
    }
    const Polynomial vn2 = Polynomial::squared_norm(jd, 0, d);
    const Polynomial un2 = Polynomial::squared_norm(jd, d, jd);
    Polynomial deviation = mixed - 4.0 * (vn2 * un2) - 8.0 * (cross * cross);

    MatrixSosConstraint hess;
    hess.target = std::sqrt(params.eps) * (vn2 * vn2 + un2 * un2) - deviation;
    hess.d_v = d;
    hess.d_u = d;
    hess.aux_degree = 4;
    hess.slack = params.eps;
    hess.description = "hessian_band";
    sys.certificate_constraints.push_back(std::move(hess));

    sys.validate();
    return sys;
}

/// Test-only oracle: the eigenvalue-band projections that the planted model
/// implies for the centered system.  component_projections[i] collects the
/// eigendirections of W Sigma_i W (W the inverse square root of the mixture
/// second moment) whose eigenvalues fall outside the component band;
/// union_projection collects those outside the (tighter) union band across
/// all components.
struct GuaranteeTargets {
    std::vector<MatrixXd> component_projections;
    MatrixXd union_projection;
    std::vector<int> component_ranks;
    int union_rank = 0;
    double component_band = 0.0;
    double union_band = 0.0;
    double component_band_verbatim = 0.0;
    double union_band_verbatim = 0.0;
    double rank_bound = 0.0;
};

inline GuaranteeTargets centered_guarantee_targets(const MixtureModel& model,
                                                   const CenteredSystemParams& params) {
    params.validate();

    const int d = model.d;
    const int k = model.k;

    MatrixXd second = MatrixXd::Zero(d, d);
    for (int i = 0; i < k; ++i)
        second += model.weights[i] *
                  (model.covariances[i] + model.means[i] * model.means[i].transpose());
    const MatrixXd w = spd_power(second, -0.5, 1e-12);

    GuaranteeTargets out;
    out.component_band = params.component_band();
    out.union_band = params.union_band();
    out.component_band_verbatim = params.component_band_verbatim();
    out.union_band_verbatim = params.union_band_verbatim();

    MatrixXd union_basis(d, 0);
    double max_fro2 = 0.0;
    for (int i = 0; i < k; ++i) {
        const MatrixXd scaled = symmetrized(w * model.covariances[i] * w);
        max_fro2 = std::max(max_fro2, (scaled - MatrixXd::Identity(d, d)).squaredNorm());
        const SymEig eig = sym_eig(scaled);
        MatrixXd proj = MatrixXd::Zero(d, d);
        int rank = 0;
        for (int j = 0; j < d; ++j) {
            const double dev = std::abs(eig.values[j] - 1.0);
            if (dev > out.component_band) {
                proj += eig.vectors.col(j) * eig.vectors.col(j).transpose();
                ++rank;
            }
            if (dev > out.union_band) mgs_append(union_basis, eig.vectors.col(j), 1e-10);
        }
        out.component_projections.push_back(symmetrized(proj));
        out.component_ranks.push_back(rank);
    }
    out.union_projection = union_basis.cols() == 0
                               ? MatrixXd::Zero(d, d).eval()
                               : symmetrized(union_basis * union_basis.transpose());
    out.union_rank = static_cast<int>(union_basis.cols());

    const double r_eff = std::max(params.r, max_fro2);
    out.rank_bound = k * r_eff / (out.union_band * out.union_band);
    if (out.union_rank > out.rank_bound + 1e-9)
        throw std::runtime_error("centered_guarantee_targets: union rank exceeds its bound");
    return out;
}

/// Parameters of the shared-covariance moment-ladder system.
struct SharedCovSystemParams {
    double eps = 1e-4;
    double gamma = 0.0;
    double delta = 0.0;  // 0 = schedule w_min^3 eps^{1/(10 ln(1/w_min))}
    double w_min = 0.5;
    double c = 1.0;
    int t_max = 0;  // 0 = schedule min(ceil(10 ln(1/w_min)), 6), at least 2

    double pragmatic_band = 0.25;
    double pragmatic_union_band = 0.05;
    bool use_pragmatic_band = true;

    int t_max_schedule() const {
        return std::max(2, static_cast<int>(std::ceil(10.0 * std::log(1.0 / w_min))));
    }

    /// Ladder length: the schedule value clamped at 6 to keep the encoded
    /// degree tractable (the clamp is a recorded deviation).
    int t_max_resolved() const {
        if (t_max > 0) return t_max;
        return std::min(t_max_schedule(), 6);
    }

    double delta_resolved() const {
        if (delta > 0.0) return delta;
        const double log_w = std::log(1.0 / w_min);
        return c * std::pow(w_min, 3) * std::pow(eps, 1.0 / (10.0 * log_w));
    }

    double eps_cap() const {
        return c * std::pow(w_min, 160.0 * std::log(1.0 / w_min));
    }
    double gamma_cap() const {
        return c * std::pow(w_min, 40.0 * std::log(1.0 / w_min)) * eps;
    }

    double eps_prime() const {
        const double log_w = std::log(1.0 / w_min);
        double v = std::pow(w_min, -10.0 * log_w) * std::sqrt(eps);
        if (gamma > 0.0) v += std::pow(w_min, -40.0 * log_w) * gamma * gamma;
        return v;
    }

    double mean_band_verbatim() const { return std::pow(delta_resolved(), 1.0 / 16.0); }
    double union_band_verbatim() const { return delta_resolved(); }
    double mean_band() const {
        return use_pragmatic_band ? pragmatic_band : mean_band_verbatim();
    }
    double union_band() const {
        return use_pragmatic_band ? pragmatic_union_band : union_band_verbatim();
    }

    void validate() const {
        if (!(eps > 0.0)) throw std::invalid_argument("SharedCovSystemParams: eps must be positive");
        if (!(w_min > 0.0) || w_min > 0.5)
            throw std::invalid_argument("SharedCovSystemParams: w_min must lie in (0, 1/2]");
        if (!(c > 0.0)) throw std::invalid_argument("SharedCovSystemParams: c must be positive");
        if (gamma < 0.0 || delta < 0.0)
            throw std::invalid_argument("SharedCovSystemParams: negative slack parameter");
        if (t_max < 0 || t_max_resolved() < 2)
            throw std::invalid_argument("SharedCovSystemParams: ladder must reach t = 2");
        if (!(pragmatic_band > 0.0) || !(pragmatic_union_band > 0.0))
            throw std::invalid_argument("SharedCovSystemParams: bands must be positive");
    }
};

/// Constraint system over a direction v for a mixture with a shared
/// covariance: the unit ball plus, for each t = 1..t_max, the two-sided
/// deviation bound |<M_{2t}, v^{(x) 2t}> - (2t-1)!! ||v||^{2t}| <= sqrt(eps) ||v||^{2t}.
inline PolynomialSystem shared_cov_system(const std::vector<SymMomentTensor>& m_hats,
                                          const SharedCovSystemParams& params) {
    params.validate();
    if (m_hats.empty()) throw std::invalid_argument("shared_cov_system: no moment tensors");
    const int d = m_hats.front().d;
    const int t_max = params.t_max_resolved();

    PolynomialSystem sys;
    sys.d = d;
    sys.ball_bound = 1.0;
    sys.add_inequality(Polynomial::constant(d, 1.0) - Polynomial::squared_norm(d, 0, d), "ball");

    const double slack = std::sqrt(params.eps);
    for (int t = 1; t <= t_max; ++t) {
        const SymMomentTensor* m = nullptr;
        for (const auto& cand : m_hats)
            if (cand.order == 2 * t) m = &cand;
        if (m == nullptr)
            throw std::invalid_argument("shared_cov_system: missing moment tensor of order " +
                                        std::to_string(2 * t));
        if (m->d != d)
            throw std::invalid_argument("shared_cov_system: moment tensor dimension mismatch");
        Polynomial dev = detail::tensor_contraction_poly(*m, d, 0, 1.0) -
                         gaussian_moment_constant(t) * detail::norm_power(d, 0, d, t);
        Polynomial margin = slack * detail::norm_power(d, 0, d, t);
        const std::string tag = std::to_string(2 * t);
        sys.add_inequality(margin - dev, "moment_dev" + tag + "_upper");
        sys.add_inequality(margin + dev, "moment_dev" + tag + "_lower");
    }

    sys.validate();
    return sys;
}

/// Test-only oracle for the shared-covariance system: P collects the
/// eigendirections of W Sigma W whose eigenvalues sit below 1 minus the mean
/// band (these are spanned by the component means), R those below 1 minus the
/// tighter union band.  rank(P) <= k always.
struct SharedCovGuaranteeTargets {
    MatrixXd mean_projection;
    MatrixXd union_projection;
    int mean_rank = 0;
    int union_rank = 0;
    double mean_band = 0.0;
    double union_band = 0.0;
    double mean_band_verbatim = 0.0;
    double union_band_verbatim = 0.0;
};

inline SharedCovGuaranteeTargets shared_cov_guarantee_targets(const MixtureModel& model,
                                                              const SharedCovSystemParams& params) {
    params.validate();

    const int d = model.d;
    const int k = model.k;
    for (int i = 1; i < k; ++i)
        if ((model.covariances[i] - model.covariances[0]).cwiseAbs().maxCoeff() > 1e-9)
            throw std::invalid_argument(
                "shared_cov_guarantee_targets: components must share one covariance");

    VectorXd mean_bar = VectorXd::Zero(d);
    for (int i = 0; i < k; ++i) mean_bar += model.weights[i] * model.means[i];
    MatrixXd second = model.covariances[0];
    for (int i = 0; i < k; ++i)
        second += model.weights[i] * model.means[i] * model.means[i].transpose();
    const MatrixXd w = spd_power(second, -0.5, 1e-12);
    const MatrixXd scaled = symmetrized(w * model.covariances[0] * w);
    const SymEig eig = sym_eig(scaled);

    SharedCovGuaranteeTargets out;
    out.mean_band = params.mean_band();
    out.union_band = params.union_band();
    out.mean_band_verbatim = params.mean_band_verbatim();
    out.union_band_verbatim = params.union_band_verbatim();

    MatrixXd mean_proj = MatrixXd::Zero(d, d);
    MatrixXd union_proj = MatrixXd::Zero(d, d);
    for (int j = 0; j < d; ++j) {
        if (eig.values[j] <= 1.0 - out.mean_band) {
            mean_proj += eig.vectors.col(j) * eig.vectors.col(j).transpose();
            ++out.mean_rank;
        }
        if (eig.values[j] <= 1.0 - out.union_band) {
            union_proj += eig.vectors.col(j) * eig.vectors.col(j).transpose();
            ++out.union_rank;
        }
    }
    out.mean_projection = symmetrized(mean_proj);
    out.union_projection = symmetrized(union_proj);
    if (out.mean_rank > k)
        throw std::runtime_error("shared_cov_guarantee_targets: mean-projection rank exceeds k");
    return out;
}

/// FNV-1a hash of a moment tensor's canonical entry list, for provenance
/// headers.
inline std::string tensor_hash(const SymMomentTensor& m) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix_bytes = [&h](const void* p, size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    };
    const std::int64_t order = m.order, dim = m.d;
    mix_bytes(&order, sizeof(order));
    mix_bytes(&dim, sizeof(dim));
    for (const auto& [e, val] : m.entries) {
        for (int x : e) {
            const std::int64_t xi = x;
            mix_bytes(&xi, sizeof(xi));
        }
        mix_bytes(&val, sizeof(val));
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

/// Serialize an encoded system to the solver text format, prefixed with '#'
/// provenance comment lines (key: value pairs).
inline std::string serialize_system(const PolynomialSystem& sys, int pe_degree,
                                    const EncodeSettings& settings,
                                    const std::vector<std::pair<std::string, std::string>>&
                                        provenance) {
    std::ostringstream os;
    for (const auto& [key, value] : provenance) os << "# " << key << ": " << value << "\n";
    os << sdp_to_text(encode(sys, pe_degree, settings).sdp);
    return os.str();
}

namespace detail {

inline std::string format_double(double x) {
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

}  // namespace detail

/// Provenance record for a centered system build: tensor hash plus every
/// schedule value, verbatim and pragmatic.
inline std::vector<std::pair<std::string, std::string>> centered_provenance(
    const SymMomentTensor& m4_hat, const CenteredSystemParams& params) {
    using detail::format_double;
    return {
        {"system", "centered-quartic"},
        {"m4_hash", tensor_hash(m4_hat)},
        {"dimension", std::to_string(m4_hat.d)},
        {"eps", format_double(params.eps)},
        {"gamma", format_double(params.gamma)},
        {"w_min", format_double(params.w_min)},
        {"r", format_double(params.r)},
        {"c", format_double(params.c)},
        {"delta_resolved", format_double(params.delta_resolved())},
        {"eps_cap", format_double(params.eps_cap())},
        {"gamma_cap_quartic", format_double(params.gamma_cap_quartic())},
        {"gamma_cap_sextic", format_double(params.gamma_cap_sextic())},
        {"gamma_cap_enforced", format_double(params.gamma_cap())},
        {"eps_prime", format_double(params.eps_prime())},
        {"component_band_verbatim", format_double(params.component_band_verbatim())},
        {"union_band_verbatim", format_double(params.union_band_verbatim())},
        {"component_band_used", format_double(params.component_band())},
        {"union_band_used", format_double(params.union_band())},
    };
}

/// Provenance record for a shared-covariance system build.
inline std::vector<std::pair<std::string, std::string>> shared_cov_provenance(
    const std::vector<SymMomentTensor>& m_hats, const SharedCovSystemParams& params) {
    using detail::format_double;
    std::vector<std::pair<std::string, std::string>> rec = {
        {"system", "shared-covariance-ladder"},
        {"dimension", m_hats.empty() ? "0" : std::to_string(m_hats.front().d)},
        {"eps", format_double(params.eps)},
        {"gamma", format_double(params.gamma)},
        {"w_min", format_double(params.w_min)},
        {"c", format_double(params.c)},
        {"t_max_schedule", std::to_string(params.t_max_schedule())},
        {"t_max_used", std::to_string(params.t_max_resolved())},
        {"delta_resolved", format_double(params.delta_resolved())},
        {"eps_cap", format_double(params.eps_cap())},
        {"gamma_cap", format_double(params.gamma_cap())},
        {"eps_prime", format_double(params.eps_prime())},
        {"mean_band_verbatim", format_double(params.mean_band_verbatim())},
        {"union_band_verbatim", format_double(params.union_band_verbatim())},
        {"mean_band_used", format_double(params.mean_band())},
        {"union_band_used", format_double(params.union_band())},
    };
    for (const auto& m : m_hats)
        rec.emplace_back("m" + std::to_string(m.order) + "_hash", tensor_hash(m));
    return rec;
}

}  // namespace gmmcluster
