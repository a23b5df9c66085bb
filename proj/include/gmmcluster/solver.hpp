#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "gmmcluster/linalg.hpp"
#include "gmmcluster/sdp.hpp"

namespace gmmcluster {

enum class SdpStatus { feasible, infeasible, numerically_indeterminate };

inline const char* to_string(SdpStatus s) {
    switch (s) {
        case SdpStatus::feasible: return "feasible";
        case SdpStatus::infeasible: return "infeasible";
        default: return "numerically_indeterminate";
    }
}

/// Residual metrics reported with every solve.
struct SolveStats {
    int iterations = 0;
    double max_equality_violation = 0.0;
    double min_block_eigenvalue = 0.0;   // over all PSD blocks at the solution
    double infeasibility_margin = 0.0;   // improving-ray objective, when infeasible
    double mu_final = 0.0;
    std::string detail;
};

struct SdpSolution {
    SdpStatus status = SdpStatus::numerically_indeterminate;
    VectorXd w;  // full variable vector; meaningful iff status == feasible
    SolveStats stats;
};

namespace detail {

// ---------------------------------------------------------------------------
// Sparse Gauss-Jordan elimination of the linear equalities.
// ---------------------------------------------------------------------------

struct Elimination {
    bool consistent = true;
    double inconsistency = 0.0;          // witnessed violation when !consistent
    VectorXd particular;                 // w_p with free variables at zero
    std::vector<int> free_vars;          // global indices of the free variables
    // null_cols[j]: sparse column j of N (w = w_p + N z), as (row, value).
    std::vector<std::vector<std::pair<int, double>>> null_cols;
};

using SparseRow = std::vector<std::pair<int, double>>;  // sorted by variable

inline void row_axpy(SparseRow& target, double factor, const SparseRow& src, double drop_tol) {
    SparseRow result;
    result.reserve(target.size() + src.size());
    size_t a = 0, b = 0;
    while (a < target.size() || b < src.size()) {
        if (b == src.size() || (a < target.size() && target[a].first < src[b].first)) {
            result.push_back(target[a++]);
        } else if (a == target.size() || src[b].first < target[a].first) {
            result.push_back({src[b].first, factor * src[b].second});
            ++b;
        } else {
            const double v = target[a].second + factor * src[b].second;
            if (std::abs(v) > drop_tol) result.push_back({target[a].first, v});
            ++a;
            ++b;
        }
    }
    target = std::move(result);
}

inline Elimination eliminate_equalities(int n_vars, const std::vector<SdpEquality>& eqs) {
    const int m = static_cast<int>(eqs.size());
    std::vector<SparseRow> rows(m);
    std::vector<double> rhs(m);
    double scale = 1.0;
    for (int r = 0; r < m; ++r) {
        std::map<int, double> acc;
        for (const auto& [var, coef] : eqs[r].terms) acc[var] += coef;
        for (const auto& [var, coef] : acc)
            if (coef != 0.0) rows[r].push_back({var, coef});
        rhs[r] = eqs[r].rhs;
        for (const auto& [var, coef] : rows[r]) scale = std::max(scale, std::abs(coef));
        scale = std::max(scale, std::abs(rhs[r]));
    }
    const double drop_tol = 1e-14 * scale;
    const double zero_row_tol = 1e-11 * scale;

    // col_rows[v]: rows currently containing variable v (kept approximately;
    // rows are validated before use).
    std::vector<std::vector<int>> col_rows(n_vars);
    for (int r = 0; r < m; ++r)
        for (const auto& [var, coef] : rows[r]) col_rows[var].push_back(r);

    std::vector<int> pivot_col(m, -1);
    std::vector<char> processed(m, 0);

    Elimination out;
    for (int step = 0; step < m; ++step) {
        // Deterministic pivot choice: smallest active row (ties by index),
        // then the sparsest acceptable column in it (ties by index).
        int best_row = -1;
        size_t best_size = 0;
        for (int r = 0; r < m; ++r) {
            if (processed[r]) continue;
            if (best_row == -1 || rows[r].size() < best_size) {
                best_row = r;
                best_size = rows[r].size();
            }
        }
        if (best_row == -1) break;
        const int r = best_row;
        processed[r] = 1;

        if (rows[r].empty()) {
            if (std::abs(rhs[r]) > zero_row_tol) {
                out.consistent = false;
                out.inconsistency = std::abs(rhs[r]);
                return out;
            }
            continue;  // redundant row
        }

        double row_max = 0.0;
        for (const auto& [var, coef] : rows[r]) row_max = std::max(row_max, std::abs(coef));
        int pcol = -1;
        size_t pcol_count = 0;
        double pval = 0.0;
        for (const auto& [var, coef] : rows[r]) {
            if (std::abs(coef) < 0.1 * row_max) continue;
            // Count genuine occupancy of this column among unprocessed rows.
            size_t count = 0;
            for (int rr : col_rows[var])
                if (!processed[rr] &&
                    std::binary_search(rows[rr].begin(), rows[rr].end(), std::make_pair(var, 0.0),
                                       [](const auto& a, const auto& b) { return a.first < b.first; }))
                    ++count;
            if (pcol == -1 || count < pcol_count) {
                pcol = var;
                pcol_count = count;
                pval = coef;
            }
        }
        pivot_col[r] = pcol;

        // Eliminate pcol from every other row that carries it.
        std::vector<int> carriers = col_rows[pcol];
        for (int rr : carriers) {
            if (rr == r) continue;
            auto it = std::lower_bound(rows[rr].begin(), rows[rr].end(), std::make_pair(pcol, 0.0),
                                       [](const auto& a, const auto& b) { return a.first < b.first; });
            if (it == rows[rr].end() || it->first != pcol) continue;
            const double factor = -it->second / pval;
            row_axpy(rows[rr], factor, rows[r], drop_tol);
            rhs[rr] += factor * rhs[r];
            for (const auto& [var, coef] : rows[rr]) col_rows[var].push_back(rr);
        }
        col_rows[pcol].clear();
        col_rows[pcol].push_back(r);
    }

    // Assemble the particular solution and the nullspace columns.
    std::vector<char> is_pivot(n_vars, 0);
    for (int r = 0; r < m; ++r)
        if (pivot_col[r] >= 0) is_pivot[pivot_col[r]] = 1;
    std::vector<int> free_index(n_vars, -1);
    for (int v = 0; v < n_vars; ++v)
        if (!is_pivot[v]) {
            free_index[v] = static_cast<int>(out.free_vars.size());
            out.free_vars.push_back(v);
        }
    out.particular = VectorXd::Zero(n_vars);
    out.null_cols.assign(out.free_vars.size(), {});
    for (size_t j = 0; j < out.free_vars.size(); ++j)
        out.null_cols[j].push_back({out.free_vars[j], 1.0});
    for (int r = 0; r < m; ++r) {
        const int p = pivot_col[r];
        if (p < 0) continue;
        double pval = 0.0;
        for (const auto& [var, coef] : rows[r])
            if (var == p) pval = coef;
        out.particular[p] = rhs[r] / pval;
        for (const auto& [var, coef] : rows[r]) {
            if (var == p) continue;
            out.null_cols[free_index[var]].push_back({p, -coef / pval});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Block data in the reduced (z) coordinates.
// ---------------------------------------------------------------------------

struct BlockEntry {
    int r, c;
    double v;
};

struct ReducedBlock {
    int side = 0;
    MatrixXd C;                                // constant part
    std::vector<int> vars;                     // global z indices with support here
    std::vector<std::vector<BlockEntry>> A;    // parallel to vars (upper triangle)
};

inline void add_sym(MatrixXd& m, int r, int c, double v) {
    m(r, c) += v;
    if (r != c) m(c, r) += v;
}

/// <A, B> for a sparse symmetric A (upper triangle entries) and dense symmetric B.
inline double sparse_dot(const std::vector<BlockEntry>& a, const MatrixXd& b) {
    double s = 0.0;
    for (const auto& e : a) s += (e.r == e.c ? 1.0 : 2.0) * e.v * b(e.r, e.c);
    return s;
}

/// V = T A T for sparse symmetric A: sum over entries of rank-2 outer products.
inline void scaled_outer(const std::vector<BlockEntry>& a, const MatrixXd& t, MatrixXd& v) {
    v.setZero();
    for (const auto& e : a) {
        v.noalias() += e.v * t.col(e.r) * t.col(e.c).transpose();
        if (e.r != e.c) v.noalias() += e.v * t.col(e.c) * t.col(e.r).transpose();
    }
}

/// Maximum alpha with X + alpha D >= 0 (allowing a cap), via L^{-1} D L^{-T}.
inline double max_psd_step(const MatrixXd& x, const MatrixXd& d, double cap) {
    Eigen::LLT<MatrixXd> llt(x);
    if (llt.info() != Eigen::Success) return 0.0;
    MatrixXd y = llt.matrixL().solve(d);
    y = llt.matrixL().solve(y.transpose()).eval();
    const double lmin = sym_eig(symmetrized(y)).values.minCoeff();
    if (lmin >= 0.0) return cap;
    return std::min(cap, 1.0 / (-lmin));
}

}  // namespace detail

/// Feasibility solve of a block SDP: find w with all blocks PSD and all
/// equalities satisfied.  The equalities are eliminated exactly up front; the
/// remaining linear matrix inequality feasibility problem runs through a
/// homogeneous self-dual embedding with Nesterov-Todd scaling and Mehrotra
/// predictor-corrector steps.  Outcomes:
///   - feasible: a w with min block eigenvalue >= -tol (verified directly);
///   - infeasible: an improving-ray certificate with margin >= tol;
///   - numerically_indeterminate: iteration cap or vanishing progress.
inline SdpSolution solve_sdp(const SdpDescription& sdp, const SolverSettings& settings = {}) {
    sdp.validate();
    SdpSolution sol;

    detail::Elimination elim = detail::eliminate_equalities(sdp.n_vars, sdp.equalities);
    if (!elim.consistent) {
        sol.status = SdpStatus::infeasible;
        sol.stats.infeasibility_margin = elim.inconsistency;
        sol.stats.detail = "inconsistent linear equalities";
        return sol;
    }
    const int m = static_cast<int>(elim.free_vars.size());

    // Row-access view of N for block assembly.
    std::vector<std::vector<std::pair<int, double>>> n_rows(sdp.n_vars);
    for (int j = 0; j < m; ++j)
        for (const auto& [row, val] : elim.null_cols[j]) n_rows[row].push_back({j, val});

    const int n_blocks = static_cast<int>(sdp.blocks.size());
    std::vector<detail::ReducedBlock> blocks(n_blocks);
    std::vector<char> var_used(m, 0);
    for (int b = 0; b < n_blocks; ++b) {
        auto& rb = blocks[b];
        rb.side = sdp.blocks[b].side;
        rb.C = MatrixXd::Zero(rb.side, rb.side);
        std::map<int, std::map<std::pair<int, int>, double>> per_var;
        for (const auto& t : sdp.blocks[b].terms) {
            if (t.var == -1) {
                detail::add_sym(rb.C, t.row, t.col, t.coef);
                continue;
            }
            if (elim.particular[t.var] != 0.0)
                detail::add_sym(rb.C, t.row, t.col, t.coef * elim.particular[t.var]);
            for (const auto& [z, nv] : n_rows[t.var])
                per_var[z][{t.row, t.col}] += t.coef * nv;
        }
        for (const auto& [z, entries] : per_var) {
            std::vector<detail::BlockEntry> a;
            for (const auto& [rc, v] : entries)
                if (v != 0.0) a.push_back({rc.first, rc.second, v});
            if (a.empty()) continue;
            rb.vars.push_back(z);
            rb.A.push_back(std::move(a));
            var_used[z] = 1;
        }
    }

    // Variables with no cone footprint are free to stay at zero.
    std::vector<int> active;
    std::vector<int> z_of_active(m, -1);
    for (int z = 0; z < m; ++z)
        if (var_used[z]) {
            z_of_active[z] = static_cast<int>(active.size());
            active.push_back(z);
        }
    const int ma = static_cast<int>(active.size());
    for (auto& rb : blocks)
        for (auto& z : rb.vars) z = z_of_active[z];

    auto assemble_w = [&](const VectorXd& z_active) {
        VectorXd w = elim.particular;
        for (int i = 0; i < ma; ++i)
            for (const auto& [row, val] : elim.null_cols[active[i]]) w[row] += val * z_active[i];
        return w;
    };
    auto equality_violation = [&](const VectorXd& w) {
        double worst = 0.0;
        for (const auto& eq : sdp.equalities) {
            double s = -eq.rhs;
            for (const auto& [var, coef] : eq.terms) s += coef * w[var];
            worst = std::max(worst, std::abs(s));
        }
        return worst;
    };
    auto blocks_min_eig = [&](const VectorXd& z_active, double* scale_out) {
        double lmin = std::numeric_limits<double>::infinity(), scale = 1.0;
        for (const auto& rb : blocks) {
            MatrixXd x = rb.C;
            for (size_t i = 0; i < rb.vars.size(); ++i)
                for (const auto& e : rb.A[i]) detail::add_sym(x, e.r, e.c, z_active[rb.vars[i]] * e.v);
            lmin = std::min(lmin, sym_eig(symmetrized(x)).values.minCoeff());
            scale = std::max(scale, x.cwiseAbs().maxCoeff());
        }
        if (scale_out) *scale_out = scale;
        return lmin;
    };

    const double tol = settings.tol;

    // A block with no remaining variable support is constant; if it is not
    // PSD the whole problem is infeasible (unit weight on its most negative
    // eigenvector is an improving ray).
    for (const auto& rb : blocks) {
        if (!rb.vars.empty()) continue;
        const double scale = std::max(1.0, rb.C.cwiseAbs().maxCoeff());
        const double lmin = sym_eig(symmetrized(rb.C)).values.minCoeff();
        if (lmin < -tol * scale) {
            sol.status = SdpStatus::infeasible;
            sol.stats.infeasibility_margin = -lmin / scale;
            sol.stats.detail = "constant block is not PSD";
            return sol;
        }
    }

    if (ma == 0) {
        double scale = 1.0;
        const double lmin = blocks_min_eig(VectorXd::Zero(0), &scale);
        sol.stats.min_block_eigenvalue = lmin;
        if (lmin >= -tol * scale) {
            sol.status = SdpStatus::feasible;
            sol.w = assemble_w(VectorXd::Zero(0));
            sol.stats.max_equality_violation = equality_violation(sol.w);
            sol.stats.detail = "fully determined by equalities";
        } else {
            sol.status = SdpStatus::infeasible;
            sol.stats.infeasibility_margin = -lmin / scale;
            sol.stats.detail = "fully determined by equalities; block not PSD";
        }
        return sol;
    }

    // ------------------------------------------------------------------
    // Homogeneous self-dual embedding:
    //   S_b = tau C_b + sum_j u_j A_{b,j},  <A_j, W> = 0,  <C, W> = -kappa,
    // with W_b, S_b >= 0 and tau, kappa >= 0.  tau-dominant solutions give a
    // feasible z = u / tau; kappa-dominant solutions give an improving ray.
    // ------------------------------------------------------------------
    int n_total = 0;
    for (const auto& rb : blocks) n_total += rb.side;

    std::vector<MatrixXd> W(n_blocks), S(n_blocks);
    for (int b = 0; b < n_blocks; ++b) {
        W[b] = MatrixXd::Identity(blocks[b].side, blocks[b].side);
        S[b] = MatrixXd::Identity(blocks[b].side, blocks[b].side);
    }
    VectorXd u = VectorXd::Zero(ma);
    double tau = 1.0, kappa = 1.0;

    double c_norm = 1.0;
    for (const auto& rb : blocks) c_norm = std::max(c_norm, rb.C.cwiseAbs().maxCoeff());
    std::vector<double> a_norm(ma, 1.0);
    for (const auto& rb : blocks)
        for (size_t i = 0; i < rb.vars.size(); ++i) {
            double nrm = 0.0;
            for (const auto& e : rb.A[i]) nrm = std::max(nrm, std::abs(e.v));
            a_norm[rb.vars[i]] = std::max(a_norm[rb.vars[i]], nrm);
        }

    double mu = 1.0;

    std::vector<MatrixXd> T(n_blocks), Sinv(n_blocks), Rd(n_blocks);
    std::vector<MatrixXd> dW(n_blocks), dS(n_blocks), dW_a(n_blocks), dS_a(n_blocks),
        rhs_w(n_blocks);
    MatrixXd M(ma, ma);
    VectorXd cvec(ma), pvec(ma);

    auto try_extract_feasible = [&]() -> bool {
        if (tau <= 1e-12) return false;
        VectorXd z = u / tau;
        double scale = 1.0;
        const double lmin = blocks_min_eig(z, &scale);
        // The relative test alone is unsound when the candidate's entries blow
        // up (an absolute violation can hide behind a huge scale), so a large
        // solution must also clear an absolute floor.
        if (lmin >= -tol * scale && lmin >= -std::sqrt(tol)) {
            sol.status = SdpStatus::feasible;
            sol.w = assemble_w(z);
            sol.stats.min_block_eigenvalue = lmin;
            sol.stats.max_equality_violation = equality_violation(sol.w);
            return true;
        }
        return false;
    };
    auto try_extract_infeasible = [&]() -> bool {
        double trw = 0.0;
        for (int b = 0; b < n_blocks; ++b) trw += W[b].trace();
        if (trw <= 1e-12) return false;
        double obj = 0.0;
        VectorXd adots = VectorXd::Zero(ma);
        for (int b = 0; b < n_blocks; ++b) {
            obj += (blocks[b].C.array() * W[b].array()).sum();
            for (size_t i = 0; i < blocks[b].vars.size(); ++i)
                adots[blocks[b].vars[i]] += detail::sparse_dot(blocks[b].A[i], W[b]);
        }
        double worst_a = 0.0;
        for (int j = 0; j < ma; ++j)
            worst_a = std::max(worst_a, std::abs(adots[j]) / (a_norm[j] * trw));
        obj /= (c_norm * trw);
        if (obj <= -tol && worst_a <= tol) {
            sol.status = SdpStatus::infeasible;
            sol.stats.infeasibility_margin = -obj;
            sol.stats.detail = "improving-ray certificate (normalized margin " +
                               std::to_string(-obj) + ", max constraint leak " +
                               std::to_string(worst_a) + ")";
            return true;
        }
        return false;
    };

    // Interior-point iterations can stall on thin but nonempty feasible sets.
    // As a fallback, run Douglas-Rachford splitting between the affine space
    // {X_b = C_b + sum_j z_j A_bj} and the PSD product cone, seeded from the
    // best interior-point candidate.  Any point it returns is verified
    // directly, so the fallback cannot introduce false positives.
    auto projection_rescue = [&](const VectorXd& z_seed) -> bool {
        MatrixXd gram = MatrixXd::Zero(ma, ma);
        for (const auto& rb : blocks)
            for (size_t i = 0; i < rb.vars.size(); ++i)
                for (size_t j = 0; j <= i; ++j) {
                    double dot = 0.0;
                    size_t a = 0, b = 0;
                    const auto& ai = rb.A[i];
                    const auto& aj = rb.A[j];
                    while (a < ai.size() && b < aj.size()) {
                        const auto ka = std::make_pair(ai[a].r, ai[a].c);
                        const auto kb = std::make_pair(aj[b].r, aj[b].c);
                        if (ka < kb) {
                            ++a;
                        } else if (kb < ka) {
                            ++b;
                        } else {
                            dot += (ai[a].r == ai[a].c ? 1.0 : 2.0) * ai[a].v * aj[b].v;
                            ++a;
                            ++b;
                        }
                    }
                    const int gi = rb.vars[i];
                    const int gj = rb.vars[j];
                    gram(gi, gj) += dot;
                    if (gi != gj) gram(gj, gi) += dot;
                }
        for (int i = 0; i < ma; ++i) gram(i, i) += 1e-12 * (1.0 + gram(i, i));
        Eigen::LDLT<MatrixXd> gldlt(gram);
        if (gldlt.info() != Eigen::Success) return false;

        auto affine_project = [&](const std::vector<MatrixXd>& y, VectorXd& z,
                                  std::vector<MatrixXd>& xa) {
            VectorXd t = VectorXd::Zero(ma);
            for (int b = 0; b < n_blocks; ++b) {
                MatrixXd diff = y[b] - blocks[b].C;
                for (size_t i = 0; i < blocks[b].vars.size(); ++i)
                    t[blocks[b].vars[i]] += detail::sparse_dot(blocks[b].A[i], diff);
            }
            z = gldlt.solve(t);
            for (int b = 0; b < n_blocks; ++b) {
                xa[b] = blocks[b].C;
                for (size_t i = 0; i < blocks[b].vars.size(); ++i)
                    for (const auto& e : blocks[b].A[i])
                        detail::add_sym(xa[b], e.r, e.c, z[blocks[b].vars[i]] * e.v);
            }
        };

        std::vector<MatrixXd> y(n_blocks), xa(n_blocks), xc(n_blocks);
        for (int b = 0; b < n_blocks; ++b) {
            y[b] = blocks[b].C;
            for (size_t i = 0; i < blocks[b].vars.size(); ++i)
                for (const auto& e : blocks[b].A[i])
                    detail::add_sym(y[b], e.r, e.c, z_seed[blocks[b].vars[i]] * e.v);
            xa[b].resizeLike(y[b]);
            xc[b].resizeLike(y[b]);
        }

        VectorXd z(ma);
        double best_lmin = -std::numeric_limits<double>::infinity();
        int best_at = 0;
        const int rescue_cap = 2000;
        for (int it = 0; it < rescue_cap; ++it) {
            affine_project(y, z, xa);
            double lmin = std::numeric_limits<double>::infinity(), scale = 1.0;
            for (int b = 0; b < n_blocks; ++b) {
                lmin = std::min(lmin, sym_eig(symmetrized(xa[b])).values.minCoeff());
                scale = std::max(scale, xa[b].cwiseAbs().maxCoeff());
            }
            if (lmin >= -tol * scale && lmin >= -std::sqrt(tol)) {
                sol.status = SdpStatus::feasible;
                sol.w = assemble_w(z);
                sol.stats.min_block_eigenvalue = lmin;
                sol.stats.max_equality_violation = equality_violation(sol.w);
                sol.stats.detail = "projection rescue after " + std::to_string(it) + " sweeps";
                return true;
            }
            if (lmin > best_lmin * (1.0 - 1e-3)) {
                if (lmin > best_lmin) best_lmin = lmin;
                best_at = it;
            }
            if (it - best_at > 300) return false;  // stagnated away from the cone
            for (int b = 0; b < n_blocks; ++b) {
                SymEig es = sym_eig(symmetrized(2.0 * xa[b] - y[b]));
                xc[b].noalias() = es.vectors * es.values.cwiseMax(0.0).asDiagonal() *
                                  es.vectors.transpose();
                y[b] += xc[b] - xa[b];
            }
        }
        return false;
    };

    // Mirror fallback on the certificate side: Douglas-Rachford between the
    // PSD product cone and the affine slice {<A_j, W> = 0, <C, W> = -c_norm},
    // whose points are improving rays.  Extraction reuses the verified ray
    // test, so this cannot introduce false negatives either.
    auto dual_projection_rescue = [&]() -> bool {
        const int mr = ma + 1;
        MatrixXd gram = MatrixXd::Zero(mr, mr);
        std::vector<MatrixXd> crows;  // per-block dense row for C
        for (int b = 0; b < n_blocks; ++b) {
            const auto& rb = blocks[b];
            for (size_t i = 0; i < rb.vars.size(); ++i) {
                for (size_t j = 0; j <= i; ++j) {
                    double dot = 0.0;
                    size_t a = 0, c = 0;
                    const auto& ai = rb.A[i];
                    const auto& aj = rb.A[j];
                    while (a < ai.size() && c < aj.size()) {
                        const auto ka = std::make_pair(ai[a].r, ai[a].c);
                        const auto kb = std::make_pair(aj[c].r, aj[c].c);
                        if (ka < kb) {
                            ++a;
                        } else if (kb < ka) {
                            ++c;
                        } else {
                            dot += (ai[a].r == ai[a].c ? 1.0 : 2.0) * ai[a].v * aj[c].v;
                            ++a;
                            ++c;
                        }
                    }
                    const int gi = rb.vars[i];
                    const int gj = rb.vars[j];
                    gram(gi, gj) += dot;
                    if (gi != gj) gram(gj, gi) += dot;
                }
                const double dc = detail::sparse_dot(rb.A[i], rb.C);
                gram(rb.vars[i], ma) += dc;
                gram(ma, rb.vars[i]) += dc;
            }
            gram(ma, ma) += rb.C.squaredNorm();
        }
        for (int i = 0; i < mr; ++i) gram(i, i) += 1e-12 * (1.0 + gram(i, i));
        Eigen::LDLT<MatrixXd> gldlt(gram);
        if (gldlt.info() != Eigen::Success) return false;

        auto affine_project = [&](const std::vector<MatrixXd>& y, std::vector<MatrixXd>& xa) {
            VectorXd r = VectorXd::Zero(mr);
            for (int b = 0; b < n_blocks; ++b) {
                for (size_t i = 0; i < blocks[b].vars.size(); ++i)
                    r[blocks[b].vars[i]] += detail::sparse_dot(blocks[b].A[i], y[b]);
                r[ma] += (blocks[b].C.array() * y[b].array()).sum();
            }
            r[ma] += c_norm;
            VectorXd mu_c = gldlt.solve(r);
            for (int b = 0; b < n_blocks; ++b) {
                xa[b] = y[b] - mu_c[ma] * blocks[b].C;
                for (size_t i = 0; i < blocks[b].vars.size(); ++i)
                    for (const auto& e : blocks[b].A[i])
                        detail::add_sym(xa[b], e.r, e.c, -mu_c[blocks[b].vars[i]] * e.v);
            }
        };

        std::vector<MatrixXd> y = W, xa(n_blocks);
        for (int b = 0; b < n_blocks; ++b) xa[b].resizeLike(y[b]);
        double best_lmin = -std::numeric_limits<double>::infinity();
        int best_at = 0;
        const int rescue_cap = 2000;
        for (int it = 0; it < rescue_cap; ++it) {
            affine_project(y, xa);
            double lmin = std::numeric_limits<double>::infinity();
            for (int b = 0; b < n_blocks; ++b)
                lmin = std::min(lmin, sym_eig(symmetrized(xa[b])).values.minCoeff());
            if (lmin >= 0.0) {
                W = xa;
                if (try_extract_infeasible()) return true;
            } else {
                // Clipping the candidate keeps the ray test sound; accept it
                // when the clipped residuals still pass.
                std::vector<MatrixXd> clipped(n_blocks);
                bool worth_testing = lmin > -1e-7;
                for (int b = 0; b < n_blocks && worth_testing; ++b) {
                    SymEig es = sym_eig(symmetrized(xa[b]));
                    clipped[b].noalias() = es.vectors * es.values.cwiseMax(0.0).asDiagonal() *
                                           es.vectors.transpose();
                }
                if (worth_testing) {
                    W = clipped;
                    if (try_extract_infeasible()) return true;
                }
            }
            if (lmin > best_lmin * (1.0 - 1e-3)) {
                if (lmin > best_lmin) best_lmin = lmin;
                best_at = it;
            }
            if (it - best_at > 300) return false;
            for (int b = 0; b < n_blocks; ++b) {
                SymEig es = sym_eig(symmetrized(2.0 * xa[b] - y[b]));
                MatrixXd xc = es.vectors * es.values.cwiseMax(0.0).asDiagonal() *
                              es.vectors.transpose();
                y[b] += xc - xa[b];
            }
        }
        return false;
    };

    int iter = 0;
    for (; iter < settings.max_iters; ++iter) {
        // Residuals.
        double wdots = 0.0;
        for (int b = 0; b < n_blocks; ++b) {
            Rd[b] = S[b] - tau * blocks[b].C;
            for (size_t i = 0; i < blocks[b].vars.size(); ++i)
                for (const auto& e : blocks[b].A[i])
                    detail::add_sym(Rd[b], e.r, e.c, -u[blocks[b].vars[i]] * e.v);
            wdots += (W[b].array() * S[b].array()).sum();
        }
        pvec.setZero();
        double cw = 0.0;
        for (int b = 0; b < n_blocks; ++b) {
            cw += (blocks[b].C.array() * W[b].array()).sum();
            for (size_t i = 0; i < blocks[b].vars.size(); ++i)
                pvec[blocks[b].vars[i]] += detail::sparse_dot(blocks[b].A[i], W[b]);
        }
        const double g = -cw - kappa;
        mu = (wdots + tau * kappa) / (n_total + 1.0);

        sol.stats.iterations = iter;
        sol.stats.mu_final = mu;
        if (try_extract_feasible()) return sol;
        if (try_extract_infeasible()) return sol;
        if (mu < 1e-18) break;

        // Nesterov-Todd scaling per block: T S T = W, T symmetric PD.
        bool scaling_ok = true;
        for (int b = 0; b < n_blocks && scaling_ok; ++b) {
            SymEig ew = sym_eig(symmetrized(W[b]));
            if (ew.values.minCoeff() <= 0.0) {
                scaling_ok = false;
                break;
            }
            MatrixXd wh = ew.vectors * ew.values.cwiseSqrt().asDiagonal() * ew.vectors.transpose();
            SymEig em = sym_eig(symmetrized(wh * S[b] * wh));
            if (em.values.minCoeff() <= 0.0) {
                scaling_ok = false;
                break;
            }
            MatrixXd mid_inv_sqrt = em.vectors * em.values.cwiseSqrt().cwiseInverse().asDiagonal() *
                                    em.vectors.transpose();
            T[b] = symmetrized(wh * mid_inv_sqrt * wh);
            Eigen::LLT<MatrixXd> slt(S[b]);
            if (slt.info() != Eigen::Success) {
                scaling_ok = false;
                break;
            }
            Sinv[b] = slt.solve(MatrixXd::Identity(blocks[b].side, blocks[b].side));
        }
        if (!scaling_ok) break;

        // Schur matrix M[i][j] = sum_b <A_i, T A_j T>, and c_i = <A_i, T C T>.
        M.setZero();
        cvec.setZero();
        std::vector<MatrixXd> TCT(n_blocks);
        for (int b = 0; b < n_blocks; ++b) {
            const auto& rb = blocks[b];
            TCT[b].noalias() = T[b] * rb.C * T[b];
            MatrixXd v(rb.side, rb.side);
            for (size_t i = 0; i < rb.vars.size(); ++i) {
                detail::scaled_outer(rb.A[i], T[b], v);
                const int gi = rb.vars[i];
                cvec[gi] += detail::sparse_dot(rb.A[i], TCT[b]);
                for (size_t j = 0; j <= i; ++j) {
                    const double val = detail::sparse_dot(rb.A[j], v);
                    const int gj = rb.vars[j];
                    M(gi, gj) += val;
                    if (gi != gj) M(gj, gi) += val;
                }
            }
        }
        for (int i = 0; i < ma; ++i) M(i, i) += 1e-13 * (1.0 + M(i, i));

        Eigen::LDLT<MatrixXd> mldlt(M);
        if (mldlt.info() != Eigen::Success) break;

        const double e_cc = [&] {
            double s = 0.0;
            for (int b = 0; b < n_blocks; ++b) s += (blocks[b].C.array() * TCT[b].array()).sum();
            return s;
        }();

        // One pass of the Newton solve; runs twice (affine, then corrector).
        auto newton = [&](double sigma, bool use_corr, std::vector<MatrixXd>& out_dw,
                          std::vector<MatrixXd>& out_ds, double& out_dtau, double& out_dkappa,
                          VectorXd& out_du) {
            VectorXd q(ma);
            q.setZero();
            double c_rhs = 0.0;  // <C, RHS_W + T Rd T> accumulator
            for (int b = 0; b < n_blocks; ++b) {
                rhs_w[b] = sigma * mu * Sinv[b] - W[b];
                if (use_corr) {
                    MatrixXd corr = dW_a[b] * Sinv[b] * dS_a[b];
                    rhs_w[b] -= 0.5 * (corr + corr.transpose());
                }
                MatrixXd trdt = T[b] * Rd[b] * T[b];
                MatrixXd total = rhs_w[b] + trdt;
                c_rhs += (blocks[b].C.array() * total.array()).sum();
                for (size_t i = 0; i < blocks[b].vars.size(); ++i)
                    q[blocks[b].vars[i]] += detail::sparse_dot(blocks[b].A[i], total);
            }
            for (int i = 0; i < ma; ++i) q[i] += pvec[i];

            VectorXd xq = mldlt.solve(q);
            VectorXd xc = mldlt.solve(cvec);
            const double corr_tau = use_corr ? out_dtau * out_dkappa : 0.0;  // previous affine products
            // The denominator is -||P_perp T C T||^2 - kappa/tau in exact
            // arithmetic; clamp it away from zero so cancellation cannot blow
            // up the tau direction.
            const double denom =
                std::min(cvec.dot(xc) - e_cc - kappa / tau, -1e-12 * (1.0 + std::abs(e_cc)));
            const double rhs_tau = g - c_rhs + cvec.dot(xq) - (sigma * mu - tau * kappa - corr_tau) / tau;
            const double dtau = rhs_tau / denom;
            out_du = xq - dtau * xc;
            out_dtau = dtau;
            out_dkappa = (sigma * mu - tau * kappa - corr_tau) / tau - (kappa / tau) * dtau;
            for (int b = 0; b < n_blocks; ++b) {
                out_ds[b] = -Rd[b] + dtau * blocks[b].C;
                for (size_t i = 0; i < blocks[b].vars.size(); ++i)
                    for (const auto& e : blocks[b].A[i])
                        detail::add_sym(out_ds[b], e.r, e.c, out_du[blocks[b].vars[i]] * e.v);
                out_dw[b] = rhs_w[b] - T[b] * out_ds[b] * T[b];
                out_dw[b] = symmetrized(out_dw[b]);
                out_ds[b] = symmetrized(out_ds[b]);
            }
        };

        // Affine (predictor) step.
        double dtau_a = 0.0, dkappa_a = 0.0;
        VectorXd du_a(ma);
        newton(0.0, false, dW_a, dS_a, dtau_a, dkappa_a, du_a);
        double alpha_a = 1.0;
        for (int b = 0; b < n_blocks; ++b) {
            alpha_a = std::min(alpha_a, detail::max_psd_step(W[b], dW_a[b], 1.0));
            alpha_a = std::min(alpha_a, detail::max_psd_step(S[b], dS_a[b], 1.0));
        }
        if (dtau_a < 0.0) alpha_a = std::min(alpha_a, -tau / dtau_a);
        if (dkappa_a < 0.0) alpha_a = std::min(alpha_a, -kappa / dkappa_a);

        double mu_aff = 0.0;
        for (int b = 0; b < n_blocks; ++b)
            mu_aff += ((W[b] + alpha_a * dW_a[b]).array() * (S[b] + alpha_a * dS_a[b]).array()).sum();
        mu_aff += (tau + alpha_a * dtau_a) * (kappa + alpha_a * dkappa_a);
        mu_aff /= (n_total + 1.0);
        double sigma = std::pow(std::max(0.0, mu_aff / mu), 3.0);
        sigma = std::min(0.999, std::max(1e-8, sigma));

        // Corrector step.
        double dtau = dtau_a, dkappa = dkappa_a;  // carry affine products into the corrector
        VectorXd du(ma);
        newton(sigma, true, dW, dS, dtau, dkappa, du);

        double alpha = 1.0;
        for (int b = 0; b < n_blocks; ++b) {
            alpha = std::min(alpha, detail::max_psd_step(W[b], dW[b], 1.0));
            alpha = std::min(alpha, detail::max_psd_step(S[b], dS[b], 1.0));
        }
        if (dtau < 0.0) alpha = std::min(alpha, -tau / dtau);
        if (dkappa < 0.0) alpha = std::min(alpha, -kappa / dkappa);
        alpha *= 0.98;
        if (alpha < 1e-10) break;

        for (int b = 0; b < n_blocks; ++b) {
            W[b] = symmetrized(W[b] + alpha * dW[b]);
            S[b] = symmetrized(S[b] + alpha * dS[b]);
        }
        u += alpha * du;
        tau += alpha * dtau;
        kappa += alpha * dkappa;
    }

    // Final extraction attempts before giving up.
    if (try_extract_feasible()) return sol;
    if (try_extract_infeasible()) return sol;
    if (tau > 1e-12 && projection_rescue(u / tau)) return sol;
    if (dual_projection_rescue()) return sol;
    sol.status = SdpStatus::numerically_indeterminate;
    sol.stats.iterations = iter;
    sol.stats.detail = "no certificate within budget (mu " + std::to_string(mu) + ", tau " +
                       std::to_string(tau) + ", kappa " + std::to_string(kappa) + ")";
    return sol;
}

}  // namespace gmmcluster
