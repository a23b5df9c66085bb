#pragma once

#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gmmcluster {

/// One affine-in-variables PSD block: X[row, col] = sum of coef * w[var] over
/// the terms, where var = -1 denotes the constant contribution.  Only the
/// upper triangle (row <= col) is stored; the block is implicitly symmetric.
struct SdpBlock {
    int side = 0;
    std::string name;
    struct Term {
        int row, col, var;
        double coef;
    };
    std::vector<Term> terms;

    void add(int row, int col, int var, double coef) {
        if (row > col) std::swap(row, col);
        terms.push_back({row, col, var, coef});
    }
};

/// Linear equality sum coef * w[var] = rhs.
struct SdpEquality {
    std::string name;
    std::vector<std::pair<int, double>> terms;
    double rhs = 0.0;
};

/// A feasibility SDP: find w with every block PSD and all equalities met.
struct SdpDescription {
    int n_vars = 0;
    std::vector<SdpBlock> blocks;
    std::vector<SdpEquality> equalities;

    void validate() const {
        for (const auto& b : blocks) {
            if (b.side < 1) throw std::invalid_argument("SdpDescription: empty block");
            for (const auto& t : b.terms) {
                if (t.row < 0 || t.col < t.row || t.col >= b.side)
                    throw std::invalid_argument("SdpDescription: block index out of range");
                if (t.var < -1 || t.var >= n_vars)
                    throw std::invalid_argument("SdpDescription: variable index out of range");
            }
        }
        for (const auto& e : equalities)
            for (const auto& [var, coef] : e.terms)
                if (var < 0 || var >= n_vars)
                    throw std::invalid_argument("SdpDescription: equality variable out of range");
    }
};

/// Solver configuration (see the solver header for semantics).
struct SolverSettings {
    double tol = 1e-7;
    int max_iters = 200;
    int q_max = 1;
    // Budget for the projection fallbacks that take over when the interior
    // path stalls on a thin feasible set, and the sweep window after which a
    // non-improving fallback run is declared stagnant.
    int rescue_sweeps = 20000;
    int rescue_stall = 2000;
};

/// Plain-text serialization.  Format:
///   sdp <n_vars> <n_blocks> <n_equalities>
///   block <index> <side> <n_terms> <name>
///   <row> <col> <var> <coef>          (n_terms lines; var -1 = constant)
///   eq <index> <n_terms> <rhs> <name>
///   <var> <coef>                      (n_terms lines)
inline std::string sdp_to_text(const SdpDescription& sdp) {
    std::ostringstream out;
    char buf[64];
    out << "sdp " << sdp.n_vars << " " << sdp.blocks.size() << " " << sdp.equalities.size() << "\n";
    for (size_t b = 0; b < sdp.blocks.size(); ++b) {
        const auto& blk = sdp.blocks[b];
        out << "block " << b << " " << blk.side << " " << blk.terms.size() << " " << blk.name
            << "\n";
        for (const auto& t : blk.terms) {
            std::snprintf(buf, sizeof buf, "%.17g", t.coef);
            out << t.row << " " << t.col << " " << t.var << " " << buf << "\n";
        }
    }
    for (size_t i = 0; i < sdp.equalities.size(); ++i) {
        const auto& eq = sdp.equalities[i];
        std::snprintf(buf, sizeof buf, "%.17g", eq.rhs);
        out << "eq " << i << " " << eq.terms.size() << " " << buf << " " << eq.name << "\n";
        for (const auto& [var, coef] : eq.terms) {
            std::snprintf(buf, sizeof buf, "%.17g", coef);
            out << var << " " << buf << "\n";
        }
    }
    return out.str();
}

inline SdpDescription sdp_from_text(const std::string& text) {
    std::istringstream in(text);
    std::string tag;
    SdpDescription sdp;
    size_t n_blocks = 0, n_eqs = 0;
    while (in >> std::ws, in.peek() == '#') std::getline(in, tag);  // provenance comments
    if (!(in >> tag) || tag != "sdp") throw std::runtime_error("sdp_from_text: missing header");
    if (!(in >> sdp.n_vars >> n_blocks >> n_eqs))
        throw std::runtime_error("sdp_from_text: bad header");
    for (size_t b = 0; b < n_blocks; ++b) {
        size_t index = 0, n_terms = 0;
        SdpBlock blk;
        if (!(in >> tag >> index >> blk.side >> n_terms) || tag != "block" || index != b)
            throw std::runtime_error("sdp_from_text: bad block header");
        std::getline(in, blk.name);
        if (!blk.name.empty() && blk.name[0] == ' ') blk.name.erase(0, 1);
        for (size_t t = 0; t < n_terms; ++t) {
            SdpBlock::Term term;
            if (!(in >> term.row >> term.col >> term.var >> term.coef))
                throw std::runtime_error("sdp_from_text: bad block term");
            blk.terms.push_back(term);
        }
        sdp.blocks.push_back(std::move(blk));
    }
    for (size_t i = 0; i < n_eqs; ++i) {
        size_t index = 0, n_terms = 0;
        SdpEquality eq;
        if (!(in >> tag >> index >> n_terms >> eq.rhs) || tag != "eq" || index != i)
            throw std::runtime_error("sdp_from_text: bad equality header");
        std::getline(in, eq.name);
        if (!eq.name.empty() && eq.name[0] == ' ') eq.name.erase(0, 1);
        for (size_t t = 0; t < n_terms; ++t) {
            int var;
            double coef;
            if (!(in >> var >> coef)) throw std::runtime_error("sdp_from_text: bad equality term");
            eq.terms.push_back({var, coef});
        }
        sdp.equalities.push_back(std::move(eq));
    }
    sdp.validate();
    return sdp;
}

}  // namespace gmmcluster
