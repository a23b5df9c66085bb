#include <catch2/catch_amalgamated.hpp>

#include "gmmcluster/sos.hpp"

using namespace gmmcluster;

namespace {

Polynomial sphere_equation(int d) {
    // ||v||^2 - 1
    return Polynomial::squared_norm(d, 0, d) + Polynomial::constant(d, -1.0);
}

Polynomial ball_inequality(int d, double radius_sq = 1.0) {
    // radius^2 - ||v||^2
    return Polynomial::constant(d, radius_sq) - Polynomial::squared_norm(d, 0, d);
}

PolynomialSystem circle_system(int d) {
    PolynomialSystem sys;
    sys.d = d;
    sys.ball_bound = 1.0;
    sys.add_equality(sphere_equation(d), "sphere");
    return sys;
}

int count_system_equalities(const EncodedSdp& enc) {
    int n = 0;
    for (const auto& eq : enc.sdp.equalities)
        if (eq.name.rfind("eq_", 0) == 0) ++n;
    return n;
}

}  // namespace

TEST_CASE("basis sizes match the closed form") {
    const MonomialBasis b1 = build_basis(1, 2);
    REQUIRE(b1.size() == 3);
    CHECK(total_degree(b1[0]) == 0);
    CHECK(b1[1] == Exponents{1});
    CHECK(b1[2] == Exponents{2});

    CHECK(build_basis(2, 2).size() == 6);
    CHECK(build_basis(3, 4).size() == 35);
    CHECK_THROWS_AS(build_basis(11, 10), std::invalid_argument);  // C(21,10) > 200000
}

TEST_CASE("encoding the unit sphere at degree 2") {
    const EncodedSdp enc = encode(circle_system(2), 2);
    REQUIRE(enc.sdp.blocks.size() == 1);
    CHECK(enc.sdp.blocks[0].name == "moment");
    CHECK(enc.sdp.blocks[0].side == 3);
    CHECK(count_system_equalities(enc) == 1);
    CHECK(enc.sdp.equalities.size() == 2);  // normalization pin + the sphere row
    CHECK(enc.n_y_vars == 6);
    CHECK(enc.sdp.n_vars == 6);
}

TEST_CASE("encoding a ball inequality at degree 4") {
    PolynomialSystem sys;
    sys.d = 2;
    sys.ball_bound = 1.0;
    sys.add_inequality(ball_inequality(2), "ball");

    const EncodedSdp enc = encode(sys, 4);
    REQUIRE(enc.sdp.blocks.size() == 2);
    CHECK(enc.sdp.blocks[0].name == "moment");
    CHECK(enc.sdp.blocks[0].side == 6);
    CHECK(enc.sdp.blocks[1].name == "localizer_ball");
    CHECK(enc.sdp.blocks[1].side == 3);
}

TEST_CASE("localizing block side follows the degree formula") {
    struct Case {
        int d, t, s;  // constraint degree 2s
    };
    for (const Case c : {Case{3, 4, 1}, Case{2, 6, 2}, Case{4, 4, 2}, Case{2, 4, 1}}) {
        PolynomialSystem sys;
        sys.d = c.d;
        sys.ball_bound = 1.0;
        Polynomial q = Polynomial::constant(c.d, 1.0);
        for (int i = 0; i < c.s; ++i) q = q * ball_inequality(c.d);
        sys.add_inequality(q, "q");
        const EncodedSdp enc = encode(sys, c.t);
        const int half = (c.t - 2 * c.s) / 2;
        const auto expect = static_cast<int>(monomial_count(c.d, half));
        REQUIRE(enc.sdp.blocks.size() == 2);
        CHECK(enc.sdp.blocks[1].side == expect);
    }
}

TEST_CASE("pairwise products appear only at q_max 2") {
    PolynomialSystem sys;
    sys.d = 2;
    sys.ball_bound = 1.0;
    sys.add_inequality(ball_inequality(2), "a");
    sys.add_inequality(Polynomial::variable(2, 0) + Polynomial::constant(2, 1.0), "b");

    CHECK(encode(sys, 4).sdp.blocks.size() == 3);  // moment + two localizers

    EncodeSettings es;
    es.q_max = 2;
    const EncodedSdp enc = encode(sys, 4, es);
    REQUIRE(enc.sdp.blocks.size() == 4);
    CHECK(enc.sdp.blocks[3].name == "localizer_product_a_b");
    CHECK(enc.sdp.blocks[3].side == 1);  // degree 3 product leaves floor(1/2) = 0
}

TEST_CASE("encode rejects malformed requests") {
    CHECK_THROWS_AS(encode(circle_system(2), 3), std::invalid_argument);  // odd degree
    PolynomialSystem sys;
    sys.d = 2;
    sys.ball_bound = 1.0;
    Polynomial q = Polynomial::constant(2, 1.0);
    for (int i = 0; i < 3; ++i) q = q * ball_inequality(2);
    sys.add_inequality(q, "deep");
    CHECK_THROWS_AS(encode(sys, 4), std::invalid_argument);  // degree 6 constraint at t=4

    EncodeSettings es;
    es.q_max = 3;
    CHECK_THROWS_AS(encode(circle_system(2), 2, es), std::invalid_argument);

    PolynomialSystem odd;
    odd.d = 2;
    odd.ball_bound = 1.0;
    odd.add_inequality(Polynomial::variable(2, 0), "halfspace");
    EncodeSettings ps;
    ps.parity_reduction = true;
    CHECK_THROWS_AS(encode(odd, 2, ps), std::invalid_argument);
}

TEST_CASE("unit sphere at degree 2 is feasible with unit trace") {
    const SolveOutcome out = solve_system(circle_system(2), 2);
    REQUIRE(out.status == SdpStatus::feasible);
    REQUIRE(out.pe.has_value());
    const MatrixXd m2 = second_moment(*out.pe);
    CHECK(m2.trace() == Catch::Approx(1.0).margin(1e-7));
    CHECK(sym_eig(m2).values.minCoeff() >= -1e-7);
    CHECK(out.residuals.max_equality_violation <= 1e-7);

    const SatisfactionReport rep = check_satisfaction(*out.pe, circle_system(2), 10.0 * 1e-7);
    CHECK(rep.satisfied);
}

TEST_CASE("sphere trapped inside a quarter ball is infeasible") {
    PolynomialSystem sys = circle_system(2);
    sys.add_inequality(ball_inequality(2, 0.25), "quarter_ball");
    const SolveOutcome out = solve_system(sys, 2);
    REQUIRE(out.status == SdpStatus::infeasible);
    CHECK(out.residuals.infeasibility_margin > 0.0);
}

TEST_CASE("two large coordinate lower bounds on the circle are infeasible") {
    PolynomialSystem sys = circle_system(2);
    sys.add_inequality(Polynomial::variable(2, 0) + Polynomial::constant(2, -0.9), "first_axis");
    sys.add_inequality(Polynomial::variable(2, 1) + Polynomial::constant(2, -0.9), "second_axis");
    const SolveOutcome out = solve_system(sys, 4);
    REQUIRE(out.status == SdpStatus::infeasible);
    CHECK(out.residuals.infeasibility_margin > 0.0);
}

TEST_CASE("point evaluation pseudo-expectation") {
    VectorXd x(2);
    x << 0.6, -0.8;
    const PseudoExpectation pe = pe_from_point(x, 4);
    CHECK(pe.moment_matrix(0, 0) == 1.0);
    CHECK(pe.value(sphere_equation(2)) == Catch::Approx(0.0).margin(1e-15));
    Polynomial cross(2);
    cross.add_term({1, 1}, 1.0);
    CHECK(pe.value(cross) == Catch::Approx(-0.48).margin(1e-15));
    CHECK(sym_eig(pe.moment_matrix).values.minCoeff() >= -1e-12);
}

TEST_CASE("second moment of points and mixtures") {
    VectorXd e1 = VectorXd::Zero(2), e2 = VectorXd::Zero(2);
    e1[0] = 1.0;
    e2[1] = 1.0;
    const PseudoExpectation p1 = pe_from_point(e1, 2);
    CHECK(second_moment(p1)(0, 0) == 1.0);
    CHECK(second_moment(p1)(0, 1) == 0.0);
    CHECK(second_moment(p1)(1, 1) == 0.0);

    const PseudoExpectation p2 = pe_from_point(e2, 2);
    const VectorXd mixed = 0.5 * (p1.moment_vector + p2.moment_vector);
    const PseudoExpectation pm = make_pseudo_expectation(p1.basis, mixed);
    const MatrixXd m2 = second_moment(pm);
    CHECK(m2(0, 0) == Catch::Approx(0.5));
    CHECK(m2(1, 1) == Catch::Approx(0.5));
    CHECK(m2(0, 1) == Catch::Approx(0.0).margin(1e-15));
    CHECK(m2.trace() == Catch::Approx(1.0));
}

TEST_CASE("satisfaction check flags an injected fault") {
    const SolveOutcome out = solve_system(circle_system(2), 2);
    REQUIRE(out.status == SdpStatus::feasible);
    VectorXd bumped = out.pe->moment_vector;
    Exponents e{2, 0};
    bumped[out.pe->basis.index_of(e)] += 1.0;
    const PseudoExpectation bad = make_pseudo_expectation(out.pe->basis, bumped);
    const SatisfactionReport rep = check_satisfaction(bad, circle_system(2), 1e-6);
    CHECK_FALSE(rep.satisfied);
}

TEST_CASE("satisfaction check enforces the degree precondition") {
    VectorXd x = VectorXd::Zero(2);
    const PseudoExpectation pe = pe_from_point(x, 2);
    PolynomialSystem sys;
    sys.d = 2;
    sys.ball_bound = 1.0;
    Polynomial q = ball_inequality(2) * ball_inequality(2);
    sys.add_inequality(q, "quartic");
    CHECK_THROWS_AS(check_satisfaction(pe, sys, 1e-9), std::invalid_argument);
}

TEST_CASE("soundness: point distributions satisfy their systems") {
    Rng rng(derive_seed(99, "soundness-harness"));
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 1 + static_cast<int>(rng.uniform_index(4));
        const int t = 2 + 2 * static_cast<int>(rng.uniform_index(2));
        const VectorXd x = random_unit(d, rng) * rng.uniform(0.0, 0.9);
        const MonomialBasis pool(d, t);

        auto random_poly = [&] {
            Polynomial p(d);
            const int n_terms = 1 + static_cast<int>(rng.uniform_index(4));
            for (int i = 0; i < n_terms; ++i)
                p.add_term(pool[rng.uniform_index(pool.size())], rng.uniform(-1.0, 1.0));
            if (p.empty()) p.add_term(pool[1 % pool.size()], 0.5);
            return p;
        };

        PolynomialSystem sys;
        sys.d = d;
        sys.ball_bound = 1.0;
        const int n_eq = static_cast<int>(rng.uniform_index(3));
        const int n_in = 1 + static_cast<int>(rng.uniform_index(3));
        for (int i = 0; i < n_eq; ++i) {
            Polynomial p = random_poly();
            p.add_term(Exponents(d, 0), -p.evaluate(x));
            if (!p.empty()) sys.add_equality(p, "h" + std::to_string(i));
        }
        for (int i = 0; i < n_in; ++i) {
            Polynomial p = random_poly();
            p.add_term(Exponents(d, 0), -p.evaluate(x) + rng.uniform(0.1, 1.0));
            sys.add_inequality(p, "q" + std::to_string(i));
        }

        const PseudoExpectation pe = pe_from_point(x, t);
        const SatisfactionReport rep = check_satisfaction(pe, sys, 1e-10);
        REQUIRE(rep.satisfied);
    }
}

TEST_CASE("moment matrix entries agree with the moment vector") {
    const SolveOutcome out = solve_system(circle_system(3), 4);
    REQUIRE(out.status == SdpStatus::feasible);
    const PseudoExpectation& pe = *out.pe;
    const MonomialBasis half(3, 2);
    Rng rng(derive_seed(7, "moment-audit"));
    for (int i = 0; i < 100; ++i) {
        const int a = static_cast<int>(rng.uniform_index(half.size()));
        const int b = static_cast<int>(rng.uniform_index(half.size()));
        Exponents sum = half[a];
        for (int j = 0; j < 3; ++j) sum[j] += half[b][j];
        CHECK(pe.moment_matrix(a, b) == pe.moment_vector[pe.basis.index_of(sum)]);
    }
}

TEST_CASE("solve is deterministic") {
    PolynomialSystem sys = circle_system(3);
    sys.add_inequality(ball_inequality(3), "ball");
    const SolveOutcome a = solve_system(sys, 4);
    const SolveOutcome b = solve_system(sys, 4);
    REQUIRE(a.status == SdpStatus::feasible);
    REQUIRE(b.status == SdpStatus::feasible);
    for (int i = 0; i < a.pe->moment_vector.size(); ++i)
        CHECK(a.pe->moment_vector[i] == b.pe->moment_vector[i]);
    CHECK(a.residuals.iterations == b.residuals.iterations);
}

TEST_CASE("parity reduction splits blocks and preserves the verdict") {
    PolynomialSystem sys = circle_system(3);
    sys.add_inequality(ball_inequality(3), "ball");

    EncodeSettings es;
    es.parity_reduction = true;
    const EncodedSdp enc = encode(sys, 4, es);
    REQUIRE(enc.sdp.blocks.size() >= 2);
    CHECK(enc.sdp.blocks[0].name == "moment_even");
    CHECK(enc.sdp.blocks[0].side == 7);
    CHECK(enc.sdp.blocks[1].name == "moment_odd");
    CHECK(enc.sdp.blocks[1].side == 3);

    const SolveOutcome plain = solve_system(sys, 4);
    SolverSettings ss;
    const SolveOutcome reduced = solve_system(sys, 4, ss, true);
    REQUIRE(plain.status == SdpStatus::feasible);
    REQUIRE(reduced.status == SdpStatus::feasible);
    CHECK(second_moment(*plain.pe).trace() == Catch::Approx(1.0).margin(1e-7));
    CHECK(second_moment(*reduced.pe).trace() == Catch::Approx(1.0).margin(1e-7));
    CHECK(check_satisfaction(*reduced.pe, sys, 1e-6).satisfied);

    PolynomialSystem conflict = circle_system(2);
    conflict.add_inequality(ball_inequality(2, 0.25), "quarter_ball");
    const SolveOutcome inf = solve_system(conflict, 2, ss, true);
    CHECK(inf.status == SdpStatus::infeasible);
}

TEST_CASE("certificate constraints encode as Gram blocks with matching rows") {
    PolynomialSystem sys;
    sys.d = 1;
    sys.ball_bound = 1.0;
    sys.add_equality(sphere_equation(1), "sphere");

    MatrixSosConstraint cert;
    cert.d_v = 1;
    cert.d_u = 1;
    cert.aux_degree = 2;
    cert.description = "shifted_square";
    Polynomial tgt(2);      // variables (v, u)
    tgt.add_term({2, 2}, 1.0);
    tgt.add_term({0, 2}, 0.5);  // u^2 (v^2 + 1/2)
    cert.target = tgt;
    sys.certificate_constraints.push_back(cert);

    const EncodedSdp enc = encode(sys, 2);
    REQUIRE(enc.sdp.blocks.size() == 2);
    CHECK(enc.sdp.blocks[1].name == "certificate_gram_0");
    CHECK(enc.sdp.blocks[1].side == 2);
    CHECK(enc.sdp.n_vars == 3 + 3);  // y entries + Gram upper triangle
    int matches = 0;
    for (const auto& eq : enc.sdp.equalities)
        if (eq.name.rfind("certificate_match_", 0) == 0) ++matches;
    CHECK(matches == 3);  // one per u-monomial of degree <= 2

    const SolveOutcome out = solve(enc);
    REQUIRE(out.status == SdpStatus::feasible);
    CHECK(check_satisfaction(*out.pe, sys, 1e-6).satisfied);
}

TEST_CASE("certificate with a negative forced diagonal is infeasible") {
    PolynomialSystem sys;
    sys.d = 1;
    sys.ball_bound = 1.0;
    sys.add_equality(sphere_equation(1), "sphere");

    MatrixSosConstraint cert;
    cert.d_v = 1;
    cert.d_u = 1;
    cert.aux_degree = 2;
    cert.description = "impossible";
    Polynomial tgt(2);
    tgt.add_term({2, 2}, 1.0);
    tgt.add_term({0, 2}, -2.0);  // u^2 (v^2 - 2) forces a negative Gram diagonal
    cert.target = tgt;
    sys.certificate_constraints.push_back(cert);

    const SolveOutcome out = solve_system(sys, 2);
    REQUIRE(out.status == SdpStatus::infeasible);
}
