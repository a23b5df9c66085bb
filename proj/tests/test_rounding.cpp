#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gmmcluster/moments.hpp"
#include "gmmcluster/rounding.hpp"
#include "gmmcluster/systems.hpp"

using namespace gmmcluster;

namespace {

VectorXd unit(int d, int i) {
    VectorXd v = VectorXd::Zero(d);
    v[i] = 1.0;
    return v;
}

Polynomial sphere_equation(int d) {
    return Polynomial::squared_norm(d, 0, d) + Polynomial::constant(d, -1.0);
}

Polynomial ball_inequality(int d) {
    return Polynomial::constant(d, 1.0) - Polynomial::squared_norm(d, 0, d);
}

PolynomialSystem ball_system(int d) {
    PolynomialSystem sys;
    sys.d = d;
    sys.ball_bound = 1.0;
    sys.add_inequality(ball_inequality(d), "ball");
    return sys;
}

/// Ball system plus per-axis variance caps v_i^2 <= eps for i < planted.
PolynomialSystem capped_system(int d, int planted, double eps) {
    PolynomialSystem sys = ball_system(d);
    for (int i = 0; i < planted; ++i) {
        Polynomial cap = Polynomial::constant(d, eps);
        Exponents e(d, 0);
        e[i] = 2;
        cap.add_term(e, -1.0);
        sys.add_inequality(cap, "cap" + std::to_string(i));
    }
    return sys;
}

/// Distance from a unit vector to the nearest unit vector of the subspace.
double unit_distance(const Subspace& s, const VectorXd& v) {
    if (s.rank() == 0) return std::sqrt(2.0);
    const double overlap = (s.basis.transpose() * v).norm();
    return std::sqrt(std::max(0.0, 2.0 - 2.0 * overlap));
}

SdpStatus pinned_status(const PolynomialSystem& sys, int t, const VectorXd& pin) {
    EncodeSettings es;
    es.pin_point = pin;
    return solve(encode(sys, t, es)).status;
}

MixtureModel iso_hyperplane_model() {
    const int d = 4;
    MatrixXd s1 = 1.01 * MatrixXd::Identity(d, d);
    s1(0, 0) = 0.01;
    MatrixXd s2 = 1.01 * MatrixXd::Identity(d, d);
    s2(1, 1) = 0.01;
    const MatrixXd second = 0.5 * (s1 + s2);
    const MatrixXd w = spd_inv_sqrt(second);
    std::vector<VectorXd> mu(2, VectorXd::Zero(d));
    return MixtureModel({0.5, 0.5}, std::move(mu),
                        {symmetrized(w * s1 * w), symmetrized(w * s2 * w)}, false, true);
}

}  // namespace

TEST_CASE("subspace bookkeeping and validation") {
    Subspace s(3);
    CHECK(s.rank() == 0);
    CHECK(s.projection().cwiseAbs().maxCoeff() == 0.0);
    s.validate();

    s.basis = unit(3, 0);
    CHECK(s.rank() == 1);
    CHECK((s.projection() - unit(3, 0) * unit(3, 0).transpose()).norm() == 0.0);
    s.validate();

    s.basis = MatrixXd::Ones(3, 2);
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    CHECK_THROWS_AS(Subspace(0).validate(), std::invalid_argument);
}

TEST_CASE("rounding configuration resolves its rank cap") {
    RoundingConfig cfg;
    cfg.validate();
    CHECK(cfg.resolved_rank_cap(5) == 5);    // packing bound 2845 saturates at 64
    CHECK(cfg.resolved_rank_cap(100) == 64);

    cfg.rank_cap = 3;
    CHECK(cfg.resolved_rank_cap(8) == 3);
    CHECK(cfg.resolved_rank_cap(2) == 2);

    cfg.rank_cap = 0;
    cfg.r_hint = 1;
    cfg.gamma = 0.5;
    CHECK(cfg.resolved_rank_cap(40) == 32);  // ceil(16 / 0.5)

    RoundingConfig bad;
    bad.gamma = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = RoundingConfig{};
    bad.t = 3;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = RoundingConfig{};
    bad.eps = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = RoundingConfig{};
    bad.complement_pe_degree = 3;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = RoundingConfig{};
    bad.rank_cap = -1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("a direction forced by equalities rounds in one step") {
    const int d = 3;
    PolynomialSystem sys;
    sys.d = d;
    sys.ball_bound = 1.0;
    sys.add_equality(sphere_equation(d), "sphere");
    sys.add_inequality(ball_inequality(d), "ball");
    for (int i = 1; i < d; ++i) {
        Polynomial zero(d);
        Exponents e(d, 0);
        e[i] = 1;
        zero.add_term(e, 1.0);
        sys.add_equality(zero, "pin" + std::to_string(i));
    }

    RoundingConfig cfg;
    cfg.t = 2;
    const RoundingResult res = round_containing(sys, cfg);
    REQUIRE(res.subspace.rank() == 1);
    CHECK((res.subspace.basis.col(0) - unit(d, 0)).norm() < 1e-6);
    CHECK(res.stop_reason == "infeasible");
    CHECK(res.iterations == 2);
    CHECK_FALSE(res.truncated);
    REQUIRE(res.trace.size() == 2);
    CHECK(res.trace[0].find("\"accepted\"") != std::string::npos);
    CHECK(res.trace[1].find("\"infeasible\"") != std::string::npos);
}

TEST_CASE("a planted two-dimensional span is covered within gamma") {
    const int d = 6;
    PolynomialSystem sys;
    sys.d = d;
    sys.ball_bound = 1.0;
    sys.add_equality(sphere_equation(d), "sphere");
    sys.add_inequality(ball_inequality(d), "ball");
    Polynomial span_mass = Polynomial::constant(d, -(1.0 - 1e-6));
    for (int i = 0; i < 2; ++i) {
        Exponents e(d, 0);
        e[i] = 2;
        span_mass.add_term(e, 1.0);
    }
    sys.add_inequality(span_mass, "span_mass");

    RoundingConfig cfg;
    cfg.t = 2;
    cfg.seed = 7;
    const RoundingResult res = round_containing(sys, cfg);
    REQUIRE(res.subspace.rank() == 2);
    CHECK(res.stop_reason == "infeasible");
    CHECK(res.iterations == 3);
    res.subspace.validate();

    Rng rng(derive_seed(31, "span-audit"));
    for (int trial = 0; trial < 200; ++trial) {
        const VectorXd w2 = random_unit(2, rng);
        VectorXd v = VectorXd::Zero(d);
        v[0] = w2[0];
        v[1] = w2[1];
        CHECK(unit_distance(res.subspace, v) <= cfg.gamma);
    }
}

TEST_CASE("an infeasible system rounds to the zero subspace") {
    PolynomialSystem sys = ball_system(2);
    sys.add_inequality(Polynomial::constant(2, -0.5), "never");

    RoundingConfig cfg;
    cfg.t = 2;
    const RoundingResult res = round_containing(sys, cfg);
    CHECK(res.subspace.rank() == 0);
    CHECK(res.stop_reason == "infeasible");
    CHECK(res.iterations == 1);
    CHECK_FALSE(res.truncated);
}

TEST_CASE("complement certificates accept blocked directions and reject open ones") {
    const int d = 2;
    PolynomialSystem base = ball_system(d);
    Polynomial first(d);
    first.add_term({1, 0}, 1.0);
    base.add_equality(first, "first_axis_zero");

    const PolynomialSystem comp = complement_system(base, 2, 0.01);
    CHECK(comp.d == d);
    CHECK(comp.equality_names == std::vector<std::string>{"sphere"});
    REQUIRE(comp.certificate_constraints.size() == 1);
    CHECK(comp.certificate_constraints[0].sphere_system);
    CHECK(comp.certificate_constraints[0].axioms.size() == 2);

    CHECK(pinned_status(comp, 2, unit(d, 0)) == SdpStatus::feasible);
    CHECK(pinned_status(comp, 2, unit(d, 1)) == SdpStatus::infeasible);
}

TEST_CASE("complement of the whole ball is empty or full depending on slack") {
    const PolynomialSystem tight = complement_system(ball_system(2), 2, 0.01);
    CHECK(solve_system(tight, 2).status == SdpStatus::infeasible);

    // With 4 eps > 1 the certificate only needs Cauchy-Schwarz on the ball.
    const PolynomialSystem loose = complement_system(ball_system(2), 2, 0.30);
    CHECK(solve_system(loose, 2).status == SdpStatus::feasible);
}

TEST_CASE("complement construction rejects unsupported bases") {
    CHECK_THROWS_AS(complement_system(ball_system(2), 3, 0.01), std::invalid_argument);
    CHECK_THROWS_AS(complement_system(ball_system(2), 2, 0.0), std::invalid_argument);

    PolynomialSystem deep = ball_system(2);
    deep.add_inequality(ball_inequality(2) * ball_inequality(2), "deep");
    CHECK_THROWS_AS(complement_system(deep, 2, 0.01), std::invalid_argument);

    PolynomialSystem mismatched = ball_system(2);
    MatrixSosConstraint odd_block;
    odd_block.d_v = 2;
    odd_block.d_u = 3;
    odd_block.aux_degree = 2;
    Polynomial tgt(5);
    tgt.add_term({0, 0, 2, 0, 0}, 1.0);
    odd_block.target = tgt;
    mismatched.certificate_constraints.push_back(odd_block);
    CHECK_THROWS_AS(complement_system(mismatched, 4, 0.01), std::invalid_argument);

    PolynomialSystem nested = ball_system(2);
    MatrixSosConstraint with_axiom;
    with_axiom.d_v = 2;
    with_axiom.d_u = 2;
    with_axiom.aux_degree = 2;
    Polynomial tgt2(4);
    tgt2.add_term({0, 0, 2, 0}, 1.0);
    with_axiom.target = tgt2;
    with_axiom.axioms.push_back(
        CertificateAxiom{Polynomial::constant(4, 1.0), false, -1, -1, "inner"});
    nested.certificate_constraints.push_back(with_axiom);
    CHECK_THROWS_AS(complement_system(nested, 4, 0.01), std::invalid_argument);

    PolynomialSystem cubic = ball_system(2);
    MatrixSosConstraint cubic_block;
    cubic_block.d_v = 2;
    cubic_block.d_u = 2;
    cubic_block.aux_degree = 4;
    Polynomial tgt3(4);
    tgt3.add_term({0, 0, 3, 0}, 1.0);
    cubic_block.target = tgt3;
    cubic.certificate_constraints.push_back(cubic_block);
    CHECK_THROWS_AS(complement_system(cubic, 4, 0.01), std::invalid_argument);
}

TEST_CASE("pinned probes on the hyperplane complement match hand analysis") {
    const MixtureModel model = iso_hyperplane_model();
    const SymMomentTensor m4 = population_moment(model, 4);
    CenteredSystemParams params;
    params.eps = 1e-4;
    params.c = 10.0;
    const PolynomialSystem base = centered_system(m4, params);

    // A pinned pure normal certifies only once 4 eps clears the floor of
    // roughly 0.5 sqrt(eps_base); a balanced mix of the normals averages the
    // two band constraints and certifies below that floor.
    const PolynomialSystem comp = complement_system(base, 4, 2.5e-3);
    CHECK(pinned_status(comp, 2, unit(4, 0)) == SdpStatus::feasible);
    VectorXd mix = VectorXd::Zero(4);
    mix[0] = mix[1] = 1.0 / std::sqrt(2.0);
    CHECK(pinned_status(comp, 2, mix) == SdpStatus::feasible);
    CHECK(pinned_status(comp, 2, unit(4, 2)) == SdpStatus::infeasible);

    const PolynomialSystem tight = complement_system(base, 4, 1e-3);
    CHECK(pinned_status(tight, 2, mix) == SdpStatus::feasible);
    CHECK(pinned_status(tight, 2, unit(4, 2)) == SdpStatus::infeasible);
}

TEST_CASE("orthogonal rounding recovers a planted capped direction") {
    const PolynomialSystem base = capped_system(4, 1, 1e-4);
    RoundingConfig cfg;
    const RoundingResult res = round_orthogonal(base, cfg);
    REQUIRE(res.subspace.rank() == 1);
    CHECK(res.stop_reason == "infeasible");
    CHECK(std::abs(res.subspace.basis.col(0).dot(unit(4, 0))) > 0.99);

    REQUIRE_FALSE(res.trace.empty());
    const std::string& precondition = res.trace.back();
    CHECK(precondition.find("\"precondition\":\"gamma >= 4 eps^(1/8)\"") != std::string::npos);
    CHECK(precondition.find("\"met\":false") != std::string::npos);
}

TEST_CASE("orthogonal rounding covers two planted capped directions") {
    const PolynomialSystem base = capped_system(4, 2, 1e-4);
    RoundingConfig cfg;
    const RoundingResult res = round_orthogonal(base, cfg);
    REQUIRE(res.subspace.rank() == 2);
    CHECK((res.subspace.basis.transpose() * unit(4, 0)).norm() > 0.99);
    CHECK((res.subspace.basis.transpose() * unit(4, 1)).norm() > 0.99);
}

TEST_CASE("orthogonal rounding of the hyperplane system recovers the normal span") {
    const MixtureModel model = iso_hyperplane_model();
    const SymMomentTensor m4 = population_moment(model, 4);
    CenteredSystemParams params;
    params.eps = 1e-4;
    params.c = 10.0;
    const PolynomialSystem base = centered_system(m4, params);

    RoundingConfig cfg;
    const RoundingResult res = round_orthogonal(base, cfg);
    REQUIRE(res.subspace.rank() == 2);
    CHECK((res.subspace.basis.transpose() * unit(4, 0)).norm() > 0.99);
    CHECK((res.subspace.basis.transpose() * unit(4, 1)).norm() > 0.99);
    CHECK((res.subspace.basis.transpose() * unit(4, 2)).norm() < 0.1);
    res.subspace.validate();
}

TEST_CASE("the whole ball has an empty complement") {
    RoundingConfig cfg;
    const RoundingResult res = round_orthogonal(ball_system(3), cfg);
    CHECK(res.subspace.rank() == 0);
    CHECK(res.stop_reason == "infeasible");
    CHECK(res.iterations == 1);
}

TEST_CASE("rounding is deterministic in the seed") {
    const PolynomialSystem base = capped_system(4, 2, 1e-4);
    RoundingConfig cfg;
    cfg.seed = 42;
    const RoundingResult a = round_orthogonal(base, cfg);
    const RoundingResult b = round_orthogonal(base, cfg);
    REQUIRE(a.subspace.rank() == b.subspace.rank());
    CHECK((a.subspace.basis - b.subspace.basis).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.iterations == b.iterations);
    CHECK(a.trace == b.trace);
    CHECK(a.subspace.rank() <= a.iterations);
}

TEST_CASE("guarantee audit over twenty seeded runs") {
    const int d = 5;
    const double gamma = 0.3;
    const PolynomialSystem base = capped_system(d, 2, 1e-6);

    int successes = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        RoundingConfig cfg;
        cfg.gamma = gamma;
        cfg.seed = seed;
        const RoundingResult res = round_orthogonal(base, cfg);
        CHECK(res.subspace.rank() <= std::pow(16.0 / gamma, 2.0));
        const bool covered = res.subspace.rank() == 2 &&
                             unit_distance(res.subspace, unit(d, 0)) <= gamma &&
                             unit_distance(res.subspace, unit(d, 1)) <= gamma;
        if (covered) ++successes;
    }
    CHECK(successes >= 19);
}
