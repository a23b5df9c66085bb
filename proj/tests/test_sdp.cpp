#include <catch2/catch_amalgamated.hpp>

#include "gmmcluster/sdp.hpp"
#include "gmmcluster/solver.hpp"

using namespace gmmcluster;

namespace {

SdpDescription two_block_example() {
    SdpDescription sdp;
    sdp.n_vars = 3;
    SdpBlock b0;
    b0.side = 2;
    b0.name = "first block";
    b0.add(0, 0, 0, 1.0);
    b0.add(1, 0, 1, -0.5);  // exercises the upper-triangle swap
    b0.add(1, 1, -1, 2.0);
    sdp.blocks.push_back(b0);
    SdpBlock b1;
    b1.side = 1;
    b1.name = "second";
    b1.add(0, 0, 2, 1.0 / 3.0);
    sdp.blocks.push_back(b1);
    SdpEquality e0;
    e0.name = "tie";
    e0.terms = {{0, 1.0}, {2, -1.0}};
    e0.rhs = 0.25;
    sdp.equalities.push_back(e0);
    SdpEquality e1;
    e1.name = "pin";
    e1.terms = {{1, 0.1234567890123456789}};
    e1.rhs = -7.5;
    sdp.equalities.push_back(e1);
    return sdp;
}

}  // namespace

TEST_CASE("block add stores the upper triangle") {
    SdpBlock b;
    b.side = 3;
    b.add(2, 0, 4, 1.5);
    REQUIRE(b.terms.size() == 1);
    CHECK(b.terms[0].row == 0);
    CHECK(b.terms[0].col == 2);
    CHECK(b.terms[0].var == 4);
}

TEST_CASE("description validation rejects malformed input") {
    SdpDescription sdp;
    sdp.n_vars = 2;
    SdpBlock b;
    b.side = 0;
    sdp.blocks.push_back(b);
    CHECK_THROWS_AS(sdp.validate(), std::invalid_argument);

    sdp.blocks[0].side = 2;
    sdp.blocks[0].terms.push_back({0, 5, 0, 1.0});
    CHECK_THROWS_AS(sdp.validate(), std::invalid_argument);

    sdp.blocks[0].terms[0] = {0, 1, 7, 1.0};
    CHECK_THROWS_AS(sdp.validate(), std::invalid_argument);

    sdp.blocks[0].terms[0] = {0, 1, -1, 1.0};
    sdp.equalities.push_back({"bad", {{-2, 1.0}}, 0.0});
    CHECK_THROWS_AS(sdp.validate(), std::invalid_argument);
}

TEST_CASE("text serialization round trips exactly") {
    const SdpDescription sdp = two_block_example();
    const std::string text = sdp_to_text(sdp);
    const SdpDescription parsed = sdp_from_text(text);

    REQUIRE(parsed.n_vars == sdp.n_vars);
    REQUIRE(parsed.blocks.size() == sdp.blocks.size());
    REQUIRE(parsed.equalities.size() == sdp.equalities.size());
    CHECK(parsed.blocks[0].name == "first block");
    CHECK(parsed.blocks[0].terms[1].coef == -0.5);
    CHECK(parsed.equalities[1].terms[0].second == 0.1234567890123456789);
    CHECK(parsed.equalities[1].rhs == -7.5);
    CHECK(sdp_to_text(parsed) == text);
}

TEST_CASE("parser rejects corrupted text") {
    const std::string text = sdp_to_text(two_block_example());
    CHECK_THROWS_AS(sdp_from_text("nonsense"), std::runtime_error);
    CHECK_THROWS_AS(sdp_from_text(text.substr(0, text.size() / 2)), std::runtime_error);
}

TEST_CASE("fully determined feasible system") {
    // X = diag(w0, 1) with w0 pinned to 2.
    SdpDescription sdp;
    sdp.n_vars = 1;
    SdpBlock b;
    b.side = 2;
    b.name = "x";
    b.add(0, 0, 0, 1.0);
    b.add(1, 1, -1, 1.0);
    sdp.blocks.push_back(b);
    sdp.equalities.push_back({"pin", {{0, 1.0}}, 2.0});

    const SdpSolution sol = solve_sdp(sdp);
    REQUIRE(sol.status == SdpStatus::feasible);
    CHECK(sol.w[0] == Catch::Approx(2.0).margin(1e-12));
    CHECK(sol.stats.max_equality_violation <= 1e-12);
    CHECK(sol.stats.min_block_eigenvalue >= -1e-12);
}

TEST_CASE("fully determined infeasible system") {
    SdpDescription sdp;
    sdp.n_vars = 1;
    SdpBlock b;
    b.side = 1;
    b.name = "x";
    b.add(0, 0, 0, 1.0);
    sdp.blocks.push_back(b);
    sdp.equalities.push_back({"pin", {{0, 1.0}}, -1.0});

    const SdpSolution sol = solve_sdp(sdp);
    REQUIRE(sol.status == SdpStatus::infeasible);
    CHECK(sol.stats.infeasibility_margin > 0.0);
}

TEST_CASE("inconsistent equalities are reported infeasible") {
    SdpDescription sdp;
    sdp.n_vars = 1;
    SdpBlock b;
    b.side = 1;
    b.name = "x";
    b.add(0, 0, 0, 1.0);
    sdp.blocks.push_back(b);
    sdp.equalities.push_back({"a", {{0, 1.0}}, 1.0});
    sdp.equalities.push_back({"b", {{0, 1.0}}, 2.0});

    const SdpSolution sol = solve_sdp(sdp);
    REQUIRE(sol.status == SdpStatus::infeasible);
    CHECK(sol.stats.detail == "inconsistent linear equalities");
}

TEST_CASE("interior point finds a strictly feasible matrix completion") {
    // X = [[1, w0], [w0, 1]] is PSD for |w0| <= 1.
    SdpDescription sdp;
    sdp.n_vars = 1;
    SdpBlock b;
    b.side = 2;
    b.name = "x";
    b.add(0, 0, -1, 1.0);
    b.add(1, 1, -1, 1.0);
    b.add(0, 1, 0, 1.0);
    sdp.blocks.push_back(b);

    const SdpSolution sol = solve_sdp(sdp);
    REQUIRE(sol.status == SdpStatus::feasible);
    CHECK(std::abs(sol.w[0]) <= 1.0 + 1e-7);
    CHECK(sol.stats.min_block_eigenvalue >= -1e-7);
}

TEST_CASE("interior point certifies conflicting sign constraints infeasible") {
    // w0 >= 0 and -w0 - 1 >= 0 cannot hold together.
    SdpDescription sdp;
    sdp.n_vars = 1;
    SdpBlock b0;
    b0.side = 1;
    b0.name = "nonneg";
    b0.add(0, 0, 0, 1.0);
    sdp.blocks.push_back(b0);
    SdpBlock b1;
    b1.side = 1;
    b1.name = "below-minus-one";
    b1.add(0, 0, 0, -1.0);
    b1.add(0, 0, -1, -1.0);
    sdp.blocks.push_back(b1);

    const SdpSolution sol = solve_sdp(sdp);
    REQUIRE(sol.status == SdpStatus::infeasible);
    CHECK(sol.stats.infeasibility_margin >= 1e-7);
}

TEST_CASE("interior point handles equalities plus a free direction") {
    // X = [[1 + w1, w1], [w1, 1 + w1]] via w0 = 1 + w1 and the tie w0 - w1 = 1.
    SdpDescription sdp;
    sdp.n_vars = 2;
    SdpBlock b;
    b.side = 2;
    b.name = "x";
    b.add(0, 0, 0, 1.0);
    b.add(1, 1, 0, 1.0);
    b.add(0, 1, 1, 1.0);
    sdp.blocks.push_back(b);
    sdp.equalities.push_back({"tie", {{0, 1.0}, {1, -1.0}}, 1.0});

    const SdpSolution sol = solve_sdp(sdp);
    REQUIRE(sol.status == SdpStatus::feasible);
    CHECK(sol.w[0] - sol.w[1] == Catch::Approx(1.0).margin(1e-9));
    CHECK(sol.stats.min_block_eigenvalue >= -1e-7);
}

TEST_CASE("solver output is deterministic") {
    SdpDescription sdp;
    sdp.n_vars = 2;
    SdpBlock b;
    b.side = 2;
    b.name = "x";
    b.add(0, 0, -1, 1.0);
    b.add(1, 1, -1, 2.0);
    b.add(0, 1, 0, 1.0);
    b.add(0, 0, 1, 0.5);
    sdp.blocks.push_back(b);
    sdp.equalities.push_back({"tie", {{0, 1.0}, {1, 2.0}}, 0.3});

    const SdpSolution a = solve_sdp(sdp);
    const SdpSolution b2 = solve_sdp(sdp);
    REQUIRE(a.status == SdpStatus::feasible);
    REQUIRE(b2.status == SdpStatus::feasible);
    REQUIRE(a.w.size() == b2.w.size());
    for (int i = 0; i < a.w.size(); ++i) CHECK(a.w[i] == b2.w[i]);
    CHECK(a.stats.iterations == b2.stats.iterations);
}
