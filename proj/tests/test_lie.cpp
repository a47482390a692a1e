#include "lgc/lie.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace lgc;
using Catch::Approx;

namespace {

SystemModel finite(std::vector<double> lam, std::vector<std::array<int, 2>> edges) {
    SystemModel s;
    s.eigenvalue_list = std::move(lam);
    for (auto [j, k] : edges) s.coupling.entries[{j, k}] = 1.0;
    validate_system(s);
    return s;
}

SystemModel zero_coupling() {
    SystemModel s;
    s.rule = EigenvalueRule("k^2");
    s.tail = TailDeclaration{1};
    return s;
}

// Rank of the real span by SVD of the stacked real coordinates.
int real_rank(const std::vector<Mat>& mats, double tol = 1e-8) {
    if (mats.empty()) return 0;
    const auto sz = mats.front().size();
    Eigen::MatrixXd stack(2 * sz, static_cast<Eigen::Index>(mats.size()));
    for (std::size_t i = 0; i < mats.size(); ++i)
        for (Eigen::Index j = 0; j < sz; ++j) {
            stack(j, static_cast<Eigen::Index>(i)) = mats[i].data()[j].real();
            stack(sz + j, static_cast<Eigen::Index>(i)) = mats[i].data()[j].imag();
        }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(stack);
    const auto& s = svd.singularValues();
    int r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > tol * s(0)) ++r;
    return r;
}

// Brute-force closure: all brackets of the current list, repeated `depth` times,
// keeping a maximal independent subset after each round.
std::vector<Mat> brute_closure(std::vector<Mat> gens, int depth) {
    auto prune = [](const std::vector<Mat>& in) {
        std::vector<Mat> keep;
        for (const auto& m : in) {
            auto trial = keep;
            trial.push_back(m);
            if (real_rank(trial) > static_cast<int>(keep.size())) keep.push_back(m);
        }
        return keep;
    };
    gens = prune(gens);
    for (int d = 0; d < depth; ++d) {
        auto next = gens;
        for (std::size_t i = 0; i < gens.size(); ++i)
            for (std::size_t j = i + 1; j < gens.size(); ++j) next.push_back(gens[i] * gens[j] - gens[j] * gens[i]);
        next = prune(next);
        if (next.size() == gens.size()) break;
        gens = next;
    }
    return gens;
}

GeneratorSet set_of(std::vector<Mat> mats) {
    GeneratorSet g;
    g.collection = "test";
    for (auto& m : mats) g.add(m, "g");
    return g;
}

Mat pauli_z() {
    Mat x(2, 2);
    x << kI, 0, 0, -kI;
    return x;
}

Mat pauli_y() {
    Mat y(2, 2);
    y << 0, 1, -1, 0;
    return y;
}

}  // namespace

TEST_CASE("bracket", "[lie]") {
    const Mat x = pauli_z(), y = pauli_y();
    CHECK(bracket(x, x).norm() == 0.0);
    Mat expect(2, 2);
    expect << 0, 2.0 * kI, 2.0 * kI, 0;
    CHECK((bracket(x, y) - expect).norm() < 1e-15);
    CHECK(skew_defect(bracket(x, y)) == 0.0);
    Mat d1 = Mat::Zero(2, 2), d2 = Mat::Zero(2, 2);
    d1(0, 0) = kI;
    d2(1, 1) = 2.0 * kI;
    CHECK(bracket(d1, d2).norm() == 0.0);
    CHECK_THROWS_AS(bracket(Mat::Zero(2, 2), Mat::Zero(3, 3)), input_error);
}

TEST_CASE("generator collection M_n", "[lie]") {
    const auto box = builtin_family("box_tridiagonal");
    const auto m2 = build_Mn(box, 2);
    const auto xi = xi_set(box, 2);
    REQUIRE(m2.mats.size() == 1 + xi.xi.size());
    CHECK(xi.contains(0.0));
    CHECK(xi.contains(3.0));
    Mat h0 = Mat::Zero(2, 2);
    h0(0, 0) = 1.0;
    h0(1, 1) = 4.0;
    CHECK((m2.mats[0] - kI * h0).norm() == 0.0);
    const auto g = truncate(box, 2);
    const auto lam = box.eigenvalues(2);
    CHECK((m2.mats[1] - kI * select(g.h1, 0.0, lam)).norm() == 0.0);
    CHECK((m2.mats[2] - kI * select(g.h1, 3.0, lam)).norm() == 0.0);

    const auto z = build_Mn(zero_coupling(), 3);
    for (std::size_t i = 1; i < z.mats.size(); ++i) CHECK(z.mats[i].isDiagonal());

    const auto one = build_Mn(box, 1);
    CHECK(one.mats.front().rows() == 1);
}

TEST_CASE("generator collection W_n", "[lie]") {
    const auto box = builtin_family("box_tridiagonal");
    const auto xi = xi_set(box, 3);
    const auto w = build_Wn(box, 3, {0.25});
    CHECK(w.mats.size() == 2 + (xi.xi.size() - 1));
    const auto lam = box.eigenvalues(3);
    const auto g = truncate(box, 3);
    CHECK((w.mats[0] - g.a).norm() == 0.0);
    CHECK((w.mats[2] - (select(g.b, 0.0, lam) + 0.25 * select(g.b, 3.0, lam))).norm() == 0.0);

    CHECK(build_Wn(box, 3, {}).mats.size() == 2);
    CHECK_THROWS_AS(build_Wn(box, 3, {0.5}), input_error);
    CHECK_THROWS_AS(build_Wn(box, 3, {-0.5}), input_error);
}

TEST_CASE("generated algebra dimensions", "[lie]") {
    const auto su2 = generated_algebra(set_of({pauli_z(), pauli_y()}));
    CHECK(su2.closed);
    CHECK(su2.dim == 3);
    CHECK(su2.dim == static_cast<int>(brute_closure({pauli_z(), pauli_y()}, 4).size()));

    const auto single = generated_algebra(set_of({pauli_z()}));
    CHECK(single.dim == 1);
    CHECK(single.closed);

    Mat d1 = Mat::Zero(3, 3), d2 = Mat::Zero(3, 3), d3 = Mat::Zero(3, 3);
    d1.diagonal() << kI, 0, 0;
    d2.diagonal() << 0, kI, 0;
    d3.diagonal() << kI, kI, 0;
    CHECK(generated_algebra(set_of({d1, d2, d3})).dim == 2);

    CHECK_THROWS_AS(generated_algebra(set_of({Mat::Ones(2, 2)})), input_error);
    CHECK_THROWS_AS(generated_algebra(GeneratorSet{}), input_error);
}

TEST_CASE("generated algebra basis invariants", "[lie]") {
    const auto alg = generated_algebra(build_Mn(builtin_family("box_tridiagonal"), 4));
    Eigen::MatrixXd gram(alg.dim, alg.dim);
    for (int i = 0; i < alg.dim; ++i) {
        CHECK(skew_defect(alg.basis[i]) < 1e-12);
        for (int j = 0; j < alg.dim; ++j) gram(i, j) = (alg.basis[i].adjoint() * alg.basis[j]).trace().real();
    }
    CHECK((gram - Eigen::MatrixXd::Identity(alg.dim, alg.dim)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(alg.dim <= 16);
    CHECK(closure_defect(alg) < 10 * kRankTol);
}

TEST_CASE("su(n) containment", "[lie]") {
    std::vector<Mat> un;
    for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) {
            Mat e = Mat::Zero(3, 3);
            if (j == k) {
                e(j, j) = kI;
            } else if (j < k) {
                e(j, k) = 1.0;
                e(k, j) = -1.0;
            } else {
                e(j, k) = kI;
                e(k, j) = kI;
            }
            un.push_back(e);
        }
    CHECK(contains_su(generated_algebra(set_of(un))));

    Mat id = kI * Mat::Identity(2, 2);
    CHECK_FALSE(contains_su(generated_algebra(set_of({id, pauli_z()}))));

    const auto box = builtin_family("box_tridiagonal");
    const auto m4 = build_Mn(box, 4);
    CHECK(contains_su(generated_algebra(m4)));
    const auto oracle = brute_closure(m4.mats, 6);
    std::vector<Mat> traceless;
    for (const auto& x : oracle) traceless.push_back(x - (x.trace() / 4.0) * Mat::Identity(4, 4));
    CHECK(real_rank(traceless) == 15);

    AlgebraBasis open = generated_algebra(m4, 0);
    open.closed = false;
    CHECK_THROWS_AS(contains_su(open), computation_error);
}

TEST_CASE("Lie-Galerkin search", "[lie]") {
    const auto box = builtin_family("box_tridiagonal");
    const auto cert = lie_galerkin_search(box, 2, 8);
    REQUIRE(cert.certified_n.has_value());
    CHECK(*cert.certified_n == 3);
    CHECK(cert.attempts.back().traceless_dim >= 8);
    const auto oracle = brute_closure(build_Mn(box, 3).mats, 6);
    CHECK(static_cast<int>(oracle.size()) == cert.attempts.back().dim);

    const auto none = lie_galerkin_search(zero_coupling(), 1, 5);
    CHECK_FALSE(none.certified_n.has_value());
    CHECK(none.attempts.size() == 4);
    for (const auto& at : none.attempts) CHECK(at.reason == "abelian");

    // b_{2,4} shares the gap of the uncoupled pair (1,3); the chain 1-2-3-4-... is intact
    auto res = finite({0, 1, 3, 4, 9, 16}, {{1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {2, 4}});
    CHECK_FALSE(xi_set(res, 3).contains(3.0));
    const auto rc = lie_galerkin_search(res, 2, 5);
    REQUIRE(rc.certified_n.has_value());
    CHECK(*rc.certified_n <= 5);

    CHECK_THROWS_AS(lie_galerkin_search(box, 3, 3), input_error);
    CHECK(cert.to_json()["n"] == 3);
}

TEST_CASE("connectedness chains", "[lie]") {
    const auto box = builtin_family("box_tridiagonal");
    const auto ch = chain_check(box, 6);
    CHECK(ch.pairs == std::vector<std::pair<int, int>>{{1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}});
    CHECK(ch.nonresonant);
    CHECK(ch.degeneracy_ok);
    for (std::size_t i = 1; i < ch.pairs.size(); ++i) CHECK(ch.pairs[i - 1].second == ch.pairs[i].first);
    // exhaustive comparison over coupled pairs up to well past the scanned range
    for (const auto& [a, b] : ch.pairs) {
        const double g = std::abs(box.eigenvalue(a) - box.eigenvalue(b));
        for (int t = 1; t <= 60; ++t)
            for (int s = t; s <= 60; ++s) {
                if (std::abs(box.coupling_at(t, s)) == 0.0 || (t == a && s == b)) continue;
                CHECK(std::abs(std::abs(box.eigenvalue(t) - box.eigenvalue(s)) - g) > kGapTol);
            }
    }

    const auto disc = finite({0, 1, 2, 3}, {{1, 2}, {3, 4}});
    CHECK_THROWS_AS(chain_check(disc, 4), no_chain_error);

    const auto eq = finite({0, 1, 2}, {{1, 2}, {2, 3}});
    const auto ce = chain_check(eq, 3);
    CHECK_FALSE(ce.nonresonant);
    bool found = false;
    for (const auto& w : ce.resonance_witnesses)
        if (w.edge == std::make_pair(1, 2) && w.other == std::make_pair(2, 3)) found = true;
    CHECK(found);

    auto degenerate = finite({0, 1, 1}, {{1, 2}, {1, 3}, {2, 3}});
    CHECK_FALSE(chain_check(degenerate, 3).degeneracy_ok);

    for (const auto& [a, b] : ch.pairs) CHECK(std::abs(box.coupling_at(a, b)) > 0.0);
    CHECK_THROWS_AS(chain_check(box, 1), input_error);
}

TEST_CASE("V_n and M_n generate the same algebra", "[lie]") {
    const auto box = builtin_family("box_tridiagonal");
    for (int n = 2; n <= 5; ++n) CHECK(vn_equivalence_check(box, n));
    CHECK(vn_equivalence_check(zero_coupling(), 3));
}

TEST_CASE("algebra dimension is invariant under scaling and unitary conjugation", "[lie][property]") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> scale(0.2, 5.0);
    for (const auto& sys : {builtin_family("box_tridiagonal"), builtin_family("polarizability_toy")}) {
        for (int n = 2; n <= 4; ++n) {
            const auto gens = build_Mn(sys, n);
            const int dim = generated_algebra(gens).dim;
            GeneratorSet scaled = gens;
            for (auto& m : scaled.mats) m *= scale(rng);
            CHECK(generated_algebra(scaled).dim == dim);
            Mat k = Mat::Random(n, n);
            const Mat v = expm_skew(k - k.adjoint());
            GeneratorSet conj = gens;
            for (auto& m : conj.mats) m = v * m * v.adjoint();
            CHECK(generated_algebra(conj).dim == dim);
        }
    }
}

TEST_CASE("su containment is monotone in the generators", "[lie][property]") {
    const auto box = builtin_family("box_tridiagonal");
    auto gens = build_Mn(box, 3);
    REQUIRE(contains_su(generated_algebra(gens)));
    Mat extra = Mat::Zero(3, 3);
    extra(0, 2) = 1.0;
    extra(2, 0) = -1.0;
    gens.add(extra, "extra");
    CHECK(contains_su(generated_algebra(gens)));
}

TEST_CASE("non-resonant chains certify the box family", "[lie][property]") {
    for (double c : {0.5, 1.0, 2.0}) {
        const auto sys = builtin_family("box_tridiagonal", {{"c", c}});
        for (int n = 2; n <= 5; ++n) {
            const auto ch = chain_check(sys, n);
            REQUIRE(ch.nonresonant);
            REQUIRE(ch.degeneracy_ok);
            const auto cert = lie_galerkin_search(sys, n, n + 3);
            REQUIRE(cert.certified_n.has_value());
            CHECK(*cert.certified_n > n);
        }
    }
}
