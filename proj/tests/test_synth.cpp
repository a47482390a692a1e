#include "lgc/synth.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace lgc;
using Catch::Approx;

namespace {

Vec vec(std::initializer_list<cplx> xs) {
    Vec v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (cplx x : xs) v(i++) = x;
    return v;
}

StateVector state(std::initializer_list<cplx> xs) { return StateVector{vec(xs)}; }

Vec random_unit(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> g;
    Vec v(n);
    for (int k = 0; k < n; ++k) v(k) = cplx(g(rng), g(rng));
    return v.normalized();
}

// e^{-S a} X e^{S a} for a = -i diag(lambda).
Mat drift_conjugate(const std::vector<double>& lam, double s, const Mat& x) {
    Mat out = x;
    for (Eigen::Index j = 0; j < x.rows(); ++j)
        for (Eigen::Index k = 0; k < x.cols(); ++k) out(j, k) *= std::polar(1.0, (lam[j] - lam[k]) * s);
    return out;
}

double independent_pulse_error(const SystemModel& sys, int n, const PiecewiseConstantControl& u, double tau,
                               double sigma, double nu, int cutoff) {
    const Mat cols = propagator_matrix(sys, u, cutoff).leftCols(n);
    const auto g = truncate(sys, n);
    const auto lam = sys.eigenvalues(n);
    Mat m = Mat::Zero(n, n);
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
            const double gap = std::abs(lam[j] - lam[k]);
            if (gap == 0.0) m(j, k) += g.b(j, k);
            else if (std::abs(gap - sigma) <= 1e-9) m(j, k) += nu * g.b(j, k);
        }
    Mat target = Mat::Zero(cutoff, n);
    target.topRows(n) = expm_skew(tau * m);
    for (int k = 0; k < n; ++k) target.row(k) *= std::polar(1.0, -lam[k] * u.total_time());
    return op_norm(cols - target);
}

}  // namespace

TEST_CASE("SU(n) completion", "[synth]") {
    std::mt19937_64 rng(2);
    for (int n : {2, 3, 5}) {
        const Vec a = random_unit(rng, n), b = random_unit(rng, n);
        const Mat m = su_completion(a, b);
        CHECK(unitarity_defect(m) <= 1e-12);
        CHECK(std::abs(m.determinant() - 1.0) <= 1e-12);
        CHECK((m * a - b).norm() <= 1e-12);
    }
}

TEST_CASE("target completion keeps the projection", "[synth]") {
    const Vec psi0 = vec({1, 0, 0, 0});
    const Vec psi1 = vec({0.6, 0.8});
    const Vec chi = complete_target(psi0, psi1, 1, 4);
    CHECK(chi(0) == cplx(0.6, 0.0));
    CHECK(chi.norm() == Approx(1.0));

    const Vec t2 = vec({0.6, cplx(0, 0.5), 0.6244997998398398});
    const Vec chi2 = complete_target(psi0, t2, 2, 4);
    CHECK((chi2.head(2) - t2.head(2)).norm() == 0.0);
    CHECK(chi2.norm() == Approx(1.0));
}

TEST_CASE("plan_word two-level rotation", "[synth]") {
    const auto box = builtin_family("box_tridiagonal");
    const Word w = plan_word(box, 2, vec({1, 0}), vec({0.6, 0.8}), 0.25);
    REQUIRE(w.factors.size() == 1);
    const auto& f = w.factors[0];
    const double c = f.nu * std::abs(f.coupling);
    CHECK(std::cos(c * f.tau) == Approx(0.6).margin(1e-12));
    CHECK(f.sigma == 3.0);
    // oracle: exponential of the 2x2 selection generator
    const Mat e = expm_skew(f.rotation.theta * rotation_generator(2, f.rotation));
    CHECK((e - rotation_matrix(2, f.rotation)).norm() <= 1e-13);
    CHECK(std::abs((e * vec({1, 0}))(0) - 0.6) <= 1e-12);
    CHECK((word_unitary(w) * vec({1, 0}) - vec({0.6, 0.8})).norm() <= 1e-12);
}

TEST_CASE("plan_word routes along the chain", "[synth]") {
    const auto box = builtin_family("box_tridiagonal");
    const Word w = plan_word(box, 3, vec({1, 0, 0}), vec({0, 0, 1}), 0.25);
    REQUIRE(w.factors.size() == 2);
    CHECK(w.factors[0].rotation.p == 1);
    CHECK(w.factors[0].rotation.c == 2);
    CHECK(w.factors[1].rotation.p == 2);
    CHECK(w.factors[1].rotation.c == 3);
    Mat prod = Mat::Identity(3, 3);
    for (const auto& f : w.factors) {
        CHECK(f.tau > 0.0);
        prod = expm_skew(f.rotation.theta * rotation_generator(3, f.rotation)) * prod;
    }
    CHECK((prod * vec({1, 0, 0}) - vec({0, 0, 1})).norm() <= 1e-12);
}

TEST_CASE("word factors are drift-conjugated selection exponentials", "[synth]") {
    const auto box = builtin_family("box_tridiagonal");
    std::mt19937_64 rng(4);
    const int n = 4;
    const auto lam = box.eigenvalues(n);
    const auto g = truncate(box, n);
    for (int trial = 0; trial < 5; ++trial) {
        const Vec a = random_unit(rng, n), b = random_unit(rng, n);
        const Word w = plan_word(box, n, a, b, 0.25);
        CHECK((word_unitary(w) * a - b).norm() <= 1e-10);
        for (const auto& f : w.factors) {
            const auto& r = f.rotation;
            const double gap = lam[r.c - 1] - lam[r.p - 1];
            const double s = (std::arg(r.z) - std::arg(f.coupling)) / gap;
            Mat sel = Mat::Zero(n, n);
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    if (std::abs(std::abs(lam[j] - lam[k]) - f.sigma) <= 1e-9) sel(j, k) = g.b(j, k);
            const Mat e = expm_skew(f.tau * f.nu * drift_conjugate(lam, s, sel));
            CHECK((e - rotation_matrix(n, r)).norm() <= 1e-10);
        }
    }
}

TEST_CASE("plan_word identity and errors", "[synth]") {
    const auto box = builtin_family("box_tridiagonal");
    CHECK(plan_word(box, 3, vec({1, 0, 0}), vec({1, 0, 0}), 0.25).factors.empty());
    const Vec v = vec({0.6, 0.8, 0});
    CHECK((word_unitary(plan_word(box, 3, v, v, 0.25)) * v - v).norm() <= 1e-12);
    CHECK_THROWS_AS(plan_word(box, 3, vec({1, 0}), vec({1, 0, 0}), 0.25), input_error);
    CHECK_THROWS_AS(plan_word(box, 3, vec({1, 0, 0}), vec({0, 1, 0}), 0.6), input_error);
    const auto cut = load_system_file(std::string(LGC_DATA_DIR) + "/disconnected.json");
    CHECK_THROWS_AS(plan_word(cut, cut.dimension().value(), Vec::Unit(*cut.dimension(), 0),
                              Vec::Unit(*cut.dimension(), *cut.dimension() - 1), 0.25),
                    computation_error);
}

TEST_CASE("pulse for the empty and commuting factors", "[synth]") {
    const auto box = builtin_family("box_tridiagonal");
    const auto none = pulse_for_factor(box, 3, 1, 2, 3.0, 0.25, 0.0, 0.2, 1e-3);
    CHECK(none.verified);
    CHECK(none.control.segments.empty());

    SystemModel diag;
    diag.eigenvalue_list = {1, 2, 3};
    diag.coupling.entries[{1, 1}] = 0.5;
    diag.coupling.entries[{2, 2}] = -0.3;
    diag.coupling.entries[{3, 3}] = 0.2;
    const auto pr = pulse_for_factor(diag, 3, 1, 2, 0.0, 0.25, 1.3, 0.2, 1e-10);
    CHECK(pr.verified);
    REQUIRE(pr.control.segments.size() == 1);
    CHECK(pr.control.segments[0].value == 0.2);
    CHECK(pr.control.segments[0].duration == Approx(1.3 / 0.2));
    CHECK(independent_pulse_error(diag, 3, pr.control, 1.3, 0.0, 0.25, 3) <= 1e-12);
}

TEST_CASE("pulse for a selection factor on the box model", "[synth]") {
    const auto box = builtin_family("box_tridiagonal");
    const auto pr = pulse_for_factor(box, 3, 1, 2, 3.0, 0.25, kPi, 0.2, 1e-3, 12);
    CHECK(pr.verified);
    CHECK(pr.error <= 1e-3);
    CHECK(pr.control.max_value() <= pr.shape.delta);
    CHECK(pr.control.total_time() == Approx(pr.shape.duration(kPi)));
    CHECK(independent_pulse_error(box, 3, pr.control, kPi, 3.0, 0.25, 12) == Approx(pr.error).margin(1e-10));

    CHECK_THROWS_AS(pulse_for_factor(box, 3, 1, 2, 3.0, 0.25, kPi, 1.2, 1e-3), input_error);
    CHECK_THROWS_AS(pulse_for_factor(box, 3, 1, 2, 4.0, 0.25, kPi, 0.2, 1e-3), input_error);
    CHECK_THROWS_AS(pulse_for_factor(box, 3, 1, 2, 3.0, 0.25, -1.0, 0.2, 1e-3), input_error);
}

TEST_CASE("recurrence waits", "[synth]") {
    const auto box = builtin_family("box_tridiagonal");
    const auto period = recurrence_wait(box, 3, {0, 0, 0}, 1e-6, 0.5);
    CHECK(period.found);
    CHECK(period.gamma == Approx(2 * kPi).margin(1e-5));

    const auto now = recurrence_wait(box, 3, {0, 0, 0}, 1e-6);
    CHECK(now.found);
    CHECK(now.gamma == 0.0);

    const double g0 = 4.1;
    const auto lam = box.eigenvalues(3);
    std::vector<double> target;
    for (double l : lam) target.push_back(std::remainder(-l * g0, 2 * kPi));
    const auto rw = recurrence_wait(box, 3, target, 1e-3);
    REQUIRE(rw.found);
    auto err = [&](double g) {
        double e = 0.0;
        for (int k = 0; k < 3; ++k) e = std::max(e, std::abs(std::polar(1.0, -lam[k] * g) - std::polar(1.0, target[k])));
        return e;
    };
    CHECK(err(rw.gamma) <= 1e-3);
    CHECK(err(rw.gamma) == Approx(rw.error).margin(1e-12));
    // oracle: first hit of a direct scan with step 1e-4
    double first = -1.0;
    for (double g = 0.0; g < 2 * kPi && first < 0.0; g += 1e-4)
        if (err(g) <= 1e-3) first = g;
    REQUIRE(first >= 0.0);
    CHECK(rw.gamma <= first + 1e-3);

    CHECK_THROWS_AS(recurrence_wait(box, 3, {0, 0}, 1e-3), input_error);
}

TEST_CASE("project_match on the box model", "[synth]") {
    const auto box = builtin_family("box_tridiagonal");
    const auto psi0 = StateVector::basis(2, 1);
    const auto psi1 = state({0.6, 0.8});
    const auto plan = project_match(box, 1, psi0, psi1);
    CHECK(plan.success);
    CHECK(plan.residual <= 1e-2);
    for (int cutoff : {plan.cutoff, plan.cutoff + 12}) {
        const auto fin = propagate(box, plan.bang, cutoff, psi0.resized(cutoff));
        CHECK(std::abs(fin.coefficients(0) - 0.6) <= 1e-2);
    }
    for (const auto& s : plan.bang.segments) CHECK((s.value == 0.0 || s.value == 1.0));
    for (std::size_t i = 1; i < plan.objective_history.size(); ++i)
        CHECK(plan.objective_history[i] <= plan.objective_history[i - 1]);
    for (const auto& f : plan.word) {
        CHECK(f.factor.tau >= f.tau_lo);
        CHECK(f.factor.tau <= f.tau_hi);
        CHECK(f.pulse_verified);
    }
    const auto& budget = plan.certificate.at("budget");
    CHECK(plan.residual <= budget.at("pulse_errors_sum").get<double>() + budget.at("bang_conversion_error").get<double>() +
                               budget.at("solver_tol").get<double>());
    CHECK(budget.at("within_bound").get<bool>());
    CHECK(std::abs(projected_residual(box, plan.bang, plan.cutoff, psi0, psi1, 1) - plan.residual) <= 1e-10);
}

TEST_CASE("project_match stored pulses meet the tolerance", "[synth]") {
    const auto box = builtin_family("box_tridiagonal");
    SynthOptions opt;
    const auto plan = project_match(box, 1, StateVector::basis(2, 1), state({0.6, 0.8}), opt);
    REQUIRE(plan.pulses.size() == plan.word.size());
    for (std::size_t i = 0; i < plan.word.size(); ++i) {
        const auto& f = plan.word[i];
        const double e = independent_pulse_error(box, plan.n, plan.pulses[i], f.factor.tau, f.factor.sigma, f.factor.nu,
                                                 std::max(plan.cutoff, 2 * plan.n));
        CHECK(e <= opt.pulse_tol);
    }
}

TEST_CASE("project_match trivial target and preconditions", "[synth]") {
    const auto box = builtin_family("box_tridiagonal");
    const auto psi0 = state({0.6, 0.8, 0});
    const auto same = project_match(box, 1, psi0, state({0.6, 0, cplx(0, 0.8)}));
    CHECK(same.success);
    CHECK(same.residual == 0.0);
    CHECK(same.bang.segments.empty());
    const auto rep = verify_plan(box, same, {same.cutoff, same.cutoff + 8});
    for (const auto& [c, r] : rep.residuals) CHECK(r == 0.0);

    CHECK_THROWS_AS(project_match(box, 1, StateVector::basis(2, 1), StateVector::basis(2, 1)), input_error);
    CHECK_THROWS_AS(project_match(box, 1, state({0.6, 0.6}), state({0.6, 0.8})), input_error);
    CHECK_THROWS_AS(project_match(box, 0, psi0, psi0), input_error);
}

TEST_CASE("verify_plan detects corrupted plans", "[synth]") {
    const auto box = builtin_family("box_tridiagonal");
    const auto plan = project_match(box, 1, StateVector::basis(2, 1), state({0.6, 0.8}));
    const auto rep = verify_plan(box, plan, {plan.cutoff, plan.cutoff + 8, plan.cutoff + 16});
    CHECK_FALSE(rep.mismatch);
    for (const auto& [c, r] : rep.residuals) CHECK(r <= 2 * plan.residual + 1e-12);
    for (const auto& [c, d] : rep.isometry_defects) CHECK(d <= 1e-10);
    CHECK(rep.switch_count == switch_count(plan.bang));

    auto bad = plan;
    std::size_t longest = 0;
    for (std::size_t i = 0; i < bad.bang.segments.size(); ++i)
        if (bad.bang.segments[i].duration > bad.bang.segments[longest].duration) longest = i;
    bad.bang.segments[longest].duration *= 1.1;
    const auto brep = verify_plan(box, bad, {plan.cutoff});
    CHECK(brep.mismatch);
    CHECK(brep.residuals[0].second > plan.residual);

    const auto back = plan_from_json(plan_to_json(plan));
    CHECK_FALSE(verify_plan(box, back, {back.cutoff}).mismatch);
}
