#include "lgc/model.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <string>

using namespace lgc;
using Catch::Approx;

namespace {

nlohmann::json parse(const char* text) { return nlohmann::json::parse(text); }

const char* kBox = R"({
  "eigenvalues": {"rule": "lambda_k = k^2"},
  "coupling": {"band": [[1, 1.0, 0.0]]},
  "tail": {"monotone_from": 1}
})";

}  // namespace

TEST_CASE("load_system reads rule and band coupling", "[model]") {
    const auto sys = load_system(parse(kBox));
    CHECK_FALSE(sys.dimension().has_value());
    for (int k = 1; k <= 12; ++k) CHECK(sys.eigenvalue(k) == Approx(k * k));
    CHECK(sys.coupling_at(1, 2) == cplx(1.0, 0.0));
    CHECK(sys.coupling_at(5, 4) == cplx(1.0, 0.0));
    CHECK(sys.coupling_at(1, 3) == cplx(0.0, 0.0));
    CHECK(sys.coupling_at(7, 7) == cplx(0.0, 0.0));
    CHECK(sys.coupled_levels(3) == std::vector<int>{2, 4});
}

TEST_CASE("load_system reads the sample files", "[model]") {
    const auto box = load_system_file(std::string(LGC_DATA_DIR) + "/box_tridiagonal.json");
    CHECK(box.eigenvalue(4) == 16.0);
    const auto gaps = load_system_file(std::string(LGC_DATA_DIR) + "/equal_gaps.json");
    CHECK(gaps.dimension() == 3);
    CHECK_THROWS_AS(load_system_file(std::string(LGC_DATA_DIR) + "/missing.json"), input_error);
}

TEST_CASE("non-Hermitian entry pairs are rejected", "[model]") {
    CHECK_THROWS_AS(load_system(parse(R"({"eigenvalues": [1, 2], "coupling": [[1, 2, 0, 1], [2, 1, 0, 1]]})")),
                    input_error);
    CHECK_THROWS_AS(load_system(parse(R"({"eigenvalues": [1, 2], "coupling": [[1, 1, 0, 0.5]]})")), input_error);
    CHECK_THROWS_AS(load_system(parse(R"({"eigenvalues": [1, 2], "coupling": [[1, 2, 1, 0], [1, 2, 1, 0]]})")),
                    input_error);
}

TEST_CASE("one-sided entries are mirrored, consistent pairs kept", "[model]") {
    const auto sys = load_system(parse(R"({"eigenvalues": [1, 2, 3], "coupling": [[2, 1, 0, 1], [2, 3, 1, 1], [3, 2, 1, -1]]})"));
    CHECK(sys.coupling_at(1, 2) == cplx(0.0, -1.0));
    CHECK(sys.coupling_at(2, 1) == cplx(0.0, 1.0));
    CHECK(sys.coupling_at(2, 3) == cplx(1.0, 1.0));
    CHECK(sys.coupling_at(3, 2) == cplx(1.0, -1.0));
}

TEST_CASE("polarizability sum rule", "[model]") {
    const auto sys = load_system(parse(R"({
      "eigenvalues": {"rule": "k^2"},
      "polarizability": {"w1": {"band": [[1, 1, 0]]}, "w2": {"band": [[0, 0.1, 0]]}},
      "tail": {"monotone_from": 1}})"));
    CHECK(sys.coupling_at(3, 3) == cplx(0.1, 0.0));
    CHECK(sys.coupling_at(3, 4) == cplx(1.0, 0.0));
    CHECK_THROWS_AS(load_system(parse(R"({
      "eigenvalues": {"rule": "k^2"},
      "coupling": {"band": [[1, 1, 0]]},
      "polarizability": {"w1": {"band": [[1, 1, 0]]}, "w2": {"band": [[0, 0.1, 0]]}}})")),
                    input_error);
}

TEST_CASE("eigenvalue validation", "[model]") {
    CHECK_THROWS_AS(load_system(parse(R"({"eigenvalues": [3, 1]})")), input_error);
    CHECK_THROWS_AS(load_system(parse(R"({"eigenvalues": {"rule": "-k"}})")), input_error);
    CHECK_THROWS_AS(load_system(parse(R"({"eigenvalues": [1, 1, 2], "tail": {"monotone_from": 1}})")), input_error);
    CHECK_THROWS_AS(load_system(parse(R"({"eigenvalues": [1, 2], "coupling": [[1, 3, 1, 0]]})")), input_error);
    CHECK_THROWS_AS(load_system(parse(R"({"coupling": []})")), input_error);
    CHECK_THROWS_AS(load_system(parse(R"({"eigenvalues": "k^2"})")), input_error);
    const auto fin = load_system(parse(R"({"eigenvalues": [1, 1, 2]})"));
    CHECK_THROWS_AS(fin.eigenvalue(4), input_error);
}

TEST_CASE("eigenvalue rules", "[model][rule]") {
    CHECK(EigenvalueRule("lambda_k = k^2")(3) == Approx(9.0));
    CHECK(EigenvalueRule("pi^2 * k^2 / 2")(2) == Approx(2.0 * kPi * kPi));
    CHECK(EigenvalueRule("-(k - 1)^2 + sqrt(k)")(4) == Approx(-9.0 + 2.0));
    CHECK(EigenvalueRule("2^-k")(1) == Approx(0.5));
    CHECK(EigenvalueRule("log(exp(k))")(5) == Approx(5.0));
    CHECK_THROWS_AS(EigenvalueRule("k^2 +"), input_error);
    CHECK_THROWS_AS(EigenvalueRule("q*k"), input_error);
    CHECK_THROWS_AS(EigenvalueRule("(k"), input_error);
}

TEST_CASE("truncate box model", "[model]") {
    const auto sys = builtin_family("box_tridiagonal");
    const auto g = truncate(sys, 2);
    Mat h0(2, 2), h1(2, 2);
    h0 << 1, 0, 0, 4;
    h1 << 1, 1, 1, 4;
    CHECK((g.h0 - h0).norm() == 0.0);
    CHECK((g.h1 - h1).norm() == 0.0);

    const auto one = truncate(builtin_family("polarizability_toy"), 1);
    CHECK(one.h1(0, 0) == cplx(1.1, 0.0));

    const auto g3 = truncate(sys, 3);
    CHECK(skew_defect(g3.a) == 0.0);
    CHECK(skew_defect(g3.b) == 0.0);
    for (int k = 0; k < 3; ++k) CHECK(g3.a(k, k) == -kI * double((k + 1) * (k + 1)));

    CHECK_THROWS_AS(truncate(sys, 0), input_error);
    CHECK_THROWS_AS(truncate(load_system(parse(R"({"eigenvalues": [1, 2]})")), 3), input_error);
}

TEST_CASE("bilinear reduction handles", "[model]") {
    const auto red = bilinear_reduction(builtin_family("box_tridiagonal"));
    const Mat a = red.drift(4);
    const Mat b = red.control(4);
    for (int j = 0; j < 4; ++j)
        for (int k = 0; k < 4; ++k) {
            CHECK(a(j, k) == (j == k ? -kI * double((j + 1) * (j + 1)) : cplx{}));
            CHECK(b(j, k) == (std::abs(j - k) == 1 ? -kI : cplx{}));
        }
    CHECK(red.control_norm_bound() == Approx(2.0));
    CHECK(op_norm(red.control(30)) <= red.control_norm_bound());

    const auto zero = bilinear_reduction(load_system_file(std::string(LGC_DATA_DIR) + "/zero_coupling.json"));
    CHECK(zero.control(5).norm() == 0.0);

    const auto pol = bilinear_reduction(builtin_family("polarizability_toy"));
    CHECK(pol.control(3)(1, 1) == -kI * 0.1);
    CHECK(pol.control(3)(1, 2) == -kI);
}

TEST_CASE("builtin families", "[model]") {
    const auto box = builtin_family("box_tridiagonal", {{"c", 1.0}});
    CHECK(box.eigenvalues(4) == std::vector<double>{1, 4, 9, 16});
    CHECK(box.coupling_at(3, 4) == cplx(1.0, 0.0));

    const auto pol = builtin_family("polarizability_toy", {{"c1", 1.0}, {"c2", 0.1}});
    CHECK(pol.coupling_at(2, 2) == cplx(0.1, 0.0));
    CHECK(pol.coupling_at(2, 3) == cplx(1.0, 0.0));

    const auto custom = builtin_family(
        "custom_gaps", {{"eigenvalues", {1, 2, 4}}, {"coupling", nlohmann::json::array({{1, 2, 1, 0}, {2, 3, 1, 0}})}});
    CHECK(custom.dimension() == 3);
    CHECK(custom.coupling_at(2, 3) == cplx(1.0, 0.0));
    CHECK(custom.coupling_at(1, 3) == cplx(0.0, 0.0));

    CHECK_THROWS_AS(builtin_family("no_such_family"), input_error);
    CHECK_THROWS_AS(builtin_family("box_tridiagonal", {{"c", "one"}}), input_error);
}

TEST_CASE("system documents round-trip", "[model]") {
    const auto sys = builtin_family("polarizability_toy");
    const auto back = load_system(system_to_json(sys));
    for (int j = 1; j <= 6; ++j) {
        CHECK(back.eigenvalue(j) == sys.eigenvalue(j));
        for (int k = 1; k <= 6; ++k) CHECK(back.coupling_at(j, k) == sys.coupling_at(j, k));
    }
}
