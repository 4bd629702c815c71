#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "cbi/mechanisms.hpp"
#include "cbi/riccati.hpp"

using namespace cbi;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

RawParams make_raw(int d) {
    RawParams raw;
    raw.dim = d;
    raw.c = VectorXd::Zero(d);
    raw.beta = VectorXd::Zero(d);
    raw.B = MatrixXd::Zero(d, d);
    raw.nu = LevyMeasure::zero(d);
    raw.mu.assign(d, LevyMeasure::zero(d));
    return raw;
}

AdmissibleParams must_validate(const RawParams& raw) {
    auto res = validate(raw);
    REQUIRE(res.ok());
    return *res.params;
}

AdmissibleParams feller_case() {
    auto raw = make_raw(1);
    raw.c = VectorXd::Ones(1);
    return must_validate(raw);
}

AdmissibleParams alpha_root_2d() {
    auto raw = make_raw(2);
    raw.B = (MatrixXd(2, 2) << -1.0, 0.1, 0.1, -1.0).finished();
    raw.mu = {LevyMeasure::anisotropic_stable(2, 0, 1.5),
              LevyMeasure::anisotropic_stable(2, 1, 1.3)};
    raw.beta = (VectorXd(2) << 0.5, 0.5).finished();
    return must_validate(raw);
}

VectorXd vec1(double x) {
    VectorXd v(1);
    v[0] = x;
    return v;
}

}  // namespace

TEST_CASE("zero initial condition stays at zero") {
    auto p = feller_case();
    auto sol = solve(p, vec1(0.0), 5.0);
    for (const auto& v : sol.v) CHECK(v[0] == 0.0);
    CHECK(sol.f_accum.back() == 0.0);
}

TEST_CASE("Feller case reproduces v = xi/(1+xi t)") {
    auto p = feller_case();
    const double xi = 2.0;
    auto sol = solve(p, vec1(xi), 10.0, {.tol = 1e-8});
    for (double t = 0.0; t <= 10.0; t += 0.25) {
        const double expected = xi / (1.0 + xi * t);
        CHECK(sol.eval(t)[0] == doctest::Approx(expected).epsilon(1e-6));
    }
    CHECK(sol.v.back()[0] == doctest::Approx(xi / 21.0).epsilon(1e-6));
}

TEST_CASE("linear drift case reproduces v = xi e^{bt}") {
    for (double b : {-0.5, 0.8}) {
        auto raw = make_raw(1);
        raw.B = MatrixXd::Constant(1, 1, b);
        auto p = must_validate(raw);
        const double xi = 1.5;
        auto sol = solve(p, vec1(xi), 10.0);
        for (double t = 0.0; t <= 10.0; t += 0.5) {
            const double expected = xi * std::exp(b * t);
            CHECK(sol.eval(t)[0] == doctest::Approx(expected).epsilon(1e-6));
        }
    }
}

TEST_CASE("pure immigration exponent is -x xi - beta xi T") {
    auto raw = make_raw(1);
    raw.beta = VectorXd::Ones(1);
    auto p = must_validate(raw);
    const double x = 1.5, xi = 2.0, T = 3.0;
    CHECK(laplace_exponent(p, vec1(x), vec1(xi), T) ==
          doctest::Approx(-x * xi - xi * T).epsilon(1e-9));
}

TEST_CASE("Feller laplace exponent at x=1, xi=2, T=1 is -2/3") {
    auto p = feller_case();
    CHECK(laplace_exponent(p, vec1(1.0), vec1(2.0), 1.0) ==
          doctest::Approx(-2.0 / 3.0).epsilon(1e-7));
    CHECK(laplace_exponent(p, vec1(1.0), vec1(0.0), 1.0) == 0.0);
}

TEST_CASE("flow composition defect") {
    auto p = feller_case();
    CHECK(flow_check(p, vec1(2.0), 0.0, 1.0) == 0.0);
    CHECK(flow_check(p, vec1(2.0), 0.4, 0.6) <= 1e-8);

    auto p2 = alpha_root_2d();
    VectorXd xi(2);
    xi << 2.0, 1.0;
    CHECK(flow_check(p2, xi, 0.35, 0.65, {.tol = 1e-8}) <= 1e-6);
}

TEST_CASE("monotonicity of the flow in the initial condition") {
    auto p = alpha_root_2d();
    VectorXd lo(2), hi(2);
    lo << 0.5, 1.0;
    hi << 0.7, 1.4;
    auto sa = solve(p, lo, 2.0);
    auto sb = solve(p, hi, 2.0);
    for (double t = 0.0; t <= 2.0; t += 0.05) {
        VectorXd va = sa.eval(t), vb = sb.eval(t);
        CHECK(va[0] <= vb[0] + 1e-7);
        CHECK(va[1] <= vb[1] + 1e-7);
    }
}

TEST_CASE("orthant preservation and nonpositive exponent") {
    auto p = alpha_root_2d();
    VectorXd xi(2);
    xi << 3.0, 0.25;
    auto sol = solve(p, xi, 4.0);
    for (const auto& v : sol.v) CHECK(v.minCoeff() >= -1e-8);

    VectorXd x(2);
    x << 1.0, 2.0;
    CHECK(laplace_exponent(p, x, xi, 4.0) <= 0.0);
}

TEST_CASE("f_accum is nondecreasing") {
    auto raw = make_raw(1);
    raw.c = VectorXd::Ones(1);
    raw.beta = VectorXd::Ones(1);
    raw.nu = LevyMeasure::compound_exponential(VectorXd::Constant(1, 1.0), 0.5);
    auto p = must_validate(raw);
    auto sol = solve(p, vec1(3.0), 5.0);
    for (std::size_t i = 1; i < sol.f_accum.size(); ++i)
        CHECK(sol.f_accum[i] >= sol.f_accum[i - 1] - 1e-12);
}

TEST_CASE("empirical order safeguard: fixed-step halving gains at least 4x") {
    auto p = feller_case();
    const double xi = 2.0, T = 5.0;
    auto exact = [&](double t) { return xi / (1.0 + xi * t); };
    auto err_at = [&](double h) {
        auto sol = solve(p, vec1(xi), T, {.fixed_step = true, .fixed_h = h});
        double e = 0.0;
        for (std::size_t i = 0; i < sol.t.size(); ++i)
            e = std::max(e, std::abs(sol.v[i][0] - exact(sol.t[i])));
        return e;
    };
    const double e1 = err_at(0.1);
    const double e2 = err_at(0.05);
    CHECK(e2 * 4.0 <= e1);

    // adaptive sanity: tighter tolerance gives a more accurate terminal value
    auto terminal_err = [&](double tol) {
        auto sol = solve(p, vec1(xi), T, {.tol = tol});
        return std::abs(sol.v.back()[0] - exact(T));
    };
    CHECK(terminal_err(1e-6) < terminal_err(1e-3));
}

TEST_CASE("solver failure carries the last valid state") {
    auto p = feller_case();
    CHECK_THROWS_AS(solve(p, vec1(1.0), 1.0, {.tol = 1e-8, .max_steps = 3}), RiccatiError);
}
