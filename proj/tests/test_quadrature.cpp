#include <doctest.h>

#include <cmath>
#include <numbers>

#include "cbi/quadrature.hpp"

using namespace cbi;

TEST_CASE("polynomials are integrated exactly") {
    auto r = quad::integrate([](double x) { return x * x; }, 0.0, 1.0);
    CHECK(r.converged);
    CHECK(r.value == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("oscillatory integrand under tight tolerance") {
    auto r = quad::integrate([](double x) { return std::sin(x); }, 0.0, 20.0, 1e-12);
    CHECK(r.value == doctest::Approx(1.0 - std::cos(20.0)).epsilon(1e-11));
}

TEST_CASE("integrable endpoint singularity") {
    // ∫_0^1 x^{-1/2} dx = 2
    auto r = quad::integrate([](double x) { return 1.0 / std::sqrt(x); }, 0.0, 1.0, 1e-10,
                             20000);
    CHECK(r.value == doctest::Approx(2.0).epsilon(1e-8));
}

TEST_CASE("tail mapping handles improper upper limits") {
    // ∫_0^∞ e^{-x} dx = 1
    auto r = quad::integrate_to_inf([](double x) { return std::exp(-x); }, 0.0);
    CHECK(r.converged);
    CHECK(r.value == doctest::Approx(1.0).epsilon(1e-12));

    // ∫_2^∞ x^{-2} dx = 1/2
    auto r2 = quad::integrate_to_inf([](double x) { return 1.0 / (x * x); }, 2.0);
    CHECK(r2.value == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("gaussian integral over the half line") {
    auto r = quad::integrate_to_inf([](double x) { return std::exp(-x * x); }, 0.0);
    CHECK(r.value == doctest::Approx(0.5 * std::sqrt(std::numbers::pi)).epsilon(1e-12));
}
