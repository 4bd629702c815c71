#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "cbi/levy.hpp"
#include "cbi/mechanisms.hpp"
#include "cbi/quadrature.hpp"
#include "cbi/rng.hpp"

using namespace cbi;
using Eigen::VectorXd;

namespace {
VectorXd vec(std::initializer_list<double> xs) {
    VectorXd v(static_cast<int>(xs.size()));
    int i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}
}  // namespace

TEST_CASE("immigration integral: zero measure and single atom") {
    auto z = LevyMeasure::zero(2);
    CHECK(immigration_integral(z, vec({1.0, 3.0})) == 0.0);

    auto atom = LevyMeasure::atoms(1, {{vec({1.0}), 2.0}});
    CHECK(immigration_integral(atom, vec({std::log(2.0)})) ==
          doctest::Approx(1.0).epsilon(1e-14));
    CHECK_THROWS_AS(immigration_integral(atom, vec({-0.5})), std::domain_error);
}

TEST_CASE("immigration integral: orthant power law scaling") {
    auto nu = LevyMeasure::orthant_power_law(2, 0.5);
    const double at1 = immigration_integral(nu, vec({1.0, 0.0}));
    const double at4 = immigration_integral(nu, vec({4.0, 0.0}));
    CHECK(at4 / at1 == doctest::Approx(2.0).epsilon(1e-12));  // 4^0.5

    // scaling law on general directions
    rng::Stream rs = rng::Stream::derive(7, 0, 99);
    for (int i = 0; i < 20; ++i) {
        VectorXd xi = vec({rs.uniform(0.1, 5.0), rs.uniform(0.1, 5.0)});
        const double a = immigration_integral(nu, xi);
        const double b = immigration_integral(nu, VectorXd(2.0 * xi));
        CHECK(b == doctest::Approx(std::pow(2.0, 0.5) * a).epsilon(1e-8));
    }
}

TEST_CASE("immigration integral: axis formula agrees with the angular route") {
    for (double gamma : {0.2, 0.5, 0.8}) {
        auto nu = LevyMeasure::orthant_power_law(2, gamma);
        const double axis = immigration_integral(nu, vec({2.0, 0.0}));
        const double angular = immigration_integral(nu, vec({2.0, 1e-300}));
        CHECK(axis == doctest::Approx(angular).epsilon(1e-8));
    }
}

TEST_CASE("immigration integral: compound exponential closed form vs quadrature") {
    auto ce = LevyMeasure::compound_exponential(vec({1.5}), 2.0);
    const double xi = 0.8;
    const double closed = immigration_integral(ce, vec({xi}));
    auto oracle = quad::integrate_to_inf(
        [xi](double z) { return (1.0 - std::exp(-xi * z)) * 2.0 * 1.5 * std::exp(-1.5 * z); },
        0.0);
    CHECK(closed == doctest::Approx(oracle.value).epsilon(1e-10));
}

TEST_CASE("branching integral: examples") {
    CHECK(branching_integral(LevyMeasure::zero(1), vec({3.0})) == 0.0);

    auto st = LevyMeasure::anisotropic_stable(2, 0, 1.5);
    CHECK(branching_integral(st, vec({1.0, 0.7})) ==
          doctest::Approx(2.3632718).epsilon(1e-7));

    auto atom = LevyMeasure::atoms(1, {{vec({1.0}), 1.0}});
    CHECK(branching_integral(atom, vec({1.0})) ==
          doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
}

TEST_CASE("branching integral: stable closed form vs direct quadrature") {
    const double alpha = 1.5, xi = 0.7;
    auto st = LevyMeasure::anisotropic_stable(1, 0, alpha);
    auto f = [&](double z) {
        const double s = xi * z;
        const double comp = s > 1e-4 ? std::exp(-s) - 1.0 + s
                                     : 0.5 * s * s * (1.0 - s / 3.0 + s * s / 12.0);
        return comp * std::pow(z, -1.0 - alpha);
    };
    // substitute both ends so the singular endpoints integrate cleanly
    const double p = 2.0 / (2.0 - alpha), q = 2.0 / (alpha - 1.0);
    auto head = [&](double v) { return f(std::pow(v, p)) * p * std::pow(v, p - 1.0); };
    auto tail = [&](double u) { return f(std::pow(u, -q)) * q * std::pow(u, -q - 1.0); };
    const double oracle = quad::integrate(head, 0.0, 1.0, 1e-12).value +
                          quad::integrate(tail, 0.0, 1.0, 1e-12).value;
    CHECK(branching_integral(st, vec({xi})) == doctest::Approx(oracle).epsilon(1e-8));
}

TEST_CASE("branching integral is convex along rays and vanishes at zero") {
    auto m = LevyMeasure::sum(
        2, {LevyMeasure::atoms(2, {{vec({0.5, 2.0}), 1.0}, {vec({3.0, 0.1}), 0.25}}),
            LevyMeasure::anisotropic_stable(2, 1, 1.3)});
    CHECK(branching_integral(m, vec({0.0, 0.0})) == 0.0);
    VectorXd u = vec({0.4, 0.9});
    auto g = [&](double s) { return branching_integral(m, VectorXd(s * u)); };
    double prev2 = g(0.0), prev1 = g(0.1);
    for (int i = 2; i <= 40; ++i) {
        const double cur = g(0.1 * i);
        CHECK(cur >= 0.0);
        CHECK(cur - 2.0 * prev1 + prev2 >= -1e-10);  // discrete convexity
        prev2 = prev1;
        prev1 = cur;
    }
}

TEST_CASE("moments of the stable family") {
    auto st = LevyMeasure::anisotropic_stable(2, 0, 1.5);
    CHECK(moment(st, 0, Region::SmallJumps).is_infinite());
    auto large = moment(st, 0, Region::LargeJumps);
    CHECK(large.is_finite());
    CHECK(large.value == doctest::Approx(2.0).epsilon(1e-14));  // 1/(alpha-1)
    CHECK(moment(st, 1, Region::Full).value == 0.0);
}

TEST_CASE("moments of compound exponential: regions add up") {
    auto ce = LevyMeasure::compound_exponential(vec({1.0, 2.0}), 3.0);
    auto small = moment(ce, 0, Region::SmallJumps);
    auto large = moment(ce, 0, Region::LargeJumps);
    auto full = moment(ce, 0, Region::Full);
    CHECK(full.value == doctest::Approx(3.0 / 1.0).epsilon(1e-14));
    CHECK(small.value + large.value == doctest::Approx(full.value).epsilon(1e-8));
    CHECK(small.value > 0.0);
    CHECK(large.value > 0.0);
}

TEST_CASE("marginals stay in the family") {
    auto atom = LevyMeasure::atoms(2, {{vec({1.0, 2.0}), 3.0}});
    auto m2 = marginal(atom, 1);
    const auto* fam = std::get_if<LevyMeasure::FiniteAtomic>(&m2.family());
    REQUIRE(fam != nullptr);
    REQUIRE(fam->atoms.size() == 1);
    CHECK(fam->atoms[0].first[0] == 2.0);
    CHECK(fam->atoms[0].second == 3.0);

    auto st = LevyMeasure::anisotropic_stable(2, 0, 1.4);
    CHECK(std::holds_alternative<LevyMeasure::AnisotropicStable>(marginal(st, 0).family()));
    CHECK(marginal(st, 1).is_zero());

    // atom on the first axis projects to the origin along the second: deleted
    auto axis_atom = LevyMeasure::atoms(2, {{vec({1.0, 0.0}), 1.0}});
    CHECK(marginal(axis_atom, 1).is_zero());
}

TEST_CASE("pushforward consistency: marginal immigration equals axis evaluation") {
    auto measures = {LevyMeasure::orthant_power_law(2, 0.4),
                     LevyMeasure::atoms(2, {{vec({1.0, 2.0}), 0.5}, {vec({0.3, 0.0}), 2.0}}),
                     LevyMeasure::compound_exponential(vec({1.0, 3.0}), 2.0)};
    for (const auto& m : measures) {
        for (int k = 0; k < 2; ++k) {
            auto marg = marginal(m, k);
            for (double xi : {0.3, 1.0, 4.2}) {
                VectorXd full = VectorXd::Zero(2);
                full[k] = xi;
                const double a = immigration_integral(m, full);
                const double b = immigration_integral(marg, vec({xi}));
                CHECK(a == doctest::Approx(b).epsilon(1e-8));
            }
        }
    }
}

TEST_CASE("sample_large_jumps: trivial cases") {
    rng::Stream rs = rng::Stream::derive(42, 0, 1);
    CHECK(sample_large_jumps(LevyMeasure::zero(2), 0.5, 1.0, rs).empty());
    CHECK_THROWS_AS(
        sample_large_jumps(LevyMeasure::atoms(1, {{vec({1.0}), 1.0}}), -1.0, 1.0, rs),
        std::domain_error);

    auto atom = LevyMeasure::atoms(1, {{vec({1.0}), 2.0}});
    auto events = sample_large_jumps(atom, 0.5, 2.0, rs);
    for (const auto& e : events) {
        CHECK(e.z[0] == 1.0);
        CHECK(e.time >= 0.0);
        CHECK(e.time <= 2.0);
    }
    for (std::size_t i = 1; i < events.size(); ++i) CHECK(events[i - 1].time <= events[i].time);
}

TEST_CASE("sample_large_jumps: empirical counts match the tail mass") {
    // stable tail mass at eps=1 is 1/alpha; atoms expected count 4
    struct Case {
        LevyMeasure m;
        double eps, T, expected;
    };
    std::vector<Case> cases;
    cases.push_back({LevyMeasure::anisotropic_stable(1, 0, 1.5), 1.0, 1.0, 1.0 / 1.5});
    cases.push_back({LevyMeasure::atoms(1, {{vec({1.0}), 2.0}}), 0.5, 2.0, 4.0});

    for (const auto& c : cases) {
        const int n = 10000;
        double total = 0.0;
        double min_jump = 1e300;
        for (int i = 0; i < n; ++i) {
            rng::Stream rs = rng::Stream::derive(1234, i, 5);
            auto events = sample_large_jumps(c.m, c.eps, c.T, rs);
            total += static_cast<double>(events.size());
            for (const auto& e : events) min_jump = std::min(min_jump, e.z.norm());
        }
        const double mean = total / n;
        const double se = std::sqrt(c.expected / n);
        CHECK(std::abs(mean - c.expected) <= 4.0 * se);
        CHECK(min_jump > c.eps);
    }
}

TEST_CASE("sampling is deterministic given the stream") {
    auto st = LevyMeasure::anisotropic_stable(2, 1, 1.5);
    rng::Stream a = rng::Stream::derive(9, 3, 7);
    rng::Stream b = rng::Stream::derive(9, 3, 7);
    auto ea = sample_large_jumps(st, 0.01, 1.0, a);
    auto eb = sample_large_jumps(st, 0.01, 1.0, b);
    REQUIRE(ea.size() == eb.size());
    for (std::size_t i = 0; i < ea.size(); ++i) {
        CHECK(ea[i].time == eb[i].time);
        CHECK(ea[i].z == eb[i].z);
    }
}

TEST_CASE("small jump statistics") {
    auto st = LevyMeasure::anisotropic_stable(1, 0, 1.5);
    auto s = small_jump_stats(st, 1.0);
    CHECK_FALSE(s.mean_finite[0]);
    CHECK(s.second_moment(0, 0) == doctest::Approx(2.0).epsilon(1e-14));  // eps^{0.5}/0.5

    auto z = small_jump_stats(LevyMeasure::zero(2), 0.5);
    CHECK(z.mean.isZero(0.0));
    CHECK(z.second_moment.isZero(0.0));

    auto atoms = LevyMeasure::atoms(1, {{vec({2.0}), 5.0}});
    auto a = small_jump_stats(atoms, 1.0);  // the atom sits above the threshold
    CHECK(a.mean[0] == 0.0);
    CHECK(a.second_moment(0, 0) == 0.0);
}

TEST_CASE("integrability analysis drives admissibility") {
    CHECK_FALSE(integrability(LevyMeasure::anisotropic_stable(1, 0, 1.5)).ok_as_immigration);
    CHECK(integrability(LevyMeasure::orthant_power_law(2, 0.5)).ok_as_immigration);
    CHECK_FALSE(integrability(LevyMeasure::orthant_power_law(2, 0.5)).large_first_moment);
    auto rep = integrability(LevyMeasure::anisotropic_stable(2, 0, 1.5));
    CHECK_FALSE(rep.axis_first_moment[0]);
    CHECK(rep.axis_first_moment[1]);
}

TEST_CASE("constructor rejects malformed families") {
    CHECK_THROWS_AS(LevyMeasure::anisotropic_stable(2, 0, 2.5), std::invalid_argument);
    CHECK_THROWS_AS(LevyMeasure::orthant_power_law(2, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(LevyMeasure::atoms(2, {{vec({0.0, 0.0}), 1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(LevyMeasure::atoms(1, {{vec({1.0}), -2.0}}), std::invalid_argument);
    CHECK_THROWS_AS(LevyMeasure::atoms(1, {{vec({-1.0}), 1.0}}), std::invalid_argument);
}
