#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "cbi/boundary.hpp"
#include "cbi/riccati.hpp"
#include "cbi/simulate.hpp"

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

VectorXd vec(std::initializer_list<double> xs) {
    VectorXd v(static_cast<int>(xs.size()));
    int i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

// alpha-root pair used throughout the coupling tests
AdmissibleParams alpha_root_coupling() {
    auto raw = make_raw(2);
    raw.B = (MatrixXd(2, 2) << -1.0, 0.1, 0.1, -1.0).finished();
    raw.beta = vec({0.5, 0.5});
    raw.mu = {LevyMeasure::anisotropic_stable(2, 0, 1.5),
              LevyMeasure::anisotropic_stable(2, 1, 1.5)};
    return must_validate(raw);
}

}  // namespace

TEST_CASE("constant path when every coefficient vanishes") {
    auto p = must_validate(make_raw(2));
    SimConfig cfg{.horizon = 1.0, .step = 0.1, .jump_eps = 0.1, .seed = 3, .paths = 1};
    DriverRealization drv(p, cfg, 0);
    auto tr = simulate_cbi(p, vec({2.0, 0.5}), cfg, drv);
    for (const auto& s : tr.state) {
        CHECK(s[0] == 2.0);
        CHECK(s[1] == 0.5);
    }
    CHECK(tr.t.front() == 0.0);
    CHECK(tr.t.back() == 1.0);
}

TEST_CASE("deterministic linear drift matches the ODE oracle within O(h)") {
    auto raw = make_raw(2);
    raw.B = (MatrixXd(2, 2) << -0.5, 0.2, 0.1, -1.0).finished();
    raw.beta = vec({1.0, 0.5});
    auto p = must_validate(raw);
    const double h = 1e-3, T = 1.0;
    SimConfig cfg{.horizon = T, .step = h, .jump_eps = 0.1, .seed = 3, .paths = 1};
    DriverRealization drv(p, cfg, 0);
    auto tr = simulate_cbi(p, vec({1.0, 1.0}), cfg, drv);
    // exact solution via the BV matrix bound (equality here: no jumps)
    VectorXd exact = lower_bound_bv(p, vec({1.0, 1.0}), T);
    CHECK((tr.state.back() - exact).lpNorm<Eigen::Infinity>() <= 5.0 * h);
}

TEST_CASE("jump-adapted grid: retained jumps exceed the truncation level") {
    auto raw = make_raw(1);
    raw.B = MatrixXd::Constant(1, 1, -1.0);
    raw.beta = vec({1.0});
    raw.mu = {LevyMeasure::anisotropic_stable(1, 0, 1.5)};
    auto p = must_validate(raw);
    SimConfig cfg{.horizon = 1.0, .step = 0.01, .jump_eps = 0.05, .seed = 17, .paths = 1};
    DriverRealization drv(p, cfg, 0);
    auto tr = simulate_cbi(p, vec({1.0}), cfg, drv);
    REQUIRE(tr.t.size() > 2);
    for (std::size_t i = 1; i < tr.t.size(); ++i) {
        CHECK(tr.t[i] > tr.t[i - 1]);
        const double inc = tr.state[i][0] - tr.state[i - 1][0];
        // positive increments larger than drift scale must be jumps >= eps
        if (inc > 0.05) CHECK(inc >= cfg.jump_eps);
    }
    for (const auto& s : tr.state) CHECK(s[0] >= 0.0);
}

TEST_CASE("auxiliary process solves the scalar linear ODE when no jumps act") {
    auto raw = make_raw(2);
    raw.B = (MatrixXd(2, 2) << -0.5, 0.3, 0.2, -1.5).finished();
    raw.beta = vec({1.0, 2.0});
    auto p = must_validate(raw);
    const double h = 1e-3, T = 1.0;
    SimConfig cfg{.horizon = T, .step = h, .jump_eps = 0.1, .seed = 5, .paths = 1};
    DriverRealization drv(p, cfg, 0);
    auto tr = simulate_auxiliary(p, vec({1.0, 1.0}), cfg, drv);
    // Y_k follows dy = (beta_k + b_kk y) dt (b~ equals b: no jump measures)
    for (int k = 0; k < 2; ++k) {
        const double b = raw.B(k, k), beta = raw.beta[k];
        const double exact = std::exp(b * T) * 1.0 + beta * (std::exp(b * T) - 1.0) / b;
        CHECK(tr.state.back()[k] == doctest::Approx(exact).epsilon(5e-3));
    }
}

TEST_CASE("auxiliary process started at zero with no immigration stays at zero") {
    auto raw = make_raw(1);
    raw.B = MatrixXd::Constant(1, 1, 0.5);
    raw.mu = {LevyMeasure::anisotropic_stable(1, 0, 1.5)};
    auto p = must_validate(raw);
    SimConfig cfg{.horizon = 1.0, .step = 0.01, .jump_eps = 0.01, .seed = 11, .paths = 1};
    DriverRealization drv(p, cfg, 0);
    auto tr = simulate_auxiliary(p, vec({0.0}), cfg, drv);
    for (const auto& s : tr.state) CHECK(s[0] == 0.0);
}

TEST_CASE("coupled run: identical dynamics give zero defect") {
    // axis-supported measures and diagonal B make X and Y the same equation
    auto raw = make_raw(2);
    raw.B = (MatrixXd(2, 2) << -1.0, 0.0, 0.0, -0.5).finished();
    raw.beta = vec({0.5, 0.5});
    raw.mu = {LevyMeasure::anisotropic_stable(2, 0, 1.5),
              LevyMeasure::anisotropic_stable(2, 1, 1.3)};
    raw.nu = LevyMeasure::atoms(2, {{vec({0.3, 0.7}), 1.0}});
    auto p = must_validate(raw);
    SimConfig cfg{.horizon = 1.0, .step = 1e-2, .jump_eps = 1e-2, .seed = 23, .paths = 1};
    DriverRealization drv(p, cfg, 0, vec({1.0, 1.0}));
    auto [X, Y] = simulate_coupled(p, vec({1.0, 1.0}), cfg, drv);
    auto defect = coupling_stats(X, Y);
    CHECK(defect.maxCoeff() <= 1e-12);
    CHECK(defect.minCoeff() >= -1e-12);  // equality both ways
}

TEST_CASE("coupled run: pathwise domination with off-diagonal drift") {
    auto p = alpha_root_coupling();
    SimConfig cfg{.horizon = 1.0, .step = 1e-2, .jump_eps = 1e-2, .seed = 29, .paths = 1};
    for (std::uint64_t path = 0; path < 20; ++path) {
        DriverRealization drv(p, cfg, path, vec({1.0, 1.0}));
        auto [X, Y] = simulate_coupled(p, vec({1.0, 1.0}), cfg, drv);
        auto defect = coupling_stats(X, Y);
        CHECK(defect.maxCoeff() <= 1e-8 + 5.0 * cfg.step);
    }
}

TEST_CASE("coupling_stats flags a flipped acceptance") {
    auto p = alpha_root_coupling();
    SimConfig cfg{.horizon = 1.0, .step = 1e-2, .jump_eps = 1e-2, .seed = 31, .paths = 1};
    DriverRealization drv(p, cfg, 0, vec({1.0, 1.0}));
    auto [X, Y] = simulate_coupled(p, vec({1.0, 1.0}), cfg, drv);
    // force one extra jump onto Y only: positive defect must appear
    Trajectory Yf = Y;
    const std::size_t mid = Yf.state.size() / 2;
    Yf.state[mid][0] = X.state[mid][0] + 0.5;
    CHECK(coupling_stats(X, Yf).maxCoeff() >= 0.5 - 1e-12);

    // grid mismatch is structural
    Trajectory bad = Y;
    bad.t.push_back(bad.t.back() + 1.0);
    bad.state.push_back(bad.state.back());
    CHECK_THROWS_AS(coupling_stats(X, bad), std::invalid_argument);
}

TEST_CASE("empirical laplace: exact cases") {
    std::vector<VectorXd> constant(100, vec({1.5, 0.5}));
    auto zero = empirical_laplace(constant, vec({0.0, 0.0}));
    CHECK(zero.estimate == 1.0);
    CHECK(zero.std_error == 0.0);

    auto exact = empirical_laplace(constant, vec({2.0, 1.0}));
    CHECK(exact.estimate == doctest::Approx(std::exp(-3.5)).epsilon(1e-14));
    CHECK(exact.std_error == 0.0);
}

TEST_CASE("ensemble: laplace transform matches the Riccati prediction (Feller)") {
    auto raw = make_raw(1);
    raw.c = vec({1.0});
    raw.beta = vec({1.0});
    auto p = must_validate(raw);
    const double T = 1.0, h = 2e-3;
    SimConfig cfg{.horizon = T, .step = h, .jump_eps = 1e-3, .seed = 91, .paths = 4000};
    EnsembleRequest req;
    req.snapshot_times = {T};
    req.threads = 2;
    auto res = run_ensemble(p, vec({1.0}), cfg, req);

    std::vector<VectorXd> terminal;
    terminal.reserve(cfg.paths);
    for (const auto& snaps : res.x_snapshots) {
        REQUIRE(snaps.size() == 1);
        terminal.push_back(snaps[0]);
    }
    const VectorXd xi = vec({2.0});
    auto mc = empirical_laplace(terminal, xi);
    const double predicted = std::exp(laplace_exponent(p, vec({1.0}), xi, T));
    CHECK(std::abs(mc.estimate - predicted) <= 4.0 * mc.std_error + 2.0 * h * predicted);
}

TEST_CASE("ensemble: determinism across worker counts") {
    auto p = alpha_root_coupling();
    SimConfig cfg{.horizon = 0.5, .step = 1e-2, .jump_eps = 1e-2, .seed = 7, .paths = 40};
    EnsembleRequest req;
    req.snapshot_times = {0.25, 0.5};
    req.coupled = true;
    req.threads = 1;
    auto a = run_ensemble(p, vec({1.0, 1.0}), cfg, req);
    req.threads = 3;
    auto b = run_ensemble(p, vec({1.0, 1.0}), cfg, req);
    for (std::size_t i = 0; i < cfg.paths; ++i) {
        for (std::size_t s = 0; s < 2; ++s) {
            CHECK(a.x_snapshots[i][s] == b.x_snapshots[i][s]);
            CHECK(a.y_snapshots[i][s] == b.y_snapshots[i][s]);
        }
        CHECK(a.coupling_defect[i] == b.coupling_defect[i]);
        CHECK(a.x_min[i] == b.x_min[i]);
    }
}

TEST_CASE("driver realizations regenerate bit-exactly") {
    auto p = alpha_root_coupling();
    SimConfig cfg{.horizon = 1.0, .step = 1e-2, .jump_eps = 5e-3, .seed = 13, .paths = 1};
    DriverRealization a(p, cfg, 4, vec({1.0, 1.0}));
    DriverRealization b(p, cfg, 4, vec({1.0, 1.0}));
    REQUIRE(a.strata(0).size() == b.strata(0).size());
    for (std::size_t s = 0; s < a.strata(0).size(); ++s) {
        const auto& ea = a.strata(0)[s];
        const auto& eb = b.strata(0)[s];
        REQUIRE(ea.events.size() == eb.events.size());
        for (std::size_t i = 0; i < ea.events.size(); ++i) {
            CHECK(ea.events[i].time == eb.events[i].time);
            CHECK(ea.events[i].r == eb.events[i].r);
        }
        CHECK(ea.zpool == eb.zpool);
    }
    // different paths decorrelate
    DriverRealization c(p, cfg, 5, vec({1.0, 1.0}));
    CHECK(a.strata(0)[0].events.size() != c.strata(0)[0].events.size());
}

TEST_CASE("mark bound doubling preserves earlier strata") {
    auto p = alpha_root_coupling();
    SimConfig cfg{.horizon = 1.0, .step = 1e-2, .jump_eps = 5e-3, .seed = 19, .paths = 1};
    DriverRealization drv(p, cfg, 0, vec({1.0, 1.0}));
    const double bound0 = drv.mark_bound(0);
    const auto before = drv.strata(0)[0].events;
    auto added = drv.ensure_mark_bound(0, bound0 * 3.0);
    CHECK(drv.mark_bound(0) == 4.0 * bound0);
    CHECK(added.size() == 2);
    const auto& after = drv.strata(0)[0].events;
    REQUIRE(after.size() == before.size());
    for (std::size_t i = 0; i < after.size(); ++i) CHECK(after[i].time == before[i].time);
    for (std::size_t s : added) {
        for (const auto& e : drv.strata(0)[s].events) {
            CHECK(e.r > bound0);
            CHECK(e.r <= drv.mark_bound(0));
        }
    }
}

TEST_CASE("orthant projection distances stay tiny for BV parameter sets") {
    auto raw = make_raw(2);
    raw.beta = vec({0.5, 0.5});
    raw.mu = {LevyMeasure::atoms(2, {{vec({0.4, 0.0}), 1.0}}),
              LevyMeasure::atoms(2, {{vec({0.0, 0.7}), 0.5}})};
    for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k)
            raw.B(k, j) = moment(raw.mu[j], k, Region::Full).value + (k == j ? 0.0 : 0.1);
    auto p = must_validate(raw);
    SimConfig cfg{.horizon = 1.0, .step = 1e-3, .jump_eps = 1e-3, .seed = 37, .paths = 64};
    EnsembleRequest req;
    req.snapshot_times = {1.0};
    req.check_bv_bound = true;
    req.threads = 2;
    auto res = run_ensemble(p, vec({1.0, 1.0}), cfg, req);
    for (double d : res.projection_distance) CHECK(d <= 1e-12);
    for (double d : res.bv_bound_defect) CHECK(d <= 1e-9);
}

TEST_CASE("boundary statistics are monotone and separate regimes") {
    std::vector<double> mins = {0.5, 0.01, 2.0, 0.0005, 0.2};
    auto fr = boundary_stats(mins, {0.1, 0.01, 0.001});
    CHECK(fr[0] == doctest::Approx(2.0 / 5));
    CHECK(fr[1] == doctest::Approx(1.0 / 5));
    CHECK(fr[2] == doctest::Approx(1.0 / 5));
    for (std::size_t i = 1; i < fr.size(); ++i) CHECK(fr[i] <= fr[i - 1]);
    CHECK_THROWS_AS(boundary_stats(mins, {0.1, 0.5}), std::invalid_argument);
}

TEST_CASE("gaussian small-jump correction runs and stays in the orthant") {
    auto raw = make_raw(1);
    raw.B = MatrixXd::Constant(1, 1, -1.0);
    raw.beta = vec({1.0});
    raw.mu = {LevyMeasure::anisotropic_stable(1, 0, 1.5)};
    auto p = must_validate(raw);
    SimConfig cfg{.horizon = 0.5,
                  .step = 1e-2,
                  .jump_eps = 1e-2,
                  .seed = 41,
                  .paths = 1,
                  .mode = SmallJumpMode::GaussianCorrection};
    DriverRealization drv(p, cfg, 0);
    auto tr = simulate_cbi(p, vec({1.0}), cfg, drv);
    for (const auto& s : tr.state) CHECK(s[0] >= 0.0);
    CHECK(tr.max_projection_distance < 0.5);  // corrections are small
}
