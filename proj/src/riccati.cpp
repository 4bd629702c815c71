#include "cbi/riccati.hpp"

#include <algorithm>
#include <cmath>

#include "cbi/mechanisms.hpp"

namespace cbi {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 35.0 / 384 - 5179.0 / 57600, e3 = 500.0 / 1113 - 7571.0 / 16695,
                 e4 = 125.0 / 192 - 393.0 / 640, e5 = -2187.0 / 6784 + 92097.0 / 339200,
                 e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;

struct Rhs {
    const AdmissibleParams& p;
    // augmented state: y = (v_1..v_d, f); stage values are clamped to the
    // orthant before the mechanisms are evaluated (intermediate stages may
    // undershoot by the local error even when accepted steps do not)
    Eigen::VectorXd operator()(const Eigen::VectorXd& y) const {
        const int d = p.dim();
        Eigen::VectorXd v = y.head(d).cwiseMax(0.0);
        Eigen::VectorXd out(d + 1);
        out.head(d) = -R(p, v);
        out[d] = F(p, v);
        return out;
    }
};

}  // namespace

Eigen::VectorXd RiccatiSolution::eval(double time) const {
    const auto it = std::upper_bound(t.begin(), t.end(), time);
    if (it == t.begin()) return v.front();
    if (it == t.end()) return v.back();
    const std::size_t i = static_cast<std::size_t>(it - t.begin()) - 1;
    const double h = t[i + 1] - t[i];
    const double s = (time - t[i]) / h;
    const double s2 = s * s, s3 = s2 * s;
    // cubic Hermite on [t_i, t_{i+1}]
    return (2 * s3 - 3 * s2 + 1) * v[i] + (s3 - 2 * s2 + s) * h * v_deriv[i] +
           (-2 * s3 + 3 * s2) * v[i + 1] + (s3 - s2) * h * v_deriv[i + 1];
}

double RiccatiSolution::eval_f(double time) const {
    const auto it = std::upper_bound(t.begin(), t.end(), time);
    if (it == t.begin()) return f_accum.front();
    if (it == t.end()) return f_accum.back();
    const std::size_t i = static_cast<std::size_t>(it - t.begin()) - 1;
    const double h = t[i + 1] - t[i];
    const double s = (time - t[i]) / h;
    const double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * f_accum[i] + (s3 - 2 * s2 + s) * h * f_deriv[i] +
           (-2 * s3 + 3 * s2) * f_accum[i + 1] + (s3 - s2) * h * f_deriv[i + 1];
}

RiccatiSolution solve(const AdmissibleParams& p, const Eigen::VectorXd& xi, double T,
                      const RiccatiOptions& opt) {
    if (xi.size() != p.dim()) throw std::invalid_argument("riccati: xi dimension mismatch");
    for (int i = 0; i < xi.size(); ++i)
        if (xi[i] < 0.0) throw std::domain_error("riccati: xi must lie in the orthant");
    if (!(T >= 0.0)) throw std::invalid_argument("riccati: T must be >= 0");
    if (!(opt.tol > 0.0)) throw std::invalid_argument("riccati: tol must be > 0");

    const int d = p.dim();
    Rhs rhs{p};

    RiccatiSolution sol;
    sol.xi = xi;
    Eigen::VectorXd y(d + 1);
    y.head(d) = xi;
    y[d] = 0.0;

    auto record = [&](double time, const Eigen::VectorXd& state, double err) {
        sol.t.push_back(time);
        sol.v.push_back(state.head(d));
        sol.f_accum.push_back(state[d]);
        sol.step_error.push_back(err);
        const Eigen::VectorXd der = rhs(state);
        sol.v_deriv.push_back(der.head(d));
        sol.f_deriv.push_back(der[d]);
    };
    record(0.0, y, 0.0);
    if (T == 0.0) return sol;

    if (opt.fixed_step) {
        // classic RK4, used for the empirical-order safeguard
        const double h0 = opt.fixed_h;
        const std::size_t n = static_cast<std::size_t>(std::ceil(T / h0 - 1e-12));
        for (std::size_t i = 0; i < n; ++i) {
            const double t0 = sol.t.back();
            const double h = std::min(h0, T - t0);
            const Eigen::VectorXd k1 = rhs(y);
            const Eigen::VectorXd k2 = rhs(y + 0.5 * h * k1);
            const Eigen::VectorXd k3 = rhs(y + 0.5 * h * k2);
            const Eigen::VectorXd k4 = rhs(y + h * k3);
            y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            y.head(d) = y.head(d).cwiseMax(0.0);
            record(t0 + h, y, 0.0);
        }
        return sol;
    }

    double t = 0.0;
    double h = opt.initial_step > 0.0 ? opt.initial_step : std::min(1e-3, T / 100.0);
    std::size_t steps = 0;

    Eigen::VectorXd k1 = rhs(y);
    while (t < T) {
        if (++steps > opt.max_steps)
            throw RiccatiError("riccati: step limit exceeded", t, y.head(d));
        h = std::min(h, T - t);
        if (h < 1e-14 * std::max(1.0, t))
            throw RiccatiError("riccati: step size underflow", t, y.head(d));

        const Eigen::VectorXd k2 = rhs(y + h * (a21 * k1));
        const Eigen::VectorXd k3 = rhs(y + h * (a31 * k1 + a32 * k2));
        const Eigen::VectorXd k4 = rhs(y + h * (a41 * k1 + a42 * k2 + a43 * k3));
        const Eigen::VectorXd k5 = rhs(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        const Eigen::VectorXd k6 =
            rhs(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        const Eigen::VectorXd y5 =
            y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        const Eigen::VectorXd k7 = rhs(y5);
        const Eigen::VectorXd errv =
            h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        const double err = errv.lpNorm<Eigen::Infinity>();

        bool accept = err <= opt.tol;
        if (accept) {
            const double undershoot = -y5.head(d).minCoeff();
            if (undershoot > opt.tol) {
                // orthant violation beyond tolerance: treat as failed step
                accept = false;
            } else {
                Eigen::VectorXd ynew = y5;
                ynew.head(d) = ynew.head(d).cwiseMax(0.0);  // clamp <= tol undershoot
                t += h;
                y = ynew;
                k1 = rhs(y);  // FSAL does not survive the clamp; recompute
                record(t, y, err);
            }
        }
        const double safety =
            err > 0.0 ? 0.9 * std::pow(opt.tol / err, 0.2) : 5.0;
        double factor = std::clamp(safety, 0.2, 5.0);
        if (!accept) factor = std::min(factor, 0.5);
        h *= factor;
    }
    return sol;
}

double laplace_exponent(const AdmissibleParams& p, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& xi, double T, const RiccatiOptions& opt) {
    if (x.size() != p.dim()) throw std::invalid_argument("laplace_exponent: x dim mismatch");
    for (int i = 0; i < x.size(); ++i)
        if (x[i] < 0.0) throw std::domain_error("laplace_exponent: x must lie in the orthant");
    const RiccatiSolution sol = solve(p, xi, T, opt);
    return -x.dot(sol.v.back()) - sol.f_accum.back();
}

double flow_check(const AdmissibleParams& p, const Eigen::VectorXd& xi, double s, double t,
                  const RiccatiOptions& opt) {
    if (s < 0.0 || t < 0.0) throw std::invalid_argument("flow_check: times must be >= 0");
    const RiccatiSolution direct = solve(p, xi, s + t, opt);
    const RiccatiSolution first = solve(p, xi, s, opt);
    const RiccatiSolution second = solve(p, first.v.back(), t, opt);
    return (direct.v.back() - second.v.back()).lpNorm<Eigen::Infinity>();
}

}  // namespace cbi
