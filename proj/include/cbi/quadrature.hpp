#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <stdexcept>
#include <vector>

namespace cbi::quad {

struct Result {
    double value = 0.0;
    double abs_error = 0.0;
    std::size_t evaluations = 0;
    bool converged = false;
};

namespace detail {

// 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK dqk15).
inline constexpr double xgk[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144838258730, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr double wgk[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr double wg[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
    double a, b;
    double value;
    double error;
    bool operator<(const Segment& o) const { return error < o.error; }
};

template <class F>
Segment gk15(const F& f, double a, double b, std::size_t& evals) {
    const double center = 0.5 * (a + b);
    const double half = 0.5 * (b - a);

    const double fc = f(center);
    double result_gauss = fc * wg[3];
    double result_kronrod = fc * wgk[7];
    double resabs = std::abs(result_kronrod);

    double fv[15];
    for (int j = 0; j < 7; ++j) {
        const double dx = half * xgk[j];
        const double f1 = f(center - dx);
        const double f2 = f(center + dx);
        fv[j] = f1;
        fv[14 - j] = f2;
        result_kronrod += wgk[j] * (f1 + f2);
        resabs += wgk[j] * (std::abs(f1) + std::abs(f2));
        if (j % 2 == 1) result_gauss += wg[j / 2] * (f1 + f2);
    }
    evals += 15;

    const double mean = 0.5 * result_kronrod;
    double resasc = wgk[7] * std::abs(fc - mean);
    for (int j = 0; j < 7; ++j)
        resasc += wgk[j] * (std::abs(fv[j] - mean) + std::abs(fv[14 - j] - mean));

    result_gauss *= half;
    result_kronrod *= half;
    resabs *= std::abs(half);
    resasc *= std::abs(half);

    double err = std::abs(result_kronrod - result_gauss);
    if (resasc != 0.0 && err != 0.0)
        err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
    const double eps50 = 50.0 * std::numeric_limits<double>::epsilon();
    if (resabs > std::numeric_limits<double>::min() / eps50)
        err = std::max(err, eps50 * resabs);

    return Segment{a, b, result_kronrod, err};
}

}  // namespace detail

// Adaptive bisection on [a,b], worst segment first, absolute tolerance.
template <class F>
Result integrate(const F& f, double a, double b, double abs_tol = 1e-10,
                 std::size_t max_segments = 2000) {
    Result out;
    if (a == b) {
        out.converged = true;
        return out;
    }
    std::priority_queue<detail::Segment> q;
    q.push(detail::gk15(f, a, b, out.evaluations));
    double total = q.top().value;
    double err = q.top().error;
    std::size_t n = 1;
    while (err > abs_tol && n < max_segments) {
        detail::Segment worst = q.top();
        q.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        if (mid <= worst.a || mid >= worst.b) {
            // interval below double resolution; accept its estimate
            q.push(detail::Segment{worst.a, worst.b, worst.value, 0.0});
            err -= worst.error;
            continue;
        }
        auto left = detail::gk15(f, worst.a, mid, out.evaluations);
        auto right = detail::gk15(f, mid, worst.b, out.evaluations);
        total += left.value + right.value - worst.value;
        err += left.error + right.error - worst.error;
        q.push(left);
        q.push(right);
        ++n;
    }
    out.value = total;
    out.abs_error = err;
    out.converged = err <= abs_tol;
    return out;
}

// Integral over [a, infinity). The finite part up to the split point is
// integrated directly; the tail is mapped through w = 1/u onto (0, 1/split].
template <class F>
Result integrate_to_inf(const F& f, double a, double abs_tol = 1e-10,
                        std::size_t max_segments = 2000) {
    if (!(a >= 0)) throw std::invalid_argument("integrate_to_inf: a must be >= 0");
    const double split = std::max(a, 1.0);
    Result head;
    if (a < split) head = integrate(f, a, split, 0.5 * abs_tol, max_segments);
    auto mapped = [&f](double u) {
        const double w = 1.0 / u;
        return f(w) * w * w;
    };
    Result tail = integrate(mapped, 0.0, 1.0 / split,
                            a < split ? 0.5 * abs_tol : abs_tol, max_segments);
    Result out;
    out.value = head.value + tail.value;
    out.abs_error = head.abs_error + tail.abs_error;
    out.evaluations = head.evaluations + tail.evaluations;
    out.converged = (a >= split || head.converged) && tail.converged;
    return out;
}

}  // namespace cbi::quad
