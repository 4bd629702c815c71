#include "cbi/mechanisms.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

#include "cbi/quadrature.hpp"

namespace cbi {

double stable_constant(double alpha) {
    if (!(alpha > 1.0 && alpha < 2.0))
        throw std::domain_error("stable_constant: alpha must lie in (1,2)");

    static std::mutex mtx;
    static std::map<double, double> cache;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(alpha);
    if (it != cache.end()) return it->second;

    auto integrand = [alpha](double w) {
        const double compensated =
            w > 1e-4 ? std::exp(-w) - 1.0 + w
                     : 0.5 * w * w * (1.0 - w / 3.0 + w * w / 12.0);
        return compensated * std::pow(w, -1.0 - alpha);
    };
    // the integrand behaves like w^{1-alpha}/2 at 0 and w^{-alpha} at infinity;
    // power substitutions flatten both ends so the adaptive rule converges
    const double p = 2.0 / (2.0 - alpha);  // w = v^p on [0,1]
    auto head = [&](double v) {
        const double w = std::pow(v, p);
        return integrand(w) * p * std::pow(v, p - 1.0);
    };
    const double q = 2.0 / (alpha - 1.0);  // w = u^{-q} on [1,inf)
    auto tail = [&](double u) {
        const double w = std::pow(u, -q);
        return integrand(w) * q * std::pow(u, -q - 1.0);
    };
    const double by_quadrature = quad::integrate(head, 0.0, 1.0, 1e-12).value +
                                 quad::integrate(tail, 0.0, 1.0, 1e-12).value;
    const double by_identity = std::tgamma(2.0 - alpha) / (alpha * (alpha - 1.0));
    if (std::abs(by_quadrature - by_identity) > 1e-8 * std::abs(by_identity))
        throw std::runtime_error(
            "stable_constant: quadrature disagrees with the Gamma identity");

    cache.emplace(alpha, by_quadrature);
    return by_quadrature;
}

ProjectedMechanism::ProjectedMechanism(int k, double beta_k, double b_kk, double c_k,
                                       LevyMeasure nu_marginal, LevyMeasure mu_marginal)
    : k_(k),
      beta_k_(beta_k),
      b_kk_(b_kk),
      c_k_(c_k),
      nu_marg_(std::move(nu_marginal)),
      mu_marg_(std::move(mu_marginal)) {
    if (nu_marg_.dim() != 1 || mu_marg_.dim() != 1)
        throw std::invalid_argument("ProjectedMechanism: marginals must be one-dimensional");
    if (c_k_ == 0.0) {
        if (const auto* st =
                std::get_if<LevyMeasure::AnisotropicStable>(&mu_marg_.family())) {
            stable_ = StableForm{st->alpha, stable_constant(st->alpha)};
        }
    }
}

double ProjectedMechanism::F(double xi) const {
    if (xi < 0.0) throw std::domain_error("F^(k): xi must be >= 0");
    Eigen::VectorXd v(1);
    v[0] = xi;
    return beta_k_ * xi + immigration_integral(nu_marg_, v);
}

double ProjectedMechanism::R(double xi) const {
    if (xi < 0.0) throw std::domain_error("R^(k): xi must be >= 0");
    if (stable_)
        return -b_kk_ * xi + (xi > 0.0 ? stable_->K * std::pow(xi, stable_->alpha) : 0.0);
    Eigen::VectorXd v(1);
    v[0] = xi;
    return -b_kk_ * xi + c_k_ * xi * xi + branching_integral(mu_marg_, v);
}

double F(const AdmissibleParams& p, const Eigen::VectorXd& xi) {
    if (xi.size() != p.dim()) throw std::invalid_argument("F: dimension mismatch");
    for (int i = 0; i < xi.size(); ++i)
        if (xi[i] < 0.0) throw std::domain_error("F: xi must lie in the orthant");
    return p.beta().dot(xi) + immigration_integral(p.nu(), xi);
}

Eigen::VectorXd R(const AdmissibleParams& p, const Eigen::VectorXd& xi) {
    if (xi.size() != p.dim()) throw std::invalid_argument("R: dimension mismatch");
    for (int i = 0; i < xi.size(); ++i)
        if (xi[i] < 0.0) throw std::domain_error("R: xi must lie in the orthant");
    const int d = p.dim();
    Eigen::VectorXd out(d);
    for (int j = 0; j < d; ++j) {
        out[j] = p.c()[j] * xi[j] * xi[j] - p.B().col(j).dot(xi) +
                 branching_integral(p.mu(j), xi);
    }
    return out;
}

ProjectedMechanism project(const AdmissibleParams& p, int k) {
    if (k < 0 || k >= p.dim()) throw std::invalid_argument("project: component out of range");
    return ProjectedMechanism(k, p.beta()[k], p.B()(k, k), p.c()[k],
                              marginal(p.nu(), k), marginal(p.mu(k), k));
}

std::optional<double> positivity_threshold(const ProjectedMechanism& pm) {
    // exact form for the stable family
    if (const auto& sf = pm.stable_form()) {
        if (pm.b_kk() <= 0.0) return 0.0;
        return std::pow(pm.b_kk() / sf->K, 1.0 / (sf->alpha - 1.0));
    }

    // R'(0) = -b_kk; convexity settles the behavior near zero
    if (pm.b_kk() < 0.0) return 0.0;  // R(xi) >= -b_kk * xi > 0
    if (pm.b_kk() == 0.0) {
        const bool curved = pm.c_k() > 0.0 || !pm.mu_marginal().is_zero();
        if (curved) return 0.0;  // strictly convex above the zero tangent
        return std::nullopt;     // R identically zero
    }

    // b_kk > 0: R < 0 near zero; scan a geometric grid for the first sign change
    double lo = 0.0, hi = 0.0;
    for (int e = -20; e <= 20; ++e) {
        const double xi = std::ldexp(1.0, e);
        if (pm.R(xi) > 0.0) {
            hi = xi;
            break;
        }
        lo = xi;
    }
    if (hi == 0.0) return std::nullopt;  // nonpositive over the whole scanned range

    // bisect [lo, hi] down to relative width 1e-9; hi keeps R(hi) > 0
    while (hi - lo > 1e-9 * hi) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (pm.R(mid) > 0.0)
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

}  // namespace cbi
