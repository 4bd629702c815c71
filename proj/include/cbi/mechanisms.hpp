#pragma once

#include <Eigen/Dense>
#include <optional>

#include "cbi/levy.hpp"
#include "cbi/params.hpp"

namespace cbi {

// K(alpha) = ∫_0^∞ (e^{-w} - 1 + w) w^{-1-alpha} dw for alpha in (1,2).
// Evaluated by adaptive quadrature, cached, and cross-checked at first use
// against Gamma(2-alpha)/(alpha(alpha-1)) to relative 1e-8.
double stable_constant(double alpha);

// One-dimensional projection of the mechanisms of component k:
//   F^(k)(xi) = beta_k xi + ∫ (1 - e^{-xi z_k}) nu(dz)
//   R^(k)(xi) = -b_kk xi + c_k xi^2 + ∫ (e^{-xi z_k} - 1 + xi z_k) mu_k(dz)
// R^(k) keeps the plain b_kk; the large-jump compensation moves between drift
// and measure per the b~ identity, so the marginal measures here are the full
// pushforwards.
class ProjectedMechanism {
public:
    ProjectedMechanism(int k, double beta_k, double b_kk, double c_k,
                       LevyMeasure nu_marginal, LevyMeasure mu_marginal);

    int component() const { return k_; }
    double beta_k() const { return beta_k_; }
    double b_kk() const { return b_kk_; }
    double c_k() const { return c_k_; }
    const LevyMeasure& nu_marginal() const { return nu_marg_; }
    const LevyMeasure& mu_marginal() const { return mu_marg_; }

    // set when mu_marginal is a pure one-dimensional stable measure and c_k=0:
    // R^(k)(xi) = -b_kk xi + K(alpha) xi^alpha exactly
    struct StableForm {
        double alpha;
        double K;
    };
    const std::optional<StableForm>& stable_form() const { return stable_; }

    double F(double xi) const;
    double R(double xi) const;

private:
    int k_;
    double beta_k_, b_kk_, c_k_;
    LevyMeasure nu_marg_;
    LevyMeasure mu_marg_;
    std::optional<StableForm> stable_;
};

// Immigration mechanism F(xi) = <beta,xi> + ∫ (1 - e^{-<xi,z>}) nu(dz).
double F(const AdmissibleParams& p, const Eigen::VectorXd& xi);

// Branching mechanism vector, R_j(xi) = c_j xi_j^2 - <B e_j, xi> + ∫(...) mu_j.
Eigen::VectorXd R(const AdmissibleParams& p, const Eigen::VectorXd& xi);

ProjectedMechanism project(const AdmissibleParams& p, int k);

// Smallest grid-certified kappa with R^(k)(kappa) > 0. Convexity of R^(k)
// with R^(k)(0) = 0 makes R^(k)(xi)/xi nondecreasing, so one positive sample
// certifies positivity rightward; kappa = 0 means R^(k) > 0 on all of (0,∞).
// nullopt when R^(k) <= 0 over the whole scanned range.
std::optional<double> positivity_threshold(const ProjectedMechanism& pm);

}  // namespace cbi
