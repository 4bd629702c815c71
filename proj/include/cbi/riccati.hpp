#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "cbi/params.hpp"

namespace cbi {

struct RiccatiOptions {
    double tol = 1e-8;            // local error per accepted step
    std::size_t max_steps = 1000000;
    double initial_step = 0.0;    // 0 => min(1e-3, T/100)
    bool fixed_step = false;      // classic RK4 with step fixed_h (order test)
    double fixed_h = 1e-3;
};

// Thrown on step-size underflow (stiffness); carries the last valid state.
class RiccatiError : public std::runtime_error {
public:
    RiccatiError(std::string msg, double t, Eigen::VectorXd v)
        : std::runtime_error(std::move(msg)), t_last(t), v_last(std::move(v)) {}
    double t_last;
    Eigen::VectorXd v_last;
};

// Trajectory of v(t, xi) solving dv/dt = -R(v), v(0) = xi, together with the
// accumulated immigration integral f(t) = ∫_0^t F(v(s)) ds integrated at the
// same order as part of the augmented system.
struct RiccatiSolution {
    Eigen::VectorXd xi;
    std::vector<double> t;
    std::vector<Eigen::VectorXd> v;
    std::vector<double> f_accum;
    std::vector<double> step_error;       // local error estimate per accepted step
    std::vector<Eigen::VectorXd> v_deriv; // -R(v) at nodes, for dense output
    std::vector<double> f_deriv;          // F(v) at nodes

    Eigen::VectorXd eval(double time) const;  // cubic Hermite between nodes
    double eval_f(double time) const;
    double terminal_time() const { return t.back(); }
};

RiccatiSolution solve(const AdmissibleParams& p, const Eigen::VectorXd& xi, double T,
                      const RiccatiOptions& opt = {});

// -<x, v(T,xi)> - ∫_0^T F(v(s,xi)) ds; exp of this predicts E[e^{-<xi,X(T)>}].
double laplace_exponent(const AdmissibleParams& p, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& xi, double T, const RiccatiOptions& opt = {});

// ||v(t+s, xi) - v(t, v(s, xi))||_inf, the flow-composition defect.
double flow_check(const AdmissibleParams& p, const Eigen::VectorXd& xi, double s, double t,
                  const RiccatiOptions& opt = {});

}  // namespace cbi
