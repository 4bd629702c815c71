#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "cbi/mechanisms.hpp"
#include "cbi/params.hpp"

namespace cbi {

// Scaling-and-squaring with diagonal Padé approximants (orders 3/5/7/9/13
// chosen by the 1-norm), backward error at double-precision level.
Eigen::MatrixXd matrix_exponential(const Eigen::MatrixXd& A);

// Pathwise lower bound e^{tG}x + ∫_0^t e^{sG} beta ds for fully
// bounded-variation parameter sets. Refuses (throws std::domain_error) when
// some component has unbounded variation.
Eigen::VectorXd lower_bound_bv(const AdmissibleParams& p, const Eigen::VectorXd& x,
                               double t);

// Power bounds certifying the divergence of the non-extinction integral:
//   F^(k)(xi) >= C1 xi^gamma  for xi >= M1       (gamma in (0,1])
//   R^(k)(xi) <= C2 xi^alpha  for xi >= M2       (alpha in (1,2])
// with case (a): alpha < 1+gamma, or (b): alpha = 1+gamma and gamma <= C1/C2.
struct ExponentCertificate {
    double gamma, C1, M1;
    double alpha, C2, M2;
    char case_tag = 0;  // 'a' or 'b'

    // 'a', 'b', or 0 when neither condition holds (equality read at 1e-12)
    static char decide_case(double gamma, double C1, double alpha, double C2);
};

enum class DivergenceVerdict { Diverges, Converges, Inconclusive };

struct DivergenceDiagnostic {
    DivergenceVerdict verdict = DivergenceVerdict::Inconclusive;
    double fitted_exponent = 0.0;  // slope of log g vs log xi on the top decades
    double kappa = 0.0;            // lower limit actually used
    std::string note;
};

struct NonExtinctionVerdict {
    enum class Kind { ProvenBV, ProvenIntegral, Unknown };
    Kind kind = Kind::Unknown;
    std::string reason;
    std::optional<ExponentCertificate> certificate;
};

struct TransienceVerdict {
    enum class Kind { ProvenDrift, ProvenIntegral, Unknown };
    Kind kind = Kind::Unknown;
    std::optional<double> integral_value;  // value of EQ:16 when proven that way
    std::string reason;
};

// Heuristic numerical read of the non-extinction integral criterion: the
// integrand g(xi) = exp(∫_kappa^xi F/R) / R(xi) is tabulated on a geometric
// grid spanning eight decades and its log-log slope is fitted on the top two.
// Slope >= -1 + margin => Diverges; <= -1 - margin with a stable fit =>
// Converges; otherwise Inconclusive. Margin 0.05. Binding verdicts come from
// certificates; this diagnostic must only never contradict them.
DivergenceDiagnostic diagnose_divergence_eq04(const ProjectedMechanism& pm, double kappa);

// Decision tree: bounded-variation corollary, then the integral criterion via
// exponent certificates, else Unknown.
NonExtinctionVerdict check_non_extinction(const AdmissibleParams& p,
                                          const Eigen::VectorXd& x, int k);

// Literal transience test: requires R^(k) > 0 on all of (0,∞); then drift
// sign or finiteness of the integral toward 0.
TransienceVerdict check_transience(const ProjectedMechanism& pm);

struct ComponentReport {
    int k = 0;
    bool bounded_variation = false;
    NonExtinctionVerdict non_extinction;
    TransienceVerdict transience;
    std::optional<double> kappa;  // threshold used by the integral criterion
    DivergenceDiagnostic divergence;
};

struct ClassificationReport {
    std::vector<ComponentReport> components;
    bool interior_supported = false;  // every component provably non-extinct
    bool transient = false;           // every component provably transient
    std::vector<std::string> notes;
};

ClassificationReport classify(const AdmissibleParams& p, const Eigen::VectorXd& x);

}  // namespace cbi
