#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "cbi/levy.hpp"

namespace cbi {

// Definition-1 admissibility clauses. Numbering follows the definition:
// (i) diffusion signs, (ii) immigration drift signs, (iii) off-diagonal drift
// domination, (iv) immigration measure integrability, (vi) branching measure
// integrability (the definition has no clause (v)).
enum class Clause { I, II, III, IV, VI };

std::string clause_name(Clause c);

struct Violation {
    Clause clause;
    int j = -1;           // parameter index (measure/coordinate), 0-based
    int k = -1;           // second index for clause (iii)
    bool inconclusive = false;  // quadrature/analysis could not decide
    std::string detail;
};

struct RawParams {
    int dim = 0;
    Eigen::VectorXd c;
    Eigen::VectorXd beta;
    Eigen::MatrixXd B;
    LevyMeasure nu = LevyMeasure::zero(1);
    std::vector<LevyMeasure> mu;
};

// Validated tuple; constructible only through validate().
class AdmissibleParams {
public:
    int dim() const { return raw_.dim; }
    const Eigen::VectorXd& c() const { return raw_.c; }
    const Eigen::VectorXd& beta() const { return raw_.beta; }
    const Eigen::MatrixXd& B() const { return raw_.B; }
    const LevyMeasure& nu() const { return raw_.nu; }
    const LevyMeasure& mu(int j) const { return raw_.mu.at(j); }
    const std::vector<LevyMeasure>& mu() const { return raw_.mu; }
    const RawParams& raw() const { return raw_; }

private:
    friend struct ValidationAccess;
    explicit AdmissibleParams(RawParams raw) : raw_(std::move(raw)) {}
    RawParams raw_;
};

struct ValidationResult {
    std::optional<AdmissibleParams> params;
    std::vector<Violation> violations;
    bool ok() const { return params.has_value(); }
};

// Checks every Definition-1 clause and accumulates all violations (no
// short-circuit). Dimension inconsistencies throw std::invalid_argument.
ValidationResult validate(const RawParams& raw);

struct DriftMatrices {
    Eigen::MatrixXd G;        // g_kj = b_kj - ∫ z_k mu_j(dz)
    Eigen::MatrixXd b_tilde;  // diagonal keeps small jumps; off-diagonal equals G
    Eigen::VectorXd theta;    // diagonal of G
    std::vector<bool> theta_finite;  // false => G(k,k), b_tilde-diag usable? see docs
};

// Exact where the measures have closed-form moments; diagonal entries with a
// divergent small-jump moment are flagged (G usable off-diagonal only).
DriftMatrices drift_matrices(const AdmissibleParams& p);

// { k : c_k = 0 and ∫_{|z|<=1} z_k mu_k(dz) < ∞ }; inconclusive moments
// exclude the component.
std::vector<int> bounded_variation_components(const AdmissibleParams& p);

}  // namespace cbi
