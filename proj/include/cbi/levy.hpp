#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cbi/rng.hpp"

namespace cbi {

// Value of a (possibly improper) moment integral. Divergence is decided by
// exponent analysis on the family, never by truncated quadrature.
struct MomentValue {
    enum class Kind { Finite, Infinite, Inconclusive };
    Kind kind = Kind::Finite;
    double value = 0.0;
    double abs_error = 0.0;

    static MomentValue finite(double v, double err = 0.0) { return {Kind::Finite, v, err}; }
    static MomentValue infinite() { return {Kind::Infinite, 0.0, 0.0}; }
    static MomentValue inconclusive() { return {Kind::Inconclusive, 0.0, 0.0}; }

    bool is_finite() const { return kind == Kind::Finite; }
    bool is_infinite() const { return kind == Kind::Infinite; }

    MomentValue& operator+=(const MomentValue& o);
};

enum class Region { SmallJumps, LargeJumps, Full };  // |z| <= cut, |z| > cut, all

// Which functionals a family evaluates in closed form (vs quadrature).
struct ClosedFormSupport {
    bool immigration_integral = false;
    bool branching_integral = false;
    bool moments = false;
    bool tail_mass = false;
};

// Computable Lévy measure on the nonnegative orthant of R^d: a closed tagged
// union of families. Every family knows its tail/origin exponents, so
// finiteness questions are answered symbolically.
class LevyMeasure {
public:
    struct Zero {};
    struct AnisotropicStable {
        int axis;      // 0-based
        double alpha;  // in (1,2); density z_axis^{-1-alpha} on the axis
    };
    struct OrthantPowerLaw {
        double gamma;        // in (0,1); density scale * |z|^{-d-gamma}
        double scale = 1.0;  // internal: carries marginal pushforward weight
    };
    struct FiniteAtomic {
        std::vector<std::pair<Eigen::VectorXd, double>> atoms;  // (point, mass)
    };
    struct CompoundExponential {
        Eigen::VectorXd rates;  // per-coordinate exponential rates
        double mass;            // total activity
    };
    struct Sum {
        std::vector<LevyMeasure> parts;
    };

    using Family = std::variant<Zero, AnisotropicStable, OrthantPowerLaw,
                                FiniteAtomic, CompoundExponential, Sum>;

    static LevyMeasure zero(int dim);
    static LevyMeasure anisotropic_stable(int dim, int axis, double alpha);
    static LevyMeasure orthant_power_law(int dim, double gamma, double scale = 1.0);
    static LevyMeasure atoms(int dim, std::vector<std::pair<Eigen::VectorXd, double>> atoms);
    static LevyMeasure compound_exponential(Eigen::VectorXd rates, double mass);
    static LevyMeasure sum(int dim, std::vector<LevyMeasure> parts);

    int dim() const { return dim_; }
    const Family& family() const { return fam_; }
    bool is_zero() const;

    ClosedFormSupport closed_forms() const;
    std::string describe() const;

private:
    LevyMeasure(int dim, Family fam) : dim_(dim), fam_(std::move(fam)) {}
    int dim_ = 1;
    Family fam_;
};

// ---- integral functionals -------------------------------------------------

// ∫ (1 - e^{-<xi,z>}) m(dz). +inf when the family diverges for this
// functional (i.e. m is not a valid immigration measure).
double immigration_integral(const LevyMeasure& m, const Eigen::VectorXd& xi);

// ∫ (e^{-<xi,z>} - 1 + <xi,z>) m(dz); +inf when divergent.
double branching_integral(const LevyMeasure& m, const Eigen::VectorXd& xi);

// ∫_region z_k m(dz) with region cut on the Euclidean norm |z|.
MomentValue moment(const LevyMeasure& m, int k, Region region, double cut = 1.0);

// m(|z| > eps); finite for every supported family when eps > 0.
MomentValue tail_mass(const LevyMeasure& m, double eps);

// Pushforward under pr_k as a one-dimensional measure; mass projecting to the
// origin is deleted.
LevyMeasure marginal(const LevyMeasure& m, int k);

// ---- simulation support ---------------------------------------------------

struct JumpEvent {
    double time;
    Eigen::VectorXd z;
};

// Poisson(T * m(|z|>eps)) events, i.i.d. locations from the normalized
// restriction, times uniform on [0,T], sorted by time.
std::vector<JumpEvent> sample_large_jumps(const LevyMeasure& m, double eps,
                                          double horizon, rng::Stream& rs);

// One jump location conditioned on |z| > eps, written into z[0..d-1].
// Only defined for primitive (non-Sum) families.
void sample_location_into(const LevyMeasure& m, double eps, rng::Stream& rs, double* z);

struct SmallJumpStats {
    Eigen::VectorXd mean;           // ∫_{|z|<=eps} z m(dz), valid where flagged
    std::vector<bool> mean_finite;  // per component
    Eigen::MatrixXd second_moment;  // ∫_{|z|<=eps} z z^T m(dz), always finite
};

SmallJumpStats small_jump_stats(const LevyMeasure& m, double eps);

// ---- structure helpers ----------------------------------------------------

// Primitive (non-Sum, non-Zero) parts of a measure, Sum flattened.
std::vector<LevyMeasure> flatten(const LevyMeasure& m);

// Definition-1 style integrability analysis, symbolic per family.
struct IntegrabilityReport {
    bool ok_as_immigration = true;       // ∫ (1 ∧ |z|) < ∞
    bool small_second_moment = true;     // ∫_{|z|<=1} |z|^2 < ∞
    bool large_first_moment = true;      // ∫_{|z|>1} |z| < ∞
    std::vector<bool> axis_first_moment; // ∫ z_k m(dz) < ∞ per axis (full range)
};
IntegrabilityReport integrability(const LevyMeasure& m);

}  // namespace cbi
