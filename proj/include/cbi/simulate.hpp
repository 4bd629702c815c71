#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "cbi/params.hpp"
#include "cbi/rng.hpp"

namespace cbi {

enum class SmallJumpMode {
    CompensateOnly,      // dropped sub-eps jumps enter through their mean only
    GaussianCorrection,  // plus a Gaussian increment matching their variance
};

struct SimConfig {
    double horizon = 1.0;   // T
    double step = 1e-3;     // Euler base step h
    double jump_eps = 1e-3; // truncation: jumps with |z| > eps are simulated
    std::uint64_t seed = 1;
    std::size_t paths = 1;
    SmallJumpMode mode = SmallJumpMode::CompensateOnly;

    void check() const;  // throws std::invalid_argument on violated invariants
};

// Realization of the drivers (A1)-(A3) for one path. Large-jump events carry
// thinning marks; the mark axis is stratified so the bound can double on
// demand without disturbing earlier draws: stratum s holds the events with
// marks in (R0 2^{s-1}, R0 2^s], each generated from its own substream of
// (master seed, path index). Regeneration is bit-exact.
class DriverRealization {
public:
    // The optional initial-state hint sizes the starting mark bound
    // (4 * (max coordinate + drift growth estimate)); the bound doubles on
    // demand either way.
    DriverRealization(const AdmissibleParams& p, const SimConfig& cfg,
                      std::uint64_t path_index,
                      Eigen::VectorXd initial_state_hint = Eigen::VectorXd());

    struct Event {
        double time;
        double r;             // thinning mark; unused for immigration events
        std::uint32_t zoff;   // index into zpool (d doubles per event)
    };
    struct EventBlock {
        std::vector<Event> events;  // sorted by time
        std::vector<double> zpool;
        double mark_lo = 0.0, mark_hi = 0.0;
    };

    int dim() const { return dim_; }
    std::uint64_t path_index() const { return path_; }
    double mark_bound(int j) const { return bounds_[j]; }
    double initial_mark_bound() const { return initial_bound_; }

    const EventBlock& nu_events() const { return nu_; }
    const std::vector<EventBlock>& strata(int j) const { return strata_[j]; }

    // Doubles bound(j) until >= needed; returns the indices of new strata.
    std::vector<std::size_t> ensure_mark_bound(int j, double needed);

private:
    EventBlock generate_block(int source, std::size_t stratum, double mark_lo,
                              double mark_hi) const;

    int dim_;
    double horizon_, eps_;
    std::uint64_t seed_, path_;
    std::vector<LevyMeasure> nu_parts_;
    std::vector<std::vector<LevyMeasure>> mu_parts_;
    EventBlock nu_;
    std::vector<std::vector<EventBlock>> strata_;
    std::vector<double> bounds_;
    double initial_bound_ = 1.0;
};

struct Trajectory {
    std::vector<double> t;                  // Euler grid ∪ accepted jump times
    std::vector<Eigen::VectorXd> state;
    Eigen::VectorXd min_state;              // running per-component minimum
    double max_projection_distance = 0.0;   // orthant projections applied
};

// Jump-adapted Euler scheme for the CBI SDE. Between events: drift
// beta + B X - sum_j (∫_{|z|>eps} z mu_j) X_j plus the sub-eps immigration
// mean, diffusion sqrt(2 c_k max(X_k,0)) dW_k; at events: thinned jumps.
Trajectory simulate_cbi(const AdmissibleParams& p, const Eigen::VectorXd& x,
                        const SimConfig& cfg, DriverRealization& drv);

// The auxiliary comparison process on the same drivers: component k consumes
// only the k-th coordinates (W_k, z_k of N_nu and N_k, the same marks r).
Trajectory simulate_auxiliary(const AdmissibleParams& p, const Eigen::VectorXd& y,
                              const SimConfig& cfg, DriverRealization& drv);

// One pass stepping X and Y together on the shared timeline (the coupling of
// the comparison proposition); the two trajectories share their grid, and the
// mark bound grows against max(X_j, Y_j).
std::pair<Trajectory, Trajectory> simulate_coupled(const AdmissibleParams& p,
                                                   const Eigen::VectorXd& x,
                                                   const SimConfig& cfg,
                                                   DriverRealization& drv);

// Per-component max over the shared grid of (Y_k - X_k); throws on grid
// mismatch.
Eigen::VectorXd coupling_stats(const Trajectory& X, const Trajectory& Y);

struct LaplaceEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
};

// Mean and standard error of exp(-<xi, X>) over per-path states.
LaplaceEstimate empirical_laplace(const std::vector<Eigen::VectorXd>& states,
                                  const Eigen::VectorXd& xi);

// Fractions of paths whose running minimum lies below each delta
// (deltas positive decreasing; fractions nonincreasing).
std::vector<double> boundary_stats(const std::vector<double>& min_values,
                                   const std::vector<double>& deltas);

struct EnsembleRequest {
    std::vector<double> snapshot_times;  // must sit on the Euler grid
    bool coupled = false;
    bool check_bv_bound = false;  // track max_t max_k (bound_k(t) - X_k(t))
    int threads = 0;              // 0: CBI_THREADS env var, else hardware
};

struct EnsembleResult {
    std::vector<double> snapshot_times;
    std::vector<std::vector<Eigen::VectorXd>> x_snapshots;  // [path][snap]
    std::vector<std::vector<Eigen::VectorXd>> y_snapshots;  // when coupled
    std::vector<Eigen::VectorXd> x_min;                     // [path]
    std::vector<double> coupling_defect;                    // [path], coupled
    std::vector<double> projection_distance;                // [path]
    std::vector<double> bv_bound_defect;                    // [path], requested
};

// Paths are independent work items; per-path substreams make the result
// independent of the worker count, and aggregation is slot-indexed.
EnsembleResult run_ensemble(const AdmissibleParams& p, const Eigen::VectorXd& x,
                            const SimConfig& cfg, const EnsembleRequest& req);

int resolve_thread_count(int requested);

}  // namespace cbi
