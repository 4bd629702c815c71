#include "cbi/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <queue>
#include <stdexcept>
#include <string>
#include <thread>

#include "cbi/boundary.hpp"

namespace cbi {

void SimConfig::check() const {
    if (!(horizon > 0.0)) throw std::invalid_argument("sim: horizon must be > 0");
    if (!(step > 0.0)) throw std::invalid_argument("sim: step must be > 0");
    if (!(jump_eps > 0.0)) throw std::invalid_argument("sim: jump_eps must be > 0");
    if (step > horizon) throw std::invalid_argument("sim: step must be <= horizon");
    if (paths < 1) throw std::invalid_argument("sim: paths must be >= 1");
}

namespace {

std::uint64_t sub_code(int source, std::size_t stratum, std::size_t part) {
    return (static_cast<std::uint64_t>(source + 1) << 40) |
           (static_cast<std::uint64_t>(stratum) << 16) | static_cast<std::uint64_t>(part);
}

}  // namespace

DriverRealization::DriverRealization(const AdmissibleParams& p, const SimConfig& cfg,
                                     std::uint64_t path_index,
                                     Eigen::VectorXd initial_state_hint)
    : dim_(p.dim()),
      horizon_(cfg.horizon),
      eps_(cfg.jump_eps),
      seed_(cfg.seed),
      path_(path_index) {
    nu_parts_ = flatten(p.nu());
    mu_parts_.resize(dim_);
    for (int j = 0; j < dim_; ++j) mu_parts_[j] = flatten(p.mu(j));

    const double maxx =
        initial_state_hint.size() > 0 ? initial_state_hint.maxCoeff() : 1.0;
    const double beta_max = p.beta().size() ? p.beta().maxCoeff() : 0.0;
    const double b_pos = p.B().cwiseMax(0.0).rowwise().sum().maxCoeff();
    const double growth = horizon_ * (beta_max + b_pos * std::max(maxx, 1.0));
    initial_bound_ = 4.0 * (maxx + growth) + 1.0;

    bounds_.assign(dim_, 0.0);
    strata_.resize(dim_);
    nu_ = generate_block(-1, 0, 0.0, 1.0);
    for (int j = 0; j < dim_; ++j) ensure_mark_bound(j, 0.5 * initial_bound_);
}

std::vector<std::size_t> DriverRealization::ensure_mark_bound(int j, double needed) {
    std::vector<std::size_t> added;
    while (bounds_[j] < needed) {
        const double lo = bounds_[j];
        const double hi = lo == 0.0 ? initial_bound_ : 2.0 * lo;
        strata_[j].push_back(generate_block(j, strata_[j].size(), lo, hi));
        bounds_[j] = hi;
        added.push_back(strata_[j].size() - 1);
    }
    return added;
}

DriverRealization::EventBlock DriverRealization::generate_block(int source,
                                                                std::size_t stratum,
                                                                double mark_lo,
                                                                double mark_hi) const {
    EventBlock blk;
    blk.mark_lo = mark_lo;
    blk.mark_hi = mark_hi;
    const bool is_nu = source < 0;
    const auto& parts = is_nu ? nu_parts_ : mu_parts_[source];
    const double width = is_nu ? 1.0 : (mark_hi - mark_lo);
    const std::uint64_t label =
        is_nu ? rng::label::immigration_jumps : rng::label::branching_jumps;

    struct Raw {
        double time, r;
        std::size_t pool_index;
    };
    std::vector<Raw> raws;
    std::vector<double> pool;

    std::vector<double> z(dim_);
    for (std::size_t part = 0; part < parts.size(); ++part) {
        rng::Stream st =
            rng::Stream::derive(seed_, path_, label, sub_code(source, stratum, part));
        const LevyMeasure& m = parts[part];
        const MomentValue tm = tail_mass(m, eps_);
        if (tm.is_finite()) {
            const double rate = tm.value * width;
            if (rate <= 0.0) continue;
            for (double t = st.exponential(rate); t <= horizon_;
                 t += st.exponential(rate)) {
                sample_location_into(m, eps_, st, z.data());
                const double r =
                    is_nu ? 0.0 : mark_lo + (mark_hi - mark_lo) * st.uniform_pos();
                raws.push_back(Raw{t, r, pool.size()});
                pool.insert(pool.end(), z.begin(), z.end());
            }
        } else {
            // finite-activity family without a computable tail mass: generate
            // the full activity and drop sub-threshold jumps
            const auto* ce = std::get_if<LevyMeasure::CompoundExponential>(&m.family());
            if (ce == nullptr)
                throw std::logic_error("driver: unexpected family without tail mass");
            const double rate = ce->mass * width;
            for (double t = st.exponential(rate); t <= horizon_;
                 t += st.exponential(rate)) {
                double s = 0.0;
                for (int i = 0; i < dim_; ++i) {
                    z[i] = st.exponential(ce->rates[i]);
                    s += z[i] * z[i];
                }
                const double r =
                    is_nu ? 0.0 : mark_lo + (mark_hi - mark_lo) * st.uniform_pos();
                if (s > eps_ * eps_) {
                    raws.push_back(Raw{t, r, pool.size()});
                    pool.insert(pool.end(), z.begin(), z.end());
                }
            }
        }
    }

    if (parts.size() > 1)
        std::stable_sort(raws.begin(), raws.end(),
                         [](const Raw& a, const Raw& b) { return a.time < b.time; });

    blk.events.reserve(raws.size());
    blk.zpool.reserve(pool.size());
    for (const Raw& r : raws) {
        blk.events.push_back(
            Event{r.time, r.r, static_cast<std::uint32_t>(blk.zpool.size())});
        blk.zpool.insert(blk.zpool.end(), pool.begin() + r.pool_index,
                         pool.begin() + r.pool_index + dim_);
    }
    return blk;
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Observers {
    Trajectory* trX = nullptr;
    Trajectory* trY = nullptr;
    const std::vector<double>* snap_times = nullptr;
    std::vector<VectorXd>* x_snaps = nullptr;
    std::vector<VectorXd>* y_snaps = nullptr;
    double* coupling_defect = nullptr;
    VectorXd* x_min = nullptr;
    double* projection = nullptr;
    double* bv_defect = nullptr;
    const std::vector<VectorXd>* euler_bounds = nullptr;  // bound at i*step
    const AdmissibleParams* bv_params = nullptr;
    const VectorXd* bv_x0 = nullptr;
};

// square root of a small PSD matrix, eigenvalues clamped at zero
MatrixXd psd_sqrt(const MatrixXd& S) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
    const VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * lam.asDiagonal();
}

class Stepper {
public:
    Stepper(const AdmissibleParams& p, const SimConfig& cfg, DriverRealization& drv,
            const VectorXd* x0, const VectorXd* y0, Observers obs)
        : p_(p), cfg_(cfg), drv_(drv), obs_(obs), d_(p.dim()) {
        run_x_ = x0 != nullptr;
        run_y_ = y0 != nullptr;
        if (run_x_) {
            if (x0->size() != d_) throw std::invalid_argument("simulate: x dim mismatch");
            if (x0->minCoeff() < 0.0)
                throw std::domain_error("simulate: x outside the orthant");
            X_.assign(x0->data(), x0->data() + d_);
        }
        if (run_y_) {
            if (y0->size() != d_) throw std::invalid_argument("simulate: y dim mismatch");
            if (y0->minCoeff() < 0.0)
                throw std::domain_error("simulate: y outside the orthant");
            Y_.assign(y0->data(), y0->data() + d_);
        }

        // drift: beta + sub-eps immigration mean, matrix B - M with
        // M(k,j) = ∫_{|z|>eps} z_k mu_j(dz); the auxiliary process uses the
        // diagonal of the same matrix (the b~ identity moves the large-jump
        // compensation between drift and measure)
        const auto nu_stats = small_jump_stats(p.nu(), cfg.jump_eps);
        for (int k = 0; k < d_; ++k)
            if (!nu_stats.mean_finite[k])
                throw std::runtime_error("simulate: immigration small-jump mean diverges");
        drift_const_.resize(d_);
        for (int k = 0; k < d_; ++k) drift_const_[k] = p.beta()[k] + nu_stats.mean[k];

        drift_mat_.assign(d_ * d_, 0.0);
        for (int j = 0; j < d_; ++j) {
            for (int k = 0; k < d_; ++k) {
                const MomentValue m = moment(p.mu(j), k, Region::LargeJumps, cfg.jump_eps);
                if (!m.is_finite())
                    throw std::runtime_error(
                        "simulate: truncated jump moment not evaluable");
                drift_mat_[k * d_ + j] = p.B()(k, j) - m.value;
            }
        }

        sqrt2c_.resize(d_);
        brownian_ = false;
        for (int k = 0; k < d_; ++k) {
            sqrt2c_[k] = std::sqrt(2.0 * p.c()[k]);
            brownian_ |= p.c()[k] > 0.0;
        }

        gaussian_ = cfg.mode == SmallJumpMode::GaussianCorrection;
        if (gaussian_) {
            L_nu_ = psd_sqrt(nu_stats.second_moment);
            L_mu_.resize(d_);
            for (int j = 0; j < d_; ++j)
                L_mu_[j] = psd_sqrt(small_jump_stats(p.mu(j), cfg.jump_eps).second_moment);
        }

        w_stream_ = rng::Stream::derive(cfg.seed, drv.path_index(), rng::label::brownian);
        if (gaussian_)
            g_stream_ = rng::Stream::derive(cfg.seed, drv.path_index(),
                                            rng::label::gaussian_correction);

        if (obs_.x_min) *obs_.x_min = run_x_ ? *x0 : VectorXd::Zero(d_);
        min_state_ = X_;
    }

    void run() {
        const double T = cfg_.horizon;
        const double h = cfg_.step;

        push_cursor(&drv_.nu_events(), -1, 0.0);
        for (int j = 0; j < d_; ++j)
            for (const auto& blk : drv_.strata(j)) push_cursor(&blk, j, 0.0);

        record(0.0, 0);

        double t = 0.0;
        std::size_t next_i = 1;
        while (t < T) {
            double grid_t = static_cast<double>(next_i) * h;
            if (grid_t > T) grid_t = T;
            const double event_t =
                heap_.empty() ? std::numeric_limits<double>::infinity() : top_time();
            if (event_t <= grid_t && event_t <= T) {
                advance(event_t - t);
                t = event_t;
                apply_event(t);
            } else {
                advance(grid_t - t);
                t = grid_t;
                record(t, static_cast<long>(next_i));
                ++next_i;
            }
        }
        finalize();
    }

private:
    struct Cursor {
        const DriverRealization::EventBlock* blk;
        std::size_t idx;
        int source;
    };
    struct Later {
        bool operator()(const Cursor& a, const Cursor& b) const {
            return a.blk->events[a.idx].time > b.blk->events[b.idx].time;
        }
    };

    void push_cursor(const DriverRealization::EventBlock* blk, int source, double after) {
        std::size_t idx = 0;
        if (after > 0.0) {
            idx = std::lower_bound(blk->events.begin(), blk->events.end(), after,
                                   [](const DriverRealization::Event& e, double v) {
                                       return e.time <= v;
                                   }) -
                  blk->events.begin();
        }
        if (idx < blk->events.size()) heap_.push(Cursor{blk, idx, source});
    }

    double top_time() const {
        const Cursor& c = heap_.top();
        return c.blk->events[c.idx].time;
    }

    // drift + diffusion (+ optional Gaussian correction) over dt, coefficients
    // frozen at the left state
    void advance(double dt) {
        if (dt <= 0.0) return;
        if (run_x_) {
            incx_.assign(d_, 0.0);
            for (int k = 0; k < d_; ++k) {
                double acc = drift_const_[k];
                const double* row = drift_mat_.data() + k * d_;
                for (int j = 0; j < d_; ++j) acc += row[j] * X_[j];
                incx_[k] = dt * acc;
            }
        }
        if (run_y_) {
            incy_.assign(d_, 0.0);
            for (int k = 0; k < d_; ++k)
                incy_[k] = dt * (drift_const_[k] + drift_mat_[k * d_ + k] * Y_[k]);
        }
        if (brownian_) {
            const double sdt = std::sqrt(dt);
            for (int k = 0; k < d_; ++k) {
                const double dw = sdt * w_stream_.normal();
                if (run_x_ && sqrt2c_[k] > 0.0)
                    incx_[k] += sqrt2c_[k] * std::sqrt(std::max(X_[k], 0.0)) * dw;
                if (run_y_ && sqrt2c_[k] > 0.0)
                    incy_[k] += sqrt2c_[k] * std::sqrt(std::max(Y_[k], 0.0)) * dw;
            }
        }
        if (gaussian_) {
            const double sdt = std::sqrt(dt);
            zeta_.resize(d_);
            // immigration small jumps: shared across X and Y coordinates
            for (int k = 0; k < d_; ++k) zeta_[k] = g_stream_.normal();
            for (int k = 0; k < d_; ++k) {
                double acc = 0.0;
                for (int j = 0; j < d_; ++j) acc += L_nu_(k, j) * zeta_[j];
                if (run_x_) incx_[k] += sdt * acc;
                if (run_y_) incy_[k] += sdt * acc;
            }
            // branching small jumps, intensity proportional to the state
            for (int j = 0; j < d_; ++j) {
                for (int k = 0; k < d_; ++k) zeta_[k] = g_stream_.normal();
                if (run_x_) {
                    const double fac = sdt * std::sqrt(std::max(X_[j], 0.0));
                    for (int k = 0; k < d_; ++k) {
                        double acc = 0.0;
                        for (int l = 0; l < d_; ++l) acc += L_mu_[j](k, l) * zeta_[l];
                        incx_[k] += fac * acc;
                    }
                }
                if (run_y_) {
                    const double fac = sdt * std::sqrt(std::max(Y_[j], 0.0));
                    double acc = 0.0;
                    for (int l = 0; l < d_; ++l) acc += L_mu_[j](j, l) * zeta_[l];
                    incy_[j] += fac * acc;
                }
            }
        }
        if (run_x_)
            for (int k = 0; k < d_; ++k) X_[k] += incx_[k];
        if (run_y_)
            for (int k = 0; k < d_; ++k) Y_[k] += incy_[k];
        project_and_track();
    }

    void project_and_track() {
        double dist = 0.0;
        if (run_x_) {
            for (int k = 0; k < d_; ++k) {
                if (X_[k] < 0.0) {
                    dist = std::max(dist, -X_[k]);
                    X_[k] = 0.0;
                }
                min_state_[k] = std::min(min_state_[k], X_[k]);
            }
        }
        if (run_y_) {
            for (int k = 0; k < d_; ++k) {
                if (Y_[k] < 0.0) {
                    dist = std::max(dist, -Y_[k]);
                    Y_[k] = 0.0;
                }
            }
        }
        projection_ = std::max(projection_, dist);
        if (obs_.coupling_defect && run_x_ && run_y_) {
            for (int k = 0; k < d_; ++k)
                *obs_.coupling_defect = std::max(*obs_.coupling_defect, Y_[k] - X_[k]);
        }
    }

    void apply_event(double t) {
        const Cursor c = heap_.top();
        heap_.pop();
        const auto& e = c.blk->events[c.idx];
        const double* z = c.blk->zpool.data() + e.zoff;
        bool touched = false;
        if (c.source < 0) {
            if (run_x_)
                for (int k = 0; k < d_; ++k) X_[k] += z[k];
            if (run_y_)
                for (int k = 0; k < d_; ++k) Y_[k] += z[k];
            touched = true;
        } else {
            const int j = c.source;
            if (run_x_ && e.r <= X_[j]) {
                for (int k = 0; k < d_; ++k) X_[k] += z[k];
                touched = true;
            }
            if (run_y_ && e.r <= Y_[j]) {
                Y_[j] += z[j];
                touched = true;
            }
        }
        if (c.idx + 1 < c.blk->events.size())
            heap_.push(Cursor{c.blk, c.idx + 1, c.source});

        if (touched) {
            if (obs_.coupling_defect && run_x_ && run_y_) {
                for (int k = 0; k < d_; ++k)
                    *obs_.coupling_defect =
                        std::max(*obs_.coupling_defect, Y_[k] - X_[k]);
            }
            grow_bounds(t);
            record(t, -1);
        }
    }

    void grow_bounds(double t) {
        for (int j = 0; j < d_; ++j) {
            double needed = 0.0;
            if (run_x_) needed = std::max(needed, X_[j]);
            if (run_y_) needed = std::max(needed, Y_[j]);
            if (needed > drv_.mark_bound(j)) {
                for (std::size_t s : drv_.ensure_mark_bound(j, needed))
                    push_cursor(&drv_.strata(j)[s], j, t);
            }
        }
    }

    void record(double t, long euler_index) {
        if (obs_.trX && run_x_) append(*obs_.trX, t, X_);
        if (obs_.trY && run_y_) append(*obs_.trY, t, Y_);
        if (obs_.snap_times && snap_next_ < obs_.snap_times->size()) {
            if (std::abs((*obs_.snap_times)[snap_next_] - t) <= 1e-9) {
                if (obs_.x_snaps && run_x_)
                    obs_.x_snaps->push_back(Eigen::Map<const VectorXd>(X_.data(), d_));
                if (obs_.y_snaps && run_y_)
                    obs_.y_snaps->push_back(Eigen::Map<const VectorXd>(Y_.data(), d_));
                ++snap_next_;
            }
        }
        if (obs_.bv_defect && run_x_) {
            VectorXd bound;
            if (euler_index >= 0 && obs_.euler_bounds &&
                euler_index < static_cast<long>(obs_.euler_bounds->size())) {
                bound = (*obs_.euler_bounds)[euler_index];
            } else {
                bound = lower_bound_bv(*obs_.bv_params, *obs_.bv_x0, t);
            }
            for (int k = 0; k < d_; ++k)
                *obs_.bv_defect = std::max(*obs_.bv_defect, bound[k] - X_[k]);
        }
    }

    static void append(Trajectory& tr, double t, const std::vector<double>& s) {
        if (!tr.t.empty() && tr.t.back() == t) {
            tr.state.back() = Eigen::Map<const VectorXd>(s.data(), s.size());
            return;
        }
        tr.t.push_back(t);
        tr.state.emplace_back(Eigen::Map<const VectorXd>(s.data(), s.size()));
    }

    void finalize() {
        if (obs_.x_min && run_x_)
            *obs_.x_min = Eigen::Map<const VectorXd>(min_state_.data(), d_);
        if (obs_.projection) *obs_.projection = projection_;
        if (obs_.trX) {
            obs_.trX->min_state = Eigen::Map<const VectorXd>(min_state_.data(),
                                                             run_x_ ? d_ : 0);
            obs_.trX->max_projection_distance = projection_;
        }
        if (obs_.trY) obs_.trY->max_projection_distance = projection_;
    }

    const AdmissibleParams& p_;
    const SimConfig& cfg_;
    DriverRealization& drv_;
    Observers obs_;
    int d_;
    bool run_x_ = false, run_y_ = false, brownian_ = false, gaussian_ = false;
    std::vector<double> X_, Y_, incx_, incy_, min_state_;
    Eigen::VectorXd zeta_;
    std::vector<double> drift_const_, drift_mat_, sqrt2c_;
    MatrixXd L_nu_;
    std::vector<MatrixXd> L_mu_;
    rng::Stream w_stream_, g_stream_;
    std::priority_queue<Cursor, std::vector<Cursor>, Later> heap_;
    double projection_ = 0.0;
    std::size_t snap_next_ = 0;
};

}  // namespace

Trajectory simulate_cbi(const AdmissibleParams& p, const Eigen::VectorXd& x,
                        const SimConfig& cfg, DriverRealization& drv) {
    cfg.check();
    Trajectory tr;
    Observers obs;
    obs.trX = &tr;
    Stepper(p, cfg, drv, &x, nullptr, obs).run();
    return tr;
}

Trajectory simulate_auxiliary(const AdmissibleParams& p, const Eigen::VectorXd& y,
                              const SimConfig& cfg, DriverRealization& drv) {
    cfg.check();
    Trajectory tr;
    Observers obs;
    obs.trY = &tr;
    Stepper(p, cfg, drv, nullptr, &y, obs).run();
    // the auxiliary trajectory tracks its own minimum through the X slot of
    // the stepper being inactive; recompute from the recorded states
    tr.min_state = tr.state.front();
    for (const auto& s : tr.state) tr.min_state = tr.min_state.cwiseMin(s);
    return tr;
}

std::pair<Trajectory, Trajectory> simulate_coupled(const AdmissibleParams& p,
                                                   const Eigen::VectorXd& x,
                                                   const SimConfig& cfg,
                                                   DriverRealization& drv) {
    cfg.check();
    std::pair<Trajectory, Trajectory> out;
    Observers obs;
    obs.trX = &out.first;
    obs.trY = &out.second;
    Stepper(p, cfg, drv, &x, &x, obs).run();
    out.second.min_state = out.second.state.front();
    for (const auto& s : out.second.state)
        out.second.min_state = out.second.min_state.cwiseMin(s);
    return out;
}

Eigen::VectorXd coupling_stats(const Trajectory& X, const Trajectory& Y) {
    if (X.t.size() != Y.t.size())
        throw std::invalid_argument("coupling_stats: grids have different sizes");
    for (std::size_t i = 0; i < X.t.size(); ++i)
        if (X.t[i] != Y.t[i])
            throw std::invalid_argument("coupling_stats: grids differ");
    if (X.state.empty()) throw std::invalid_argument("coupling_stats: empty trajectories");
    const int d = static_cast<int>(X.state.front().size());
    Eigen::VectorXd defect = Eigen::VectorXd::Constant(d, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < X.state.size(); ++i)
        defect = defect.cwiseMax(Y.state[i] - X.state[i]);
    return defect;
}

LaplaceEstimate empirical_laplace(const std::vector<Eigen::VectorXd>& states,
                                  const Eigen::VectorXd& xi) {
    if (states.empty()) throw std::invalid_argument("empirical_laplace: no states");
    if (xi.minCoeff() < 0.0)
        throw std::domain_error("empirical_laplace: xi outside the orthant");
    const std::size_t n = states.size();
    double mean = 0.0;
    for (const auto& s : states) mean += std::exp(-xi.dot(s));
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const auto& s : states) {
        const double w = std::exp(-xi.dot(s)) - mean;
        var += w * w;
    }
    LaplaceEstimate out;
    out.estimate = mean;
    out.std_error =
        n > 1 ? std::sqrt(var / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
    return out;
}

std::vector<double> boundary_stats(const std::vector<double>& min_values,
                                   const std::vector<double>& deltas) {
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        if (!(deltas[i] > 0.0))
            throw std::invalid_argument("boundary_stats: deltas must be positive");
        if (i > 0 && deltas[i] > deltas[i - 1])
            throw std::invalid_argument("boundary_stats: deltas must be decreasing");
    }
    std::vector<double> out;
    out.reserve(deltas.size());
    for (double delta : deltas) {
        std::size_t count = 0;
        for (double m : min_values)
            if (m < delta) ++count;
        out.push_back(static_cast<double>(count) /
                      static_cast<double>(std::max<std::size_t>(min_values.size(), 1)));
    }
    return out;
}

int resolve_thread_count(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("CBI_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

EnsembleResult run_ensemble(const AdmissibleParams& p, const Eigen::VectorXd& x,
                            const SimConfig& cfg, const EnsembleRequest& req) {
    cfg.check();
    for (std::size_t i = 0; i < req.snapshot_times.size(); ++i) {
        const double s = req.snapshot_times[i];
        if (s < 0.0 || s > cfg.horizon + 1e-12)
            throw std::invalid_argument("run_ensemble: snapshot outside [0, T]");
        const double ratio = s / cfg.step;
        if (std::abs(ratio - std::round(ratio)) > 1e-6 &&
            std::abs(s - cfg.horizon) > 1e-12)
            throw std::invalid_argument("run_ensemble: snapshot not on the Euler grid");
        if (i > 0 && s <= req.snapshot_times[i - 1])
            throw std::invalid_argument("run_ensemble: snapshots must increase");
    }

    const std::size_t n = cfg.paths;
    EnsembleResult res;
    res.snapshot_times = req.snapshot_times;
    res.x_snapshots.resize(n);
    if (req.coupled) res.y_snapshots.resize(n);
    res.x_min.resize(n);
    res.projection_distance.assign(n, 0.0);
    if (req.coupled) res.coupling_defect.assign(n, 0.0);
    if (req.check_bv_bound) res.bv_bound_defect.assign(n, 0.0);

    // bound values on the Euler grid are shared by all paths
    std::vector<Eigen::VectorXd> euler_bounds;
    if (req.check_bv_bound) {
        const std::size_t cells =
            static_cast<std::size_t>(std::ceil(cfg.horizon / cfg.step - 1e-12));
        euler_bounds.reserve(cells + 1);
        for (std::size_t i = 0; i <= cells; ++i) {
            const double t = std::min(static_cast<double>(i) * cfg.step, cfg.horizon);
            euler_bounds.push_back(lower_bound_bv(p, x, t));
        }
    }

    const int threads = resolve_thread_count(req.threads);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::string error_message;
    std::mutex error_mutex;

    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n || failed.load()) break;
            try {
                DriverRealization drv(p, cfg, i, x);
                Observers obs;
                obs.snap_times = &req.snapshot_times;
                obs.x_snaps = &res.x_snapshots[i];
                if (req.coupled) obs.y_snaps = &res.y_snapshots[i];
                obs.x_min = &res.x_min[i];
                obs.projection = &res.projection_distance[i];
                if (req.coupled) obs.coupling_defect = &res.coupling_defect[i];
                if (req.check_bv_bound) {
                    obs.bv_defect = &res.bv_bound_defect[i];
                    obs.euler_bounds = &euler_bounds;
                    obs.bv_params = &p;
                    obs.bv_x0 = &x;
                }
                Stepper(p, cfg, drv, &x, req.coupled ? &x : nullptr, obs).run();
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(error_mutex);
                failed.store(true);
                if (error_message.empty()) error_message = e.what();
            }
        }
    };

    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failed.load()) throw std::runtime_error("run_ensemble: " + error_message);
    return res;
}

}  // namespace cbi
