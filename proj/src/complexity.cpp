#include "kinflow/complexity.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <thread>

namespace kinflow {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kBisectTol = 1e-6;

// First s in [0, s_max] where the nondecreasing predicate flips to true;
// +∞ if it never does.
template <class Pred>
double bisect_first_true(const Pred& pred, double s_max) {
    if (pred(0.0)) return 0.0;
    if (!pred(s_max)) return kInf;
    double lo = 0.0, hi = s_max;
    while (hi - lo > kBisectTol) {
        const double mid = 0.5 * (lo + hi);
        (pred(mid) ? hi : lo) = mid;
    }
    return hi;
}
}  // namespace

bool in_attracting_region(const RealVector& x, const ObservableProblem& p) {
    const int k = p.multiplicity_k;
    if (k >= p.dim()) return true;
    return p.spectrum.values.dot(x) > p.spectrum.values(k);
}

// ----------------------------------------------------------------- bounds --

double bound_tc_eps_observable(const Spectrum& spectrum, int k, const RealVector& x0,
                               double eps) {
    if (eps <= 0.0) throw std::invalid_argument("bound_tc_eps_observable: eps must be > 0");
    if (k < 1 || k > spectrum.dim()) throw std::invalid_argument("bound_tc_eps_observable: bad k");
    if (k == spectrum.dim()) return kInf;
    const double mu = spectrum.values(0) - spectrum.values(k);
    if (mu <= 0.0) return kInf;
    return std::max(0.0, std::log(2.0 * k / (eps * eps * x0(0))) / (2.0 * mu));
}

double bound_tc_region_observable(const Spectrum& spectrum, int k, const RealVector& x0) {
    const int n = spectrum.dim();
    if (k < 1 || k > n) throw std::invalid_argument("bound_tc_region_observable: bad k");
    if (k >= n) return 0.0;  // region is the whole simplex
    const double lam_top = spectrum.values(0);
    const double lam_next = spectrum.values(k);
    const double mu = lam_top - lam_next;
    if (mu <= 0.0) return 0.0;
    const double numerator = (n - k - 2) * lam_next * x0(k);
    if (numerator <= 0.0) return 0.0;  // region condition already certified at s = 0
    double denominator = 0.0;
    for (int i = 0; i < k; ++i) denominator += lam_top * x0(i) - lam_next * x0(k);
    if (denominator <= 0.0) return kInf;  // derivation vacuous for this start
    return std::max(0.0, std::log(numerator / denominator) / mu);
}

GateBoundReport bound_tc_gate(double theta0, double eps, int n) {
    if (eps <= 0.0) throw std::invalid_argument("bound_tc_gate: eps must be > 0");
    if (n < 1) throw std::invalid_argument("bound_tc_gate: n must be >= 1");
    GateBoundReport rep;
    rep.theta0 = theta0;
    const double c = std::cos(theta0);
    const double sn = std::sin(theta0);
    if (c >= 1.0 - 1e-15) {  // θ0 = 0: already at the solution
        rep.a = kInf;
        rep.delta = 1.0;
        rep.x_c_minus = 0.0;
        rep.t_bound = rep.t_tight = rep.t_approx = 0.0;
        return rep;
    }
    rep.a = sn / (1.0 - c);
    if (c <= -1.0 + 1e-12) {  // θ0 = π: non-convergent initial condition
        rep.convergent = false;
        rep.delta = 0.0;
        rep.x_c_minus = 1.0;
        rep.t_bound = rep.t_tight = rep.t_approx = kInf;
        return rep;
    }
    const double qa = 2.0 * n * (1.0 - c) - eps;
    if (qa <= 0.0) {  // the ε-vicinity covers the whole flow range
        rep.delta = 1.0;
        rep.x_c_minus = 0.0;
        rep.t_bound = rep.t_tight = 0.0;
        rep.t_approx = 0.0;
        return rep;
    }
    // qa x² − (4n(1−c) + 2εc) x + qa = 0; the roots are a reciprocal pair and
    // only x− = 1 − δ is admissible for x = tanh s. The discriminant is
    // 4(4nε − ε²)(1 − c²), so δ = (√((4nε − ε²)(1 − c²)) − ε(1 + c)) / qa.
    const double sq = std::sqrt((4.0 * n * eps - eps * eps) * (1.0 - c * c));
    rep.delta = (sq - eps * (1.0 + c)) / qa;
    rep.x_c_minus = 1.0 - rep.delta;
    rep.t_bound = std::log((2.0 - rep.delta) / rep.delta);
    rep.t_tight = 0.5 * rep.t_bound;
    rep.t_approx = 0.5 * std::log(4.0 * n / (rep.a * rep.a * eps));
    return rep;
}

double bound_path_length(double theta0, int n, double x_c) {
    if (x_c < 0.0 || x_c > 1.0) throw std::invalid_argument("bound_path_length: x_c outside [0,1]");
    if (x_c == 1.0) return kInf;
    return std::numbers::pi * std::sqrt(2.0 * n) * std::abs(std::sin(theta0)) /
           std::sqrt(1.0 - x_c);
}

// ------------------------------------------------------- measured halting --

ConvergenceReport measure_tc(const ObservableProblem& p, const HaltSpec& halt, double s_max) {
    if (halt.epsilon_p <= 0.0) throw std::invalid_argument("measure_tc: epsilon_p must be > 0");
    ConvergenceReport rep;
    rep.bound_tc_eps = bound_tc_eps_observable(p.spectrum, p.multiplicity_k, p.x0, halt.epsilon_p);
    rep.bound_tc_region = bound_tc_region_observable(p.spectrum, p.multiplicity_k, p.x0);
    rep.bound_tc_total = std::max(rep.bound_tc_eps, rep.bound_tc_region);

    auto dist = [&](double s) { return distance_observable(analytic_x(s, p), p); };
    auto region = [&](double s) { return in_attracting_region(analytic_x(s, p), p); };

    // Σλx is nondecreasing along the flow, so region entry is a single crossing.
    const double t_region = bisect_first_true(region, s_max);
    rep.t_region_entry = t_region;
    rep.final_distance = dist(s_max);

    if (halt.require_region) {
        if (t_region == kInf) return rep;
        // Inside the region the distance decreases monotonically.
        if (dist(t_region) <= halt.epsilon_p) {
            rep.t_measured = t_region;
            rep.converged = true;
            return rep;
        }
        const double t = bisect_first_true(
            [&](double s) { return dist(std::max(s, t_region)) <= halt.epsilon_p; }, s_max);
        if (t == kInf) return rep;
        rep.t_measured = std::max(t, t_region);
        rep.converged = true;
        return rep;
    }

    // Without the region requirement the distance may dip transiently before
    // entry; scan the pre-entry stretch densely, then use monotonicity.
    const double scan_end = std::min(t_region, s_max);
    const double scan_step = 0.01;
    double prev = 0.0;
    for (double s = 0.0; s <= scan_end + 1e-12; s += scan_step) {
        const double sc = std::min(s, scan_end);
        if (dist(sc) <= halt.epsilon_p) {
            double lo = prev, hi = sc;
            while (hi - lo > kBisectTol) {
                const double mid = 0.5 * (lo + hi);
                (dist(mid) <= halt.epsilon_p ? hi : lo) = mid;
            }
            rep.t_measured = hi;
            rep.converged = true;
            return rep;
        }
        prev = sc;
        if (sc >= scan_end) break;
    }
    if (t_region == kInf) return rep;
    const double t = bisect_first_true(
        [&](double s) { return dist(std::max(s, t_region)) <= halt.epsilon_p; }, s_max);
    if (t == kInf) return rep;
    rep.t_measured = std::max(t, t_region);
    rep.converged = true;
    return rep;
}

ConvergenceReport measure_tc(const GateProblem& p, const HaltSpec& halt, double s_max) {
    if (halt.epsilon_p <= 0.0) throw std::invalid_argument("measure_tc: epsilon_p must be > 0");
    if (!p.identity_weight()) {
        throw std::invalid_argument("measure_tc(GateProblem): closed-form route requires A = I");
    }
    ConvergenceReport rep;
    const GateBoundReport gb = bound_tc_gate(p.theta0, halt.epsilon_p * halt.epsilon_p, p.dim());
    rep.bound_tc_eps = gb.t_bound;
    rep.bound_tc_region = 0.0;  // the attracting region covers all of U(N)
    rep.bound_tc_total = gb.t_bound;
    rep.t_region_entry = 0.0;

    auto dist = [&](double s) { return analytic_gate_distance(s, p); };
    rep.final_distance = dist(s_max);
    const double t =
        bisect_first_true([&](double s) { return dist(s) <= halt.epsilon_p; }, s_max);
    if (t == kInf) return rep;
    rep.t_measured = t;
    rep.converged = true;
    return rep;
}

namespace {

// Linear-interpolation refinement of the first crossing of value(s) ≤ level
// between bracketing samples.
double interp_crossing(double s0, double v0, double s1, double v1, double level) {
    if (!(v0 > level) || !(v1 <= level) || v0 <= v1) return s1;
    return s0 + (s1 - s0) * (v0 - level) / (v0 - v1);
}

template <class State, class RegionFn>
ConvergenceReport measure_on_trajectory(const FlowTrajectory<State>& traj,
                                        const RegionFn& region, const HaltSpec& halt) {
    ConvergenceReport rep;
    if (traj.samples.empty()) return rep;
    rep.final_distance = traj.samples.back().distance;
    rep.t_region_entry = kInf;
    bool region_seen = false;
    for (std::size_t i = 0; i < traj.samples.size(); ++i) {
        const auto& cur = traj.samples[i];
        const bool in_region = !halt.require_region || region(cur.state);
        if (in_region && !region_seen) {
            region_seen = true;
            rep.t_region_entry = cur.s;
        }
        if (in_region && cur.distance <= halt.epsilon_p) {
            double t = cur.s;
            if (i > 0) {
                const auto& prev = traj.samples[i - 1];
                const bool prev_ok = !halt.require_region || region(prev.state);
                if (prev_ok && prev.distance > halt.epsilon_p) {
                    t = interp_crossing(prev.s, prev.distance, cur.s, cur.distance,
                                        halt.epsilon_p);
                }
            }
            rep.t_measured = t;
            rep.converged = true;
            return rep;
        }
    }
    return rep;
}

}  // namespace

ConvergenceReport measure_tc(const SimplexTrajectory& traj, const ObservableProblem& p,
                             const HaltSpec& halt) {
    ConvergenceReport rep = measure_on_trajectory(
        traj, [&](const RealVector& x) { return in_attracting_region(x, p); }, halt);
    rep.bound_tc_eps = bound_tc_eps_observable(p.spectrum, p.multiplicity_k, p.x0, halt.epsilon_p);
    rep.bound_tc_region = bound_tc_region_observable(p.spectrum, p.multiplicity_k, p.x0);
    rep.bound_tc_total = std::max(rep.bound_tc_eps, rep.bound_tc_region);
    rep.simplex_curve = &traj;
    return rep;
}

ConvergenceReport measure_tc(const UnitaryTrajectory& traj, const GateProblem& p,
                             const HaltSpec& halt) {
    ConvergenceReport rep = measure_on_trajectory(
        traj, [&](const Matrix&) { return in_attracting_region_gate(); }, halt);
    const GateBoundReport gb = bound_tc_gate(p.theta0, halt.epsilon_p * halt.epsilon_p, p.dim());
    rep.bound_tc_eps = gb.t_bound;
    rep.bound_tc_region = 0.0;
    rep.bound_tc_total = gb.t_bound;
    rep.unitary_curve = &traj;
    return rep;
}

// ------------------------------------------------------------ path length --

namespace {
template <class State>
double trapezoid_speed(const FlowTrajectory<State>& traj) {
    const auto& ss = traj.samples;
    if (ss.size() < 2) return 0.0;
    double max_gap = 0.0;
    for (std::size_t i = 1; i < ss.size(); ++i) max_gap = std::max(max_gap, ss[i].s - ss[i - 1].s);
    if (max_gap > 0.01 + 1e-9) {
        std::ostringstream os;
        os << "path_length: trajectory too sparse (max sample gap " << max_gap
           << "); need at least 100 samples per unit s";
        throw std::invalid_argument(os.str());
    }
    double len = 0.0;
    for (std::size_t i = 1; i < ss.size(); ++i) {
        len += 0.5 * (ss[i].speed + ss[i - 1].speed) * (ss[i].s - ss[i - 1].s);
    }
    return len;
}
}  // namespace

double path_length(const SimplexTrajectory& traj) { return trapezoid_speed(traj); }
double path_length(const UnitaryTrajectory& traj) { return trapezoid_speed(traj); }

double gate_path_speed(const Matrix& uprime) {
    const double n = static_cast<double>(uprime.rows());
    const double re = (uprime * uprime).trace().real();
    return std::sqrt(std::max(0.0, 2.0 * (n - re)));
}

double path_length_gate_closed_form(const UnitaryTrajectory& traj) {
    const auto& ss = traj.samples;
    double len = 0.0;
    for (std::size_t i = 1; i < ss.size(); ++i) {
        len += 0.5 * (gate_path_speed(ss[i].state) + gate_path_speed(ss[i - 1].state)) *
               (ss[i].s - ss[i - 1].s);
    }
    return len;
}

// ---------------------------------------------------------------- fitting --

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw std::invalid_argument("linear_fit: need two or more paired points");
    }
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double det = n * sxx - sx * sx;
    if (det == 0.0) throw std::invalid_argument("linear_fit: degenerate abscissae");
    LinearFit fit;
    fit.slope = (n * sxy - sx * sy) / det;
    fit.intercept = (sy - fit.slope * sx) / n;
    double ss_res = 0, ss_tot = 0;
    const double ymean = sy / n;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - (fit.slope * x[i] + fit.intercept);
        ss_res += e * e;
        ss_tot += (y[i] - ymean) * (y[i] - ymean);
    }
    fit.r_squared = (ss_tot > 0.0) ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

double fit_decay_rate(const ObservableProblem& p) {
    const double mu = p.mu();
    if (mu <= 0.0) throw std::invalid_argument("fit_decay_rate: degenerate top eigenvalue");
    // Late window: subdominant modes have died but the tail is still far above
    // the double-precision floor of the shifted-exponent closed form.
    const double s_lo = 10.0 / (2.0 * mu);
    const double s_hi = 30.0 / (2.0 * mu);
    const int points = 60;
    std::vector<double> ss(points), ly(points);
    for (int i = 0; i < points; ++i) {
        const double s = s_lo + (s_hi - s_lo) * i / (points - 1);
        const RealVector x = analytic_x(s, p);
        ss[i] = s;
        ly[i] = std::log(x.tail(x.size() - 1).sum());
    }
    return -linear_fit(ss, ly).slope;
}

// --------------------------------------------------------- scaling studies --

namespace {

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
    threads = std::max(1, threads);
    if (threads == 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

Spectrum draw_study_spectrum(int n, Rng& rng, const ScalingStudyConfig& cfg, int& resamples) {
    if (cfg.ensemble == SpectrumEnsemble::clustered_top_gap) {
        // Subleading eigenvalues packed within cluster_width of λ2; λ1 − λ2 = 1.
        RealVector sub = sample_spectrum_values(n - 1, 0.0, cfg.cluster_width, rng);
        RealVector v(n);
        v(0) = (n > 1 ? sub(0) : 0.0) + 1.0;
        v.tail(n - 1) = sub;
        return Spectrum::from_values(std::move(v));
    }
    RealVector v = sample_spectrum_values(n, 0.0, 1.0, rng);
    while (n > 1 && v(0) - v(1) < 1e-12) {  // unusable gap for normalization
        ++resamples;
        v = sample_spectrum_values(n, 0.0, 1.0, rng);
    }
    if (cfg.normalize_gap && n > 1) {
        v = ((v.array() - v(1)) / (v(0) - v(1))).matrix();
    }
    return Spectrum::from_values(std::move(v));
}

double instance_s_max(const ConvergenceReport& bounds_only, const ScalingStudyConfig& cfg) {
    const double b = bounds_only.bound_tc_total;
    if (!std::isfinite(b)) return cfg.s_max_cap;
    return std::min(cfg.s_max_cap, 1.5 * b + 25.0);
}

}  // namespace

InstanceRecord run_observable_instance(int n, std::uint64_t instance_seed,
                                       const ScalingStudyConfig& cfg) {
    Rng rng(instance_seed);
    InstanceRecord rec;
    rec.n = n;
    rec.seed = instance_seed;
    if (n == 1) throw std::invalid_argument("run_observable_instance: need n >= 2");

    Spectrum sp = draw_study_spectrum(n, rng, cfg, rec.resamples);
    ObservableProblem prob(std::move(sp), RealVector::Constant(n, 1.0 / n));
    const HaltSpec halt{cfg.epsilon_p, cfg.require_region};

    ConvergenceReport probe;
    probe.bound_tc_total = std::max(
        bound_tc_eps_observable(prob.spectrum, prob.multiplicity_k, prob.x0, cfg.epsilon_p),
        bound_tc_region_observable(prob.spectrum, prob.multiplicity_k, prob.x0));
    const double s_max = instance_s_max(probe, cfg);

    const ConvergenceReport rep = measure_tc(prob, halt, s_max);
    rec.t_measured = rep.t_measured;
    rec.bound_eps = rep.bound_tc_eps;
    rec.bound_region = rep.bound_tc_region;
    rec.bound_total = rep.bound_tc_total;
    rec.converged = rep.converged;

    if (cfg.with_trajectories && rep.converged) {
        IntegratorOptions opts;
        opts.max_step = cfg.max_step;
        const SimplexTrajectory traj = integrate_replicator(prob, rep.t_measured, opts);
        rec.path_length = path_length(traj);
        rec.invariant_max_residual = traj.max_invariant_residual();
    }
    return rec;
}

InstanceRecord run_gate_instance(int n, std::uint64_t instance_seed,
                                 const ScalingStudyConfig& cfg) {
    Rng rng(instance_seed);
    InstanceRecord rec;
    rec.n = n;
    rec.seed = instance_seed;

    Matrix w = sample_haar_unitary(n, rng);
    if (cfg.force_eigenphase_pi) {
        // Pin the worst eigenphase of the drawn target to exactly π.
        UnitaryEig we = eig_unitary(w);
        ComplexVector lam(n);
        for (int k = 0; k < n; ++k) lam(k) = std::polar(1.0, -we.phases(k));
        lam(0) = Complex(-1.0, 0.0);
        w = we.frame.adjoint() * lam.asDiagonal() * we.frame;
    } else if (cfg.theta0_margin > 0.0) {
        auto too_close = [&](const Matrix& cand) {
            const UnitaryEig we = eig_unitary(cand);
            double worst = std::numbers::pi;
            for (int k = 0; k < n; ++k) {
                worst = std::min(worst, std::numbers::pi - std::abs(we.phases(k)));
            }
            return worst < cfg.theta0_margin;
        };
        while (too_close(w)) {
            ++rec.resamples;
            w = sample_haar_unitary(n, rng);
        }
    }

    GateProblem prob(std::move(w), Matrix::Identity(n, n));
    rec.theta0 = prob.theta0;
    const HaltSpec halt{cfg.epsilon_p, true};
    const GateBoundReport gb = bound_tc_gate(prob.theta0, cfg.epsilon_p * cfg.epsilon_p, n);
    const double s_max =
        std::isfinite(gb.t_bound) ? std::min(cfg.s_max_cap, 1.5 * gb.t_bound + 10.0)
                                  : std::min(cfg.s_max_cap, 10.0);

    const ConvergenceReport rep = measure_tc(prob, halt, s_max);
    rec.t_measured = rep.t_measured;
    rec.bound_eps = rep.bound_tc_eps;
    rec.bound_region = rep.bound_tc_region;
    rec.bound_total = rep.bound_tc_total;
    rec.converged = rep.converged;
    rec.path_bound = bound_path_length(prob.theta0, n, gb.x_c_minus);

    if (cfg.with_trajectories && rep.converged && rep.t_measured > 0.0) {
        IntegratorOptions opts;
        opts.max_step = cfg.max_step;
        const UnitaryTrajectory traj = integrate_gate(prob, rep.t_measured, opts);
        rec.path_length = path_length(traj);
        rec.invariant_max_residual = traj.max_invariant_residual();
    }
    return rec;
}

ScalingStudy run_scaling_study(const ScalingStudyConfig& config) {
    if (config.dims.empty()) throw std::invalid_argument("run_scaling_study: dims is empty");
    if (config.instances_per_dim < 1) {
        throw std::invalid_argument("run_scaling_study: instances_per_dim must be >= 1");
    }
    ScalingStudy study;
    study.config = config;
    const int total = static_cast<int>(config.dims.size()) * config.instances_per_dim;
    study.instances.resize(total);

    parallel_for(total, config.threads, [&](int idx) {
        const int n = config.dims[idx / config.instances_per_dim];
        const int inst = idx % config.instances_per_dim;
        const std::uint64_t seed = derive_seed(config.seed, static_cast<std::uint64_t>(n),
                                               static_cast<std::uint64_t>(inst));
        study.instances[idx] = (config.kind == ScalingStudyConfig::Kind::observable)
                                   ? run_observable_instance(n, seed, config)
                                   : run_gate_instance(n, seed, config);
    });

    std::vector<double> lnn_tc, tc, lnn_l, lnl;
    for (const auto& rec : study.instances) {
        study.pathological_resamples += rec.resamples;
        if (rec.invariant_max_residual > 1e-9) ++study.invariant_failures;
        if (!rec.converged) continue;
        if (rec.t_measured > rec.bound_total * (1.0 + 1e-9) + 1e-9) ++study.bound_violations;
        lnn_tc.push_back(std::log(static_cast<double>(rec.n)));
        tc.push_back(rec.t_measured);
        if (std::isfinite(rec.path_length) && rec.path_length > 0.0) {
            lnn_l.push_back(std::log(static_cast<double>(rec.n)));
            lnl.push_back(std::log(rec.path_length));
        }
    }
    if (lnn_tc.size() >= 2) study.tc_vs_log_dim = linear_fit(lnn_tc, tc);
    if (lnn_l.size() >= 2) study.log_length_vs_log_dim = linear_fit(lnn_l, lnl);
    return study;
}

}  // namespace kinflow
