// synth.hpp: control synthesis for exact controllability in projection.
//
// Pipeline: certify a level n, complete the target to a state chi in C^n,
// plan a word of planar rotations realized by factors E_0(B) + nu E_sigma(B)
// conjugated by drift phases, generate a sampled cosine pulse per factor,
// convert each pulse to {0,1} values and finally correct all word times with a
// damped Gauss-Newton loop on the simulated final state.

#pragma once

#include "lgc/bangbang.hpp"
#include "lgc/lie.hpp"
#include "lgc/linalg.hpp"
#include "lgc/model.hpp"
#include "lgc/sim.hpp"
#include "lgc/spectral.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace lgc {

struct SynthOptions {
    double tol = 1e-2;
    double delta = 0.2;
    double nu = 0.25;
    double pulse_tol = 3e-2;
    int samples_per_period = 16;
    int max_pulse_retries = 8;
    double bang_interval = 0.02;
    int max_iterations = 40;
    int restarts = 3;
    std::uint64_t seed = 1;
    int n_max = 10;
    int cutoff = 0;  // 0: four times the certified level
    double fd_step = 1e-6;
    double wait_tol = 1e-3;
    double wait_cap = 1e4;
};

// ------------------------------ completions ---------------------------------

// Unitary whose first column is the unit vector v.
inline Mat unitary_with_first_column(const Vec& v) {
    const auto n = v.size();
    if (std::abs(v.norm() - 1.0) > 1e-10) throw input_error("unitary completion: vector must be normalized");
    const Mat col = v;
    Eigen::HouseholderQR<Mat> qr(col);
    Mat q = qr.householderQ() * Mat::Identity(n, n);
    const cplx r = qr.matrixQR()(0, 0);
    q.col(0) *= r;
    return q;
}

// M in SU(n) with M psi0 = chi; the determinant phase is absorbed in the
// column acting on level n of the completion of chi.
inline Mat su_completion(const Vec& psi0, const Vec& chi) {
    const auto n = psi0.size();
    if (chi.size() != n) throw input_error("su_completion: size mismatch");
    if (n < 2) throw input_error("su_completion: need n >= 2");
    Mat q0 = unitary_with_first_column(psi0);
    Mat q1 = unitary_with_first_column(chi);
    const cplx d = (q1 * q0.adjoint()).determinant();
    q1.col(n - 1) *= std::conj(d) / std::abs(d);
    return q1 * q0.adjoint();
}

// chi in C^n with Pi_N chi = Pi_N psi1 and unit norm. The mass outside Pi_N
// follows psi1 on levels N+1..n, else psi0 there, else sits on level N+1.
inline Vec complete_target(const Vec& psi0, const Vec& psi1, int big_n, int n) {
    if (big_n >= n) throw input_error("complete_target: N must be below n");
    Vec chi = Vec::Zero(n);
    const int head = std::min<int>(big_n, static_cast<int>(psi1.size()));
    chi.head(head) = psi1.head(head);
    const double rest = std::sqrt(std::max(0.0, 1.0 - chi.squaredNorm()));
    if (rest == 0.0) return chi;
    auto tail_of = [&](const Vec& v) {
        Vec t = Vec::Zero(n - big_n);
        const int m = std::min<int>(n, static_cast<int>(v.size())) - big_n;
        if (m > 0) t.head(m) = v.segment(big_n, m);
        return t;
    };
    Vec t = tail_of(psi1);
    if (t.norm() == 0.0) t = tail_of(psi0);
    if (t.norm() == 0.0) t(0) = 1.0;
    chi.tail(n - big_n) = rest * t / t.norm();
    return chi;
}

// ------------------------------ word planning -------------------------------

// Planar rotation exp(theta K), K(c,p) = z, K(p,c) = -conj(z), |z| = 1.
struct Rotation {
    int p = 0;  // parent level (1-based)
    int c = 0;  // child level
    double theta = 0.0;
    cplx z{1.0, 0.0};
};

inline Mat rotation_generator(int n, const Rotation& r) {
    Mat k = Mat::Zero(n, n);
    k(r.c - 1, r.p - 1) = r.z;
    k(r.p - 1, r.c - 1) = -std::conj(r.z);
    return k;
}

inline Mat rotation_matrix(int n, const Rotation& r) {
    Mat m = Mat::Identity(n, n);
    const double co = std::cos(r.theta), si = std::sin(r.theta);
    m(r.p - 1, r.p - 1) = co;
    m(r.c - 1, r.c - 1) = co;
    m(r.c - 1, r.p - 1) = r.z * si;
    m(r.p - 1, r.c - 1) = -std::conj(r.z) * si;
    return m;
}

struct WordFactor {
    Rotation rotation;
    double sigma = 0.0;  // |lambda_c - lambda_p|
    double nu = 0.25;
    cplx coupling;       // b_{c,p}
    double tau = 0.0;    // theta / (nu |b_{c,p}|)
    std::string role;    // "reduce", "phase" or "build"

    std::string tag() const {
        char buf[96];
        std::snprintf(buf, sizeof buf, "E0(B)+%.6g*E(%.12g)(B)", nu, sigma);
        return buf;
    }
};

struct Word {
    int n = 0;
    std::vector<WordFactor> factors;
    double alpha = 0.0;  // phase of psi0 after reduction
    double beta = 0.0;   // phase of chi after reduction
};

// Product of the ideal rotations, first factor applied first.
inline Mat word_unitary(const Word& w) {
    Mat u = Mat::Identity(w.n, w.n);
    for (const auto& f : w.factors) u = rotation_matrix(w.n, f.rotation) * u;
    return u;
}

namespace detail {

struct RotationTree {
    std::vector<int> order;   // breadth-first order, root first
    std::vector<int> parent;  // 0 for the root and unreachable levels
    std::vector<bool> reached;
};

// Edges whose gap selects exactly one coupled pair among the first n levels.
inline std::vector<std::pair<int, int>> isolated_edges(const SystemModel& sys, int n) {
    const XiSet xi = xi_set(sys, n);
    const GalerkinPair g = truncate(sys, n);
    const auto lam = sys.eigenvalues(n);
    std::vector<std::pair<int, int>> out;
    for (double s : xi.xi) {
        if (same_gap(s, 0.0)) continue;
        const Mat e = select(g.b, s, lam);
        std::vector<std::pair<int, int>> pairs;
        for (int j = 0; j < n; ++j)
            for (int k = j + 1; k < n; ++k)
                if (e(j, k) != cplx{}) pairs.emplace_back(j + 1, k + 1);
        if (pairs.size() == 1) out.push_back(pairs.front());
    }
    return out;
}

inline RotationTree rotation_tree(const SystemModel& sys, int n) {
    const auto edges = isolated_edges(sys, n);
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n + 1));
    for (const auto& [a, b] : edges) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    for (auto& l : adj) std::sort(l.begin(), l.end());
    RotationTree t;
    t.parent.assign(static_cast<std::size_t>(n + 1), 0);
    t.reached.assign(static_cast<std::size_t>(n + 1), false);
    std::deque<int> q{1};
    t.reached[1] = true;
    while (!q.empty()) {
        const int v = q.front();
        q.pop_front();
        t.order.push_back(v);
        for (int s : adj[v]) {
            if (t.reached[s]) continue;
            t.reached[s] = true;
            t.parent[s] = v;
            q.push_back(s);
        }
    }
    return t;
}

// Rotations mapping v to phase * |v| * e_1, leaves first.
inline std::vector<Rotation> reduce_to_root(const RotationTree& t, Vec v, cplx& root_value) {
    const int n = static_cast<int>(v.size());
    for (int k = 1; k <= n; ++k) {
        if (!t.reached[k] && std::abs(v(k - 1)) > 0.0) {
            throw computation_error("no chain route: level " + std::to_string(k) +
                                    " is not reachable through isolated decoupled gaps");
        }
    }
    std::vector<Rotation> out;
    for (auto it = t.order.rbegin(); it != t.order.rend(); ++it) {
        const int c = *it;
        const int p = t.parent[c];
        if (p == 0) continue;
        const cplx vc = v(c - 1), vp = v(p - 1);
        if (std::abs(vc) == 0.0) continue;
        const cplx php = std::abs(vp) > 0.0 ? vp / std::abs(vp) : cplx{1.0, 0.0};
        Rotation r{p, c, std::atan2(std::abs(vc), std::abs(vp)), -(vc / std::abs(vc)) / php};
        v = rotation_matrix(n, r) * v;
        v(c - 1) = 0.0;
        out.push_back(r);
    }
    root_value = v(0);
    return out;
}

}  // namespace detail

// Word of rotations W with W psi0 = chi: reduce psi0 to the root, fix the
// root phase with two quarter turns, then build chi from the root.
inline Word plan_word(const SystemModel& sys, int n, const Vec& psi0, const Vec& chi, double nu) {
    if (psi0.size() != n || chi.size() != n) throw input_error("plan_word: states must have n coefficients");
    if (!(nu > 0.0 && nu < 0.5)) throw input_error("plan_word: nu must lie in (0, 1/2)");
    if (std::abs(psi0.norm() - chi.norm()) > 1e-10) throw input_error("plan_word: states differ in norm");
    const auto tree = detail::rotation_tree(sys, n);
    const auto lam = sys.eigenvalues(n);

    Word w;
    w.n = n;
    auto push = [&](const Rotation& r, const char* role) {
        WordFactor f;
        f.rotation = r;
        f.sigma = std::abs(lam[r.c - 1] - lam[r.p - 1]);
        f.nu = nu;
        f.coupling = -kI * sys.coupling_at(r.c, r.p);
        f.tau = r.theta / (nu * std::abs(f.coupling));
        f.role = role;
        w.factors.push_back(f);
    };

    cplx a0, b0;
    const auto down = detail::reduce_to_root(tree, psi0, a0);
    const auto up = detail::reduce_to_root(tree, chi, b0);
    w.alpha = std::arg(a0);
    w.beta = std::arg(b0);
    for (const auto& r : down) push(r, "reduce");

    const cplx turn = std::polar(1.0, w.beta - w.alpha);
    if (std::abs(turn - 1.0) > 1e-12 && std::abs(b0) > 0.0) {
        int child = 0;
        for (int k = 2; k <= n; ++k)
            if (tree.parent[k] == 1) {
                child = k;
                break;
            }
        if (child == 0) throw computation_error("no chain route: level 1 has no isolated neighbour");
        push(Rotation{1, child, kPi / 2, {1.0, 0.0}}, "phase");
        push(Rotation{1, child, kPi / 2, -std::conj(turn)}, "phase");
    }
    for (auto it = up.rbegin(); it != up.rend(); ++it) {
        Rotation r = *it;
        r.z = -r.z;
        push(r, "build");
    }
    return w;
}

// ------------------------------ recurrence waits ----------------------------

struct RecurrenceResult {
    double gamma = 0.0;
    double error = 0.0;
    bool found = false;
};

// gamma >= min_wait with max_k |e^{-i lambda_k gamma} - e^{i phi_k}| <= wait_tol,
// by a coarse scan of the almost-periodic alignment error and golden-section
// refinement near each local minimum.
inline RecurrenceResult recurrence_wait(const SystemModel& sys, int n, const std::vector<double>& phase_target,
                                        double wait_tol, double min_wait = 0.0, double cap = 1e4) {
    if (static_cast<int>(phase_target.size()) != n) throw input_error("recurrence_wait: need n target phases");
    const auto lam = sys.eigenvalues(n);
    auto err = [&](double g) {
        double e = 0.0;
        for (int k = 0; k < n; ++k)
            e = std::max(e, std::abs(std::polar(1.0, -lam[k] * g) - std::polar(1.0, phase_target[k])));
        return e;
    };
    RecurrenceResult best{min_wait, err(min_wait), false};
    if (best.error <= wait_tol) {
        best.found = true;
        return best;
    }
    double top = 0.0;
    for (double l : lam) top = std::max(top, std::abs(l));
    if (top == 0.0) return best;
    const double h = 0.05 / top;
    double e_prev2 = std::numeric_limits<double>::infinity();
    double e_prev = best.error;
    for (double g = min_wait + h; g <= min_wait + cap + h; g += h) {
        const double e = err(g);
        if (e_prev <= e_prev2 && e_prev <= e) {
            double lo = g - 2 * h, hi = g;
            const double r = 0.5 * (std::sqrt(5.0) - 1.0);
            double x1 = hi - r * (hi - lo), x2 = lo + r * (hi - lo);
            double f1 = err(x1), f2 = err(x2);
            for (int it = 0; it < 60; ++it) {
                if (f1 < f2) {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - r * (hi - lo);
                    f1 = err(x1);
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + r * (hi - lo);
                    f2 = err(x2);
                }
            }
            const double gm = std::max(min_wait, 0.5 * (lo + hi));
            const double em = err(gm);
            if (em < best.error) best = {gm, em, false};
            if (em <= wait_tol) {
                best.found = true;
                return best;
            }
        }
        e_prev2 = e_prev;
        e_prev = e;
    }
    return best;
}

// ------------------------------ pulses --------------------------------------

struct PulseShape {
    double sigma = 0.0;
    double nu = 0.0;      // requested selection weight
    double nu_eff = 0.0;  // weight after the sampling correction
    double delta = 0.2;
    double kappa = 0.5;   // tau = T_p * delta * kappa
    int samples = 16;

    double duration(double tau) const { return tau / (delta * kappa); }

    // u = delta/2 (1 + 2 nu_eff cos(sigma t)) sampled at segment midpoints;
    // constant delta when sigma = 0.
    PiecewiseConstantControl control(double tau) const {
        PiecewiseConstantControl u;
        u.range = ValueRange::interval(0.0, delta);
        const double total = duration(tau);
        if (!(total > 0.0)) return u;
        if (sigma == 0.0) {
            u.segments.push_back({total, delta});
            return u;
        }
        const double width = 2.0 * kPi / sigma / samples;
        std::vector<double> values(static_cast<std::size_t>(samples));
        for (int j = 0; j < samples; ++j) {
            const double v = 0.5 * delta * (1.0 + 2.0 * nu_eff * std::cos(2.0 * kPi * (j + 0.5) / samples));
            values[static_cast<std::size_t>(j)] = std::clamp(v, 0.0, delta);
        }
        const auto full = static_cast<long>(std::floor(total / width));
        for (long i = 0; i < full; ++i) u.segments.push_back({width, values[static_cast<std::size_t>(i % samples)]});
        const double last = total - static_cast<double>(full) * width;
        if (last > 1e-15 * total) u.segments.push_back({last, values[static_cast<std::size_t>(full % samples)]});
        return u;
    }
};

struct PulseResult {
    PulseShape shape;
    double tau = 0.0;
    PiecewiseConstantControl control;
    double error = 0.0;  // || (Y^u - e^{T_p A} e^{tau M}) on Pi_n ||
    int verify_cutoff = 0;
    bool verified = false;
    int attempts = 0;
};

namespace detail {

inline double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(x) / x; }

// Effective rate of the sampled pulse on the isolated two-level block (p, c),
// measured over whole drive periods near a quarter turn.
inline double calibrate_rate(const SystemModel& sys, const PulseShape& shape, int p, int c) {
    const cplx bcp = -kI * sys.coupling_at(c, p);
    if (shape.sigma == 0.0 || shape.nu == 0.0 || std::abs(bcp) == 0.0) return shape.sigma == 0.0 ? 1.0 : 0.5;
    SystemModel two;
    two.eigenvalue_list = {sys.eigenvalue(p), sys.eigenvalue(c)};
    if (two.eigenvalue_list[1] < two.eigenvalue_list[0]) std::swap(two.eigenvalue_list[0], two.eigenvalue_list[1]);
    const bool swapped = sys.eigenvalue(p) > sys.eigenvalue(c);
    const int lp = swapped ? 2 : 1, lc = swapped ? 1 : 2;
    two.coupling.entries[{1, 1}] = sys.coupling_at(swapped ? c : p, swapped ? c : p);
    two.coupling.entries[{2, 2}] = sys.coupling_at(swapped ? p : c, swapped ? p : c);
    two.coupling.entries[{1, 2}] = swapped ? sys.coupling_at(c, p) : sys.coupling_at(p, c);

    const double period = 2.0 * kPi / shape.sigma;
    const double nominal = (kPi / 4) / (shape.delta * 0.5 * std::abs(shape.nu) * std::abs(bcp));
    const double periods = std::max(1.0, std::round(nominal / period));
    PulseShape probe = shape;
    probe.kappa = 1.0;
    const double total = periods * period;
    const auto u = probe.control(total * shape.delta);
    const Mat prop = propagator_matrix(two, u, 2);
    Mat frame = prop;  // e^{-T a} prop
    for (int k = 0; k < 2; ++k) frame.row(k) *= std::polar(1.0, two.eigenvalue_list[k] * u.total_time());
    Eigen::ComplexEigenSolver<Mat> es(frame);
    Mat logm = es.eigenvectors() *
               es.eigenvalues().unaryExpr([](cplx x) { return cplx{0.0, std::arg(x)}; }).asDiagonal() *
               es.eigenvectors().inverse();
    const double rate = std::abs(logm(lc - 1, lp - 1)) / u.total_time();
    return rate / (shape.delta * std::abs(shape.nu) * std::abs(bcp));
}

}  // namespace detail

// Generator E_0(b) + nu E_sigma(b) at level n.
inline Mat factor_generator(const SystemModel& sys, int n, double sigma, double nu) {
    const GalerkinPair g = truncate(sys, n);
    const auto lam = sys.eigenvalues(n);
    Mat m = select(g.b, 0.0, lam);
    if (!same_gap(sigma, 0.0)) m += nu * select(g.b, sigma, lam);
    return m;
}

// || (Y^u restricted to Pi_n) - [e^{T_p a} e^{tau M}; 0] || at the given cutoff.
inline double pulse_error(const SystemModel& sys, int n, const PiecewiseConstantControl& u, double tau, double sigma,
                          double nu, int cutoff) {
    SegmentPropagator prop(sys, cutoff);
    Mat cols = Mat::Identity(cutoff, n);
    for (const auto& seg : u.segments) prop.apply(seg, cols);
    const double total = u.total_time();
    Mat target = Mat::Zero(cutoff, n);
    Mat e = expm_skew(tau * factor_generator(sys, n, sigma, nu));
    for (int k = 0; k < n; ++k) e.row(k) *= std::polar(1.0, -sys.eigenvalue(k + 1) * total);
    target.topRows(n) = e;
    return op_norm(cols - target);
}

// Pulse realizing e^{tau (E_0(b) + nu E_sigma(b))} up to drift, verified at
// cutoff >= 2n; delta halves after each failed verification.
inline PulseResult pulse_for_factor(const SystemModel& sys, int n, int p, int c, double sigma, double nu, double tau,
                                    double delta, double pulse_tol, int cutoff = 0, int samples = 16,
                                    int max_retries = 8) {
    if (!(delta > 0.0 && delta < 1.0)) throw input_error("pulse_for_factor: delta must lie in (0, 1)");
    if (tau < 0.0) throw input_error("pulse_for_factor: tau must be >= 0");
    if (samples < 4) throw input_error("pulse_for_factor: need at least 4 samples per period");
    if (!same_gap(sigma, 0.0)) {
        if (!xi_set(sys, n).contains(sigma)) throw input_error("pulse_for_factor: sigma is not in Xi_n");
        if (!(std::abs(nu) < 0.5)) throw input_error("pulse_for_factor: nu must lie in (-1/2, 1/2)");
    }
    PulseResult res;
    res.tau = tau;
    res.verify_cutoff = std::max(cutoff, 2 * n);
    if (const auto dim = sys.dimension()) res.verify_cutoff = std::min(res.verify_cutoff, *dim);
    PulseShape shape;
    shape.sigma = same_gap(sigma, 0.0) ? 0.0 : sigma;
    shape.nu = nu;
    shape.samples = samples;
    shape.nu_eff = shape.sigma == 0.0 ? 0.0 : nu / detail::sinc(kPi / samples);
    if (std::abs(shape.nu_eff) > 0.5) throw input_error("pulse_for_factor: nu too large for the sampling rate");
    shape.delta = delta;
    if (tau == 0.0) {
        res.shape = shape;
        res.verified = true;
        return res;
    }
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
        shape.kappa = detail::calibrate_rate(sys, shape, p, c);
        const auto u = shape.control(tau);
        const double err = pulse_error(sys, n, u, tau, shape.sigma, nu, res.verify_cutoff);
        if (attempt == 0 || err < res.error) {
            res.shape = shape;
            res.control = u;
            res.error = err;
        }
        res.attempts = attempt + 1;
        if (err <= pulse_tol) {
            res.shape = shape;
            res.control = u;
            res.error = err;
            res.verified = true;
            return res;
        }
        shape.delta *= 0.5;
    }
    return res;
}

// ------------------------------ plans ---------------------------------------

struct PlanFactor {
    WordFactor factor;
    PulseShape shape;
    double pulse_error = 0.0;
    bool pulse_verified = false;
    int bang_k = 1;
    double tau_lo = 0.0, tau_hi = 0.0;
    double wait = 0.0, wait_lo = 0.0, wait_hi = 0.0;
};

struct ControlPlan {
    int n = 0;
    int N = 0;
    int cutoff = 0;
    std::uint64_t seed = 0;
    double tol = 0.0;
    StateVector psi0, psi1;
    std::vector<PlanFactor> word;
    double gamma_wait = 0.0, gamma_lo = 0.0, gamma_hi = 0.0;
    std::vector<PiecewiseConstantControl> pulses;
    PiecewiseConstantControl bang;
    double residual = 0.0;
    std::vector<std::pair<int, double>> residuals;
    std::vector<double> objective_history;
    nlohmann::json certificate = nlohmann::json::object();
    bool success = false;

    // Solver coordinates: (wait_i, tau_i) per factor, then the final wait.
    std::vector<double> times() const {
        std::vector<double> x;
        for (const auto& f : word) {
            x.push_back(f.wait);
            x.push_back(f.factor.tau);
        }
        x.push_back(gamma_wait);
        return x;
    }
};

namespace detail {

inline PiecewiseConstantControl merge_equal(const PiecewiseConstantControl& c) {
    PiecewiseConstantControl out;
    out.range = c.range;
    for (const auto& s : c.segments) {
        if (!out.segments.empty() && out.segments.back().value == s.value) {
            out.segments.back().duration += s.duration;
        } else {
            out.segments.push_back(s);
        }
    }
    return out;
}

}  // namespace detail

// {0,1}-valued control for the given solver coordinates; also returns the
// underlying [0, delta] pulses.
inline PiecewiseConstantControl assemble_bang(const std::vector<PlanFactor>& word, const std::vector<double>& x,
                                              std::vector<PiecewiseConstantControl>* pulses = nullptr) {
    if (x.size() != 2 * word.size() + 1) throw input_error("assemble_bang: coordinate count mismatch");
    PiecewiseConstantControl c;
    c.range = ValueRange::two_point(1.0);
    if (pulses) pulses->clear();
    for (std::size_t i = 0; i < word.size(); ++i) {
        if (x[2 * i] > 0.0) c.segments.push_back({x[2 * i], 0.0});
        const auto u = word[i].shape.control(x[2 * i + 1]);
        if (pulses) pulses->push_back(u);
        if (!u.segments.empty()) c.append(bangbangify(u, 1.0, word[i].bang_k));
    }
    if (x.back() > 0.0) c.segments.push_back({x.back(), 0.0});
    return detail::merge_equal(c);
}

inline Vec projected_final_state(const SystemModel& sys, const PiecewiseConstantControl& bang, int cutoff,
                                 const StateVector& psi0, int big_n) {
    const StateVector fin = propagate(sys, bang, cutoff, psi0.resized(cutoff), Semantics::two_value);
    return fin.coefficients.head(big_n);
}

inline double projected_residual(const SystemModel& sys, const PiecewiseConstantControl& bang, int cutoff,
                                 const StateVector& psi0, const StateVector& psi1, int big_n) {
    const Vec target = psi1.resized(std::max(psi1.cutoff(), big_n)).coefficients.head(big_n);
    return (projected_final_state(sys, bang, cutoff, psi0, big_n) - target).norm();
}

inline nlohmann::json complex_list(const Vec& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back({v(k).real(), v(k).imag()});
    return a;
}

inline nlohmann::json plan_to_json(const ControlPlan& plan) {
    nlohmann::json word = nlohmann::json::array();
    for (const auto& f : plan.word) {
        const auto& r = f.factor.rotation;
        word.push_back({{"tag", f.factor.tag()},
                        {"role", f.factor.role},
                        {"levels", {r.p, r.c}},
                        {"sigma", f.factor.sigma},
                        {"nu", f.factor.nu},
                        {"theta", r.theta},
                        {"z", {r.z.real(), r.z.imag()}},
                        {"tau", f.factor.tau},
                        {"tau_bounds", {f.tau_lo, f.tau_hi}},
                        {"wait", f.wait},
                        {"wait_bounds", {f.wait_lo, f.wait_hi}},
                        {"pulse",
                         {{"delta", f.shape.delta},
                          {"kappa", f.shape.kappa},
                          {"nu_eff", f.shape.nu_eff},
                          {"samples_per_period", f.shape.samples},
                          {"duration", f.shape.duration(f.factor.tau)},
                          {"verify_error", f.pulse_error},
                          {"verified", f.pulse_verified},
                          {"bang_intervals", f.bang_k}}}});
    }
    nlohmann::json pulses = nlohmann::json::array();
    for (const auto& p : plan.pulses) pulses.push_back(control_to_json(p));
    nlohmann::json res = nlohmann::json::array();
    for (const auto& [c, r] : plan.residuals) res.push_back({{"cutoff", c}, {"residual", r}});
    double delta = 0.0;
    for (const auto& f : plan.word) delta = std::max(delta, f.shape.delta);
    return {{"n", plan.n},
            {"N", plan.N},
            {"cutoff", plan.cutoff},
            {"seed", plan.seed},
            {"tol", plan.tol},
            {"psi0", state_to_json(plan.psi0)},
            {"psi1", state_to_json(plan.psi1)},
            {"word", word},
            {"gamma_wait", plan.gamma_wait},
            {"gamma_bounds", {plan.gamma_lo, plan.gamma_hi}},
            {"delta", delta},
            {"pulses", pulses},
            {"bang", control_to_json(plan.bang)},
            {"residual", plan.residual},
            {"residuals", res},
            {"objective_history", plan.objective_history},
            {"certificate", plan.certificate},
            {"success", plan.success}};
}

inline ControlPlan plan_from_json(const nlohmann::json& doc) {
    ControlPlan plan;
    try {
        plan.n = doc.at("n").get<int>();
        plan.N = doc.at("N").get<int>();
        plan.cutoff = doc.at("cutoff").get<int>();
        plan.seed = doc.value("seed", std::uint64_t{0});
        plan.tol = doc.at("tol").get<double>();
        plan.psi0 = state_from_json(doc.at("psi0"));
        plan.psi1 = state_from_json(doc.at("psi1"));
        plan.bang = control_from_json(doc.at("bang"));
        plan.residual = doc.at("residual").get<double>();
        plan.gamma_wait = doc.value("gamma_wait", 0.0);
        plan.success = doc.value("success", false);
        if (doc.contains("residuals"))
            for (const auto& r : doc.at("residuals"))
                plan.residuals.emplace_back(r.at("cutoff").get<int>(), r.at("residual").get<double>());
        if (doc.contains("certificate")) plan.certificate = doc.at("certificate");
    } catch (const nlohmann::json::exception& e) {
        throw input_error(std::string("plan: malformed document: ") + e.what());
    }
    return plan;
}

// ------------------------------ solver --------------------------------------

struct SolveResult {
    std::vector<double> x;
    double residual = std::numeric_limits<double>::infinity();
    std::vector<double> history;
    int iterations = 0;
    int restarts_used = 0;
};

namespace detail {

// Damped Gauss-Newton (Levenberg-Marquardt) on r(x) in a box, with seeded
// restarts from perturbed starting points when a run stalls above tol.
template <class Residual>
SolveResult box_gauss_newton(Residual&& residual, const std::vector<double>& x0, const std::vector<double>& lo,
                             const std::vector<double>& hi, double tol, const SynthOptions& opt) {
    const std::size_t p = x0.size();
    auto clamp = [&](std::vector<double> x) {
        for (std::size_t i = 0; i < p; ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
        return x;
    };
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    SolveResult best;
    for (int run = 0; run <= opt.restarts; ++run) {
        std::vector<double> x = x0;
        if (run > 0) {
            for (std::size_t i = 0; i < p; ++i) x[i] += 0.25 * unit(rng) * (hi[i] - lo[i]) * 0.5;
            x = clamp(x);
        }
        RVec r = residual(x);
        double f = r.squaredNorm();
        std::vector<double> hist{std::sqrt(f)};
        double mu = 1e-3;
        int it = 0;
        for (; it < opt.max_iterations && std::sqrt(f) > 0.1 * tol; ++it) {
            Eigen::MatrixXd jac(r.size(), static_cast<Eigen::Index>(p));
            for (std::size_t i = 0; i < p; ++i) {
                std::vector<double> xp = x;
                double step = opt.fd_step * std::max(1.0, std::abs(x[i]));
                if (xp[i] + step > hi[i]) step = -step;
                xp[i] += step;
                jac.col(static_cast<Eigen::Index>(i)) = (residual(xp) - r) / step;
            }
            const Eigen::MatrixXd jtj = jac.transpose() * jac;
            const RVec g = jac.transpose() * r;
            bool accepted = false;
            for (int damp = 0; damp < 12; ++damp) {
                Eigen::MatrixXd sys_m = jtj;
                sys_m.diagonal().array() += mu * jtj.diagonal().maxCoeff() + 1e-8;
                const RVec dx = sys_m.ldlt().solve(-g);
                std::vector<double> xn = x;
                for (std::size_t i = 0; i < p; ++i) xn[i] += dx(static_cast<Eigen::Index>(i));
                xn = clamp(xn);
                const RVec rn = residual(xn);
                const double fn = rn.squaredNorm();
                if (fn < f) {
                    x = xn;
                    r = rn;
                    f = fn;
                    mu = std::max(mu / 3.0, 1e-12);
                    accepted = true;
                    break;
                }
                mu *= 4.0;
            }
            hist.push_back(std::sqrt(f));
            if (!accepted) break;
        }
        if (std::sqrt(f) < best.residual) {
            best.x = x;
            best.residual = std::sqrt(f);
            best.history = hist;
            best.iterations = it;
            best.restarts_used = run;
        }
        if (best.residual <= tol) break;
    }
    return best;
}

}  // namespace detail

struct VerifyReport {
    std::vector<std::pair<int, double>> residuals;
    std::vector<std::pair<int, double>> isometry_defects;
    double total_time = 0.0;
    int switch_count = 0;
    bool mismatch = false;

    nlohmann::json to_json() const {
        nlohmann::json r = nlohmann::json::array();
        for (std::size_t i = 0; i < residuals.size(); ++i)
            r.push_back({{"cutoff", residuals[i].first},
                         {"residual", residuals[i].second},
                         {"isometry_defect", isometry_defects[i].second}});
        return {{"cutoffs", r}, {"total_time", total_time}, {"switch_count", switch_count}, {"mismatch", mismatch}};
    }
};

inline int switch_count(const PiecewiseConstantControl& c) {
    int s = 0;
    for (std::size_t i = 1; i < c.segments.size(); ++i)
        if (c.segments[i].value != c.segments[i - 1].value) ++s;
    return s;
}

// Re-simulates the plan's bang control at each cutoff.
inline VerifyReport verify_plan(const SystemModel& sys, const ControlPlan& plan, const std::vector<int>& cutoffs) {
    VerifyReport rep;
    rep.total_time = plan.bang.total_time();
    rep.switch_count = switch_count(plan.bang);
    const int n = std::max(1, plan.n);
    for (int c : cutoffs) {
        rep.residuals.emplace_back(c, projected_residual(sys, plan.bang, c, plan.psi0, plan.psi1, plan.N));
        SegmentPropagator prop(sys, c);
        Mat cols = Mat::Identity(c, std::min(n, c));
        for (const auto& seg : plan.bang.segments) prop.apply(seg, cols);
        rep.isometry_defects.emplace_back(c, unitarity_defect(cols));
        if (c == plan.cutoff && std::abs(rep.residuals.back().second - plan.residual) > 1e-10) rep.mismatch = true;
    }
    return rep;
}

// Steers psi0 so that Pi_N of the final state equals Pi_N psi1 within tol,
// using a {0,1}-valued control.
inline ControlPlan project_match(const SystemModel& sys, int big_n, const StateVector& psi0_in,
                                 const StateVector& psi1_in, const SynthOptions& opt = {}) {
    if (big_n < 1) throw input_error("synthesize: N must be >= 1");
    if (!(opt.tol > 0.0)) throw input_error("synthesize: tol must be positive");
    if (std::abs(psi0_in.norm() - 1.0) > 1e-10 || std::abs(psi1_in.norm() - 1.0) > 1e-10) {
        throw input_error("synthesize: psi0 and psi1 must have unit norm");
    }
    const int width = std::max({big_n, psi0_in.cutoff(), psi1_in.cutoff()});
    const StateVector psi0 = psi0_in.resized(width);
    const StateVector psi1 = psi1_in.resized(width);
    const Vec target = psi1.coefficients.head(big_n);
    if (target.norm() >= 1.0 - 1e-12) {
        throw input_error("synthesize: ||Pi_N psi1|| must be < 1, got " + std::to_string(target.norm()));
    }

    ControlPlan plan;
    plan.N = big_n;
    plan.seed = opt.seed;
    plan.tol = opt.tol;
    plan.psi0 = psi0;
    plan.psi1 = psi1;

    const double trivial = (psi0.coefficients.head(big_n) - target).norm();
    if (trivial <= opt.tol) {
        plan.n = big_n;
        plan.cutoff = std::max(opt.cutoff, width);
        plan.bang.range = ValueRange::two_point(1.0);
        plan.residual = trivial;
        plan.residuals = {{plan.cutoff, trivial}};
        plan.certificate = {{"trivial", true}};
        plan.success = true;
        return plan;
    }

    const int n0 = std::max(big_n, psi0.support() - 1);
    const auto cert = lie_galerkin_search(sys, n0, std::max(opt.n_max, n0 + 1));
    if (!cert) throw computation_error("synthesize: Lie-Galerkin certification failed up to n = " +
                                       std::to_string(std::max(opt.n_max, n0 + 1)));
    const int n = *cert.certified_n;
    plan.n = n;
    plan.cutoff = opt.cutoff > 0 ? std::max(opt.cutoff, n + 1) : 4 * n;

    const Vec p0 = psi0.resized(std::max(width, n)).coefficients.head(n);
    const Vec chi = complete_target(p0, psi1.coefficients, big_n, n);
    const Mat m = su_completion(p0, chi);
    const Word word = plan_word(sys, n, p0, chi, opt.nu);

    // pulses and drift scheduling
    const auto lam = sys.eigenvalues(n);
    double elapsed = 0.0;
    double budget_pulses = 0.0;
    for (const auto& f : word.factors) {
        PlanFactor pf;
        pf.factor = f;
        const auto& r = f.rotation;
        const auto pr = pulse_for_factor(sys, n, r.p, r.c, f.sigma, f.nu, f.tau, opt.delta, opt.pulse_tol,
                                         plan.cutoff, opt.samples_per_period, opt.max_pulse_retries);
        pf.shape = pr.shape;
        pf.pulse_error = pr.error;
        pf.pulse_verified = pr.verified;
        budget_pulses += pr.error;
        const double g = lam[r.c - 1] - lam[r.p - 1];
        const double period = 2.0 * kPi / std::abs(g);
        double s = (std::arg(r.z) - std::arg(f.coupling)) / g - elapsed;
        s = std::fmod(s, period);
        if (s < 0.0) s += period;
        pf.wait = s;
        pf.wait_lo = std::max(0.0, s - kPi);
        pf.wait_hi = s + kPi;
        pf.tau_lo = std::max(0.0, f.tau - std::max(0.5 * f.tau, 1.0));
        pf.tau_hi = f.tau + std::max(0.5 * f.tau, 1.0);
        const double dur = pr.shape.duration(f.tau);
        pf.bang_k = std::max(1, static_cast<int>(std::ceil(dur / opt.bang_interval)));
        elapsed += s + dur;
        plan.word.push_back(pf);
    }
    std::vector<double> phases(static_cast<std::size_t>(big_n));
    for (int k = 0; k < big_n; ++k) phases[static_cast<std::size_t>(k)] = std::fmod(lam[k] * elapsed, 2.0 * kPi);
    const auto rw = recurrence_wait(sys, big_n, phases, opt.wait_tol, 0.0, opt.wait_cap);
    plan.gamma_wait = rw.gamma;
    plan.gamma_lo = std::max(0.0, rw.gamma - kPi);
    plan.gamma_hi = rw.gamma + kPi;

    // solve for the word times
    std::vector<double> x0 = plan.times(), lo, hi;
    for (const auto& f : plan.word) {
        lo.insert(lo.end(), {f.wait_lo, f.tau_lo});
        hi.insert(hi.end(), {f.wait_hi, f.tau_hi});
    }
    lo.push_back(plan.gamma_lo);
    hi.push_back(plan.gamma_hi);
    auto residual = [&](const std::vector<double>& x) {
        const auto bang = assemble_bang(plan.word, x);
        const Vec d = projected_final_state(sys, bang, plan.cutoff, psi0, big_n) - target;
        RVec r(2 * big_n);
        for (int k = 0; k < big_n; ++k) {
            r(2 * k) = d(k).real();
            r(2 * k + 1) = d(k).imag();
        }
        return r;
    };
    const double planned_residual = residual(x0).norm();
    const double bang_error = [&] {
        PiecewiseConstantControl smooth;
        for (std::size_t i = 0; i < plan.word.size(); ++i) {
            if (x0[2 * i] > 0.0) smooth.segments.push_back({x0[2 * i], 0.0});
            smooth.append(plan.word[i].shape.control(x0[2 * i + 1]));
        }
        if (x0.back() > 0.0) smooth.segments.push_back({x0.back(), 0.0});
        const Vec a = propagate(sys, smooth, plan.cutoff, psi0.resized(plan.cutoff)).coefficients.head(big_n);
        return (a - projected_final_state(sys, assemble_bang(plan.word, x0), plan.cutoff, psi0, big_n)).norm();
    }();

    const SolveResult sol = detail::box_gauss_newton(residual, x0, lo, hi, opt.tol, opt);
    for (std::size_t i = 0; i < plan.word.size(); ++i) {
        plan.word[i].wait = sol.x[2 * i];
        plan.word[i].factor.tau = sol.x[2 * i + 1];
    }
    plan.gamma_wait = sol.x.back();
    plan.objective_history = sol.history;
    plan.bang = assemble_bang(plan.word, sol.x, &plan.pulses);
    plan.residual = projected_residual(sys, plan.bang, plan.cutoff, psi0, psi1, big_n);
    const double robust = projected_residual(sys, plan.bang, plan.cutoff + 8, psi0, psi1, big_n);
    plan.residuals = {{plan.cutoff, plan.residual}, {plan.cutoff + 8, robust}};
    plan.success = plan.residual <= opt.tol && robust <= opt.tol;

    nlohmann::json budget = {{"pulse_errors_sum", budget_pulses},
                             {"bang_conversion_error", bang_error},
                             {"planned_residual", planned_residual},
                             {"solver_tol", opt.tol},
                             {"bound", budget_pulses + bang_error + opt.tol},
                             {"within_bound", plan.residual <= budget_pulses + bang_error + opt.tol}};
    plan.certificate = {{"lie_galerkin", cert.to_json()},
                        {"completion_defect", (m * p0 - chi).norm()},
                        {"completion_det", {m.determinant().real(), m.determinant().imag()}},
                        {"word_defect", (word_unitary(word) * p0 - chi).norm()},
                        {"chi", complex_list(chi)},
                        {"recurrence_wait_error", rw.error},
                        {"recurrence_wait_found", rw.found},
                        {"solver", {{"iterations", sol.iterations}, {"restarts_used", sol.restarts_used}}},
                        {"budget", budget},
                        {"options",
                         {{"delta", opt.delta},
                          {"nu", opt.nu},
                          {"pulse_tol", opt.pulse_tol},
                          {"samples_per_period", opt.samples_per_period},
                          {"bang_interval", opt.bang_interval},
                          {"max_iterations", opt.max_iterations},
                          {"restarts", opt.restarts},
                          {"fd_step", opt.fd_step}}}};
    return plan;
}

}  // namespace lgc
