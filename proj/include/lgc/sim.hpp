// sim.hpp: piecewise-constant controls, exact propagators at finite cutoff,
// the interaction frame Theta(t) = e^{-tA} B e^{tA} and its propagators.
//
// Time is dimensionless (hbar = 1). Level k of the system is row k-1.

#pragma once

#include "lgc/linalg.hpp"
#include "lgc/model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace lgc {

inline constexpr double kUnitarityTol = 1e-10;
inline constexpr double kStepTol = 1e-9;

struct Segment {
    double duration = 0.0;
    double value = 0.0;
};

// Either an interval [lo, hi] or the two-point set {0, a}.
struct ValueRange {
    bool two_value = false;
    double lo = 0.0;
    double hi = 1.0;
    double a = 1.0;

    static ValueRange interval(double lo, double hi) { return {false, lo, hi, 0.0}; }
    static ValueRange two_point(double a) { return {true, 0.0, a, a}; }

    bool contains(double v) const {
        if (two_value) return v == 0.0 || v == a;
        return v >= lo && v <= hi;
    }
};

struct PiecewiseConstantControl {
    std::vector<Segment> segments;
    ValueRange range = ValueRange::interval(-1e300, 1e300);

    double total_time() const {
        CompensatedSum s;
        for (const auto& seg : segments) s.add(seg.duration);
        return s.value();
    }

    double l1_norm() const {
        CompensatedSum s;
        for (const auto& seg : segments) s.add(seg.duration * std::abs(seg.value));
        return s.value();
    }

    double max_value() const {
        double m = 0.0;
        for (const auto& seg : segments) m = std::max(m, seg.value);
        return m;
    }

    // Cumulative switching times 0 = t_0 < t_1 < ... < t_m = total_time.
    std::vector<double> breakpoints() const {
        std::vector<double> out{0.0};
        CompensatedSum s;
        for (const auto& seg : segments) {
            s.add(seg.duration);
            out.push_back(s.value());
        }
        return out;
    }

    void validate() const {
        for (std::size_t i = 0; i < segments.size(); ++i) {
            const auto& seg = segments[i];
            if (!(seg.duration > 0.0) || !std::isfinite(seg.duration)) {
                throw input_error("control: segment " + std::to_string(i + 1) + " has non-positive duration");
            }
            if (!std::isfinite(seg.value)) throw input_error("control: segment " + std::to_string(i + 1) + " value");
            if (!range.contains(seg.value)) {
                throw input_error("control: value " + std::to_string(seg.value) + " of segment " +
                                  std::to_string(i + 1) + " outside the declared range");
            }
        }
    }

    // Restriction to [0, t).
    PiecewiseConstantControl prefix(double t) const {
        PiecewiseConstantControl out;
        out.range = range;
        double start = 0.0;
        for (const auto& seg : segments) {
            if (start >= t) break;
            const double d = std::min(seg.duration, t - start);
            if (d > 0.0) out.segments.push_back({d, seg.value});
            start += seg.duration;
        }
        return out;
    }

    PiecewiseConstantControl& append(const PiecewiseConstantControl& other) {
        segments.insert(segments.end(), other.segments.begin(), other.segments.end());
        return *this;
    }
};

struct StateVector {
    Vec coefficients;

    int cutoff() const noexcept { return static_cast<int>(coefficients.size()); }
    double norm() const { return coefficients.norm(); }

    static StateVector basis(int cutoff, int level) {
        if (level < 1 || level > cutoff) throw input_error("basis state level outside 1..cutoff");
        StateVector s{Vec::Zero(cutoff)};
        s.coefficients(level - 1) = 1.0;
        return s;
    }

    // Zero-padded or truncated copy; truncation must not drop mass.
    StateVector resized(int cutoff) const {
        StateVector s{Vec::Zero(cutoff)};
        const int keep = std::min(cutoff, this->cutoff());
        s.coefficients.head(keep) = coefficients.head(keep);
        if (keep < this->cutoff() && coefficients.tail(this->cutoff() - keep).norm() > 0.0) {
            throw input_error("state has support beyond cutoff " + std::to_string(cutoff));
        }
        return s;
    }

    // Largest level with a nonzero coefficient (0 for the zero vector).
    int support() const {
        for (int k = cutoff(); k >= 1; --k)
            if (coefficients(k - 1) != cplx{}) return k;
        return 0;
    }
};

enum class Semantics {
    bilinear,   // exp(t (A + u B)) for any real value u
    two_value,  // H(0), H(1) directly; values restricted to {0, 1}
};

// Exponentials of A + u B at a fixed cutoff, cached per control value.
class SegmentPropagator {
public:
    SegmentPropagator(const SystemModel& sys, int cutoff) : cutoff_(cutoff) {
        if (cutoff < 1) throw input_error("cutoff must be >= 1");
        const GalerkinPair g = truncate(sys, cutoff);
        lambda_ = g.h0.diagonal().real();
        coupling_ = g.h1 - g.h0;
    }

    int cutoff() const noexcept { return cutoff_; }

    template <class Derived>
    void apply(const Segment& seg, Eigen::MatrixBase<Derived>& psi) {
        if (seg.value == 0.0) {
            Vec ph(cutoff_);
            for (int k = 0; k < cutoff_; ++k) ph(k) = std::polar(1.0, -lambda_(k) * seg.duration);
            psi = ph.asDiagonal() * psi;
            return;
        }
        exp_for(seg.value).apply(seg.duration, psi);
    }

    Mat matrix(const Segment& seg) {
        Mat m = Mat::Identity(cutoff_, cutoff_);
        apply(seg, m);
        return m;
    }

private:
    const HermitianExp& exp_for(double u) {
        auto it = cache_.find(u);
        if (it == cache_.end()) {
            Mat h = coupling_ * u;
            h.diagonal() += lambda_.cast<cplx>();
            it = cache_.emplace(u, HermitianExp(h)).first;
        }
        return it->second;
    }

    int cutoff_;
    RVec lambda_;
    Mat coupling_;
    std::map<double, HermitianExp> cache_;
};

inline void check_semantics(const PiecewiseConstantControl& control, Semantics sem) {
    control.validate();
    if (sem == Semantics::two_value) {
        for (const auto& seg : control.segments) {
            if (seg.value != 0.0 && seg.value != 1.0) {
                throw input_error("two-value semantics requires control values in {0, 1}, got " +
                                  std::to_string(seg.value));
            }
        }
    }
}

inline StateVector propagate(const SystemModel& sys, const PiecewiseConstantControl& control, int cutoff,
                             const StateVector& state, Semantics sem = Semantics::bilinear) {
    if (state.cutoff() != cutoff) {
        throw input_error("state cutoff " + std::to_string(state.cutoff()) + " differs from cutoff " +
                          std::to_string(cutoff));
    }
    check_semantics(control, sem);
    SegmentPropagator prop(sys, cutoff);
    Vec psi = state.coefficients;
    for (const auto& seg : control.segments) prop.apply(seg, psi);
    return {psi};
}

inline Mat propagator_matrix(const SystemModel& sys, const PiecewiseConstantControl& control, int cutoff,
                             Semantics sem = Semantics::bilinear) {
    check_semantics(control, sem);
    SegmentPropagator prop(sys, cutoff);
    Mat p = Mat::Identity(cutoff, cutoff);
    for (const auto& seg : control.segments) prop.apply(seg, p);
    return p;
}

// Theta^(N)(t): entries b_{jk} e^{i (lambda_j - lambda_k) t}.
inline Mat theta(const SystemModel& sys, double t, int big_n) {
    if (big_n < 1) throw input_error("theta: N must be >= 1");
    const GalerkinPair g = truncate(sys, big_n);
    Mat th = g.b;
    for (int j = 0; j < big_n; ++j)
        for (int k = 0; k < big_n; ++k)
            if (th(j, k) != cplx{}) th(j, k) *= std::polar(1.0, (g.h0(j, j).real() - g.h0(k, k).real()) * t);
    return th;
}

// ------------------------------ interaction frame ---------------------------

namespace detail {

// Fourth-order Magnus step for X' = v Theta(t) X with constant v.
class MagnusStepper {
public:
    MagnusStepper(const SystemModel& sys, int big_n) {
        const GalerkinPair g = truncate(sys, big_n);
        b_ = g.b;
        lambda_ = g.h0.diagonal().real();
    }

    Mat theta_at(double t) const {
        Mat th = b_;
        for (Eigen::Index j = 0; j < th.rows(); ++j)
            for (Eigen::Index k = 0; k < th.cols(); ++k)
                if (th(j, k) != cplx{}) th(j, k) *= std::polar(1.0, (lambda_(j) - lambda_(k)) * t);
        return th;
    }

    Mat step(double t0, double h, double v) const {
        const double c = std::sqrt(3.0) / 6.0;
        const Mat a1 = v * theta_at(t0 + (0.5 - c) * h);
        const Mat a2 = v * theta_at(t0 + (0.5 + c) * h);
        const Mat omega = (0.5 * h) * (a1 + a2) + (std::sqrt(3.0) / 12.0 * h * h) * (a2 * a1 - a1 * a2);
        return expm_skew(omega);
    }

    // X <- X_{t1,t0} X over [t0, t1] with constant v, adaptive step doubling.
    void advance(Mat& x, double t0, double t1, double v, double step_tol, double& h) const {
        if (v == 0.0 || b_.cwiseAbs().maxCoeff() == 0.0 || t1 <= t0) return;
        double t = t0;
        if (!(h > 0.0)) h = std::min(t1 - t0, 0.05);
        while (t < t1) {
            const double hh = std::min(h, t1 - t);
            const Mat full = step(t, hh, v);
            const Mat half = step(t + 0.5 * hh, 0.5 * hh, v) * step(t, 0.5 * hh, v);
            const double err = (full - half).cwiseAbs().maxCoeff();
            if (err <= step_tol) {
                x = half * x;
                t += hh;
                const double grow = err > 0.0 ? 0.9 * std::pow(step_tol / err, 0.2) : 2.0;
                if (hh == h) h = hh * std::min(2.0, std::max(1.0, grow));
            } else {
                h = hh * std::max(0.2, 0.9 * std::pow(step_tol / err, 0.2));
                if (h < 1e-14 * (1.0 + std::abs(t))) throw computation_error("interaction_propagator: step underflow");
            }
        }
    }

private:
    Mat b_;
    RVec lambda_;
};

}  // namespace detail

// X^(N)_{t,s}(v): solution of X' = v(t) Theta^(N)(t) X, X(s) = I.
inline Mat interaction_propagator(const SystemModel& sys, const PiecewiseConstantControl& v, int big_n, double s,
                                  double t, double step_tol = kStepTol) {
    v.validate();
    const double total = v.total_time();
    if (!(s >= 0.0 && s <= t && t <= total * (1.0 + 1e-14) + 1e-300)) {
        throw input_error("interaction_propagator: need 0 <= s <= t <= total time");
    }
    const detail::MagnusStepper stepper(sys, big_n);
    Mat x = Mat::Identity(big_n, big_n);
    const auto bp = v.breakpoints();
    double h = 0.0;
    for (std::size_t i = 0; i < v.segments.size(); ++i) {
        const double lo = std::max(bp[i], s);
        const double hi = std::min(bp[i + 1], t);
        if (hi > lo) stepper.advance(x, lo, hi, v.segments[i].value, step_tol, h);
    }
    return x;
}

// X^(N)_{t,0}(v) at each of the sorted times.
inline std::vector<Mat> interaction_path(const SystemModel& sys, const PiecewiseConstantControl& v, int big_n,
                                         const std::vector<double>& times, double step_tol = kStepTol) {
    v.validate();
    if (!std::is_sorted(times.begin(), times.end())) throw input_error("interaction_path: times must be sorted");
    const detail::MagnusStepper stepper(sys, big_n);
    const auto bp = v.breakpoints();
    std::vector<Mat> out;
    Mat x = Mat::Identity(big_n, big_n);
    double now = 0.0;
    double h = 0.0;
    std::size_t seg = 0;
    for (double target : times) {
        if (target < 0.0 || target > bp.back() * (1.0 + 1e-14)) throw input_error("interaction_path: time outside control");
        while (now < target) {
            while (seg < v.segments.size() && bp[seg + 1] <= now) ++seg;
            if (seg >= v.segments.size()) break;
            const double hi = std::min(bp[seg + 1], target);
            stepper.advance(x, now, hi, v.segments[seg].value, step_tol, h);
            now = hi;
        }
        out.push_back(x);
    }
    return out;
}

// | D_h <psi, e^{-tA} Y_t phi> + <u(t) Theta(t) psi, e^{-tA} Y_t phi> |, D_h the
// central difference with step h.
inline double interaction_derivative_check(const SystemModel& sys, const PiecewiseConstantControl& control, int cutoff,
                                           const StateVector& psi, const StateVector& phi, double t, double h) {
    control.validate();
    if (psi.cutoff() != cutoff || phi.cutoff() != cutoff) throw input_error("states must match the cutoff");
    const auto bp = control.breakpoints();
    std::size_t seg = 0;
    while (seg + 1 < bp.size() && bp[seg + 1] <= t) ++seg;
    if (seg >= control.segments.size() || t - h <= bp[seg] || t + h >= bp[seg + 1]) {
        throw input_error("interaction_derivative_check: t +- h must lie inside one control segment");
    }
    const auto lam = sys.eigenvalues(cutoff);
    auto frame_state = [&](double time) {
        Vec y = propagate(sys, control.prefix(time), cutoff, phi).coefficients;
        for (int k = 0; k < cutoff; ++k) y(k) *= std::polar(1.0, lam[k] * time);  // e^{-tA}
        return y;
    };
    const cplx fp = psi.coefficients.dot(frame_state(t + h));
    const cplx fm = psi.coefficients.dot(frame_state(t - h));
    const cplx deriv = (fp - fm) / (2.0 * h);
    const Vec u_theta_psi = control.segments[seg].value * (theta(sys, t, cutoff) * psi.coefficients);
    const cplx rhs = u_theta_psi.dot(frame_state(t));
    return std::abs(deriv + rhs);
}

struct TailSample {
    int cutoff = 0;
    Vec projected;
};

// Pi_n of the propagated state at each cutoff.
inline std::vector<TailSample> tail_scan(const SystemModel& sys, const PiecewiseConstantControl& control,
                                         const std::vector<int>& cutoffs, int observable_n, const StateVector& state,
                                         Semantics sem = Semantics::bilinear) {
    if (cutoffs.empty()) return {};
    if (!std::is_sorted(cutoffs.begin(), cutoffs.end()) ||
        std::adjacent_find(cutoffs.begin(), cutoffs.end()) != cutoffs.end()) {
        throw input_error("tail_scan: cutoffs must be strictly increasing");
    }
    if (cutoffs.front() <= observable_n) throw input_error("tail_scan: cutoffs must exceed the observable level");
    std::vector<TailSample> out;
    for (int c : cutoffs) {
        const StateVector fin = propagate(sys, control, c, state.resized(c), sem);
        out.push_back({c, fin.coefficients.head(observable_n)});
    }
    return out;
}

// ------------------------------ file formats --------------------------------

inline PiecewiseConstantControl control_from_json(const nlohmann::json& doc) {
    PiecewiseConstantControl c;
    try {
        for (const auto& s : doc.at("segments")) {
            if (!s.is_array() || s.size() != 2) throw input_error("control: each segment must be [duration, value]");
            c.segments.push_back({s[0].get<double>(), s[1].get<double>()});
        }
        if (doc.contains("range")) {
            const auto& r = doc.at("range");
            if (r.is_array()) {
                if (r.size() != 2) throw input_error("control: range must be [lo, hi]");
                c.range = ValueRange::interval(r[0].get<double>(), r[1].get<double>());
            } else {
                c.range = ValueRange::two_point(r.at("two_value").get<double>());
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw input_error(std::string("control: malformed document: ") + e.what());
    }
    c.validate();
    return c;
}

inline nlohmann::json control_to_json(const PiecewiseConstantControl& c) {
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& s : c.segments) segs.push_back({s.duration, s.value});
    nlohmann::json doc{{"segments", segs}};
    if (c.range.two_value) {
        doc["range"] = {{"two_value", c.range.a}};
    } else {
        doc["range"] = {c.range.lo, c.range.hi};
    }
    return doc;
}

inline StateVector state_from_json(const nlohmann::json& doc) {
    StateVector s;
    try {
        const auto& co = doc.at("coefficients");
        const int n = doc.contains("cutoff") ? doc.at("cutoff").get<int>() : static_cast<int>(co.size());
        if (n < static_cast<int>(co.size())) throw input_error("state: more coefficients than cutoff");
        s.coefficients = Vec::Zero(n);
        for (std::size_t k = 0; k < co.size(); ++k) {
            const auto& c = co[k];
            if (c.is_number()) {
                s.coefficients(static_cast<Eigen::Index>(k)) = c.get<double>();
            } else {
                if (!c.is_array() || c.size() != 2) throw input_error("state: coefficients are [re, im]");
                s.coefficients(static_cast<Eigen::Index>(k)) = {c[0].get<double>(), c[1].get<double>()};
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw input_error(std::string("state: malformed document: ") + e.what());
    }
    return s;
}

inline nlohmann::json state_to_json(const StateVector& s) {
    nlohmann::json co = nlohmann::json::array();
    for (Eigen::Index k = 0; k < s.coefficients.size(); ++k)
        co.push_back({s.coefficients(k).real(), s.coefficients(k).imag()});
    return {{"cutoff", s.cutoff()}, {"coefficients", co}};
}

inline nlohmann::json read_json_file(const std::string& path, const std::string& what) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open " + what + " file " + path);
    try {
        nlohmann::json doc;
        in >> doc;
        return doc;
    } catch (const nlohmann::json::exception& e) {
        throw input_error(what + " file " + path + ": " + e.what());
    }
}

inline void write_json_file(const std::string& path, const nlohmann::json& doc) {
    std::ofstream out(path);
    if (!out) throw input_error("cannot write " + path);
    out << doc.dump(2) << '\n';
}

}  // namespace lgc
