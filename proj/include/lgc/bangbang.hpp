// bangbang.hpp: conversion of small-amplitude piecewise-constant controls
// into {0, a}-valued ones with the same mass on each of k equal intervals,
// and the harness comparing the interaction propagators of both.

#pragma once

#include "lgc/linalg.hpp"
#include "lgc/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace lgc {

namespace detail {

// Integral of u over [lo, hi), exact up to compensated rounding.
inline double mass_between(const PiecewiseConstantControl& u, const std::vector<double>& bp, double lo, double hi) {
    CompensatedSum s;
    auto first = std::upper_bound(bp.begin(), bp.end(), lo);
    std::size_t i = first == bp.begin() ? 0 : static_cast<std::size_t>(first - bp.begin() - 1);
    for (; i < u.segments.size() && bp[i] < hi; ++i) {
        const double a = std::max(bp[i], lo);
        const double b = std::min(bp[i + 1], hi);
        if (b > a) s.add((b - a) * u.segments[i].value);
    }
    return s.value();
}

}  // namespace detail

// w_k: on each I_h = [hT/k, (h+1)T/k) value 0 for T/k - U_h/a, then a for
// U_h/a, where U_h is the mass of u on I_h. Zero-length pieces are dropped.
inline PiecewiseConstantControl bangbangify(const PiecewiseConstantControl& u, double a, int k) {
    u.validate();
    if (k < 1) throw input_error("bangbangify: k must be >= 1");
    if (!(a > 0.0)) throw input_error("bangbangify: a must be positive");
    if (u.segments.empty()) throw input_error("bangbangify: control has zero length");
    double top = 0.0;
    for (const auto& seg : u.segments) {
        if (seg.value < 0.0) throw input_error("bangbangify: control values must be nonnegative");
        top = std::max(top, seg.value);
    }
    if (a < top) throw input_error("bangbangify: a must be at least the largest control value");

    const double total = u.total_time();
    const double width = total / k;
    const double negligible = 4.0 * std::numeric_limits<double>::epsilon() * width;
    const auto bp = u.breakpoints();
    PiecewiseConstantControl w;
    w.range = ValueRange::two_point(a);
    for (int h = 0; h < k; ++h) {
        const double lo = total * h / k;
        const double hi = h + 1 == k ? bp.back() : total * (h + 1) / k;
        const double mass = detail::mass_between(u, bp, lo, hi);
        const double on = std::min(mass / a, hi - lo);
        const double off = (hi - lo) - on;
        if (off > negligible) w.segments.push_back({off, 0.0});
        if (on > 0.0) w.segments.push_back({on, a});
    }
    return w;
}

// Primitive t -> int_0^t u at sorted times.
inline std::vector<double> primitive_at(const PiecewiseConstantControl& u, const std::vector<double>& times) {
    std::vector<double> out;
    out.reserve(times.size());
    CompensatedSum acc;
    double start = 0.0;
    CompensatedSum clock;
    std::size_t seg = 0;
    for (double t : times) {
        while (seg < u.segments.size() && start + u.segments[seg].duration <= t) {
            acc.add(u.segments[seg].duration * u.segments[seg].value);
            clock.add(u.segments[seg].duration);
            start = clock.value();
            ++seg;
        }
        double v = acc.value();
        if (seg < u.segments.size() && t > start) v += (t - start) * u.segments[seg].value;
        out.push_back(v);
    }
    return out;
}

// sup_t |int_0^t (u - w)| over the breakpoints of both controls plus a grid of
// 10 x (segment count) points.
inline double primitive_error(const PiecewiseConstantControl& u, const PiecewiseConstantControl& w) {
    const double tu = u.total_time();
    const double tw = w.total_time();
    if (std::abs(tu - tw) > 1e-12 * std::max(1.0, tu)) throw input_error("primitive_error: horizons differ");
    std::vector<double> times = u.breakpoints();
    const auto bw = w.breakpoints();
    times.insert(times.end(), bw.begin(), bw.end());
    const std::size_t grid = 10 * (u.segments.size() + w.segments.size());
    for (std::size_t i = 0; i <= grid; ++i) times.push_back(tu * static_cast<double>(i) / static_cast<double>(grid));
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    const auto pu = primitive_at(u, times);
    const auto pw = primitive_at(w, times);
    double worst = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) worst = std::max(worst, std::abs(pu[i] - pw[i]));
    return worst;
}

// Masses of u - w on the k equal intervals of [0, T).
inline std::vector<double> interval_mass_defects(const PiecewiseConstantControl& u, const PiecewiseConstantControl& w,
                                                 int k) {
    const double total = u.total_time();
    const auto bu = u.breakpoints();
    const auto bw = w.breakpoints();
    std::vector<double> out;
    for (int h = 0; h < k; ++h) {
        const double lo = total * h / k;
        const double hi = h + 1 == k ? std::max(bu.back(), bw.back()) : total * (h + 1) / k;
        out.push_back(detail::mass_between(u, bu, lo, hi) - detail::mass_between(w, bw, lo, hi));
    }
    return out;
}

struct ConvergenceRow {
    int k = 0;
    double primitive_error = 0.0;
    double propagator_error = 0.0;
};

// For each k: primitive error of w_k and max over grid pairs s <= t of
// || X_{t,s}(w_k) - X_{t,s}(u) ||.
inline std::vector<ConvergenceRow> convergence_run(const SystemModel& sys, const PiecewiseConstantControl& u, double a,
                                                   const std::vector<int>& ks, int big_n, int grid_points = 11,
                                                   double step_tol = kStepTol) {
    if (!std::is_sorted(ks.begin(), ks.end())) throw input_error("convergence_run: ks must be increasing");
    if (grid_points < 2) throw input_error("convergence_run: grid needs at least 2 points");
    const double total = u.total_time();
    std::vector<double> times;
    for (int i = 0; i < grid_points; ++i) times.push_back(total * i / (grid_points - 1));
    const auto ref = interaction_path(sys, u, big_n, times, step_tol);

    std::vector<ConvergenceRow> rows;
    for (int k : ks) {
        const auto w = bangbangify(u, a, k);
        std::vector<double> tw = times;
        tw.back() = std::min(tw.back(), w.total_time());
        const auto path = interaction_path(sys, w, big_n, tw, step_tol);
        double worst = 0.0;
        for (int i = 0; i < grid_points; ++i)
            for (int j = i + 1; j < grid_points; ++j)
                worst = std::max(worst, op_norm(path[j] * path[i].adjoint() - ref[j] * ref[i].adjoint()));
        rows.push_back({k, primitive_error(u, w), worst});
    }
    return rows;
}

}  // namespace lgc
