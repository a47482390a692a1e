// spectral.hpp: gap tables, gap selections E_sigma(M), the decoupled gap set
// Xi_n and the commutator check [Pi_n, E_sigma(H1^(N))] = 0.

#pragma once

#include "lgc/linalg.hpp"
#include "lgc/model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lgc {

inline constexpr double kGapTol = 1e-9;
inline constexpr double kGapWarnTol = 1e-6;
inline constexpr int kTailCap = 1000000;

inline bool same_gap(double x, double y) noexcept { return std::abs(x - y) <= kGapTol; }

struct GapTable {
    int n = 0;
    std::vector<double> gaps;                                // ascending, deduplicated
    std::vector<std::vector<std::pair<int, int>>> pairs;     // (l, k), l > k, per gap
    std::vector<std::pair<double, double>> near_coincidences;

    std::optional<std::size_t> find(double sigma) const {
        for (std::size_t i = 0; i < gaps.size(); ++i)
            if (same_gap(gaps[i], sigma)) return i;
        return std::nullopt;
    }
    bool contains(double sigma) const { return find(sigma).has_value(); }
    double max_gap() const { return gaps.empty() ? 0.0 : gaps.back(); }
};

inline GapTable gap_table(const SystemModel& sys, int n) {
    if (n < 1) throw input_error("gap_table: n must be >= 1");
    const auto lam = sys.eigenvalues(n);
    struct Item {
        double gap;
        int l, k;
    };
    std::vector<Item> items;
    items.push_back({0.0, 0, 0});
    for (int l = 1; l <= n; ++l)
        for (int k = 1; k < l; ++k) items.push_back({std::abs(lam[l - 1] - lam[k - 1]), l, k});
    std::stable_sort(items.begin(), items.end(), [](const Item& x, const Item& y) { return x.gap < y.gap; });

    GapTable t;
    t.n = n;
    for (const auto& it : items) {
        if (t.gaps.empty() || !same_gap(it.gap, t.gaps.back())) {
            if (!t.gaps.empty() && std::abs(it.gap - t.gaps.back()) < kGapWarnTol) {
                t.near_coincidences.emplace_back(t.gaps.back(), it.gap);
            }
            t.gaps.push_back(it.gap);
            t.pairs.emplace_back();
        }
        if (it.l != 0) t.pairs.back().emplace_back(it.l, it.k);
    }
    return t;
}

// E_sigma(M): keep entry (l,k) iff | |lambda_l - lambda_k| - sigma | <= kGapTol.
inline Mat select(const Mat& m, double sigma, std::span<const double> eigenvalues) {
    if (m.rows() != m.cols()) throw input_error("select: matrix must be square");
    if (static_cast<std::size_t>(m.rows()) > eigenvalues.size()) {
        throw input_error("select: more rows than available eigenvalues");
    }
    Mat out = Mat::Zero(m.rows(), m.cols());
    for (Eigen::Index l = 0; l < m.rows(); ++l)
        for (Eigen::Index k = 0; k < m.cols(); ++k)
            if (same_gap(std::abs(eigenvalues[l] - eigenvalues[k]), sigma)) out(l, k) = m(l, k);
    return out;
}

struct GapSelection {
    double sigma = 0.0;
    Mat matrix;
    bool in_sigma_n = false;
    bool in_xi_n = false;
};

// Index L such that min_{k<=n} |lambda_l - lambda_k| > threshold for every l > L.
// Finite systems return their dimension; otherwise a tail declaration is required.
inline int tail_cutoff(const SystemModel& sys, int n, double threshold) {
    const auto dim = sys.dimension();
    if (dim) return *dim;
    if (!sys.tail) {
        throw computation_error("undecidable tail: system has no tail declaration (\"tail\": {\"monotone_from\": m})");
    }
    const auto lam = sys.eigenvalues(n);
    const double top = *std::max_element(lam.begin(), lam.end());
    const int start = std::max(n + 1, sys.tail->monotone_from);
    for (int l = n + 1; l <= kTailCap; ++l) {
        const double v = sys.eigenvalue(l);
        if (l >= start && v >= top) {
            double gap = std::numeric_limits<double>::infinity();
            for (double x : lam) gap = std::min(gap, std::abs(v - x));
            if (gap > threshold) return l - 1;
        }
    }
    throw computation_error("tail cutoff exceeds " + std::to_string(kTailCap) + " levels");
}

struct XiExclusion {
    double sigma = 0.0;
    int k = 0;  // level <= n
    int l = 0;  // level > n
};

struct XiSet {
    int n = 0;
    GapTable sigma_n;
    std::vector<double> xi;
    std::vector<XiExclusion> excluded;
    int tail_cutoff = 0;
    std::vector<std::string> warnings;

    bool contains(double sigma) const {
        return std::any_of(xi.begin(), xi.end(), [&](double s) { return same_gap(s, sigma); });
    }

    nlohmann::json to_json() const {
        nlohmann::json ex = nlohmann::json::array();
        for (const auto& e : excluded) ex.push_back({{"sigma", e.sigma}, {"witness", {e.k, e.l}}});
        return {{"n", n},       {"sigma_n", sigma_n.gaps}, {"xi_n", xi},
                {"excluded", ex}, {"tail_cutoff", tail_cutoff}, {"gap_tol", kGapTol},
                {"warnings", warnings}};
    }
};

// Xi_n: gaps of Sigma_n not realized by any coupling between levels <= n and
// levels > n. Boundary-crossing pairs are enumerated from the coupling support;
// the tail cutoff certifies that no pair beyond it can carry a gap of Sigma_n.
inline XiSet xi_set(const SystemModel& sys, int n) {
    XiSet out;
    out.n = n;
    out.sigma_n = gap_table(sys, n);
    out.tail_cutoff = tail_cutoff(sys, n, out.sigma_n.max_gap() + kGapTol);
    for (const auto& [a, b] : out.sigma_n.near_coincidences) {
        out.warnings.push_back("near-coincident gaps " + std::to_string(a) + " and " + std::to_string(b));
    }
    std::vector<bool> keep(out.sigma_n.gaps.size(), true);
    for (int k = 1; k <= n; ++k) {
        for (int l : sys.coupled_levels(k)) {
            if (l <= n) continue;
            const double g = std::abs(sys.eigenvalue(l) - sys.eigenvalue(k));
            for (std::size_t i = 0; i < out.sigma_n.gaps.size(); ++i) {
                const double d = std::abs(g - out.sigma_n.gaps[i]);
                if (d <= kGapTol) {
                    if (keep[i]) out.excluded.push_back({out.sigma_n.gaps[i], k, l});
                    keep[i] = false;
                } else if (d < kGapWarnTol) {
                    out.warnings.push_back("boundary pair (" + std::to_string(k) + "," + std::to_string(l) +
                                           ") nearly resonant with gap " + std::to_string(out.sigma_n.gaps[i]));
                }
            }
        }
    }
    for (std::size_t i = 0; i < keep.size(); ++i)
        if (keep[i]) out.xi.push_back(out.sigma_n.gaps[i]);
    std::sort(out.excluded.begin(), out.excluded.end(),
              [](const XiExclusion& x, const XiExclusion& y) { return x.sigma < y.sigma; });
    return out;
}

inline GapSelection selection(const SystemModel& sys, int n, const Mat& m, double sigma) {
    const auto lam = sys.eigenvalues(static_cast<int>(m.rows()));
    GapSelection s;
    s.sigma = sigma;
    s.matrix = select(m, sigma, lam);
    s.in_sigma_n = gap_table(sys, n).contains(sigma);
    s.in_xi_n = s.in_sigma_n && xi_set(sys, n).contains(sigma);
    return s;
}

// ||[Pi_n, E_sigma(H1^(N))]||, zero whenever sigma belongs to Xi_n.
inline double decoupling_check(const SystemModel& sys, int n, double sigma, int big_n) {
    if (big_n <= n) throw input_error("decoupling_check: N must exceed n");
    const GalerkinPair g = truncate(sys, big_n);
    const auto lam = sys.eigenvalues(big_n);
    const Mat e = select(g.h1, sigma, lam);
    Mat proj = Mat::Zero(big_n, big_n);
    for (int k = 0; k < n; ++k) proj(k, k) = 1.0;
    const Mat c = proj * e - e * proj;
    if (c.cwiseAbs().maxCoeff() == 0.0) return 0.0;
    return op_norm(c);
}

}  // namespace lgc
