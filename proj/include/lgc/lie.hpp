// lie.hpp: generator collections M_n, W_n, V_n, bracket closure of their
// real span, the su(n) containment test and connectedness chains.
//
// Skew-Hermitian n x n matrices are handled as real vectors of length 2n^2
// (real parts then imaginary parts), for which the Euclidean inner product is
// Re tr(X^† Y).

#pragma once

#include "lgc/linalg.hpp"
#include "lgc/model.hpp"
#include "lgc/spectral.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace lgc {

inline constexpr double kRankTol = 1e-9;

inline Mat bracket(const Mat& x, const Mat& y) { return commutator(x, y); }

struct GeneratorSet {
    std::string collection;  // "M_n", "W_n" or "V_n"
    int n = 0;
    std::vector<Mat> mats;
    std::vector<std::string> tags;

    void add(Mat m, std::string tag) {
        mats.push_back(std::move(m));
        tags.push_back(std::move(tag));
    }
};

namespace detail {

inline std::string gap_tag(const char* prefix, double sigma) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s(%.12g)", prefix, sigma);
    return buf;
}

}  // namespace detail

// { i h0^(n) } u { i E_sigma(h1^(n)) : sigma in Xi_n }
inline GeneratorSet build_Mn(const SystemModel& sys, int n) {
    const XiSet xi = xi_set(sys, n);
    const GalerkinPair g = truncate(sys, n);
    const auto lam = sys.eigenvalues(n);
    GeneratorSet out{"M_n", n, {}, {}};
    out.add(kI * g.h0, "i*H0");
    for (double s : xi.xi) out.add(kI * select(g.h1, s, lam), detail::gap_tag("i*E", s));
    return out;
}

// { a } u { E_0(b) } u { E_0(b) + nu E_sigma(b) : sigma in Xi_n \ {0}, nu in nus }
inline GeneratorSet build_Wn(const SystemModel& sys, int n, const std::vector<double>& nus) {
    for (double nu : nus) {
        if (!(nu > -0.5 && nu < 0.5)) throw input_error("build_Wn: nu must lie in the open interval (-1/2, 1/2)");
    }
    const XiSet xi = xi_set(sys, n);
    const GalerkinPair g = truncate(sys, n);
    const auto lam = sys.eigenvalues(n);
    GeneratorSet out{"W_n", n, {}, {}};
    out.add(g.a, "A");
    const Mat e0 = select(g.b, 0.0, lam);
    out.add(e0, "E0(B)");
    for (double s : xi.xi) {
        if (same_gap(s, 0.0)) continue;
        const Mat es = select(g.b, s, lam);
        for (double nu : nus) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "E0(B)+%.6g*E(%.12g)(B)", nu, s);
            out.add(e0 + nu * es, buf);
        }
    }
    return out;
}

// { a } u { E_sigma(b) : sigma in Xi_n }
inline GeneratorSet build_Vn(const SystemModel& sys, int n) {
    const XiSet xi = xi_set(sys, n);
    const GalerkinPair g = truncate(sys, n);
    const auto lam = sys.eigenvalues(n);
    GeneratorSet out{"V_n", n, {}, {}};
    out.add(g.a, "A");
    for (double s : xi.xi) out.add(select(g.b, s, lam), detail::gap_tag("E", s) + "(B)");
    return out;
}

namespace detail {

inline RVec flatten(const Mat& m) {
    const Eigen::Index sz = m.size();
    RVec v(2 * sz);
    for (Eigen::Index i = 0; i < sz; ++i) {
        v(i) = m.data()[i].real();
        v(sz + i) = m.data()[i].imag();
    }
    return v;
}

inline Mat unflatten(const RVec& v, Eigen::Index n) {
    Mat m(n, n);
    const Eigen::Index sz = n * n;
    for (Eigen::Index i = 0; i < sz; ++i) m.data()[i] = {v(i), v(sz + i)};
    return m;
}

// Orthonormal set with twice-applied modified Gram-Schmidt.
class OrthoBasis {
public:
    // Residual of v after projection onto the span.
    RVec residual(RVec v) const {
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& q : vecs_) v -= q.dot(v) * q;
        return v;
    }
    // Admits v if its residual exceeds tol; returns whether it was admitted.
    bool admit(const RVec& v, double tol) {
        RVec r = residual(v);
        const double nr = r.norm();
        if (!(nr > tol)) return false;
        vecs_.push_back(r / nr);
        return true;
    }
    std::size_t size() const noexcept { return vecs_.size(); }
    const RVec& operator[](std::size_t i) const { return vecs_[i]; }

private:
    std::vector<RVec> vecs_;
};

}  // namespace detail

struct AlgebraBasis {
    int n = 0;
    std::vector<Mat> basis;
    int dim = 0;
    int depth_used = 0;
    std::string generators_tag;
    bool closed = false;
    double scale = 0.0;      // largest candidate norm seen; tolerances are relative to it
    double rank_tol = kRankTol;
};

// Real Lie algebra generated by the given skew-Hermitian matrices.
//
// Rounds of brackets between the elements admitted in the previous round and
// the whole basis; stops when a round admits nothing (closed), when the basis
// fills u(n), or after depth_cap rounds.
inline AlgebraBasis generated_algebra(const GeneratorSet& gens, int depth_cap = -1, double rank_tol = kRankTol) {
    if (gens.mats.empty()) throw input_error("generated_algebra: empty generator set");
    const Eigen::Index n = gens.mats.front().rows();
    for (const auto& g : gens.mats) {
        if (g.rows() != n || g.cols() != n) throw input_error("generated_algebra: generators must share one size");
        if (skew_defect(g) > 1e-12 * std::max(1.0, g.cwiseAbs().maxCoeff())) {
            throw input_error("generated_algebra: generators must be skew-Hermitian");
        }
    }
    if (depth_cap < 0) depth_cap = static_cast<int>(2 * n * n);
    const std::size_t full = static_cast<std::size_t>(n * n);

    AlgebraBasis out;
    out.n = static_cast<int>(n);
    out.generators_tag = gens.collection;
    out.rank_tol = rank_tol;

    detail::OrthoBasis ob;
    double scale = 0.0;
    for (const auto& g : gens.mats) scale = std::max(scale, g.norm());
    if (scale == 0.0) scale = 1.0;

    std::vector<std::size_t> fresh;
    for (const auto& g : gens.mats) {
        if (ob.admit(detail::flatten(g), rank_tol * scale)) fresh.push_back(ob.size() - 1);
    }

    int depth = 0;
    bool closed = false;
    while (!fresh.empty()) {
        if (ob.size() >= full) {
            closed = true;
            break;
        }
        if (depth >= depth_cap) break;
        ++depth;
        std::vector<std::size_t> next;
        for (std::size_t i : fresh) {
            const Mat x = detail::unflatten(ob[i], n);
            for (std::size_t j = 0; j < ob.size() && ob.size() < full; ++j) {
                if (j == i) continue;
                const RVec v = detail::flatten(bracket(x, detail::unflatten(ob[j], n)));
                scale = std::max(scale, v.norm());
                if (ob.admit(v, rank_tol * scale)) next.push_back(ob.size() - 1);
            }
        }
        fresh = std::move(next);
        if (fresh.empty()) closed = true;
    }
    if (ob.size() >= full) closed = true;

    out.scale = scale;
    out.depth_used = depth;
    out.closed = closed;
    out.dim = static_cast<int>(ob.size());
    for (std::size_t i = 0; i < ob.size(); ++i) out.basis.push_back(detail::unflatten(ob[i], n));
    return out;
}

// Largest bracket residual after projection onto the basis.
inline double closure_defect(const AlgebraBasis& alg) {
    detail::OrthoBasis ob;
    for (const auto& b : alg.basis) ob.admit(detail::flatten(b), 0.0);
    double worst = 0.0;
    for (std::size_t i = 0; i < alg.basis.size(); ++i)
        for (std::size_t j = i + 1; j < alg.basis.size(); ++j)
            worst = std::max(worst, ob.residual(detail::flatten(bracket(alg.basis[i], alg.basis[j]))).norm());
    return worst;
}

inline bool is_abelian(const AlgebraBasis& alg) {
    for (std::size_t i = 0; i < alg.basis.size(); ++i)
        for (std::size_t j = i + 1; j < alg.basis.size(); ++j)
            if (bracket(alg.basis[i], alg.basis[j]).norm() > alg.rank_tol * std::max(1.0, alg.scale)) return false;
    return true;
}

// Real dimension of the traceless projections X - tr(X)/n I of the basis.
inline int traceless_rank(const AlgebraBasis& alg) {
    detail::OrthoBasis ob;
    const auto n = static_cast<Eigen::Index>(alg.n);
    for (const auto& b : alg.basis) {
        const Mat p = b - (b.trace() / static_cast<double>(n)) * Mat::Identity(n, n);
        ob.admit(detail::flatten(p), alg.rank_tol);
    }
    return static_cast<int>(ob.size());
}

// su(n) is contained in a closed algebra L iff the traceless projections of L
// span su(n): the projection u(n) -> su(n) is a Lie homomorphism and su(n) is
// perfect, so su(n) = [P(L), P(L)] = P([L, L]) = [L, L] subset L.
inline bool contains_su(const AlgebraBasis& alg) {
    if (!alg.closed) throw computation_error("contains_su: basis is not bracket-closed");
    return traceless_rank(alg) >= alg.n * alg.n - 1;
}

struct GalerkinAttempt {
    int n = 0;
    bool zero_in_xi = false;
    std::vector<double> xi;
    int dim = 0;
    int traceless_dim = 0;
    int depth = 0;
    bool closed = false;
    bool contains_su = false;
    std::string reason;

    nlohmann::json to_json() const {
        return {{"n", n},           {"zero_in_xi", zero_in_xi}, {"xi_n", xi},
                {"dim", dim},       {"traceless_dim", traceless_dim}, {"depth", depth},
                {"closed", closed}, {"contains_su", contains_su}, {"reason", reason}};
    }
};

struct GalerkinCertificate {
    std::optional<int> certified_n;
    std::vector<GalerkinAttempt> attempts;
    XiSet xi;  // of the certified level
    int n0 = 0;
    int n_max = 0;

    explicit operator bool() const { return certified_n.has_value(); }

    nlohmann::json to_json() const {
        nlohmann::json at = nlohmann::json::array();
        for (const auto& a : attempts) at.push_back(a.to_json());
        nlohmann::json doc = {{"certified", certified_n.has_value()},
                              {"n0", n0},
                              {"n_max", n_max},
                              {"rank_tol", kRankTol},
                              {"gap_tol", kGapTol},
                              {"attempts", at},
                              {"scope", "finite certificate for levels n0+1..n_max only"}};
        if (certified_n) {
            doc["n"] = *certified_n;
            doc["xi"] = xi.to_json();
        }
        return doc;
    }
};

inline GalerkinAttempt galerkin_attempt(const SystemModel& sys, int n) {
    GalerkinAttempt at;
    at.n = n;
    const XiSet xi = xi_set(sys, n);
    at.xi = xi.xi;
    at.zero_in_xi = xi.contains(0.0);
    if (!at.zero_in_xi) {
        at.reason = "0 not in Xi_n";
        return at;
    }
    const AlgebraBasis alg = generated_algebra(build_Mn(sys, n));
    at.dim = alg.dim;
    at.depth = alg.depth_used;
    at.closed = alg.closed;
    if (!alg.closed) {
        at.reason = "closure not reached within depth cap";
        return at;
    }
    at.traceless_dim = traceless_rank(alg);
    at.contains_su = at.traceless_dim >= n * n - 1;
    if (!at.contains_su) {
        at.reason = is_abelian(alg) ? "abelian"
                                    : "traceless dimension " + std::to_string(at.traceless_dim) + " < n^2-1 = " +
                                          std::to_string(n * n - 1);
    }
    return at;
}

// First n in n0+1..n_max with 0 in Xi_n and Lie(M_n) containing su(n).
inline GalerkinCertificate lie_galerkin_search(const SystemModel& sys, int n0, int n_max) {
    if (n0 < 0) throw input_error("lie_galerkin_search: n0 must be >= 0");
    if (n_max < n0 + 1) throw input_error("lie_galerkin_search: n_max must be >= n0 + 1");
    GalerkinCertificate cert;
    cert.n0 = n0;
    cert.n_max = n_max;
    for (int n = n0 + 1; n <= n_max; ++n) {
        if (!sys.has_level(n)) {
            GalerkinAttempt at;
            at.n = n;
            at.reason = "no eigenvalue data at this level";
            cert.attempts.push_back(at);
            break;
        }
        cert.attempts.push_back(galerkin_attempt(sys, n));
        if (cert.attempts.back().contains_su) {
            cert.certified_n = n;
            cert.xi = xi_set(sys, n);
            break;
        }
    }
    return cert;
}

// Lie(V_n) and Lie(M_n) span the same space.
inline bool vn_equivalence_check(const SystemModel& sys, int n) {
    const AlgebraBasis lv = generated_algebra(build_Vn(sys, n));
    const AlgebraBasis lm = generated_algebra(build_Mn(sys, n));
    if (!lv.closed || !lm.closed) throw computation_error("vn_equivalence_check: closure not reached");
    if (lv.dim != lm.dim) return false;
    auto covered = [](const AlgebraBasis& from, const AlgebraBasis& onto) {
        detail::OrthoBasis ob;
        for (const auto& b : onto.basis) ob.admit(detail::flatten(b), 0.0);
        for (const auto& b : from.basis)
            if (ob.residual(detail::flatten(b)).norm() > 10.0 * kRankTol) return false;
        return true;
    };
    return covered(lv, lm) && covered(lm, lv);
}

// ------------------------------ connectedness chains ------------------------

class no_chain_error : public computation_error {
public:
    using computation_error::computation_error;
};

struct ChainResonance {
    std::pair<int, int> edge;
    std::pair<int, int> other;
};

struct Chain {
    std::vector<std::pair<int, int>> pairs;
    bool nonresonant = false;
    std::vector<ChainResonance> resonance_witnesses;
    bool degeneracy_ok = true;
    std::vector<std::pair<int, int>> degeneracy_witnesses;
    int scanned_to = 0;

    nlohmann::json to_json() const {
        nlohmann::json p = nlohmann::json::array();
        for (const auto& [a, b] : pairs) p.push_back({a, b});
        nlohmann::json w = nlohmann::json::array();
        for (const auto& r : resonance_witnesses)
            w.push_back({{r.edge.first, r.edge.second}, {r.other.first, r.other.second}});
        nlohmann::json d = nlohmann::json::array();
        for (const auto& [a, b] : degeneracy_witnesses) d.push_back({a, b});
        return {{"chain", p},
                {"nonresonant", nonresonant},
                {"resonance_witnesses", w},
                {"degeneracy_ok", degeneracy_ok},
                {"degeneracy_witnesses", d},
                {"scanned_to", scanned_to},
                {"gap_tol", kGapTol}};
    }
};

namespace detail {

// Coupled unordered pairs (t1 <= t2) with lower index up to `rows`.
inline std::vector<std::pair<int, int>> coupled_pairs(const SystemModel& sys, int rows) {
    std::vector<std::pair<int, int>> out;
    for (int t = 1; t <= rows && sys.has_level(t); ++t)
        for (int s : sys.coupled_levels(t))
            if (s >= t) out.emplace_back(t, s);
    return out;
}

// Rows beyond the returned index only hold coupled pairs whose gap exceeds
// `threshold`: consecutive gaps past it exceed the threshold over a
// confirmation window of the same length.
inline int chain_scan_limit(const SystemModel& sys, int levels, double threshold) {
    if (auto dim = sys.dimension()) return *dim;
    int l = tail_cutoff(sys, levels, threshold);
    l = std::max(l, sys.tail->monotone_from);
    for (;;) {
        bool ok = true;
        for (int t = l; t <= 2 * l; ++t) {
            if (sys.eigenvalue(t + 1) - sys.eigenvalue(t) <= threshold) {
                ok = false;
                l = t + 1;
                break;
            }
        }
        if (ok) return 2 * l;
        if (l > kTailCap) throw computation_error("chain scan exceeds the tail cap");
    }
}

}  // namespace detail

// Searches a connectedness chain over the coupling graph of levels 1..levels
// and checks non-resonance of its edges and the degeneracy hypothesis.
inline Chain chain_check(const SystemModel& sys, int levels) {
    if (levels < 2) throw input_error("chain_check: levels must be >= 2");
    if (!sys.has_level(levels)) throw input_error("chain_check: not enough levels in the system");
    if (!sys.tail && !sys.dimension()) throw computation_error("undecidable tail: chain_check needs a tail declaration");
    auto gap = [&](int a, int b) { return std::abs(sys.eigenvalue(a) - sys.eigenvalue(b)); };

    // gap multiplicities among coupled pairs inside the requested levels
    std::vector<std::pair<int, int>> inner;
    for (int t = 1; t <= levels; ++t)
        for (int s : sys.coupled_levels(t))
            if (s > t && s <= levels) inner.emplace_back(t, s);
    auto multiplicity = [&](double g) {
        return std::count_if(inner.begin(), inner.end(), [&](auto p) { return same_gap(gap(p.first, p.second), g); });
    };

    // breadth-first tree from level 1, unique-gap edges first
    std::vector<std::vector<int>> children(static_cast<std::size_t>(levels + 1));
    std::vector<int> parent(static_cast<std::size_t>(levels + 1), 0);
    std::vector<bool> seen(static_cast<std::size_t>(levels + 1), false);
    std::deque<int> queue{1};
    seen[1] = true;
    while (!queue.empty()) {
        const int v = queue.front();
        queue.pop_front();
        std::vector<int> nb;
        for (int s : sys.coupled_levels(v))
            if (s != v && s <= levels) nb.push_back(s);
        std::stable_sort(nb.begin(), nb.end(), [&](int x, int y) {
            const bool ux = multiplicity(gap(v, x)) == 1;
            const bool uy = multiplicity(gap(v, y)) == 1;
            if (ux != uy) return ux;
            return x < y;
        });
        for (int s : nb) {
            if (seen[s]) continue;
            seen[s] = true;
            parent[s] = v;
            children[v].push_back(s);
            queue.push_back(s);
        }
    }
    for (int k = 1; k <= levels; ++k) {
        if (!seen[k]) {
            throw no_chain_error("no chain: coupling graph does not connect level 1 to level " + std::to_string(k));
        }
    }

    // walk the tree depth-first, keeping backtracking steps only when needed
    Chain ch;
    std::vector<int> order;
    std::vector<int> stack{1};
    while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        order.push_back(v);
        for (auto it = children[v].rbegin(); it != children[v].rend(); ++it) stack.push_back(*it);
    }
    int cur = 1;
    for (std::size_t i = 1; i < order.size(); ++i) {
        const int target = order[i];
        while (cur != parent[target]) {
            ch.pairs.emplace_back(cur, parent[cur]);
            cur = parent[cur];
        }
        ch.pairs.emplace_back(cur, target);
        cur = target;
    }

    double max_gap = 0.0;
    for (const auto& [a, b] : ch.pairs) max_gap = std::max(max_gap, gap(a, b));
    ch.scanned_to = detail::chain_scan_limit(sys, levels, max_gap + kGapTol);
    const auto pairs = detail::coupled_pairs(sys, ch.scanned_to);

    std::set<std::pair<int, int>> edges;
    for (const auto& [a, b] : ch.pairs) edges.insert({std::min(a, b), std::max(a, b)});
    for (const auto& e : edges) {
        const double g = gap(e.first, e.second);
        for (const auto& p : pairs) {
            if (p == e) continue;
            if (same_gap(gap(p.first, p.second), g)) ch.resonance_witnesses.push_back({e, p});
        }
    }
    ch.nonresonant = ch.resonance_witnesses.empty();

    for (const auto& p : pairs) {
        if (p.first != p.second && same_gap(gap(p.first, p.second), 0.0)) {
            ch.degeneracy_ok = false;
            ch.degeneracy_witnesses.push_back(p);
        }
    }
    return ch;
}

}  // namespace lgc
