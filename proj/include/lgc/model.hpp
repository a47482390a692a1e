// model.hpp: system descriptions, Galerkin compressions and the bilinear
// reduction A = -i H(0), B = -i (H(1) - H(0)).
//
// Levels are indexed from 1 throughout the public API, matching the file
// formats. Matrices returned by truncate() are 0-based Eigen objects whose
// row/column i corresponds to level i+1.

#pragma once

#include "lgc/linalg.hpp"
#include "lgc/rule.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace lgc {

inline constexpr double kHermitianTol = 1e-12;

// Hermitian matrix elements b_{j,k} of H(1) - H(0).
//
// Two additive layers: constant diagonals ("band": b_{k,k+d} = v_d for every
// k, lower triangle mirrored) and finitely many explicit entries stored in
// canonical orientation j <= k.
struct CouplingPattern {
    std::map<int, cplx> band;
    std::map<std::pair<int, int>, cplx> entries;

    cplx value(int j, int k) const {
        if (j > k) return std::conj(value(k, j));
        cplx v{0.0, 0.0};
        if (auto it = band.find(k - j); it != band.end()) v += it->second;
        if (auto it = entries.find({j, k}); it != entries.end()) v += it->second;
        return v;
    }

    int band_width() const { return band.empty() ? 0 : band.rbegin()->first; }

    // Columns k with b_{j,k} != 0, restricted to 1..limit.
    std::vector<int> row_support(int j, int limit) const {
        std::set<int> cols;
        for (const auto& [d, v] : band) {
            if (v == cplx{}) continue;
            if (j + d <= limit) cols.insert(j + d);
            if (j - d >= 1 && j - d <= limit) cols.insert(j - d);
        }
        for (const auto& [key, v] : entries) {
            if (key.first == j && key.second <= limit) cols.insert(key.second);
            if (key.second == j && key.first <= limit) cols.insert(key.first);
        }
        std::vector<int> out;
        for (int k : cols) {
            if (std::abs(value(j, k)) > 0.0) out.push_back(k);
        }
        return out;
    }

    // Upper bound on sup_j sum_k |b_{j,k}|.
    double row_norm_bound() const {
        double band_part = 0.0;
        for (const auto& [d, v] : band) band_part += (d == 0 ? 1.0 : 2.0) * std::abs(v);
        std::map<int, double> rows;
        for (const auto& [key, v] : entries) {
            rows[key.first] += std::abs(v);
            if (key.first != key.second) rows[key.second] += std::abs(v);
        }
        double explicit_part = 0.0;
        for (const auto& [r, s] : rows) explicit_part = std::max(explicit_part, s);
        return band_part + explicit_part;
    }

    int max_explicit_index() const {
        int m = 0;
        for (const auto& [key, v] : entries) m = std::max(m, key.second);
        return m;
    }

    bool is_zero() const {
        for (const auto& [d, v] : band)
            if (v != cplx{}) return false;
        for (const auto& [k, v] : entries)
            if (v != cplx{}) return false;
        return true;
    }

    friend CouplingPattern operator+(const CouplingPattern& x, const CouplingPattern& y) {
        CouplingPattern s = x;
        for (const auto& [d, v] : y.band) s.band[d] += v;
        for (const auto& [k, v] : y.entries) s.entries[k] += v;
        return s;
    }
};

struct TailDeclaration {
    int monotone_from = 1;
};

struct PolarizabilitySplit {
    CouplingPattern w1;
    CouplingPattern w2;
};

// Pure-point-spectrum system: H(0) = diag(lambda_k), H(1) - H(0) = coupling.
//
// Without a rule the eigenvalue list is the whole spectrum and the system is
// finite dimensional; a rule overrides the list beyond its length.
struct SystemModel {
    std::string name;
    std::vector<double> eigenvalue_list;
    std::optional<EigenvalueRule> rule;
    CouplingPattern coupling;
    std::optional<PolarizabilitySplit> polarizability;
    std::optional<TailDeclaration> tail;

    std::optional<int> dimension() const {
        if (rule) return std::nullopt;
        return static_cast<int>(eigenvalue_list.size());
    }

    bool has_level(int k) const {
        if (k < 1) return false;
        return rule.has_value() || k <= static_cast<int>(eigenvalue_list.size());
    }

    double eigenvalue(int k) const {
        if (k < 1) throw input_error("eigenvalue index must be >= 1");
        if (k <= static_cast<int>(eigenvalue_list.size())) return eigenvalue_list[k - 1];
        if (rule) return (*rule)(k);
        throw input_error("eigenvalue " + std::to_string(k) + " requested beyond the declared list of " +
                          std::to_string(eigenvalue_list.size()) + " values and no extension rule is present");
    }

    std::vector<double> eigenvalues(int count) const {
        std::vector<double> out(static_cast<std::size_t>(count));
        for (int k = 1; k <= count; ++k) out[static_cast<std::size_t>(k - 1)] = eigenvalue(k);
        return out;
    }

    cplx coupling_at(int j, int k) const {
        if (!has_level(j) || !has_level(k)) return {0.0, 0.0};
        return coupling.value(j, k);
    }

    std::vector<int> coupled_levels(int j) const {
        const int limit = dimension().value_or(std::max(j, coupling.max_explicit_index()) + coupling.band_width());
        return coupling.row_support(j, limit);
    }

    double coupling_bound() const { return coupling.row_norm_bound(); }
};

namespace detail {

inline cplx read_complex(const nlohmann::json& re, const nlohmann::json& im) {
    return {re.get<double>(), im.get<double>()};
}

// Explicit entries [j, k, re, im]; one-sided declarations are mirrored,
// two-sided ones must agree to kHermitianTol and are averaged.
inline std::map<std::pair<int, int>, cplx> read_entries(const nlohmann::json& list, const std::string& what) {
    if (!list.is_array()) throw input_error(what + ": expected a list of [j, k, re, im]");
    std::map<std::pair<int, int>, cplx> raw;
    for (const auto& e : list) {
        if (!e.is_array() || e.size() != 4) throw input_error(what + ": each entry must be [j, k, re, im]");
        const int j = e[0].get<int>();
        const int k = e[1].get<int>();
        if (j < 1 || k < 1) throw input_error(what + ": indices are 1-based");
        if (!raw.emplace(std::make_pair(j, k), read_complex(e[2], e[3])).second) {
            throw input_error(what + ": duplicate entry (" + std::to_string(j) + "," + std::to_string(k) + ")");
        }
    }
    std::map<std::pair<int, int>, cplx> canon;
    for (const auto& [key, v] : raw) {
        const auto [j, k] = key;
        if (j == k) {
            if (std::abs(v.imag()) > kHermitianTol) {
                throw input_error(what + ": diagonal entry (" + std::to_string(j) + "," + std::to_string(j) +
                                  ") is not real");
            }
            canon[key] = {v.real(), 0.0};
            continue;
        }
        if (j > k) {
            if (raw.count({k, j}) == 0) canon[{k, j}] = std::conj(v);
            continue;
        }
        if (auto it = raw.find({k, j}); it != raw.end()) {
            const cplx mirrored = std::conj(it->second);
            if (std::abs(v - mirrored) > kHermitianTol) {
                throw input_error(what + ": non-Hermitian pair (" + std::to_string(j) + "," + std::to_string(k) +
                                  ") vs (" + std::to_string(k) + "," + std::to_string(j) + ")");
            }
            canon[key] = 0.5 * (v + mirrored);
        } else {
            canon[key] = v;
        }
    }
    return canon;
}

// Constant diagonals [d, re, im] with d >= 0.
inline std::map<int, cplx> read_band(const nlohmann::json& list, const std::string& what) {
    if (!list.is_array()) throw input_error(what + ": expected a list of [offset, re, im]");
    std::map<int, cplx> band;
    for (const auto& e : list) {
        if (!e.is_array() || e.size() != 3) throw input_error(what + ": each band entry must be [offset, re, im]");
        const int d = e[0].get<int>();
        if (d < 0) throw input_error(what + ": band offsets must be >= 0");
        cplx v = read_complex(e[1], e[2]);
        if (d == 0) {
            if (std::abs(v.imag()) > kHermitianTol) throw input_error(what + ": diagonal band value must be real");
            v = {v.real(), 0.0};
        }
        if (!band.emplace(d, v).second) throw input_error(what + ": duplicate band offset " + std::to_string(d));
    }
    return band;
}

// Either a plain entry list or {"entries": [...], "band": [...]}.
inline CouplingPattern read_pattern(const nlohmann::json& node, const std::string& what) {
    CouplingPattern p;
    if (node.is_array()) {
        p.entries = read_entries(node, what);
    } else if (node.is_object()) {
        if (node.contains("entries")) p.entries = read_entries(node.at("entries"), what);
        if (node.contains("band")) p.band = read_band(node.at("band"), what + ".band");
    } else {
        throw input_error(what + ": expected list or object");
    }
    return p;
}

inline nlohmann::json pattern_to_json(const CouplingPattern& p) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [key, v] : p.entries) entries.push_back({key.first, key.second, v.real(), v.imag()});
    nlohmann::json band = nlohmann::json::array();
    for (const auto& [d, v] : p.band) band.push_back({d, v.real(), v.imag()});
    return {{"entries", entries}, {"band", band}};
}

inline bool patterns_agree(const CouplingPattern& x, const CouplingPattern& y, int upto) {
    for (int j = 1; j <= upto; ++j)
        for (int k = j; k <= upto; ++k)
            if (std::abs(x.value(j, k) - y.value(j, k)) > kHermitianTol) return false;
    return true;
}

}  // namespace detail

// Checks ordering, Hermiticity of band data, boundedness and the
// polarizability sum rule. Throws input_error.
inline void validate_system(const SystemModel& sys) {
    if (sys.eigenvalue_list.empty() && !sys.rule) throw input_error("system: no eigenvalues declared");
    const int listed = static_cast<int>(sys.eigenvalue_list.size());
    const int probe = sys.rule ? std::max(listed, sys.tail ? sys.tail->monotone_from : 1) + 64 : listed;
    double prev = -std::numeric_limits<double>::infinity();
    for (int k = 1; k <= probe; ++k) {
        const double v = sys.eigenvalue(k);
        if (!std::isfinite(v)) throw input_error("system: eigenvalue " + std::to_string(k) + " is not finite");
        if (v < prev) throw input_error("system: eigenvalues must be nondecreasing (level " + std::to_string(k) + ")");
        if (sys.tail && k > sys.tail->monotone_from && !(v > prev)) {
            throw input_error("system: tail declaration violated, eigenvalues not strictly increasing at level " +
                              std::to_string(k));
        }
        prev = v;
    }
    if (auto it = sys.coupling.band.find(0); it != sys.coupling.band.end() && std::abs(it->second.imag()) > 0.0) {
        throw input_error("system: diagonal coupling must be real");
    }
    if (auto dim = sys.dimension(); dim && sys.coupling.max_explicit_index() > *dim) {
        throw input_error("system: coupling entry beyond the " + std::to_string(*dim) + " declared levels");
    }
    if (!std::isfinite(sys.coupling_bound())) throw input_error("system: coupling is not bounded");
    if (sys.tail && sys.tail->monotone_from < 1) throw input_error("system: tail.monotone_from must be >= 1");
    if (sys.polarizability) {
        const CouplingPattern sum = sys.polarizability->w1 + sys.polarizability->w2;
        const int upto = std::max({8, sum.max_explicit_index(), sys.coupling.max_explicit_index()}) +
                         std::max(sum.band_width(), sys.coupling.band_width()) + 2;
        if (!detail::patterns_agree(sum, sys.coupling, upto)) {
            throw input_error("system: coupling differs from W1 + W2");
        }
    }
}

inline SystemModel load_system(const nlohmann::json& doc) {
    if (!doc.is_object()) throw input_error("system: document must be a JSON object");
    SystemModel sys;
    try {
        sys.name = doc.value("name", std::string{});
        if (!doc.contains("eigenvalues")) throw input_error("system: missing \"eigenvalues\"");
        const auto& ev = doc.at("eigenvalues");
        if (ev.is_array()) {
            sys.eigenvalue_list = ev.get<std::vector<double>>();
        } else if (ev.is_object()) {
            if (ev.contains("list")) sys.eigenvalue_list = ev.at("list").get<std::vector<double>>();
            if (ev.contains("rule")) sys.rule = EigenvalueRule(ev.at("rule").get<std::string>());
        } else {
            throw input_error("system: \"eigenvalues\" must be a list or {\"rule\": ...}");
        }

        CouplingPattern declared;
        bool has_declared = false;
        if (doc.contains("coupling")) {
            declared = detail::read_pattern(doc.at("coupling"), "coupling");
            has_declared = true;
        }
        if (doc.contains("coupling_band")) {
            declared.band = detail::read_band(doc.at("coupling_band"), "coupling_band");
            has_declared = true;
        }
        if (doc.contains("polarizability")) {
            const auto& pol = doc.at("polarizability");
            PolarizabilitySplit split;
            if (pol.contains("w1")) split.w1 = detail::read_pattern(pol.at("w1"), "polarizability.w1");
            if (pol.contains("w2")) split.w2 = detail::read_pattern(pol.at("w2"), "polarizability.w2");
            sys.polarizability = split;
            sys.coupling = has_declared ? declared : split.w1 + split.w2;
        } else {
            sys.coupling = declared;
        }
        if (doc.contains("tail")) {
            sys.tail = TailDeclaration{doc.at("tail").at("monotone_from").get<int>()};
        }
    } catch (const nlohmann::json::exception& e) {
        throw input_error(std::string("system: malformed document: ") + e.what());
    }
    validate_system(sys);
    return sys;
}

inline SystemModel load_system_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open system file " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw input_error("system file " + path + ": " + e.what());
    }
    return load_system(doc);
}

inline nlohmann::json system_to_json(const SystemModel& sys) {
    nlohmann::json doc;
    if (!sys.name.empty()) doc["name"] = sys.name;
    nlohmann::json ev = nlohmann::json::object();
    if (!sys.eigenvalue_list.empty()) ev["list"] = sys.eigenvalue_list;
    if (sys.rule) ev["rule"] = sys.rule->text();
    doc["eigenvalues"] = ev;
    doc["coupling"] = detail::pattern_to_json(sys.coupling);
    if (sys.polarizability) {
        doc["polarizability"] = {{"w1", detail::pattern_to_json(sys.polarizability->w1)},
                                 {"w2", detail::pattern_to_json(sys.polarizability->w2)}};
    }
    if (sys.tail) doc["tail"] = {{"monotone_from", sys.tail->monotone_from}};
    return doc;
}

// ------------------------------ compressions --------------------------------

struct GalerkinPair {
    int n = 0;
    Mat h0;  // diag(lambda_1..lambda_n)
    Mat h1;  // h0 + compression of the coupling
    Mat a;   // -i h0
    Mat b;   // -i (h1 - h0)
};

inline Mat coupling_block(const SystemModel& sys, int n) {
    Mat c = Mat::Zero(n, n);
    for (int j = 1; j <= n; ++j)
        for (int k = 1; k <= n; ++k) c(j - 1, k - 1) = sys.coupling_at(j, k);
    return c;
}

inline GalerkinPair truncate(const SystemModel& sys, int n) {
    if (n < 1) throw input_error("truncate: n must be >= 1");
    if (!sys.has_level(n)) {
        throw input_error("truncate: n = " + std::to_string(n) + " exceeds the available eigenvalue data");
    }
    GalerkinPair g;
    g.n = n;
    g.h0 = Mat::Zero(n, n);
    for (int k = 1; k <= n; ++k) g.h0(k - 1, k - 1) = sys.eigenvalue(k);
    const Mat c = coupling_block(sys, n);
    g.h1 = g.h0 + c;
    g.a = -kI * g.h0;
    g.b = -kI * c;
    return g;
}

// Operator handles for A = -i H(0) and B = -i (H(1) - H(0)).
class BilinearReduction {
public:
    explicit BilinearReduction(std::shared_ptr<const SystemModel> sys)
        : sys_(std::move(sys)), b_bound_(sys_->coupling_bound()) {}

    Mat drift(int n) const {
        Mat a = Mat::Zero(n, n);
        for (int k = 1; k <= n; ++k) a(k - 1, k - 1) = -kI * sys_->eigenvalue(k);
        return a;
    }
    Mat control(int n) const { return -kI * coupling_block(*sys_, n); }

    // ||B|| <= sup row 1-norm (Hermitian, so Schur's test applies).
    double control_norm_bound() const noexcept { return b_bound_; }
    const SystemModel& system() const noexcept { return *sys_; }

private:
    std::shared_ptr<const SystemModel> sys_;
    double b_bound_;
};

inline BilinearReduction bilinear_reduction(const SystemModel& sys) {
    validate_system(sys);
    return BilinearReduction(std::make_shared<const SystemModel>(sys));
}

// ------------------------------ model gallery -------------------------------

inline SystemModel builtin_family(const std::string& name, const nlohmann::json& params = nlohmann::json::object()) {
    auto num = [&](const char* key, double fallback) {
        if (!params.contains(key)) return fallback;
        if (!params.at(key).is_number()) throw input_error(name + ": parameter '" + key + "' must be a number");
        return params.at(key).get<double>();
    };
    SystemModel sys;
    sys.name = name;
    if (name == "box_tridiagonal") {
        const double c = num("c", 1.0);
        sys.rule = EigenvalueRule("lambda_k = k^2");
        sys.coupling.band[1] = {c, 0.0};
        sys.tail = TailDeclaration{1};
    } else if (name == "polarizability_toy") {
        const double c1 = num("c1", 1.0);
        const double c2 = num("c2", 0.1);
        sys.rule = EigenvalueRule("lambda_k = k^2");
        PolarizabilitySplit split;
        split.w1.band[1] = {c1, 0.0};
        split.w2.band[0] = {c2, 0.0};
        sys.coupling = split.w1 + split.w2;
        sys.polarizability = split;
        sys.tail = TailDeclaration{1};
    } else if (name == "custom_gaps") {
        if (!params.contains("eigenvalues")) throw input_error("custom_gaps: missing 'eigenvalues'");
        try {
            sys.eigenvalue_list = params.at("eigenvalues").get<std::vector<double>>();
            if (params.contains("rule")) sys.rule = EigenvalueRule(params.at("rule").get<std::string>());
            if (params.contains("coupling")) sys.coupling = detail::read_pattern(params.at("coupling"), "custom_gaps.coupling");
        } catch (const nlohmann::json::exception& e) {
            throw input_error(std::string("custom_gaps: ") + e.what());
        }
        int from = 1;
        for (std::size_t k = 1; k < sys.eigenvalue_list.size(); ++k) {
            if (sys.eigenvalue_list[k] <= sys.eigenvalue_list[k - 1]) from = static_cast<int>(k) + 1;
        }
        sys.tail = TailDeclaration{from};
    } else {
        throw input_error("unknown builtin family '" + name + "'");
    }
    validate_system(sys);
    return sys;
}

}  // namespace lgc
