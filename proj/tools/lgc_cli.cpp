// lgc: command-line front end.
//
// Exit codes: 0 success, 1 negative result, 2 usage or input error.

#include "lgc/lgc.hpp"

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr const char* kFooter =
    "Levels are 1-based in every file and flag. Time is dimensionless (hbar = 1).\n"
    "Files: system {\"eigenvalues\", \"coupling\", \"tail\"}; control {\"segments\": [[duration, value], ...],\n"
    "\"range\": [lo, hi] or {\"two_value\": a}}; state {\"cutoff\": n, \"coefficients\": [[re, im], ...]}.\n"
    "Exit codes: 0 success, 1 negative result, 2 usage or input error.";

lgc::SystemModel load_system_arg(const std::string& arg) {
    const std::string prefix = "builtin:";
    if (arg.rfind(prefix, 0) == 0) return lgc::builtin_family(arg.substr(prefix.size()));
    return lgc::load_system_file(arg);
}

void emit(const nlohmann::json& doc, const std::string& out) {
    if (out.empty()) {
        std::cout << doc.dump(2) << '\n';
    } else {
        lgc::write_json_file(out, doc);
    }
}

// A control file, or a plan file whose "bang" entry is replayed.
lgc::PiecewiseConstantControl load_control_arg(const std::string& path) {
    const auto doc = lgc::read_json_file(path, "control");
    if (doc.contains("bang")) return lgc::control_from_json(doc.at("bang"));
    return lgc::control_from_json(doc);
}

struct CheckArgs {
    std::string system, out;
    int n0 = 1, nmax = 8;
};

int run_check(const CheckArgs& a) {
    const auto sys = load_system_arg(a.system);
    const auto cert = lgc::lie_galerkin_search(sys, a.n0, a.nmax);
    emit(cert.to_json(), a.out);
    if (cert) {
        std::cerr << "certified at n = " << *cert.certified_n << '\n';
        return 0;
    }
    for (const auto& at : cert.attempts) std::cerr << "n = " << at.n << ": " << at.reason << '\n';
    return 1;
}

struct ChainArgs {
    std::string system, out;
    int levels = 4;
};

int run_chain(const ChainArgs& a) {
    const auto sys = load_system_arg(a.system);
    lgc::Chain ch;
    try {
        ch = lgc::chain_check(sys, a.levels);
    } catch (const lgc::no_chain_error& e) {
        emit({{"chain", nlohmann::json::array()}, {"error", e.what()}}, a.out);
        std::cerr << e.what() << '\n';
        return 1;
    }
    auto doc = ch.to_json();
    doc["lie_galerkin_expected"] = ch.nonresonant && ch.degeneracy_ok;
    emit(doc, a.out);
    if (!ch.nonresonant) {
        for (const auto& w : ch.resonance_witnesses) {
            std::cerr << "resonance: (" << w.edge.first << "," << w.edge.second << ") ~ (" << w.other.first << ","
                      << w.other.second << ")\n";
        }
    }
    return ch.nonresonant && ch.degeneracy_ok ? 0 : 1;
}

struct SimulateArgs {
    std::string system, control, state, out, target;
    int cutoff = 0, big_n = 0;
    bool two_value = false;
};

int run_simulate(const SimulateArgs& a) {
    const auto sys = load_system_arg(a.system);
    const auto control = load_control_arg(a.control);
    lgc::StateVector psi = lgc::state_from_json(lgc::read_json_file(a.state, "state"));
    const int cutoff = a.cutoff > 0 ? a.cutoff : psi.cutoff();
    psi = psi.resized(cutoff);
    const auto sem = a.two_value ? lgc::Semantics::two_value : lgc::Semantics::bilinear;
    const auto fin = lgc::propagate(sys, control, cutoff, psi, sem);
    auto doc = lgc::state_to_json(fin);
    doc["input_norm"] = psi.norm();
    doc["output_norm"] = fin.norm();
    doc["total_time"] = control.total_time();
    if (!a.target.empty()) {
        if (a.big_n < 1) throw lgc::input_error("--target needs --N >= 1");
        const auto tgt = lgc::state_from_json(lgc::read_json_file(a.target, "state"));
        const lgc::Vec t = tgt.resized(std::max(tgt.cutoff(), a.big_n)).coefficients.head(a.big_n);
        doc["N"] = a.big_n;
        doc["residual"] = (fin.coefficients.head(a.big_n) - t).norm();
    }
    emit(doc, a.out);
    std::cerr << std::setprecision(17) << "norm in " << psi.norm() << ", out " << fin.norm() << '\n';
    return 0;
}

struct BangArgs {
    std::string control, out;
    double a = 1.0;
    int k = 1;
    bool report = false;
};

int run_bangbang(const BangArgs& a) {
    const auto u = load_control_arg(a.control);
    const auto w = lgc::bangbangify(u, a.a, a.k);
    emit(lgc::control_to_json(w), a.out);
    if (a.report) {
        double worst_mass = 0.0;
        for (double d : lgc::interval_mass_defects(u, w, a.k)) worst_mass = std::max(worst_mass, std::abs(d));
        const double delta = u.max_value();
        std::cerr << std::setprecision(10) << "k,primitive_error,bound,max_interval_mass_defect,l1_in,l1_out\n"
                  << a.k << ',' << lgc::primitive_error(u, w) << ',' << (delta + a.a) * u.total_time() / a.k << ','
                  << worst_mass << ',' << u.l1_norm() << ',' << w.l1_norm() << '\n';
    }
    return 0;
}

struct SynthArgs {
    std::string system, psi0, psi1, out;
    int big_n = 1;
    lgc::SynthOptions opt;
};

int run_synthesize(const SynthArgs& a) {
    const auto sys = load_system_arg(a.system);
    const auto p0 = lgc::state_from_json(lgc::read_json_file(a.psi0, "psi0"));
    const auto p1 = lgc::state_from_json(lgc::read_json_file(a.psi1, "psi1"));
    const auto plan = lgc::project_match(sys, a.big_n, p0, p1, a.opt);
    emit(lgc::plan_to_json(plan), a.out);
    std::cerr << std::setprecision(6) << "residual " << plan.residual << " at cutoff " << plan.cutoff
              << (plan.success ? " (success)" : " (failed)") << '\n';
    return plan.success ? 0 : 1;
}

struct VerifyArgs {
    std::string system, plan, out;
    std::vector<int> cutoffs;
};

int run_verify(const VerifyArgs& a) {
    const auto sys = load_system_arg(a.system);
    const auto plan = lgc::plan_from_json(lgc::read_json_file(a.plan, "plan"));
    std::vector<int> cutoffs = a.cutoffs;
    if (cutoffs.empty()) cutoffs = {plan.cutoff, plan.cutoff + 8};
    const auto rep = lgc::verify_plan(sys, plan, cutoffs);
    emit(rep.to_json(), a.out);
    bool ok = !rep.mismatch;
    for (const auto& [c, r] : rep.residuals) ok = ok && r <= plan.tol;
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lie-Galerkin certification, simulation and bang-bang control synthesis"};
    app.footer(kFooter);
    app.require_subcommand(1);

    CheckArgs check;
    auto* c = app.add_subcommand("check", "certify the Lie-Galerkin condition for some n in n0+1..nmax");
    c->add_option("--system", check.system, "system file, or builtin:NAME")->required();
    c->add_option("--n0", check.n0, "lower bound n0 (certified n > n0)")->required();
    c->add_option("--nmax", check.nmax, "largest level tried")->required();
    c->add_option("--out", check.out, "certificate file (default stdout)");

    ChainArgs chain;
    auto* ch = app.add_subcommand("chain", "search a non-resonant connectedness chain over levels 1..levels");
    ch->add_option("--system", chain.system, "system file, or builtin:NAME")->required();
    ch->add_option("--levels", chain.levels, "number of levels the chain must connect")->required();
    ch->add_option("--out", chain.out, "report file (default stdout)");

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "propagate a state under a piecewise-constant control");
    s->add_option("--system", sim.system, "system file, or builtin:NAME")->required();
    s->add_option("--control", sim.control, "control file, or a plan file (its bang control)")->required();
    s->add_option("--state", sim.state, "initial state file")->required();
    s->add_option("--cutoff", sim.cutoff, "Galerkin cutoff (default: state cutoff)");
    s->add_flag("--two-value", sim.two_value, "use H(0), H(1) directly; values must be 0 or 1");
    s->add_option("--target", sim.target, "target state; reports ||Pi_N(final - target)||");
    s->add_option("--N", sim.big_n, "projection level for --target");
    s->add_option("--out", sim.out, "final state file (default stdout)");

    BangArgs bang;
    auto* b = app.add_subcommand("bangbang", "convert a [0, delta] control into a {0, a} control");
    b->add_option("--control", bang.control, "control file")->required();
    b->add_option("--a", bang.a, "upper value a of the bang-bang control")->required();
    b->add_option("--k", bang.k, "number of equal intervals")->required();
    b->add_flag("--report", bang.report, "print primitive error, bound and masses as CSV on stderr");
    b->add_option("--out", bang.out, "output control file (default stdout)");

    SynthArgs syn;
    auto* y = app.add_subcommand("synthesize", "steer psi0 so that Pi_N of the final state equals Pi_N psi1");
    y->add_option("--system", syn.system, "system file, or builtin:NAME")->required();
    y->add_option("--psi0", syn.psi0, "initial state file")->required();
    y->add_option("--psi1", syn.psi1, "target state file")->required();
    y->add_option("--N", syn.big_n, "projection level N")->required();
    y->add_option("--tol", syn.opt.tol, "residual tolerance")->required();
    y->add_option("--seed", syn.opt.seed, "seed for solver restarts")->required();
    y->add_option("--out", syn.out, "plan file (default stdout)");
    y->add_option("--nmax", syn.opt.n_max, "largest certification level");
    y->add_option("--cutoff", syn.opt.cutoff, "simulation cutoff (default 4n)");
    y->add_option("--budget", syn.opt.max_iterations, "Gauss-Newton iterations per start");
    y->add_option("--restarts", syn.opt.restarts, "random restarts after a stall");
    y->add_option("--delta", syn.opt.delta, "initial pulse amplitude in (0, 1)");
    y->add_option("--pulse-tol", syn.opt.pulse_tol, "per-factor pulse verification tolerance");

    VerifyArgs ver;
    auto* v = app.add_subcommand("verify", "re-simulate a plan file at several cutoffs");
    v->add_option("--system", ver.system, "system file, or builtin:NAME")->required();
    v->add_option("--plan", ver.plan, "plan file")->required();
    v->add_option("--cutoffs", ver.cutoffs, "cutoffs (default: plan cutoff and cutoff + 8)");
    v->add_option("--out", ver.out, "report file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (c->parsed()) return run_check(check);
        if (ch->parsed()) return run_chain(chain);
        if (s->parsed()) return run_simulate(sim);
        if (b->parsed()) return run_bangbang(bang);
        if (y->parsed()) return run_synthesize(syn);
        if (v->parsed()) return run_verify(ver);
    } catch (const lgc::input_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
