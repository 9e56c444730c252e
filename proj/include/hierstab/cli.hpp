#pragma once

// Command-line front end: argument parsing, experiment orchestration, and
// machine-readable output for every library operation. Exit codes: 0 success,
// 2 validation/parse error, 3 capacity exceeded, 4 numerical failure.

#include <cmath>
#include <cstdint>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "hierstab/demo_trees.hpp"
#include "hierstab/efron_stein.hpp"
#include "hierstab/errors.hpp"
#include "hierstab/fourier.hpp"
#include "hierstab/hierarchy.hpp"
#include "hierstab/json_io.hpp"
#include "hierstab/maxcorr.hpp"
#include "hierstab/named_functions.hpp"
#include "hierstab/percolation.hpp"
#include "hierstab/product_space.hpp"
#include "hierstab/rng.hpp"

namespace hierstab::cli {

using io::json;

// ---------------------------------------------------------------------------
// Value-list parsing: "0.5", "0.1,0.9", "a..b" (inclusive), "a..b/step".
// ---------------------------------------------------------------------------

namespace detail {

inline double parse_scalar(const std::string& tok, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw validation_error(what + ": cannot parse '" + tok + "' as a number");
    }
}

inline void expand_token(const std::string& tok, const std::string& what,
                         std::vector<double>& out) {
    const auto dots = tok.find("..");
    if (dots == std::string::npos) {
        out.push_back(parse_scalar(tok, what));
        return;
    }
    const auto slash = tok.find('/', dots + 2);
    const double a = parse_scalar(tok.substr(0, dots), what);
    const std::string rest = slash == std::string::npos ? tok.substr(dots + 2)
                                                        : tok.substr(dots + 2, slash - dots - 2);
    const double b = parse_scalar(rest, what);
    const double step =
        slash == std::string::npos ? 1.0 : parse_scalar(tok.substr(slash + 1), what);
    if (!(step > 0.0)) throw validation_error(what + ": range step must be positive");
    if (b < a) throw validation_error(what + ": range end precedes start");
    const double span = (b - a) / step;
    if (span > 1e6) throw validation_error(what + ": range produces too many values");
    const long long count = static_cast<long long>(std::floor(span + 1e-9));
    for (long long k = 0; k <= count; ++k) out.push_back(a + step * static_cast<double>(k));
}

inline std::vector<double> parse_reals(const std::string& s, const std::string& what) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = s.find(',', start);
        const std::string tok =
            comma == std::string::npos ? s.substr(start) : s.substr(start, comma - start);
        if (tok.empty()) throw validation_error(what + ": empty entry in list");
        expand_token(tok, what, out);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.empty()) throw validation_error(what + ": empty list");
    return out;
}

inline std::vector<int> parse_ints(const std::string& s, const std::string& what) {
    std::vector<int> out;
    for (double v : parse_reals(s, what)) {
        const double r = std::round(v);
        if (std::abs(v - r) > 1e-9 || std::abs(r) > 1e9)
            throw validation_error(what + ": expected integers, got " + io::format_value(v));
        out.push_back(static_cast<int>(r));
    }
    return out;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline void emit(const std::string& out_path, const std::string& text) {
    if (out_path.empty()) {
        std::cout << text;
    } else {
        io::write_text_atomic(out_path, text);
    }
}

inline std::string csv_cell(double v) { return io::format_value(v); }

// ---------------------------------------------------------------------------
// Input loading
// ---------------------------------------------------------------------------

inline std::shared_ptr<const ProductSpace> load_space(const std::string& path) {
    return std::make_shared<const ProductSpace>(io::parse_space(io::read_json_file(path)));
}

struct FunctionRef {
    bool named = false;
    std::string name;  // named functions
    std::string path;  // descriptor files
};

inline FunctionRef parse_function_ref(const std::string& spec) {
    FunctionRef ref;
    if (spec.rfind("named:", 0) == 0) {
        ref.named = true;
        ref.name = spec.substr(6);
        if (ref.name.empty()) throw validation_error("--fn: empty name after 'named:'");
    } else {
        ref.path = spec;
        if (ref.path.empty()) throw validation_error("--fn: empty path");
    }
    return ref;
}

// Named functions know their own default sizes; tables carry theirs.
inline std::size_t function_ref_size(const FunctionRef& ref, int n_flag) {
    if (n_flag > 0) return static_cast<std::size_t>(n_flag);
    if (ref.named && ref.name == "maj3") return 3;
    throw validation_error("--n is required when no space fixes the coordinate count");
}

inline FunctionTable load_function(const FunctionRef& ref,
                                   std::shared_ptr<const ProductSpace> space) {
    if (ref.named) {
        json desc{{"kind", "named"}, {"name", ref.name}};
        return io::parse_function(desc, std::move(space));
    }
    return io::parse_function(io::read_json_file(ref.path), std::move(space));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommand configurations
// ---------------------------------------------------------------------------

struct CommonOpts {
    std::string out;
    std::string format = "json";
    std::uint64_t seed = 0;
    std::uint64_t samples = 100000;
    int workers = 1;
};

namespace detail {

inline void require_format(const std::string& format, bool csv_allowed) {
    if (format == "json") return;
    if (format == "csv" && csv_allowed) return;
    throw validation_error(csv_allowed ? "--format must be json or csv"
                                       : "--format must be json for this command");
}

// --- analyze ---------------------------------------------------------------

struct AnalyzeOpts {
    std::string fn;
    std::string space_path;
    int n = 0;
    std::string rho;   // single value
    std::string rhos;  // per-coordinate list
    int degree = 0;
    CommonOpts common;
};

inline int run_analyze(const AnalyzeOpts& o) {
    require_format(o.common.format, false);
    const FunctionRef ref = parse_function_ref(o.fn);

    std::optional<double> rho;
    if (!o.rho.empty()) {
        const auto vals = parse_reals(o.rho, "--rho");
        if (vals.size() != 1) throw validation_error("analyze: --rho takes a single value");
        rho = vals[0];
    }

    std::shared_ptr<const ProductSpace> space;
    if (!o.space_path.empty()) {
        space = load_space(o.space_path);
        if (o.n > 0 && static_cast<std::size_t>(o.n) != space->n())
            throw validation_error("analyze: --n disagrees with the space file");
    } else {
        const std::size_t n = function_ref_size(ref, o.n);
        space = make_resampling_space(FiniteDistribution::uniform_pm1(), n, rho.value_or(0.0));
    }

    const FunctionTable f = load_function(ref, space);
    const FourierExpansion F = expand(f);

    json out{{"function", io::expansion_to_json(F)}};
    std::vector<double> per_coord;
    if (!o.rhos.empty()) {
        per_coord = parse_reals(o.rhos, "--rhos");
        if (per_coord.size() != space->n())
            throw validation_error("analyze: --rhos must list one value per coordinate");
    }
    if (rho && !per_coord.empty())
        throw validation_error("analyze: pass either --rho or --rhos, not both");

    if (rho) {
        out["rho"] = *rho;
        out["stability"] = stability(F, *rho);
        out["lemma"] = io::report_to_json(check_stability_bound(F, *rho));
        if (o.degree > 0)
            out["low_degree"] = io::report_to_json(
                check_low_degree_bound(F, static_cast<std::size_t>(o.degree), *rho));
    } else if (!per_coord.empty()) {
        out["rhos"] = per_coord;
        out["stability"] = stability(F, std::span<const double>(per_coord));
        out["lemma"] =
            io::report_to_json(check_stability_bound(F, std::span<const double>(per_coord)));
    } else if (o.degree > 0) {
        throw validation_error("analyze: --degree needs --rho strictly inside (0,1)");
    }
    emit(o.common.out, dump(out));
    return 0;
}

// --- maxcorr ---------------------------------------------------------------

struct MaxcorrOpts {
    std::string space_path;
    std::string fn;
    int coordinate = -1;
    CommonOpts common;
};

inline int run_maxcorr(const MaxcorrOpts& o) {
    require_format(o.common.format, false);
    auto space = load_space(o.space_path);
    json out;
    if (!o.fn.empty()) {
        const FunctionTable f = load_function(parse_function_ref(o.fn), space);
        out = io::report_to_json(non_separability(f));
    } else if (o.coordinate >= 0) {
        if (static_cast<std::size_t>(o.coordinate) >= space->n())
            throw validation_error("maxcorr: coordinate index out of range");
        out = io::report_to_json(
            maximal_correlation_report(space->pair(static_cast<std::size_t>(o.coordinate))));
    } else {
        json pairs = json::array();
        for (std::size_t i = 0; i < space->n(); ++i)
            pairs.push_back(io::report_to_json(maximal_correlation_report(space->pair(i))));
        out = json{{"pairs", std::move(pairs)}};
    }
    emit(o.common.out, dump(out));
    return 0;
}

// --- es --------------------------------------------------------------------

struct EsOpts {
    std::string space_path;
    std::string fn;
    bool full = false;
    bool check = true;
    CommonOpts common;
};

inline int run_es(const EsOpts& o) {
    require_format(o.common.format, false);
    auto space = load_space(o.space_path);
    const FunctionTable f = load_function(parse_function_ref(o.fn), space);
    const ESDecomposition dec = decompose(f);
    json out{{"decomposition", io::es_to_json(dec, o.full)}};
    if (o.check) out["markov"] = io::report_to_json(markov_contract_check(dec));
    emit(o.common.out, dump(out));
    return 0;
}

// --- decay -----------------------------------------------------------------

struct DecayOpts {
    double eps = 0.0;
    double delta = -1.0;  // default eps/2
    std::string rho;
    std::string depths;
    int resilience = 0;
    CommonOpts common;
};

inline int run_decay(const DecayOpts& o) {
    require_format(o.common.format, true);
    const double delta = o.delta >= 0.0 ? o.delta : o.eps / 2.0;
    const auto rhos = parse_reals(o.rho, "--rho");
    const auto depths = parse_ints(o.depths, "--depths");
    std::optional<int> t;
    if (o.resilience > 0) t = o.resilience;

    std::vector<DecayBoundReport> rows;
    for (int d : depths)
        for (double r : rhos) rows.push_back(decay_bounds(o.eps, delta, r, d, t));

    if (o.common.format == "csv") {
        std::string text =
            "epsilon,delta,rho,d,alpha,C,proof_steps,iterate_bound,closed_form,eps1_bound,"
            "resilient_bound\n";
        for (const auto& r : rows) {
            text += csv_cell(r.epsilon) + ',' + csv_cell(r.delta) + ',' + csv_cell(r.rho) + ',' +
                    std::to_string(r.depth) + ',' + csv_cell(r.alpha) + ',' +
                    csv_cell(r.constant) + ',' + csv_cell(r.proof_steps) + ',' +
                    csv_cell(r.iterate_bound) + ',' + csv_cell(r.closed_form) + ',' +
                    (r.eps1_bound >= 0.0 ? csv_cell(r.eps1_bound) : std::string()) + ',' +
                    (r.resilient_bound >= 0.0 ? csv_cell(r.resilient_bound) : std::string()) +
                    '\n';
        }
        emit(o.common.out, text);
    } else {
        json arr = json::array();
        for (const auto& r : rows) arr.push_back(io::report_to_json(r));
        emit(o.common.out, dump(json{{"results", std::move(arr)}}));
    }
    return 0;
}

// --- hierarchy ---------------------------------------------------------------

struct HierarchyOpts {
    std::string tree_path;
    std::string kind;  // override
    double eps = -1.0;  // override
    std::string mode = "certify";
    std::string rho;
    std::string space_path;
    std::string leaves = "finite";
    CommonOpts common;
};

inline std::size_t max_leaf_plus_one(const HierarchyNode& node) {
    if (node.is_leaf()) return *node.leaf_index + 1;
    std::size_t m = 0;
    for (const auto& c : node.children) m = std::max(m, max_leaf_plus_one(c));
    return m;
}

inline bool has_analytic(const HierarchyNode& node) {
    if (node.analytic) return true;
    for (const auto& c : node.children)
        if (has_analytic(c)) return true;
    return false;
}

inline LeafSampler parse_leaf_sampler(const std::string& s) {
    if (s == "finite") return LeafSampler::finite;
    if (s == "uniform01") return LeafSampler::uniform01;
    if (s == "gaussian") return LeafSampler::gaussian;
    throw validation_error("--leaves must be finite, uniform01 or gaussian");
}

inline int run_hierarchy(const HierarchyOpts& o) {
    require_format(o.common.format, false);
    HierarchySpec spec = io::parse_hierarchy(io::read_json_file(o.tree_path));
    if (!o.kind.empty()) spec.kind = io::parse_kind(o.kind);
    if (o.eps >= 0.0) spec.declared_epsilon = o.eps;

    const std::size_t n_leaves = max_leaf_plus_one(spec.root);
    const bool continuous = has_analytic(spec.root);

    std::shared_ptr<const ProductSpace> leaf_space;
    ResolvedHierarchy h = [&] {
        if (continuous && o.space_path.empty()) return resolve_continuous(spec, n_leaves);
        if (!o.space_path.empty()) {
            leaf_space = load_space(o.space_path);
            return resolve(spec, leaf_space);
        }
        leaf_space = make_resampling_space(FiniteDistribution::uniform_pm1(), n_leaves, 0.0);
        return resolve(spec, leaf_space);
    }();

    json out{{"kind", to_string(spec.kind)},
             {"depth", h.depth()},
             {"n_leaves", h.n_leaves()}};

    if (o.mode == "certify") {
        if (spec.declared_epsilon <= 0.0)
            throw validation_error("hierarchy certify: declare a positive epsilon via --eps");
        out["certification"] = io::report_to_json(try_certify(h, spec.kind,
                                                              spec.declared_epsilon));
    } else if (o.mode == "stability") {
        const auto rhos = parse_reals(o.rho, "--rho");
        json rows = json::array();
        for (double r : rhos)
            rows.push_back(json{{"rho", r}, {"stability", stability_recursive(h, spec.kind, r)}});
        out["results"] = std::move(rows);
    } else if (o.mode == "mc") {
        const auto rhos = parse_reals(o.rho, "--rho");
        McOptions mo;
        mo.seed = o.common.seed;
        mo.samples = o.common.samples;
        mo.workers = o.common.workers;
        mo.leaves = parse_leaf_sampler(o.leaves);
        json rows = json::array();
        for (double r : rhos) {
            json row = io::report_to_json(stability_mc(h, r, mo));
            row["rho"] = r;
            rows.push_back(std::move(row));
        }
        out["results"] = std::move(rows);
    } else {
        throw validation_error("hierarchy: --mode must be certify, stability or mc");
    }
    emit(o.common.out, dump(out));
    return 0;
}

// --- percolation -------------------------------------------------------------

struct PercolationOpts {
    std::string mode = "prob";
    std::string sides;
    std::string p = "0.5";
    std::string rho;
    CommonOpts common;
};

inline int run_percolation(const PercolationOpts& o) {
    const auto sides = parse_ints(o.sides, "--n");
    struct Row {
        int n;
        double rho;
        McEstimate est;
    };

    if (o.mode == "spectrum") {
        require_format(o.common.format, false);
        json arr = json::array();
        for (int n : sides) {
            if (n < 1) throw validation_error("percolation: side must be positive");
            arr.push_back(io::report_to_json(
                exact_crossing_spectrum(TriangularGrid(static_cast<std::size_t>(n)))));
        }
        emit(o.common.out, dump(json{{"profiles", std::move(arr)}}));
        return 0;
    }

    require_format(o.common.format, true);
    std::vector<Row> rows;
    if (o.mode == "prob") {
        const auto ps = parse_reals(o.p, "--p");
        for (int n : sides) {
            if (n < 1) throw validation_error("percolation: side must be positive");
            const TriangularGrid grid(static_cast<std::size_t>(n));
            for (double p : ps)
                rows.push_back(Row{n, p,
                                   crossing_probability(grid, p, o.common.seed, o.common.samples,
                                                        o.common.workers)});
        }
    } else if (o.mode == "stability") {
        const auto rhos = parse_reals(o.rho, "--rho");
        for (int n : sides) {
            if (n < 1) throw validation_error("percolation: side must be positive");
            const TriangularGrid grid(static_cast<std::size_t>(n));
            for (double r : rhos)
                rows.push_back(Row{n, r,
                                   crossing_stability(grid, r, o.common.seed, o.common.samples,
                                                      o.common.workers)});
        }
    } else {
        throw validation_error("percolation: --mode must be prob, stability or spectrum");
    }

    if (o.common.format == "csv") {
        // In prob mode the rho column carries the occupation probability p.
        std::string text = "n,rho,samples,estimate,ci_low,ci_high,seed\n";
        for (const auto& r : rows) {
            text += std::to_string(r.n) + ',' + csv_cell(r.rho) + ',' +
                    std::to_string(r.est.samples) + ',' + csv_cell(r.est.estimate) + ',' +
                    csv_cell(r.est.ci_low) + ',' + csv_cell(r.est.ci_high) + ',' +
                    std::to_string(r.est.seed) + '\n';
        }
        emit(o.common.out, text);
    } else {
        json arr = json::array();
        for (const auto& r : rows) {
            json row = io::report_to_json(r.est);
            row["n"] = r.n;
            row["rho"] = r.rho;
            arr.push_back(std::move(row));
        }
        emit(o.common.out, dump(json{{"results", std::move(arr)}}));
    }
    return 0;
}

// --- demo --------------------------------------------------------------------

struct DemoOpts {
    std::string name;
    int depth = 2;
    double rho = 0.9;
    CommonOpts common;
};

struct DemoCheck {
    std::string name;
    bool pass = false;
    std::string detail;
};

inline void push_check(std::vector<DemoCheck>& checks, std::string name, bool pass,
                       std::string detail) {
    checks.push_back(DemoCheck{std::move(name), pass, std::move(detail)});
}

inline json checks_to_json(const std::vector<DemoCheck>& checks) {
    json arr = json::array();
    for (const auto& c : checks)
        arr.push_back(json{{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    return arr;
}

inline int finish_demo(const DemoOpts& o, json out, const std::vector<DemoCheck>& checks) {
    bool all = true;
    for (const auto& c : checks) all = all && c.pass;
    out["checks"] = checks_to_json(checks);
    out["all_checks_pass"] = all;
    emit(o.common.out, dump(out));
    if (!all) {
        std::cerr << "demo: an internal consistency check failed\n";
        return 4;
    }
    return 0;
}

inline int run_demo_recursive_maj3(const DemoOpts& o) {
    HierarchySpec spec = recursive_maj3_tree(o.depth);
    const std::size_t n = max_leaf_plus_one(spec.root);
    auto space = make_resampling_space(FiniteDistribution::uniform_pm1(), n, o.rho);
    const ResolvedHierarchy h = resolve(spec, space);
    std::vector<DemoCheck> checks;
    json out{{"name", "recursive-maj3"}, {"depth", o.depth}, {"rho", o.rho},
             {"descriptor", io::hierarchy_to_json(spec)}};

    const CertificationReport cert = try_certify(h, spec.kind, spec.declared_epsilon);
    out["certification"] = io::report_to_json(cert);
    push_check(checks, "components certify at epsilon 1/4", cert.ok,
               "tree epsilon " + io::format_value(cert.tree_epsilon));

    const double exact = stability_recursive(h, spec.kind, o.rho);
    double iter = o.rho;
    for (int k = 0; k < o.depth; ++k) iter = 0.75 * iter + 0.25 * iter * iter * iter;
    out["stability"] = exact;
    out["one_level_map_iterated"] = iter;
    push_check(checks, "recursive stability equals the iterated one-level map",
               std::abs(exact - iter) <= 1e-12, "difference " + io::format_value(exact - iter));

    if (n <= 16) {
        const FunctionTable table = compose_table(h);
        const double direct = stability(expand(table), o.rho);
        push_check(checks, "direct expansion agrees with the recursion",
                   std::abs(direct - exact) <= 1e-10,
                   "difference " + io::format_value(direct - exact));
    }

    const DecayBoundReport bounds = decay_bounds(0.25, 0.125, o.rho, o.depth);
    out["decay_bounds"] = io::report_to_json(bounds);
    push_check(checks, "iterated upper bound dominates the exact value",
               exact <= bounds.iterate_bound + 1e-9,
               "exact " + io::format_value(exact) + " vs bound " +
                   io::format_value(bounds.iterate_bound));
    return finish_demo(o, std::move(out), checks);
}

inline int run_demo_parity2(const DemoOpts& o) {
    HierarchySpec spec = parity2_tree(o.depth);
    const std::size_t n = max_leaf_plus_one(spec.root);
    auto space = make_resampling_space(FiniteDistribution::uniform_pm1(), n, o.rho);
    const ResolvedHierarchy h = resolve(spec, space);
    std::vector<DemoCheck> checks;
    json out{{"name", "parity2"}, {"depth", o.depth}, {"rho", o.rho},
             {"descriptor", io::hierarchy_to_json(spec)}};

    const CertificationReport cert = try_certify(h, spec.kind, spec.declared_epsilon);
    out["certification"] = io::report_to_json(cert);
    push_check(checks, "components certify at epsilon 1", cert.ok,
               "tree epsilon " + io::format_value(cert.tree_epsilon));

    const double exact = stability_recursive(h, spec.kind, o.rho);
    const double doubly = std::pow(o.rho, std::exp2(o.depth));
    out["stability"] = exact;
    push_check(checks, "stability equals rho^(2^depth)", std::abs(exact - doubly) <= 1e-12,
               "difference " + io::format_value(exact - doubly));

    const DecayBoundReport bounds = decay_bounds(1.0, 0.5, o.rho, o.depth);
    out["decay_bounds"] = io::report_to_json(bounds);
    push_check(checks, "fully nonlinear bound is attained",
               std::abs(bounds.eps1_bound - exact) <= 1e-12,
               "bound " + io::format_value(bounds.eps1_bound));
    return finish_demo(o, std::move(out), checks);
}

inline int run_demo_cos_arccos(const DemoOpts& o) {
    HierarchySpec spec = cos_arccos_tree(o.depth);
    const std::size_t n = max_leaf_plus_one(spec.root);
    const ResolvedHierarchy h = resolve_continuous(spec, n);
    std::vector<DemoCheck> checks;
    json out{{"name", "cos-arccos"}, {"depth", o.depth}, {"rho", o.rho},
             {"descriptor", io::hierarchy_to_json(spec)}};

    // The two component shapes cancel level by level, so the whole tree
    // computes its first input. Interior points avoid the arccos endpoint
    // sensitivity that would otherwise inflate roundoff.
    Evaluator eval(h);
    RngStream rng(o.common.seed, stream_salt::demo);
    double worst = 0.0;
    std::vector<double> x(n);
    for (int trial = 0; trial < 100; ++trial) {
        for (std::size_t i = 0; i < n; ++i) x[i] = 0.001 + 0.998 * rng.next_unit();
        worst = std::max(worst, std::abs(eval(x) - x[0]));
    }
    out["max_identity_error"] = worst;
    push_check(checks, "tree output equals the first input", worst <= 1e-12,
               "max error " + io::format_value(worst));

    const CertificationReport cert = try_certify(h, spec.kind, spec.declared_epsilon);
    out["certification"] = io::report_to_json(cert);
    push_check(checks, "certification fails: components are not certifiable", !cert.ok,
               cert.failure.empty() ? "unexpectedly certified" : cert.failure);

    McOptions mo;
    mo.seed = o.common.seed;
    mo.samples = o.common.samples;
    mo.workers = o.common.workers;
    mo.leaves = LeafSampler::uniform01;
    const McEstimate est = stability_mc(h, o.rho, mo);
    out["mc_stability"] = io::report_to_json(est);
    const DecayBoundReport bounds = decay_bounds(spec.declared_epsilon, spec.declared_epsilon / 2,
                                                 o.rho, o.depth);
    out["claimed_decay_bound"] = io::report_to_json(bounds);
    push_check(checks, "measured stability violates the would-be decay bound",
               est.ci_low > bounds.iterate_bound,
               "estimate " + io::format_value(est.estimate) + " vs bound " +
                   io::format_value(bounds.iterate_bound));
    return finish_demo(o, std::move(out), checks);
}

inline int run_demo_carry_majority(const DemoOpts& o) {
    HierarchySpec spec = carry_majority_tree(o.depth);
    const std::size_t n = max_leaf_plus_one(spec.root);
    auto space = make_resampling_space(FiniteDistribution::uniform_pm1(), n, o.rho);
    const ResolvedHierarchy h = resolve(spec, space);
    std::vector<DemoCheck> checks;
    json out{{"name", "carry-majority"}, {"depth", o.depth}, {"rho", o.rho},
             {"descriptor", io::hierarchy_to_json(spec)}};

    // The composed tree must equal first-input + 10 * recursive majority.
    Evaluator eval(h);
    double worst = 0.0;
    std::uint64_t points = 0;
    std::vector<double> x(n);
    if (n <= 20) {
        for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
            for (std::size_t i = 0; i < n; ++i) x[i] = (mask >> i) & 1u ? 1.0 : -1.0;
            worst = std::max(worst, std::abs(eval(x) - carry_majority_direct(x)));
            ++points;
        }
    } else {
        RngStream rng(o.common.seed, stream_salt::demo);
        for (int trial = 0; trial < 1000; ++trial) {
            for (std::size_t i = 0; i < n; ++i) x[i] = rng.next_unit() < 0.5 ? -1.0 : 1.0;
            worst = std::max(worst, std::abs(eval(x) - carry_majority_direct(x)));
            ++points;
        }
    }
    out["evaluations_checked"] = points;
    out["max_evaluation_error"] = worst;
    push_check(checks, "tree equals first input plus ten times recursive majority",
               worst == 0.0, "max error " + io::format_value(worst));

    const CertificationReport cert = try_certify(h, spec.kind, spec.declared_epsilon);
    out["certification"] = io::report_to_json(cert);
    push_check(checks,
               "certification fails: the carry digit leaks a single coordinate",
               !cert.ok && cert.tree_epsilon <= 1e-9,
               "tree epsilon " + io::format_value(cert.tree_epsilon));

    // Degree-1 mass from the construction: the passthrough digit adds 1 to
    // the first leaf's coefficient, and every leaf gets 10 * (1/2)^depth from
    // the majority cascade. Variance adds the passthrough/majority covariance.
    const double leaf_coef = 10.0 * std::pow(0.5, o.depth);
    const double deg1_mass = (1.0 + leaf_coef) * (1.0 + leaf_coef) +
                             (static_cast<double>(n) - 1.0) * leaf_coef * leaf_coef;
    const double variance = 101.0 + 20.0 * std::pow(0.5, o.depth);
    const double floor_value = o.rho * deg1_mass / variance;
    out["degree1_mass"] = deg1_mass;
    out["variance"] = variance;
    out["stability_floor"] = floor_value;

    if (n <= 16) {
        const double exact = stability(expand(compose_table(h)), o.rho);
        out["stability"] = exact;
        push_check(checks, "exact stability exceeds the linear-part floor", exact > floor_value,
                   "stability " + io::format_value(exact) + " vs floor " +
                       io::format_value(floor_value));
    } else {
        McOptions mo;
        mo.seed = o.common.seed;
        mo.samples = o.common.samples;
        mo.workers = o.common.workers;
        const McEstimate est = stability_mc(h, o.rho, mo);
        out["mc_stability"] = io::report_to_json(est);
        push_check(checks, "measured stability exceeds the linear-part floor",
                   est.ci_low > floor_value,
                   "estimate " + io::format_value(est.estimate) + " vs floor " +
                       io::format_value(floor_value));
    }
    return finish_demo(o, std::move(out), checks);
}

inline int run_demo(const DemoOpts& o) {
    require_format(o.common.format, false);
    if (o.name == "recursive-maj3") return run_demo_recursive_maj3(o);
    if (o.name == "parity2") return run_demo_parity2(o);
    if (o.name == "cos-arccos") return run_demo_cos_arccos(o);
    if (o.name == "carry-majority") return run_demo_carry_majority(o);
    throw validation_error(
        "demo: --name must be recursive-maj3, parity2, cos-arccos or carry-majority");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run(const std::vector<std::string>& args) {
    CLI::App app{"exact and Monte Carlo noise-stability analysis on finite product spaces"};
    app.require_subcommand(1);

    auto add_common = [](CLI::App* cmd, CommonOpts& c, bool csv) {
        cmd->add_option("--out", c.out, "output file (stdout when omitted)");
        cmd->add_option("--format", c.format, csv ? "json or csv" : "json");
        cmd->add_option("--seed", c.seed, "rng seed (default 0)");
        cmd->add_option("--samples", c.samples, "Monte Carlo sample count (default 100000)");
        cmd->add_option("--workers", c.workers, "worker threads (default 1)");
    };

    detail::AnalyzeOpts an;
    CLI::App* analyze = app.add_subcommand("analyze", "expand a function and check its bounds");
    analyze->add_option("--fn", an.fn, "function: named:NAME or a descriptor file")->required();
    analyze->add_option("--n", an.n, "coordinate count for named functions");
    analyze->add_option("--space", an.space_path, "space descriptor file");
    analyze->add_option("--rho", an.rho, "uniform correlation");
    analyze->add_option("--rhos", an.rhos, "per-coordinate correlations");
    analyze->add_option("--degree", an.degree, "also check the low-degree bound at this degree");
    add_common(analyze, an.common, false);

    detail::MaxcorrOpts mx;
    CLI::App* maxcorr = app.add_subcommand("maxcorr",
                                           "maximal correlation and non-separability reports");
    maxcorr->add_option("--space", mx.space_path, "space descriptor file")->required();
    maxcorr->add_option("--fn", mx.fn, "function for a non-separability report");
    maxcorr->add_option("--coordinate", mx.coordinate, "report a single pair");
    add_common(maxcorr, mx.common, false);

    detail::EsOpts es;
    CLI::App* escmd = app.add_subcommand("es", "orthogonal decomposition and contraction check");
    escmd->add_option("--space", es.space_path, "space descriptor file")->required();
    escmd->add_option("--fn", es.fn, "function: named:NAME or a descriptor file")->required();
    escmd->add_flag("--full", es.full, "export full component tables");
    escmd->add_flag("!--no-check", es.check, "skip the contraction check");
    add_common(escmd, es.common, false);

    detail::DecayOpts dc;
    CLI::App* decay = app.add_subcommand("decay", "depth-exponential decay bound tables");
    decay->add_option("--eps", dc.eps, "component nonlinearity level")->required();
    decay->add_option("--delta", dc.delta, "per-level decay rate (default eps/2)");
    decay->add_option("--rho", dc.rho, "correlation value, list or range")->required();
    decay->add_option("--depths", dc.depths, "depth value, list or range")->required();
    decay->add_option("--t", dc.resilience, "resilience order for the resilient bound");
    add_common(decay, dc.common, true);

    detail::HierarchyOpts hi;
    CLI::App* hier = app.add_subcommand("hierarchy", "certify and measure composition trees");
    hier->add_option("--tree", hi.tree_path, "hierarchy descriptor file")->required();
    hier->add_option("--kind", hi.kind, "multilinear or general (overrides the file)");
    hier->add_option("--eps", hi.eps, "declared component level (overrides the file)");
    hier->add_option("--mode", hi.mode, "certify, stability or mc");
    hier->add_option("--rho", hi.rho, "correlation value, list or range");
    hier->add_option("--space", hi.space_path, "leaf space descriptor file");
    hier->add_option("--leaves", hi.leaves, "mc leaf sampler: finite, uniform01, gaussian");
    add_common(hier, hi.common, false);

    detail::PercolationOpts pc;
    CLI::App* perc = app.add_subcommand("percolation",
                                        "crossing probability, stability and exact spectra");
    perc->add_option("--mode", pc.mode, "prob, stability or spectrum");
    perc->add_option("--n", pc.sides, "grid side length, list or range")->required();
    perc->add_option("--p", pc.p, "occupation probability (prob mode, default 0.5)");
    perc->add_option("--rho", pc.rho, "resampling correlation (stability mode)");
    add_common(perc, pc.common, true);

    detail::DemoOpts dm;
    CLI::App* demo = app.add_subcommand("demo", "guided showcase experiments");
    demo->add_option("--name", dm.name,
                     "recursive-maj3, parity2, cos-arccos or carry-majority")
        ->required();
    demo->add_option("--depth", dm.depth, "tree depth (default 2)");
    demo->add_option("--rho", dm.rho, "correlation (default 0.9)");
    add_common(demo, dm.common, false);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*analyze) return detail::run_analyze(an);
        if (*maxcorr) return detail::run_maxcorr(mx);
        if (*escmd) return detail::run_es(es);
        if (*decay) return detail::run_decay(dc);
        if (*hier) return detail::run_hierarchy(hi);
        if (*perc) return detail::run_percolation(pc);
        if (*demo) return detail::run_demo(dm);
        std::cerr << "no subcommand selected\n";
        return 2;
    } catch (const capacity_error& e) {
        std::cerr << "capacity error: " << e.what() << '\n';
        return 3;
    } catch (const numerical_error& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 4;
    } catch (const validation_error& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "validation error: malformed input: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 4;
    }
}

inline int run(int argc, char** argv) {
    std::vector<std::string> args;
    args.reserve(static_cast<std::size_t>(argc > 1 ? argc - 1 : 0));
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace hierstab::cli
