#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hierstab/demo_trees.hpp"
#include "hierstab/efron_stein.hpp"
#include "hierstab/errors.hpp"
#include "hierstab/fourier.hpp"
#include "hierstab/hierarchy.hpp"
#include "hierstab/maxcorr.hpp"
#include "hierstab/mc.hpp"
#include "hierstab/named_functions.hpp"
#include "hierstab/percolation.hpp"
#include "hierstab/product_space.hpp"

namespace hierstab::io {

using json = nlohmann::json;

// Numbers may arrive as JSON numbers or as decimal strings (exact-probability
// descriptors); both map to double here.
inline double to_real(const json& v, const std::string& what) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        try {
            std::size_t used = 0;
            const double x = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return x;
        } catch (const std::exception&) {
            throw validation_error(what + ": cannot parse '" + s + "' as a real number");
        }
    }
    throw validation_error(what + ": expected a number or a decimal string");
}

inline std::vector<double> to_real_vector(const json& arr, const std::string& what) {
    if (!arr.is_array()) throw validation_error(what + ": expected an array");
    std::vector<double> out;
    out.reserve(arr.size());
    for (const auto& v : arr) out.push_back(to_real(v, what));
    return out;
}

inline std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

inline const json& require_field(const json& j, const char* key, const std::string& where) {
    const auto it = j.find(key);
    if (it == j.end()) throw validation_error(where + ": missing field '" + key + "'");
    return *it;
}

// ---------------------------------------------------------------------------
// Space descriptors
// ---------------------------------------------------------------------------

inline CorrelatedPair parse_pair(const json& p, std::size_t index) {
    const std::string where = "pair " + std::to_string(index);
    if (!p.is_object()) throw validation_error(where + ": expected an object");
    const auto support = to_real_vector(require_field(p, "support", where), where + " support");
    const auto probs = to_real_vector(require_field(p, "probs", where), where + " probs");
    FiniteDistribution x(support, probs);

    const json& coupling = require_field(p, "coupling", where);
    const std::string kind =
        require_field(coupling, "kind", where + " coupling").get<std::string>();
    if (kind == "resample") {
        const double rho = to_real(require_field(coupling, "rho", where), where + " rho");
        return make_resampling_coupling(x, rho);
    }
    if (kind == "explicit") {
        const json& rows = require_field(coupling, "joint", where);
        if (!rows.is_array() || rows.empty())
            throw validation_error(where + ": joint must be a nonempty 2d array");
        std::vector<double> y_support = support;
        if (coupling.contains("y_support"))
            y_support = to_real_vector(coupling["y_support"], where + " y_support");
        if (rows.size() != support.size())
            throw validation_error(where + ": joint row count must match the support size");
        std::vector<std::vector<double>> joint;
        joint.reserve(rows.size());
        for (const auto& r : rows) {
            auto row = to_real_vector(r, where + " joint row");
            if (row.size() != y_support.size())
                throw validation_error(where + ": joint column count must match the y support");
            joint.push_back(std::move(row));
        }
        CorrelatedPair out = pair_from_joint(support, y_support, joint);
        // The declared probs must agree with the joint's row sums.
        for (std::size_t a = 0; a < probs.size(); ++a) {
            if (std::abs(out.x_marginal().probs()[a] - probs[a]) > 1e-9)
                throw validation_error(where + ": probs disagree with the joint's row sums");
        }
        return out;
    }
    throw validation_error(where + ": unknown coupling kind '" + kind + "'");
}

inline ProductSpace parse_space(const json& j) {
    if (!j.is_object()) throw validation_error("space: expected an object");
    const json& pairs = require_field(j, "pairs", "space");
    if (!pairs.is_array() || pairs.empty())
        throw validation_error("space: 'pairs' must be a nonempty array");
    std::vector<CorrelatedPair> out;
    out.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) out.push_back(parse_pair(pairs[i], i));
    return ProductSpace(std::move(out));
}

inline json space_to_json(const ProductSpace& space) {
    json pairs = json::array();
    for (std::size_t i = 0; i < space.n(); ++i) {
        const CorrelatedPair& p = space.pair(i);
        json joint = json::array();
        for (std::size_t a = 0; a < p.x_marginal().size(); ++a) {
            json row = json::array();
            for (std::size_t b = 0; b < p.y_marginal().size(); ++b) row.push_back(p.joint(a, b));
            joint.push_back(std::move(row));
        }
        json support = json::array();
        json probs = json::array();
        for (std::size_t a = 0; a < p.x_marginal().size(); ++a) {
            support.push_back(p.x_marginal().support()[a]);
            probs.push_back(p.x_marginal().probs()[a]);
        }
        json y_support = json::array();
        for (std::size_t b = 0; b < p.y_marginal().size(); ++b) y_support.push_back(p.y_marginal().support()[b]);
        pairs.push_back(json{{"support", std::move(support)},
                             {"probs", std::move(probs)},
                             {"coupling",
                              json{{"kind", "explicit"},
                                   {"joint", std::move(joint)},
                                   {"y_support", std::move(y_support)}}}});
    }
    return json{{"pairs", std::move(pairs)}};
}

// ---------------------------------------------------------------------------
// Function descriptors
// ---------------------------------------------------------------------------

inline std::vector<double> named_values(const std::string& name, std::size_t n) {
    const FunctionTable t = named_function(name, n);
    return std::vector<double>(t.values().begin(), t.values().end());
}

inline FunctionTable parse_function(const json& j, std::shared_ptr<const ProductSpace> space) {
    if (!j.is_object()) throw validation_error("function: expected an object");
    const std::string kind = require_field(j, "kind", "function").get<std::string>();
    if (kind == "table") {
        auto values = to_real_vector(require_field(j, "values", "function"), "function values");
        return FunctionTable(std::move(space), std::move(values));
    }
    if (kind == "named") {
        const std::string name = require_field(j, "name", "function").get<std::string>();
        std::size_t n = space->n();
        if (j.contains("n")) {
            const auto declared = j["n"].get<std::int64_t>();
            if (declared <= 0 || static_cast<std::size_t>(declared) != space->n())
                throw validation_error("function: declared n does not match the space");
            n = static_cast<std::size_t>(declared);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const FiniteDistribution& d = space->pair(i).x_marginal();
            if (d.size() != 2 || std::abs(d.support()[0] + 1.0) > 1e-12 ||
                std::abs(d.support()[1] - 1.0) > 1e-12)
                throw validation_error(
                    "function: named functions require every coordinate support to be {-1,+1}");
        }
        return FunctionTable(std::move(space), named_values(name, n));
    }
    throw validation_error("function: unknown kind '" + kind + "'");
}

inline json function_to_json(const FunctionTable& f) {
    json values = json::array();
    for (double v : f.values()) values.push_back(v);
    return json{{"kind", "table"}, {"values", std::move(values)}};
}

// ---------------------------------------------------------------------------
// Hierarchy descriptors
// ---------------------------------------------------------------------------

inline AnalyticComponent analytic_by_name(const std::string& name, std::size_t arity) {
    if (name == "cos_pi_x1") return AnalyticComponent{name, arity, &detail::component_cos_pi_x1};
    if (name == "arccos_x1_over_pi")
        return AnalyticComponent{name, arity, &detail::component_arccos_x1};
    throw validation_error("hierarchy: unknown analytic component '" + name + "'");
}

inline HierarchyNode parse_tree(const json& j) {
    if (!j.is_object()) throw validation_error("hierarchy node: expected an object");
    if (j.contains("leaf")) {
        const auto idx = j["leaf"].get<std::int64_t>();
        if (idx < 0) throw validation_error("hierarchy node: leaf index must be nonnegative");
        return HierarchyNode::leaf(static_cast<std::size_t>(idx));
    }
    const json& comp = require_field(j, "component", "hierarchy node");
    const json& kids = require_field(j, "children", "hierarchy node");
    if (!kids.is_array() || kids.size() < 2)
        throw validation_error("hierarchy node: 'children' must list at least two subtrees");
    std::vector<HierarchyNode> children;
    children.reserve(kids.size());
    for (const auto& k : kids) children.push_back(parse_tree(k));

    const std::string kind = require_field(comp, "kind", "component").get<std::string>();
    if (kind == "table") {
        auto values = to_real_vector(require_field(comp, "values", "component"),
                                     "component values");
        return HierarchyNode::internal(std::move(values), std::move(children));
    }
    // take the arity before std::move(children) can empty the vector; the
    // argument order of the internal(...) call is unspecified
    const std::size_t arity = children.size();
    if (kind == "named") {
        const std::string name = require_field(comp, "name", "component").get<std::string>();
        return HierarchyNode::internal(named_values(name, arity), std::move(children));
    }
    if (kind == "analytic") {
        const std::string name = require_field(comp, "name", "component").get<std::string>();
        return HierarchyNode::internal(analytic_by_name(name, arity), std::move(children));
    }
    throw validation_error("component: unknown kind '" + kind + "'");
}

inline HierarchyKind parse_kind(const std::string& s) {
    if (s == "multilinear") return HierarchyKind::multilinear;
    if (s == "general") return HierarchyKind::general;
    throw validation_error("hierarchy: kind must be 'multilinear' or 'general'");
}

// Accepts either a bare tree node or {"kind":…, "epsilon":…, "tree":…}.
inline HierarchySpec parse_hierarchy(const json& j) {
    HierarchySpec spec;
    if (j.is_object() && j.contains("tree")) {
        spec.root = parse_tree(j["tree"]);
        if (j.contains("kind")) spec.kind = parse_kind(j["kind"].get<std::string>());
        if (j.contains("epsilon")) spec.declared_epsilon = to_real(j["epsilon"], "epsilon");
        return spec;
    }
    spec.root = parse_tree(j);
    return spec;
}

inline json tree_to_json(const HierarchyNode& node) {
    if (node.is_leaf()) return json{{"leaf", *node.leaf_index}};
    json children = json::array();
    for (const auto& c : node.children) children.push_back(tree_to_json(c));
    json comp;
    if (node.analytic) {
        comp = json{{"kind", "analytic"}, {"name", node.analytic->name}};
    } else {
        json values = json::array();
        for (double v : node.table) values.push_back(v);
        comp = json{{"kind", "table"}, {"values", std::move(values)}};
    }
    return json{{"component", std::move(comp)}, {"children", std::move(children)}};
}

inline json hierarchy_to_json(const HierarchySpec& spec) {
    return json{{"kind", to_string(spec.kind)},
                {"epsilon", spec.declared_epsilon},
                {"tree", tree_to_json(spec.root)}};
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

inline json report_to_json(const StabilityBoundReport& r) {
    return json{{"rho", r.rho},
                {"epsilon", r.epsilon},
                {"stability", r.stability_value},
                {"bound", r.bound},
                {"slack", r.slack},
                {"holds", r.holds},
                {"floor_applicable", r.floor_applicable},
                {"floor", r.floor_value},
                {"floor_slack", r.floor_slack},
                {"floor_holds", r.floor_holds}};
}

inline json report_to_json(const LowDegreeBoundReport& r) {
    return json{{"D", r.degree},
                {"rho", r.rho},
                {"M", r.correlation},
                {"sqrt_low_degree_mass", r.sqrt_low_degree_mass},
                {"stability", r.stability_value},
                {"bound", r.bound},
                {"slack", r.slack},
                {"holds", r.holds}};
}

inline json report_to_json(const MaxcorrReport& r) {
    return json{{"maxcorr", r.value},
                {"markov_route", r.power_value},
                {"agreement", r.agreement},
                {"pearson", r.pearson},
                {"degenerate", r.degenerate},
                {"power_iterations", r.power_iterations},
                {"power_residual", r.power_residual}};
}

inline json report_to_json(const NonSeparabilityReport& r) {
    json witness = json::object();
    for (std::size_t k = 0; k < r.output_support.size(); ++k)
        witness[format_value(r.output_support[k])] = r.witness[k];
    return json{{"epsilon", r.epsilon},
                {"corr_to_separable", r.corr_to_separable},
                {"degenerate", r.degenerate},
                {"witness", std::move(witness)}};
}

inline json report_to_json(const MarkovContractReport& r) {
    json entries = json::array();
    for (const auto& e : r.entries)
        entries.push_back(json{{"mask", e.mask},
                               {"component_norm", e.component_norm},
                               {"image_norm", e.image_norm},
                               {"factor", e.factor},
                               {"slack", e.slack}});
    return json{{"holds", r.holds}, {"min_slack", r.min_slack}, {"entries", std::move(entries)}};
}

inline json es_to_json(const ESDecomposition& dec, bool full_tables) {
    json comps = json::object();
    const std::size_t n = dec.n();
    for (std::uint64_t mask = 0; mask < (1ull << n); ++mask) {
        json entry{{"norm_sq", dec.norm_sq(mask)}};
        if (full_tables) {
            json table = json::array();
            for (double v : dec.component(mask)) table.push_back(v);
            entry["table"] = std::move(table);
        }
        comps[std::to_string(mask)] = std::move(entry);
    }
    return json{{"n", n}, {"variance", dec.variance()}, {"components", std::move(comps)}};
}

inline json report_to_json(const NodeCertificate& c) {
    return json{{"path", c.path},
                {"depth", c.depth},
                {"arity", c.arity},
                {"certifiable", c.certifiable},
                {"certified_epsilon", c.certified_epsilon},
                {"ok", c.ok},
                {"detail", c.detail}};
}

inline json report_to_json(const CertificationReport& r) {
    json nodes = json::array();
    for (const auto& c : r.nodes) nodes.push_back(report_to_json(c));
    return json{{"kind", to_string(r.kind)},
                {"declared_epsilon", r.declared_epsilon},
                {"ok", r.ok},
                {"all_certifiable", r.all_certifiable},
                {"tree_epsilon", r.tree_epsilon},
                {"depth", r.depth},
                {"failure", r.failure},
                {"nodes", std::move(nodes)}};
}

inline json report_to_json(const DecayBoundReport& r) {
    json out{{"epsilon", r.epsilon},
             {"delta", r.delta},
             {"rho", r.rho},
             {"d", r.depth},
             {"alpha", r.alpha},
             {"C", r.constant},
             {"proof_steps", r.proof_steps},
             {"iterate_bound", r.iterate_bound},
             {"closed_form", r.closed_form},
             {"closed_form_applicable", r.closed_form_applicable}};
    if (r.eps1_bound >= 0.0) out["eps1_bound"] = r.eps1_bound;
    if (r.resilient_bound >= 0.0) out["resilient_bound"] = r.resilient_bound;
    return out;
}

inline json report_to_json(const McEstimate& r) {
    return json{{"estimate", r.estimate},
                {"ci_low", r.ci_low},
                {"ci_high", r.ci_high},
                {"std_error", r.std_error},
                {"samples", r.samples},
                {"seed", r.seed},
                {"degenerate", r.degenerate}};
}

inline json report_to_json(const DegreeProfile& p) {
    json by_degree = json::array();
    for (double v : p.mass_by_degree) by_degree.push_back(v);
    json cumulative = json::array();
    for (double v : p.cumulative_mass) cumulative.push_back(v);
    json sqrt_cumulative = json::array();
    for (double v : p.sqrt_cumulative_mass) sqrt_cumulative.push_back(v);
    return json{{"side", p.side},
                {"sites", p.sites},
                {"mean", p.mean},
                {"variance", p.variance},
                {"total_mass", p.total_mass},
                {"mass_by_degree", std::move(by_degree)},
                {"cumulative_mass", std::move(cumulative)},
                {"sqrt_cumulative_mass", std::move(sqrt_cumulative)}};
}

inline json expansion_to_json(const FourierExpansion& F) {
    json degree_mass = json::array();
    for (double v : F.degree_mass()) degree_mass.push_back(v);
    json sqrt_cumulative = json::array();
    double acc = 0.0;
    for (std::size_t d = 0; d < F.degree_mass().size(); ++d) {
        if (d >= 1) acc += F.degree_mass()[d];
        sqrt_cumulative.push_back(d == 0 ? 0.0 : std::sqrt(std::max(0.0, acc)));
    }
    return json{{"n", F.n()},
                {"mean", F.mean()},
                {"variance", F.variance()},
                {"max_degree", F.max_degree()},
                {"distance_to_lin", distance_to_lin(F)},
                {"degree_mass", std::move(degree_mass)},
                {"sqrt_cumulative_mass", std::move(sqrt_cumulative)}};
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open input file '" + path + "'");
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw validation_error("file '" + path + "' is not valid JSON");
    return j;
}

// Atomic publish: write to a sibling temp file, then rename over the target.
inline void write_text_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw validation_error("cannot open output file '" + tmp.string() + "'");
        out << content;
        if (!out) throw validation_error("failed writing '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw validation_error("failed to publish '" + path + "': " + ec.message());
}

}  // namespace hierstab::io
