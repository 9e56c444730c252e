#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hierstab/errors.hpp"
#include "hierstab/fourier.hpp"
#include "hierstab/maxcorr.hpp"
#include "hierstab/mc.hpp"
#include "hierstab/product_space.hpp"
#include "hierstab/rng.hpp"

namespace hierstab {

enum class HierarchyKind { multilinear, general };

inline const char* to_string(HierarchyKind k) noexcept {
    return k == HierarchyKind::multilinear ? "multilinear" : "general";
}

// Component evaluated by a plain function instead of a finite table.
// Such nodes have no finite output law, so they cannot be certified or
// propagated exactly; Monte Carlo estimators still work through them.
struct AnalyticComponent {
    std::string name;
    std::size_t arity = 0;
    double (*fn)(std::span<const double>) = nullptr;
};

// Composition tree: leaves name input coordinates, internal nodes combine
// their children's outputs. Children consume disjoint coordinate blocks.
struct HierarchyNode {
    std::optional<std::size_t> leaf_index;
    std::vector<double> table;  // over child outputs, child 0 fastest
    std::optional<AnalyticComponent> analytic;
    std::vector<HierarchyNode> children;

    static HierarchyNode leaf(std::size_t coordinate) {
        HierarchyNode n;
        n.leaf_index = coordinate;
        return n;
    }
    static HierarchyNode internal(std::vector<double> component_table,
                                  std::vector<HierarchyNode> kids) {
        HierarchyNode n;
        n.table = std::move(component_table);
        n.children = std::move(kids);
        return n;
    }
    static HierarchyNode internal(AnalyticComponent comp, std::vector<HierarchyNode> kids) {
        HierarchyNode n;
        n.analytic = std::move(comp);
        n.children = std::move(kids);
        return n;
    }
    bool is_leaf() const noexcept { return leaf_index.has_value(); }
};

struct HierarchySpec {
    HierarchyNode root;
    HierarchyKind kind = HierarchyKind::multilinear;
    double declared_epsilon = 0.0;  // level every component must certify
};

struct ResolvedNode {
    std::optional<std::size_t> leaf_index;
    std::vector<ResolvedNode> children;
    std::vector<std::size_t> block;  // sorted leaf coordinates of the subtree
    std::size_t depth = 0;           // leaves 0, internal 1 + min over children
    bool finite_outputs = false;     // subtree admits an exact output law
    std::optional<AnalyticComponent> analytic;
    std::optional<FunctionTable> component;  // table nodes: function of child outputs
    std::shared_ptr<const ProductSpace> child_space;
    std::optional<FiniteDistribution> output;
    std::string path;  // "root", "root.2", ...
};

// Tree checked against a leaf space: blocks disjoint and covering, arities
// at least two, tables sized to their child-output products.
class ResolvedHierarchy {
public:
    ResolvedHierarchy(ResolvedNode root, std::shared_ptr<const ProductSpace> leaf_space,
                      std::size_t n_leaves)
        : root_(std::move(root)), leaf_space_(std::move(leaf_space)), n_leaves_(n_leaves) {}

    const ResolvedNode& root() const noexcept { return root_; }
    const std::shared_ptr<const ProductSpace>& leaf_space() const noexcept { return leaf_space_; }
    bool continuous() const noexcept { return leaf_space_ == nullptr; }
    std::size_t n_leaves() const noexcept { return n_leaves_; }
    std::size_t depth() const noexcept { return root_.depth; }

private:
    ResolvedNode root_;
    std::shared_ptr<const ProductSpace> leaf_space_;
    std::size_t n_leaves_;
};

namespace detail {

inline std::size_t value_to_index(const std::vector<double>& support, double v,
                                  const std::string& path) {
    const double tol = 1e-9 * std::max(1.0, std::abs(v));
    auto it = std::lower_bound(support.begin(), support.end(), v);
    if (it != support.end() && std::abs(*it - v) <= tol) {
        return static_cast<std::size_t>(it - support.begin());
    }
    if (it != support.begin() && std::abs(*(it - 1) - v) <= tol) {
        return static_cast<std::size_t>(it - support.begin()) - 1;
    }
    throw validation_error("hierarchy evaluate: value " + std::to_string(v) +
                           " is not in the output support at " + path);
}

inline FiniteDistribution pushforward(const FunctionTable& f) {
    std::map<double, KahanSum> mass;
    for_each_x_atom(f.space(), [&](std::span<const std::size_t> idx, double p) {
        mass[round12(f.at(idx))].add(p);
    }, std::numeric_limits<std::uint64_t>::max());
    std::vector<double> sup, probs;
    sup.reserve(mass.size());
    probs.reserve(mass.size());
    double total = 0.0;
    for (const auto& e : mass) total += e.second.value();
    for (const auto& e : mass) {
        sup.push_back(e.first);
        probs.push_back(e.second.value() / total);
    }
    return FiniteDistribution(std::move(sup), std::move(probs));
}

inline ResolvedNode resolve_node(const HierarchyNode& node, const ProductSpace* leaf_space,
                                 std::size_t n_coords, const std::string& path) {
    ResolvedNode r;
    r.path = path;
    if (node.is_leaf()) {
        if (!node.table.empty() || node.analytic || !node.children.empty()) {
            throw structure_error("leaf node carries component data at " + path);
        }
        const std::size_t i = *node.leaf_index;
        if (i >= n_coords) {
            throw structure_error("leaf coordinate " + std::to_string(i) + " out of range at " + path);
        }
        r.leaf_index = i;
        r.block = {i};
        r.depth = 0;
        r.finite_outputs = leaf_space != nullptr;
        if (leaf_space) r.output = leaf_space->pair(i).x_marginal();
        return r;
    }
    if (node.children.size() < 2) {
        throw structure_error("internal node needs at least two children at " + path);
    }
    if (node.analytic && !node.table.empty()) {
        throw structure_error("node has both a table and an analytic component at " + path);
    }
    if (!node.analytic && node.table.empty()) {
        throw structure_error("internal node has no component at " + path);
    }

    std::size_t min_child_depth = std::numeric_limits<std::size_t>::max();
    bool kids_finite = true;
    for (std::size_t c = 0; c < node.children.size(); ++c) {
        r.children.push_back(resolve_node(node.children[c], leaf_space, n_coords,
                                          path + "." + std::to_string(c)));
        min_child_depth = std::min(min_child_depth, r.children.back().depth);
        kids_finite = kids_finite && r.children.back().finite_outputs;
    }
    r.depth = 1 + min_child_depth;

    // blocks must be pairwise disjoint
    std::vector<std::size_t> merged;
    for (const auto& c : r.children) {
        merged.insert(merged.end(), c.block.begin(), c.block.end());
    }
    std::sort(merged.begin(), merged.end());
    for (std::size_t k = 1; k < merged.size(); ++k) {
        if (merged[k] == merged[k - 1]) {
            throw structure_error("coordinate " + std::to_string(merged[k]) +
                                  " appears in two child blocks at " + path);
        }
    }
    r.block = std::move(merged);

    if (node.analytic) {
        if (node.analytic->arity != node.children.size()) {
            throw structure_error("analytic component arity mismatch at " + path);
        }
        r.analytic = node.analytic;
        r.finite_outputs = false;
        return r;
    }

    if (!kids_finite) {
        throw structure_error("table component above a non-finite child at " + path);
    }
    std::vector<CorrelatedPair> pairs;
    pairs.reserve(r.children.size());
    for (const auto& c : r.children) {
        pairs.push_back(make_resampling_coupling(*c.output, 0.0));
    }
    r.child_space = std::make_shared<ProductSpace>(std::move(pairs));
    if (node.table.size() != r.child_space->x_state_count()) {
        throw structure_error("component table has " + std::to_string(node.table.size()) +
                              " entries, child outputs span " +
                              std::to_string(r.child_space->x_state_count()) + " at " + path);
    }
    r.component.emplace(r.child_space, node.table);
    r.output = pushforward(*r.component);
    r.finite_outputs = true;
    return r;
}

}  // namespace detail

// Resolve against a finite leaf space. The root block must cover every
// coordinate of the space.
inline ResolvedHierarchy resolve(const HierarchySpec& spec,
                                 std::shared_ptr<const ProductSpace> leaf_space) {
    if (!leaf_space) throw validation_error("resolve: null leaf space");
    ResolvedNode root = detail::resolve_node(spec.root, leaf_space.get(), leaf_space->n(), "root");
    const std::size_t covered = root.block.size();
    if (covered != leaf_space->n()) {
        throw structure_error("tree reads " + std::to_string(covered) + " of " +
                              std::to_string(leaf_space->n()) + " coordinates");
    }
    return ResolvedHierarchy(std::move(root), std::move(leaf_space), covered);
}

// Resolve a tree whose leaves are continuous (analytic components only);
// structure checks still apply, exact propagation is unavailable.
inline ResolvedHierarchy resolve_continuous(const HierarchySpec& spec, std::size_t n_leaves) {
    ResolvedNode root = detail::resolve_node(spec.root, nullptr, n_leaves, "root");
    if (root.block.size() != n_leaves) {
        throw structure_error("tree reads " + std::to_string(root.block.size()) + " of " +
                              std::to_string(n_leaves) + " coordinates");
    }
    return ResolvedHierarchy(std::move(root), nullptr, n_leaves);
}

// Self-contained post-order program for fast repeated evaluation.
class Evaluator {
public:
    explicit Evaluator(const ResolvedHierarchy& h) { build(h.root()); }

    double operator()(std::span<const double> x) {
        stack_.clear();
        for (const Op& op : ops_) {
            switch (op.kind) {
                case Op::leaf:
                    stack_.push_back(x[op.leaf_at]);
                    break;
                case Op::table: {
                    const std::size_t base = stack_.size() - op.arity;
                    std::uint64_t flat = 0, stride = 1;
                    for (std::size_t c = 0; c < op.arity; ++c) {
                        flat += detail::value_to_index(op.supports[c], stack_[base + c], op.path) *
                                stride;
                        stride *= op.supports[c].size();
                    }
                    stack_.resize(base);
                    stack_.push_back(op.values[flat]);
                    break;
                }
                case Op::analytic: {
                    const std::size_t base = stack_.size() - op.arity;
                    const double v = op.fn(std::span<const double>(stack_.data() + base, op.arity));
                    stack_.resize(base);
                    stack_.push_back(v);
                    break;
                }
            }
        }
        return stack_.back();
    }

private:
    struct Op {
        enum Kind { leaf, table, analytic } kind = leaf;
        std::size_t arity = 0;
        std::vector<double> values;
        std::vector<std::vector<double>> supports;
        double (*fn)(std::span<const double>) = nullptr;
        std::string path;
        std::size_t leaf_at = 0;
    };

    void build(const ResolvedNode& node) {
        if (node.leaf_index) {
            Op op;
            op.kind = Op::leaf;
            op.leaf_at = *node.leaf_index;
            ops_.push_back(std::move(op));
            return;
        }
        for (const auto& c : node.children) build(c);
        Op op;
        op.arity = node.children.size();
        op.path = node.path;
        if (node.analytic) {
            op.kind = Op::analytic;
            op.fn = node.analytic->fn;
        } else {
            op.kind = Op::table;
            op.values.assign(node.component->values().begin(), node.component->values().end());
            op.supports.reserve(node.children.size());
            for (const auto& c : node.children) op.supports.push_back(c.output->support());
        }
        ops_.push_back(std::move(op));
    }

    std::vector<Op> ops_;
    std::vector<double> stack_;
};

// Whole-tree value table over the x side of the leaf space.
inline FunctionTable compose_table(const ResolvedHierarchy& h,
                                   std::uint64_t cap = enumeration_cap()) {
    if (h.continuous()) throw validation_error("compose: tree has continuous leaves");
    const ProductSpace& space = *h.leaf_space();
    const std::uint64_t count = space.x_state_count();
    if (count > cap) {
        throw capacity_error("compose: " + std::to_string(count) + " leaf states exceed cap");
    }
    Evaluator eval(h);
    std::vector<double> vals(count);
    std::vector<double> x(space.n());
    std::vector<std::size_t> digits(space.n(), 0);
    for (std::size_t i = 0; i < space.n(); ++i) x[i] = space.pair(i).x_marginal().support()[0];
    for (std::uint64_t k = 0; k < count; ++k) {
        vals[k] = eval(x);
        for (std::size_t i = 0; i < space.n(); ++i) {
            if (++digits[i] < space.pair(i).x_marginal().size()) {
                x[i] = space.pair(i).x_marginal().support()[digits[i]];
                break;
            }
            digits[i] = 0;
            x[i] = space.pair(i).x_marginal().support()[0];
        }
    }
    return FunctionTable(h.leaf_space(), std::move(vals));
}

struct NodeCertificate {
    std::string path;
    std::size_t depth = 0;
    std::size_t arity = 0;
    bool certifiable = false;
    double certified_epsilon = 0.0;
    bool ok = false;
    std::string detail;
};

struct CertificationReport {
    HierarchyKind kind = HierarchyKind::multilinear;
    double declared_epsilon = 0.0;
    bool ok = false;
    bool all_certifiable = false;
    double tree_epsilon = 0.0;  // min certified level over internal nodes
    std::size_t depth = 0;
    std::vector<NodeCertificate> nodes;
    std::string failure;
};

namespace detail {

inline void certify_node(const ResolvedNode& node, HierarchyKind kind, double declared,
                         CertificationReport& rep) {
    if (node.leaf_index) return;
    for (const auto& c : node.children) certify_node(c, kind, declared, rep);
    NodeCertificate cert;
    cert.path = node.path;
    cert.depth = node.depth;
    cert.arity = node.children.size();
    if (node.analytic) {
        cert.certifiable = false;
        cert.detail = "analytic component '" + node.analytic->name + "' has no finite certificate";
    } else if (kind == HierarchyKind::multilinear) {
        try {
            cert.certified_epsilon = distance_to_lin(expand(*node.component));
            cert.certifiable = true;
        } catch (const not_multilinear_error& e) {
            cert.certifiable = false;
            cert.detail = e.what();
        }
    } else {
        const NonSeparabilityReport nsr = non_separability(*node.component);
        cert.certifiable = true;
        cert.certified_epsilon = nsr.epsilon;
        if (nsr.degenerate) cert.detail = "component output is constant";
    }
    cert.ok = cert.certifiable && cert.certified_epsilon >= declared - 1e-9;
    if (!cert.ok && rep.failure.empty()) {
        rep.failure = cert.path + ": " +
                      (cert.certifiable
                           ? "certified level " + std::to_string(cert.certified_epsilon) +
                                 " below declared " + std::to_string(declared)
                           : cert.detail);
    }
    rep.nodes.push_back(std::move(cert));
}

}  // namespace detail

// Checks that every internal component is epsilon-far from the separable
// class named by the kind: distance to linear for multilinear trees,
// non-separability level for general trees.
inline CertificationReport try_certify(const ResolvedHierarchy& h, HierarchyKind kind,
                                       double declared_epsilon) {
    if (!(declared_epsilon > 0.0 && declared_epsilon <= 1.0)) {
        throw validation_error("certify: declared epsilon must lie in (0, 1]");
    }
    CertificationReport rep;
    rep.kind = kind;
    rep.declared_epsilon = declared_epsilon;
    rep.depth = h.depth();
    detail::certify_node(h.root(), kind, declared_epsilon, rep);
    rep.all_certifiable = true;
    bool all_ok = true;
    double tree_eps = 1.0;
    for (const auto& c : rep.nodes) {
        rep.all_certifiable = rep.all_certifiable && c.certifiable;
        all_ok = all_ok && c.ok;
        tree_eps = std::min(tree_eps, c.certifiable ? c.certified_epsilon : 0.0);
    }
    if (rep.nodes.empty()) tree_eps = 0.0;  // bare-leaf tree certifies vacuously
    rep.tree_epsilon = tree_eps;
    rep.ok = all_ok;
    return rep;
}

inline CertificationReport certify(const ResolvedHierarchy& h, HierarchyKind kind,
                                   double declared_epsilon) {
    CertificationReport rep = try_certify(h, kind, declared_epsilon);
    if (!rep.ok) throw certification_error("certification failed: " + rep.failure);
    return rep;
}

namespace detail {

inline double recursive_wire(const ResolvedNode& node, double rho) {
    if (node.leaf_index) return rho;
    if (node.analytic) {
        throw validation_error("exact recursion requires table components, found analytic at " +
                               node.path);
    }
    std::vector<double> wires(node.children.size());
    for (std::size_t c = 0; c < node.children.size(); ++c) {
        wires[c] = recursive_wire(node.children[c], rho);
    }
    return stability(expand(*node.component), wires);
}

}  // namespace detail

// Exact stability of the composed function under coordinatewise
// rho-resampling, computed level by level. Multilinear trees propagate the
// output-pair correlation through each component's expansion; this is exact
// because sibling blocks are independent. General trees evaluate the
// composed table directly (within the cap).
inline double stability_recursive(const ResolvedHierarchy& h, HierarchyKind kind, double rho,
                                  std::uint64_t cap = enumeration_cap()) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw validation_error("stability: rho must lie in [0,1]");
    if (h.continuous()) throw validation_error("exact stability needs finite leaves");
    if (kind == HierarchyKind::multilinear) {
        return detail::recursive_wire(h.root(), rho);
    }
    // general: Corr(f(X), f(Y)) over the rho-resampled leaf space
    std::vector<CorrelatedPair> pairs;
    for (std::size_t i = 0; i < h.leaf_space()->n(); ++i) {
        pairs.push_back(make_resampling_coupling(h.leaf_space()->pair(i).x_marginal(), rho));
    }
    auto coupled = std::make_shared<ProductSpace>(std::move(pairs));
    Evaluator eval(h);
    KahanSum ef, ef2, effy;
    std::vector<double> xv(coupled->n()), yv(coupled->n());
    for_each_joint_atom(*coupled, [&](std::span<const std::size_t> xi,
                                      std::span<const std::size_t> yi, double p) {
        for (std::size_t i = 0; i < coupled->n(); ++i) {
            xv[i] = coupled->pair(i).x_marginal().support()[xi[i]];
            yv[i] = coupled->pair(i).y_marginal().support()[yi[i]];
        }
        const double fx = eval(xv);
        const double fy = eval(yv);
        ef.add(p * fx);
        ef2.add(p * fx * fx);
        effy.add(p * fx * fy);
    }, cap);
    const double mean = ef.value();
    const double var = ef2.value() - mean * mean;
    if (var <= kVarianceFloor * std::max(1.0, ef2.value())) return 0.0;
    return (effy.value() - mean * mean) / var;
}

struct DecayBoundReport {
    double epsilon = 0.0;
    double delta = 0.0;
    double rho = 0.0;
    int depth = 0;
    double alpha = 0.0;        // (epsilon - delta) / epsilon
    double constant = 0.0;     // C = 1 / log(1 + epsilon - delta)
    double proof_steps = 0.0;  // iterations needed to pull rho below alpha
    double iterate_bound = 0.0;     // g^depth(rho), g(x) = (1-eps) x + eps x^2
    double closed_form = 0.0;       // (1-delta)^(depth - C log(1/(1-rho)))
    bool closed_form_applicable = false;  // exponent nonnegative
    double eps1_bound = -1.0;       // rho^(2^depth) when epsilon == 1, else -1
    double resilient_bound = -1.0;  // rho^((t+1)^depth) when t supplied, else -1
};

// Depth-exponential decay package: the one-level map iterated d times, the
// matching closed form, and the special cases (fully nonlinear components,
// t-resilient components).
inline DecayBoundReport decay_bounds(double epsilon, double delta, double rho, int depth,
                                     std::optional<int> resilience_t = std::nullopt) {
    if (!(epsilon > 0.0 && epsilon <= 1.0)) {
        throw validation_error("decay: epsilon must lie in (0, 1]");
    }
    if (!(delta > 0.0 && delta < epsilon)) {
        throw validation_error("decay: delta must lie in (0, epsilon)");
    }
    if (!(rho >= 0.0 && rho < 1.0)) throw validation_error("decay: rho must lie in [0, 1)");
    if (depth < 1) throw validation_error("decay: depth must be at least 1");
    if (resilience_t && *resilience_t < 1) {
        throw validation_error("decay: resilience must be at least 1");
    }
    DecayBoundReport rep;
    rep.epsilon = epsilon;
    rep.delta = delta;
    rep.rho = rho;
    rep.depth = depth;
    rep.alpha = (epsilon - delta) / epsilon;
    rep.constant = 1.0 / std::log1p(epsilon - delta);

    if (rho <= rep.alpha) {
        rep.proof_steps = 0.0;
    } else {
        rep.proof_steps = std::ceil(std::log((1.0 - rep.alpha) / (1.0 - rho)) /
                                    std::log1p(epsilon * rep.alpha));
    }

    double x = rho;
    for (int i = 0; i < depth; ++i) x = (1.0 - epsilon) * x + epsilon * x * x;
    rep.iterate_bound = x;

    const double exponent = depth + rep.constant * std::log1p(-rho);
    rep.closed_form = std::pow(1.0 - delta, exponent);
    rep.closed_form_applicable = exponent >= 0.0;

    if (epsilon >= 1.0) {
        rep.eps1_bound = std::pow(rho, std::exp2(static_cast<double>(depth)));
    }
    if (resilience_t) {
        rep.resilient_bound = std::pow(rho, std::pow(static_cast<double>(*resilience_t) + 1.0,
                                                     static_cast<double>(depth)));
    }
    return rep;
}

enum class LeafSampler { finite, uniform01, gaussian };

struct McOptions {
    std::uint64_t seed = 0;
    std::uint64_t samples = 100000;
    int workers = 1;
    LeafSampler leaves = LeafSampler::finite;
};

namespace detail {

// Streams 8i+0..8i+4 of the stability salt belong to coordinate i:
// x value (two slots for the gaussian pair), keep decision, fresh value.
struct LeafDraw {
    double x = 0.0;
    double y = 0.0;
};

inline LeafDraw draw_leaf(const FiniteDistribution* marginal, LeafSampler kind, double rho,
                          std::uint64_t seed, std::size_t coordinate, std::uint64_t index) {
    const std::uint64_t base = stream_salt::stability_mc + 8 * coordinate;
    LeafDraw d;
    const double keep = RngStream::unit_at(seed, base + 2, index);
    switch (kind) {
        case LeafSampler::finite: {
            const std::size_t xi = marginal->sample_index(RngStream::unit_at(seed, base + 0, index));
            std::size_t yi = xi;
            if (keep >= rho) {
                yi = marginal->sample_index(RngStream::unit_at(seed, base + 3, index));
            }
            d.x = marginal->support()[xi];
            d.y = marginal->support()[yi];
            return d;
        }
        case LeafSampler::uniform01: {
            d.x = RngStream::unit_at(seed, base + 0, index);
            d.y = keep < rho ? d.x : RngStream::unit_at(seed, base + 3, index);
            return d;
        }
        case LeafSampler::gaussian: {
            const double u1 = 1.0 - RngStream::unit_at(seed, base + 0, index);
            const double u2 = RngStream::unit_at(seed, base + 1, index);
            d.x = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
            if (keep < rho) {
                d.y = d.x;
            } else {
                const double v1 = 1.0 - RngStream::unit_at(seed, base + 3, index);
                const double v2 = RngStream::unit_at(seed, base + 4, index);
                d.y = std::sqrt(-2.0 * std::log(v1)) * std::cos(6.283185307179586476925287 * v2);
            }
            return d;
        }
    }
    return d;
}

}  // namespace detail

// Monte Carlo estimate of Corr(f(X), f(Y)) with a delta-method 95% interval.
// Leaves are rho-resampled from the space marginals (or the named continuous
// sampler). Two passes over the deterministic sample stream: moments first,
// then the influence-function variance.
inline McEstimate stability_mc(const ResolvedHierarchy& h, double rho, const McOptions& opt) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw validation_error("stability mc: rho must lie in [0,1]");
    if (opt.samples == 0) throw validation_error("stability mc: need at least one sample");
    if (opt.leaves == LeafSampler::finite && h.continuous()) {
        throw validation_error("stability mc: tree has continuous leaves, pick a leaf sampler");
    }
    const std::size_t n = h.n_leaves();
    std::vector<const FiniteDistribution*> marginals(n, nullptr);
    if (opt.leaves == LeafSampler::finite) {
        for (std::size_t i = 0; i < n; ++i) {
            marginals[i] = &h.leaf_space()->pair(i).x_marginal();
        }
    }

    struct Moments {
        double sz = 0, sw = 0, szw = 0, szz = 0, sww = 0;
        std::uint64_t count = 0;
    };
    auto sample_into = [&](std::uint64_t index, Evaluator& eval, std::vector<double>& xv,
                           std::vector<double>& yv) {
        for (std::size_t i = 0; i < n; ++i) {
            const detail::LeafDraw d =
                detail::draw_leaf(marginals[i], opt.leaves, rho, opt.seed, i, index);
            xv[i] = d.x;
            yv[i] = d.y;
        }
        const double z = eval(xv);
        const double w = eval(yv);
        return std::pair<double, double>(z, w);
    };

    const std::vector<Moments> blocks = run_blocks<Moments>(
        opt.samples, opt.workers, [&](std::uint64_t, std::uint64_t lo, std::uint64_t hi, Moments& m) {
            Evaluator local(h);
            std::vector<double> xv(n), yv(n);
            for (std::uint64_t k = lo; k < hi; ++k) {
                const auto [z, w] = sample_into(k, local, xv, yv);
                m.sz += z;
                m.sw += w;
                m.szw += z * w;
                m.szz += z * z;
                m.sww += w * w;
                ++m.count;
            }
        });

    KahanSum sz, sw, szw, szz, sww;
    for (const Moments& m : blocks) {
        sz.add(m.sz);
        sw.add(m.sw);
        szw.add(m.szw);
        szz.add(m.szz);
        sww.add(m.sww);
    }
    const double N = static_cast<double>(opt.samples);
    const double mz = sz.value() / N, mw = sw.value() / N;
    const double vz = szz.value() / N - mz * mz;
    const double vw = sww.value() / N - mw * mw;
    McEstimate est;
    est.samples = opt.samples;
    est.seed = opt.seed;
    if (vz <= kVarianceFloor * std::max(1.0, szz.value() / N) ||
        vw <= kVarianceFloor * std::max(1.0, sww.value() / N)) {
        est.degenerate = true;
        return est;
    }
    const double r = (szw.value() / N - mz * mw) / std::sqrt(vz * vw);
    est.estimate = r;

    // second pass: empirical variance of the Pearson influence function
    struct Psi {
        double s = 0, s2 = 0;
    };
    const double sdz = std::sqrt(vz), sdw = std::sqrt(vw);
    const std::vector<Psi> blocks2 = run_blocks<Psi>(
        opt.samples, opt.workers, [&](std::uint64_t, std::uint64_t lo, std::uint64_t hi, Psi& pb) {
            Evaluator local(h);
            std::vector<double> xv(n), yv(n);
            for (std::uint64_t k = lo; k < hi; ++k) {
                const auto [z, w] = sample_into(k, local, xv, yv);
                const double zt = (z - mz) / sdz;
                const double wt = (w - mw) / sdw;
                const double psi = zt * wt - 0.5 * r * (zt * zt + wt * wt);
                pb.s += psi;
                pb.s2 += psi * psi;
            }
        });
    KahanSum ps, ps2;
    for (const Psi& p : blocks2) {
        ps.add(p.s);
        ps2.add(p.s2);
    }
    const double pmean = ps.value() / N;
    const double pvar = std::max(0.0, ps2.value() / N - pmean * pmean);
    est.std_error = std::sqrt(pvar / N);
    est.ci_low = r - kNormal975 * est.std_error;
    est.ci_high = r + kNormal975 * est.std_error;
    return est;
}

}  // namespace hierstab
