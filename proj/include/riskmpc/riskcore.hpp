#pragma once

/// Polytopic risk envelopes over finite probability spaces, their vertex
/// sets, and static / nested (time-consistent) risk evaluation over
/// complete scenario trees of costs.

#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "riskmpc/errors.hpp"

namespace riskmpc {

/// Probability mass function over L outcomes; entries strictly positive and
/// summing to one within 1e-12.
class Pmf {
public:
    explicit Pmf(Eigen::VectorXd probs);
    int size() const { return static_cast<int>(p_.size()); }
    double operator()(int j) const { return p_(j); }
    const Eigen::VectorXd& vec() const { return p_; }

private:
    Eigen::VectorXd p_;
};

enum class RiskFamily {
    Expectation,
    MeanUpperSemideviation,
    WorstCase,
    Cvar,
    CustomH,
    CustomV,
};

/// Risk-family descriptor, the JSON-facing form, e.g. {"family":"mus","c":0.5}.
struct RiskSpec {
    RiskFamily family = RiskFamily::Expectation;
    double c = 0.0;      ///< semideviation weight, in [0, 1]
    double alpha = 1.0;  ///< CVaR level, in (0, 1]
    Eigen::MatrixXd SI, SE;
    Eigen::VectorXd TI, TE;
    std::vector<Eigen::VectorXd> vertices;  ///< CustomV

    static RiskSpec expectation();
    static RiskSpec mean_upper_semideviation(double c);
    static RiskSpec worst_case();
    static RiskSpec cvar(double alpha);
    static RiskSpec custom_h(Eigen::MatrixXd si, Eigen::VectorXd ti,
                             Eigen::MatrixXd se, Eigen::VectorXd te);
    static RiskSpec custom_v(std::vector<Eigen::VectorXd> vertices);

    static RiskSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    std::string family_name() const;
    /// Scalar parameter for reports: c for MUS, alpha for CVaR, NaN otherwise.
    double param() const;
    std::string label() const;
};

/// Polytopic subset of the probability simplex represented by its
/// (enumerated) vertex list. Immutable after construction; evaluation is
/// a read over the vertex set and safe for concurrent use. One envelope
/// object serves every stage of a nested evaluation (the one-step risk is
/// time-invariant and state-independent).
class RiskEnvelope {
public:
    RiskEnvelope(RiskSpec spec, Pmf base, std::vector<Eigen::VectorXd> vertices);

    int size_L() const { return base_.size(); }
    const Pmf& base() const { return base_; }
    const RiskSpec& spec() const { return spec_; }
    const std::vector<Eigen::VectorXd>& vertices() const { return vertices_; }

private:
    RiskSpec spec_;
    Pmf base_;
    std::vector<Eigen::VectorXd> vertices_;
};

RiskEnvelope make_envelope(const RiskSpec& spec, const Pmf& base);

/// Vertices of {q in Delta^L : SI q <= TI, SE q = TE} by exhaustive
/// active-set enumeration (simplex constraints are implicit). Limited to
/// L <= 12. Points returned are basic feasible solutions deduplicated at
/// 1e-9 in the max norm. Throws EmptyEnvelope when the polytope is empty.
std::vector<Eigen::VectorXd> enumerate_vertices(const Eigen::MatrixXd& SI,
                                                const Eigen::VectorXd& TI,
                                                const Eigen::MatrixXd& SE,
                                                const Eigen::VectorXd& TE,
                                                int L);

/// rho(Z) = max over envelope vertices q of q'Z.
double eval_static(const RiskEnvelope& env, const Eigen::VectorXd& z);

/// Complete L-ary tree of per-node scalar costs; root at depth 0, node ids
/// in breadth-first order (children of node i are L*i+1 .. L*i+L).
class CostTree {
public:
    CostTree(int branching, int depth);

    int branching() const { return branching_; }
    int depth() const { return depth_; }
    int node_count() const { return static_cast<int>(costs_.size()); }
    int leaf_count() const;

    int child(int node, int j) const { return branching_ * node + 1 + j; }
    int parent(int node) const { return (node - 1) / branching_; }
    bool is_leaf(int node) const;
    int node_depth(int node) const;

    double cost(int node) const { return costs_.at(node); }
    void set_cost(int node, double c) { costs_.at(node) = c; }

private:
    int branching_;
    int depth_;
    std::vector<int> level_start_;  // level_start_[h] = id of first node at depth h
    std::vector<double> costs_;
};

/// Nested (time-consistent) evaluation: value(leaf) = cost(leaf),
/// value(node) = cost(node) + rho(children values); returns value(root).
double eval_nested(const RiskEnvelope& env, const CostTree& tree);

/// Static evaluation at the root over the per-vertex product measures:
/// max over envelope vertices q of E_q-product[ sum of costs along the
/// root-to-leaf path ]. This is the time-inconsistent comparator to
/// eval_nested (the two can order outcomes differently).
double eval_static_product(const RiskEnvelope& env, const CostTree& tree);

}  // namespace riskmpc
