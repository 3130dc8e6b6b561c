#pragma once

/// The uncertain linear plant x+ = A_j x + B_j u with finitely many
/// scenario matrices drawn i.i.d. from a fixed pmf, plus the complete
/// scenario tree of disturbance histories used by the receding-horizon
/// program. Everything is immutable after construction.

#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "riskmpc/matlib.hpp"
#include "riskmpc/riskcore.hpp"

namespace riskmpc {

class UncertainLinearSystem {
public:
    UncertainLinearSystem(std::vector<Eigen::MatrixXd> a,
                          std::vector<Eigen::MatrixXd> b, Pmf pmf, SymMatrix q,
                          SymMatrix r);

    int nx() const { return nx_; }
    int nu() const { return nu_; }
    int scenario_count() const { return static_cast<int>(a_.size()); }
    const Eigen::MatrixXd& a(int j) const { return a_.at(j); }
    const Eigen::MatrixXd& b(int j) const { return b_.at(j); }
    const Pmf& pmf() const { return pmf_; }
    const SymMatrix& q() const { return q_; }
    const SymMatrix& r() const { return r_; }

    /// Stage cost x'Qx + u'Ru.
    double stage_cost(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;

private:
    int nx_, nu_;
    std::vector<Eigen::MatrixXd> a_, b_;
    Pmf pmf_;
    SymMatrix q_, r_;
};

/// Parses {"Nx":..,"Nu":..,"scenarios":[{"A":..,"B":..},..],"pmf":..,
/// "Q":..,"R":..}; throws ConfigError on any inconsistency (including Q or
/// R not positive definite).
UncertainLinearSystem load_system(const nlohmann::json& config);
UncertainLinearSystem load_system_file(const std::string& path);

/// Complete L-ary tree of disturbance histories up to depth N. Node ids
/// are breadth-first: children of node i are L*i+1 .. L*i+L; the root
/// (empty history) is node 0.
class ScenarioTree {
public:
    ScenarioTree(int branching, int depth);

    int branching() const { return branching_; }
    int depth() const { return depth_; }
    int node_count() const { return node_count_; }
    int leaf_count() const;
    int level_start(int h) const { return level_start_.at(h); }

    int child(int node, int j) const { return branching_ * node + 1 + j; }
    int parent(int node) const { return (node - 1) / branching_; }
    /// Last disturbance index of the node's history.
    int last_branch(int node) const { return (node - 1) % branching_; }
    bool is_leaf(int node) const { return node >= level_start_[depth_]; }
    int node_depth(int node) const;
    /// Disturbance history (j_0, ..., j_{h-1}) leading to the node.
    std::vector<int> history(int node) const;
    int node_at(const std::vector<int>& history) const;

private:
    int branching_, depth_, node_count_;
    std::vector<int> level_start_;
};

ScenarioTree build_tree(const UncertainLinearSystem& sys, int depth);

/// One plant step x+ = A_j x + B_j u (0-based scenario index).
Eigen::VectorXd step(const UncertainLinearSystem& sys, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& u, int j);

}  // namespace riskmpc
