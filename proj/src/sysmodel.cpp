#include "riskmpc/sysmodel.hpp"

#include <fstream>

namespace riskmpc {

namespace {

Eigen::MatrixXd parse_matrix(const nlohmann::json& j, int rows, int cols,
                             const char* name) {
    if (static_cast<int>(j.size()) != rows) {
        throw ConfigError(std::string(name) + ": wrong row count");
    }
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        if (static_cast<int>(j.at(i).size()) != cols) {
            throw ConfigError(std::string(name) + ": wrong column count");
        }
        for (int k = 0; k < cols; ++k) m(i, k) = j.at(i).at(k).get<double>();
    }
    if (!m.allFinite()) throw ConfigError(std::string(name) + ": non-finite entries");
    return m;
}

}  // namespace

UncertainLinearSystem::UncertainLinearSystem(std::vector<Eigen::MatrixXd> a,
                                             std::vector<Eigen::MatrixXd> b,
                                             Pmf pmf, SymMatrix q, SymMatrix r)
    : a_(std::move(a)), b_(std::move(b)), pmf_(std::move(pmf)),
      q_(std::move(q)), r_(std::move(r)) {
    if (a_.empty() || a_.size() != b_.size()) {
        throw ConfigError("system needs matching nonempty A and B scenario lists");
    }
    if (static_cast<int>(a_.size()) != pmf_.size()) {
        throw ConfigError("pmf length does not match scenario count");
    }
    nx_ = static_cast<int>(a_[0].rows());
    nu_ = static_cast<int>(b_[0].cols());
    for (std::size_t j = 0; j < a_.size(); ++j) {
        if (a_[j].rows() != nx_ || a_[j].cols() != nx_ || b_[j].rows() != nx_ ||
            b_[j].cols() != nu_) {
            throw ConfigError("scenario " + std::to_string(j) +
                              ": matrix dimensions inconsistent");
        }
        if (!a_[j].allFinite() || !b_[j].allFinite()) {
            throw ConfigError("scenario matrices must be finite");
        }
    }
    if (q_.dim() != nx_) throw ConfigError("Q dimension does not match Nx");
    if (r_.dim() != nu_) throw ConfigError("R dimension does not match Nu");
    const double q_floor = 1e-12 * (1.0 + spectral_norm(q_));
    const double r_floor = 1e-12 * (1.0 + spectral_norm(r_));
    if (!is_pos_def(q_, q_floor)) throw ConfigError("Q must be positive definite");
    if (!is_pos_def(r_, r_floor)) throw ConfigError("R must be positive definite");
}

double UncertainLinearSystem::stage_cost(const Eigen::VectorXd& x,
                                         const Eigen::VectorXd& u) const {
    return x.dot(q_.mat() * x) + u.dot(r_.mat() * u);
}

UncertainLinearSystem load_system(const nlohmann::json& config) {
    try {
        const int nx = config.at("Nx").get<int>();
        const int nu = config.at("Nu").get<int>();
        if (nx < 1 || nu < 1) throw ConfigError("Nx and Nu must be >= 1");
        std::vector<Eigen::MatrixXd> a, b;
        for (const auto& sc : config.at("scenarios")) {
            a.push_back(parse_matrix(sc.at("A"), nx, nx, "A"));
            b.push_back(parse_matrix(sc.at("B"), nx, nu, "B"));
        }
        Eigen::VectorXd pv(config.at("pmf").size());
        for (std::size_t i = 0; i < config.at("pmf").size(); ++i) {
            pv(i) = config.at("pmf").at(i).get<double>();
        }
        Eigen::MatrixXd qm = parse_matrix(config.at("Q"), nx, nx, "Q");
        Eigen::MatrixXd rm = parse_matrix(config.at("R"), nu, nu, "R");
        try {
            return UncertainLinearSystem(std::move(a), std::move(b), Pmf(pv),
                                         SymMatrix(qm), SymMatrix(rm));
        } catch (const InvalidPmf& e) {
            throw ConfigError(std::string("pmf: ") + e.what());
        } catch (const InvalidMatrix& e) {
            throw ConfigError(std::string("weight matrix: ") + e.what());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad system config: ") + e.what());
    }
}

UncertainLinearSystem load_system_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open system config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("cannot parse '") + path + "': " + e.what());
    }
    return load_system(j);
}

ScenarioTree::ScenarioTree(int branching, int depth)
    : branching_(branching), depth_(depth) {
    if (branching < 1) throw ConfigError("tree branching must be >= 1");
    if (depth < 1) throw ConfigError("tree depth must be >= 1");
    double leaves = std::pow(static_cast<double>(branching), depth);
    if (leaves > 1e6) throw CapacityExceeded("scenario tree exceeds 1e6 leaves");
    level_start_.resize(depth + 2);
    level_start_[0] = 0;
    std::size_t level_size = 1, total = 0;
    for (int h = 0; h <= depth; ++h) {
        total += level_size;
        level_start_[h + 1] = static_cast<int>(total);
        level_size *= static_cast<std::size_t>(branching);
    }
    node_count_ = static_cast<int>(total);
}

int ScenarioTree::leaf_count() const {
    return level_start_[depth_ + 1] - level_start_[depth_];
}

int ScenarioTree::node_depth(int node) const {
    for (int h = 0; h <= depth_; ++h) {
        if (node < level_start_[h + 1]) return h;
    }
    throw ShapeMismatch("node id out of range");
}

std::vector<int> ScenarioTree::history(int node) const {
    std::vector<int> h;
    while (node != 0) {
        h.push_back(last_branch(node));
        node = parent(node);
    }
    std::reverse(h.begin(), h.end());
    return h;
}

int ScenarioTree::node_at(const std::vector<int>& history) const {
    int node = 0;
    for (int j : history) {
        if (j < 0 || j >= branching_) throw InvalidScenario("history index out of range");
        node = child(node, j);
    }
    return node;
}

ScenarioTree build_tree(const UncertainLinearSystem& sys, int depth) {
    return ScenarioTree(sys.scenario_count(), depth);
}

Eigen::VectorXd step(const UncertainLinearSystem& sys, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& u, int j) {
    if (j < 0 || j >= sys.scenario_count()) {
        throw InvalidScenario("scenario index " + std::to_string(j) +
                              " out of range");
    }
    if (x.size() != sys.nx() || u.size() != sys.nu()) {
        throw ShapeMismatch("step: state/input dimension mismatch");
    }
    return sys.a(j) * x + sys.b(j) * u;
}

}  // namespace riskmpc
