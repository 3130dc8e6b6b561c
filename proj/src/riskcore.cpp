#include "riskmpc/riskcore.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Dense>

namespace riskmpc {

namespace {

constexpr double kVertexTol = 1e-9;
constexpr double kSimplexTol = 1e-10;

bool near_duplicate(const std::vector<Eigen::VectorXd>& list,
                    const Eigen::VectorXd& q) {
    for (const auto& v : list) {
        if ((v - q).lpNorm<Eigen::Infinity>() <= kVertexTol) return true;
    }
    return false;
}

void check_simplex_point(const Eigen::VectorXd& q) {
    if (q.minCoeff() < -kSimplexTol ||
        std::abs(q.sum() - 1.0) > kSimplexTol) {
        throw InvalidVertex("envelope vertex lies off the probability simplex");
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Pmf
// ---------------------------------------------------------------------------

Pmf::Pmf(Eigen::VectorXd probs) : p_(std::move(probs)) {
    if (p_.size() < 1) throw InvalidPmf("pmf must have at least one entry");
    if (!p_.allFinite()) throw InvalidPmf("pmf has non-finite entries");
    if (p_.minCoeff() <= 0.0) throw InvalidPmf("pmf entries must be strictly positive");
    if (std::abs(p_.sum() - 1.0) > 1e-12) {
        throw InvalidPmf("pmf entries must sum to one");
    }
}

// ---------------------------------------------------------------------------
// RiskSpec
// ---------------------------------------------------------------------------

RiskSpec RiskSpec::expectation() { return RiskSpec{}; }

RiskSpec RiskSpec::mean_upper_semideviation(double c) {
    RiskSpec s;
    s.family = RiskFamily::MeanUpperSemideviation;
    s.c = c;
    return s;
}

RiskSpec RiskSpec::worst_case() {
    RiskSpec s;
    s.family = RiskFamily::WorstCase;
    return s;
}

RiskSpec RiskSpec::cvar(double alpha) {
    RiskSpec s;
    s.family = RiskFamily::Cvar;
    s.alpha = alpha;
    return s;
}

RiskSpec RiskSpec::custom_h(Eigen::MatrixXd si, Eigen::VectorXd ti,
                            Eigen::MatrixXd se, Eigen::VectorXd te) {
    RiskSpec s;
    s.family = RiskFamily::CustomH;
    s.SI = std::move(si);
    s.TI = std::move(ti);
    s.SE = std::move(se);
    s.TE = std::move(te);
    return s;
}

RiskSpec RiskSpec::custom_v(std::vector<Eigen::VectorXd> vertices) {
    RiskSpec s;
    s.family = RiskFamily::CustomV;
    s.vertices = std::move(vertices);
    return s;
}

namespace {

Eigen::MatrixXd json_to_matrix(const nlohmann::json& j) {
    const auto rows = j.size();
    if (rows == 0) return Eigen::MatrixXd(0, 0);
    const auto cols = j.at(0).size();
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (j.at(i).size() != cols) throw ConfigError("ragged matrix in config");
        for (std::size_t k = 0; k < cols; ++k) m(i, k) = j.at(i).at(k).get<double>();
    }
    return m;
}

Eigen::VectorXd json_to_vector(const nlohmann::json& j) {
    Eigen::VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v(i) = j.at(i).get<double>();
    return v;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json j = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
        j.push_back(std::move(row));
    }
    return j;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
    nlohmann::json j = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
    return j;
}

}  // namespace

RiskSpec RiskSpec::from_json(const nlohmann::json& j) {
    try {
        const std::string fam = j.at("family").get<std::string>();
        if (fam == "expectation") return expectation();
        if (fam == "mus") return mean_upper_semideviation(j.at("c").get<double>());
        if (fam == "worst_case") return worst_case();
        if (fam == "cvar") return cvar(j.at("alpha").get<double>());
        if (fam == "custom_h") {
            Eigen::MatrixXd si = j.contains("SI") ? json_to_matrix(j.at("SI"))
                                                  : Eigen::MatrixXd(0, 0);
            Eigen::VectorXd ti = j.contains("TI") ? json_to_vector(j.at("TI"))
                                                  : Eigen::VectorXd(0);
            Eigen::MatrixXd se = j.contains("SE") ? json_to_matrix(j.at("SE"))
                                                  : Eigen::MatrixXd(0, 0);
            Eigen::VectorXd te = j.contains("TE") ? json_to_vector(j.at("TE"))
                                                  : Eigen::VectorXd(0);
            return custom_h(std::move(si), std::move(ti), std::move(se),
                            std::move(te));
        }
        if (fam == "custom_v") {
            std::vector<Eigen::VectorXd> verts;
            for (const auto& row : j.at("vertices")) {
                verts.push_back(json_to_vector(row));
            }
            return custom_v(std::move(verts));
        }
        throw ConfigError("unknown risk family '" + fam + "'");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad risk spec: ") + e.what());
    }
}

nlohmann::json RiskSpec::to_json() const {
    nlohmann::json j;
    j["family"] = family_name();
    switch (family) {
        case RiskFamily::MeanUpperSemideviation:
            j["c"] = c;
            break;
        case RiskFamily::Cvar:
            j["alpha"] = alpha;
            break;
        case RiskFamily::CustomH:
            j["SI"] = matrix_to_json(SI);
            j["TI"] = vector_to_json(TI);
            j["SE"] = matrix_to_json(SE);
            j["TE"] = vector_to_json(TE);
            break;
        case RiskFamily::CustomV: {
            nlohmann::json verts = nlohmann::json::array();
            for (const auto& v : vertices) verts.push_back(vector_to_json(v));
            j["vertices"] = std::move(verts);
            break;
        }
        default:
            break;
    }
    return j;
}

std::string RiskSpec::family_name() const {
    switch (family) {
        case RiskFamily::Expectation: return "expectation";
        case RiskFamily::MeanUpperSemideviation: return "mus";
        case RiskFamily::WorstCase: return "worst_case";
        case RiskFamily::Cvar: return "cvar";
        case RiskFamily::CustomH: return "custom_h";
        case RiskFamily::CustomV: return "custom_v";
    }
    return "unknown";
}

double RiskSpec::param() const {
    switch (family) {
        case RiskFamily::MeanUpperSemideviation: return c;
        case RiskFamily::Cvar: return alpha;
        default: return std::numeric_limits<double>::quiet_NaN();
    }
}

std::string RiskSpec::label() const {
    switch (family) {
        case RiskFamily::MeanUpperSemideviation:
            return "mus(c=" + std::to_string(c) + ")";
        case RiskFamily::Cvar:
            return "cvar(alpha=" + std::to_string(alpha) + ")";
        default:
            return family_name();
    }
}

// ---------------------------------------------------------------------------
// envelopes
// ---------------------------------------------------------------------------

RiskEnvelope::RiskEnvelope(RiskSpec spec, Pmf base,
                           std::vector<Eigen::VectorXd> vertices)
    : spec_(std::move(spec)), base_(std::move(base)), vertices_(std::move(vertices)) {
    if (vertices_.empty()) throw EmptyEnvelope("risk envelope has no vertices");
    for (const auto& q : vertices_) {
        if (q.size() != base_.size()) {
            throw ShapeMismatch("envelope vertex dimension mismatch");
        }
        check_simplex_point(q);
    }
}

std::vector<Eigen::VectorXd> enumerate_vertices(const Eigen::MatrixXd& SI,
                                                const Eigen::VectorXd& TI,
                                                const Eigen::MatrixXd& SE,
                                                const Eigen::VectorXd& TE,
                                                int L) {
    if (L < 1) throw InvalidRiskParameter("L must be >= 1");
    if (L > 12) throw CapacityExceeded("vertex enumeration limited to L <= 12");
    if (SI.rows() != TI.size() || SE.rows() != TE.size() ||
        (SI.rows() > 0 && SI.cols() != L) || (SE.rows() > 0 && SE.cols() != L)) {
        throw ShapeMismatch("H-rep dimensions inconsistent");
    }

    // Full constraint system: equalities [1'q = 1; SE q = TE], inequalities
    // [-q <= 0; SI q <= TI].
    const int ne = 1 + static_cast<int>(SE.rows());
    const int ni = L + static_cast<int>(SI.rows());
    Eigen::MatrixXd eq(ne, L);
    Eigen::VectorXd eq_rhs(ne);
    eq.row(0).setOnes();
    eq_rhs(0) = 1.0;
    if (SE.rows() > 0) {
        eq.bottomRows(SE.rows()) = SE;
        eq_rhs.tail(SE.rows()) = TE;
    }
    Eigen::MatrixXd in(ni, L);
    Eigen::VectorXd in_rhs(ni);
    in.topRows(L) = -Eigen::MatrixXd::Identity(L, L);
    in_rhs.head(L).setZero();
    if (SI.rows() > 0) {
        in.bottomRows(SI.rows()) = SI;
        in_rhs.tail(SI.rows()) = TI;
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> eq_qr(eq);
    eq_qr.setThreshold(1e-10);
    const int rank_eq = static_cast<int>(eq_qr.rank());
    const int need = L - rank_eq;

    std::vector<Eigen::VectorXd> verts;
    std::vector<int> pick(std::max(need, 0));

    auto try_active_set = [&]() {
        Eigen::MatrixXd act(ne + need, L);
        Eigen::VectorXd rhs(ne + need);
        act.topRows(ne) = eq;
        rhs.head(ne) = eq_rhs;
        for (int i = 0; i < need; ++i) {
            act.row(ne + i) = in.row(pick[i]);
            rhs(ne + i) = in_rhs(pick[i]);
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(act);
        qr.setThreshold(1e-10);
        if (static_cast<int>(qr.rank()) != L) return;  // not a basic solution
        const Eigen::VectorXd q = qr.solve(rhs);
        if ((act * q - rhs).lpNorm<Eigen::Infinity>() > kVertexTol) return;
        if ((eq * q - eq_rhs).lpNorm<Eigen::Infinity>() > kVertexTol) return;
        if (((in * q - in_rhs).array() > kVertexTol).any()) return;
        if (!near_duplicate(verts, q)) verts.push_back(q);
    };

    if (need <= 0) {
        // fully determined by the equalities
        const Eigen::VectorXd q = eq_qr.solve(eq_rhs);
        if ((eq * q - eq_rhs).lpNorm<Eigen::Infinity>() <= kVertexTol &&
            ((in * q - in_rhs).array() <= kVertexTol).all()) {
            verts.push_back(q);
        }
    } else {
        // all size-`need` subsets of the inequality rows
        std::function<void(int, int)> rec = [&](int start, int k) {
            if (k == need) {
                try_active_set();
                return;
            }
            for (int i = start; i < ni; ++i) {
                pick[k] = i;
                rec(i + 1, k + 1);
            }
        };
        rec(0, 0);
    }

    if (verts.empty()) throw EmptyEnvelope("polytope is empty");
    return verts;
}

RiskEnvelope make_envelope(const RiskSpec& spec, const Pmf& base) {
    const int L = base.size();
    std::vector<Eigen::VectorXd> verts;

    switch (spec.family) {
        case RiskFamily::Expectation:
            verts.push_back(base.vec());
            break;

        case RiskFamily::MeanUpperSemideviation: {
            if (!(spec.c >= 0.0 && spec.c <= 1.0)) {
                throw InvalidRiskParameter("mus weight c must lie in [0, 1]");
            }
            if (L > 20) throw CapacityExceeded("mus enumeration limited to L <= 20");
            // images of h in {0, c}^L under q(j) = p(j) (1 + h(j) - sum h(i) p(i))
            const std::uint64_t combos = std::uint64_t{1} << L;
            for (std::uint64_t mask = 0; mask < combos; ++mask) {
                double hp = 0.0;
                for (int j = 0; j < L; ++j) {
                    if (mask & (std::uint64_t{1} << j)) hp += spec.c * base(j);
                }
                Eigen::VectorXd q(L);
                for (int j = 0; j < L; ++j) {
                    const double hj = (mask & (std::uint64_t{1} << j)) ? spec.c : 0.0;
                    q(j) = base(j) * (1.0 + hj - hp);
                }
                if (!near_duplicate(verts, q)) verts.push_back(q);
            }
            break;
        }

        case RiskFamily::WorstCase:
            for (int j = 0; j < L; ++j) {
                verts.push_back(Eigen::VectorXd::Unit(L, j));
            }
            break;

        case RiskFamily::Cvar: {
            if (!(spec.alpha > 0.0 && spec.alpha <= 1.0)) {
                throw InvalidRiskParameter("cvar level alpha must lie in (0, 1]");
            }
            // standard dual polytope {q in Delta^L : q(j) <= p(j)/alpha}
            verts = enumerate_vertices(Eigen::MatrixXd::Identity(L, L),
                                       base.vec() / spec.alpha,
                                       Eigen::MatrixXd(0, 0), Eigen::VectorXd(0), L);
            break;
        }

        case RiskFamily::CustomH:
            verts = enumerate_vertices(spec.SI, spec.TI, spec.SE, spec.TE, L);
            break;

        case RiskFamily::CustomV: {
            for (const auto& q : spec.vertices) {
                if (q.size() != L) throw ShapeMismatch("custom vertex dimension");
                check_simplex_point(q);
                if (!near_duplicate(verts, q)) verts.push_back(q);
            }
            break;
        }
    }

    return RiskEnvelope(spec, base, std::move(verts));
}

double eval_static(const RiskEnvelope& env, const Eigen::VectorXd& z) {
    if (z.size() != env.size_L()) {
        throw ShapeMismatch("eval_static: cost vector length mismatch");
    }
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& q : env.vertices()) best = std::max(best, q.dot(z));
    return best;
}

// ---------------------------------------------------------------------------
// cost trees
// ---------------------------------------------------------------------------

CostTree::CostTree(int branching, int depth)
    : branching_(branching), depth_(depth) {
    if (branching < 1) throw ShapeMismatch("tree branching must be >= 1");
    if (depth < 0) throw ShapeMismatch("tree depth must be >= 0");
    level_start_.resize(depth + 2);
    level_start_[0] = 0;
    std::size_t level_size = 1;
    std::size_t total = 0;
    for (int h = 0; h <= depth; ++h) {
        total += level_size;
        if (total > 4'000'000) throw CapacityExceeded("cost tree too large");
        level_start_[h + 1] = static_cast<int>(total);
        level_size *= static_cast<std::size_t>(branching);
    }
    costs_.assign(total, 0.0);
}

int CostTree::leaf_count() const {
    return level_start_[depth_ + 1] - level_start_[depth_];
}

bool CostTree::is_leaf(int node) const { return node >= level_start_[depth_]; }

int CostTree::node_depth(int node) const {
    for (int h = 0; h <= depth_; ++h) {
        if (node < level_start_[h + 1]) return h;
    }
    throw ShapeMismatch("node id out of range");
}

double eval_nested(const RiskEnvelope& env, const CostTree& tree) {
    if (env.size_L() != tree.branching()) {
        throw ShapeMismatch("envelope branching does not match tree");
    }
    const int n = tree.node_count();
    std::vector<double> value(n);
    Eigen::VectorXd child_vals(tree.branching());
    for (int i = n - 1; i >= 0; --i) {
        const double cost = tree.cost(i);
        if (!std::isfinite(cost)) throw ShapeMismatch("non-finite tree cost");
        if (tree.is_leaf(i)) {
            value[i] = cost;
        } else {
            for (int j = 0; j < tree.branching(); ++j) {
                child_vals(j) = value[tree.child(i, j)];
            }
            value[i] = cost + eval_static(env, child_vals);
        }
    }
    return value[0];
}

double eval_static_product(const RiskEnvelope& env, const CostTree& tree) {
    if (env.size_L() != tree.branching()) {
        throw ShapeMismatch("envelope branching does not match tree");
    }
    // The expected total path cost under the product measure generated by a
    // fixed vertex q is a fixed-q backward recursion; the static value is
    // the max over vertices.
    double best = -std::numeric_limits<double>::infinity();
    const int n = tree.node_count();
    std::vector<double> value(n);
    for (const auto& q : env.vertices()) {
        for (int i = n - 1; i >= 0; --i) {
            value[i] = tree.cost(i);
            if (!tree.is_leaf(i)) {
                for (int j = 0; j < tree.branching(); ++j) {
                    value[i] += q(j) * value[tree.child(i, j)];
                }
            }
        }
        best = std::max(best, value[0]);
    }
    return best;
}

}  // namespace riskmpc
