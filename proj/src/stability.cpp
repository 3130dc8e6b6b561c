#include "riskmpc/stability.hpp"

#include <cmath>

namespace riskmpc {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class SphereSampler {
public:
    explicit SphereSampler(std::uint64_t seed) : state_(seed) {}

    Eigen::VectorXd next(int dim) {
        Eigen::VectorXd v(dim);
        double norm2 = 0.0;
        do {
            for (int i = 0; i < dim; ++i) v(i) = normal();
            norm2 = v.squaredNorm();
        } while (norm2 < 1e-24);
        return v / std::sqrt(norm2);
    }

private:
    double uniform() {
        state_ = splitmix64(state_);
        return static_cast<double>(state_ >> 11) * 0x1.0p-53;
    }
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 1e-300) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * uniform();
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// closed-loop states along the complete depth-k tree, leaves carrying |x|^2
CostTree squared_state_tree(const UncertainLinearSystem& sys,
                            const Policy& policy, const Eigen::VectorXd& x0,
                            int k) {
    CostTree costs(sys.scenario_count(), k);
    std::vector<Eigen::VectorXd> states(costs.node_count());
    states[0] = x0;
    for (int nd = 0; nd < costs.node_count(); ++nd) {
        if (costs.is_leaf(nd)) {
            costs.set_cost(nd, states[nd].squaredNorm());
            continue;
        }
        const Eigen::VectorXd u = policy(states[nd]);
        for (int j = 0; j < sys.scenario_count(); ++j) {
            states[costs.child(nd, j)] = step(sys, states[nd], u, j);
        }
    }
    return costs;
}

}  // namespace

Policy linear_policy(const Eigen::MatrixXd& f) {
    return [f](const Eigen::VectorXd& x) -> Eigen::VectorXd { return f * x; };
}

double risk_of_squared_state(const UncertainLinearSystem& sys,
                             const RiskEnvelope& env, const Policy& policy,
                             const Eigen::VectorXd& x0, int k) {
    if (k < 1) throw ConfigError("risk_of_squared_state needs k >= 1");
    if (x0.size() != sys.nx()) throw ShapeMismatch("x0 dimension mismatch");
    if (std::pow(static_cast<double>(sys.scenario_count()), k) > 1e6) {
        throw CapacityExceeded("depth-k closed-loop tree too large");
    }
    return eval_nested(env, squared_state_tree(sys, policy, x0, k));
}

DecayEstimate estimate_decay(const UncertainLinearSystem& sys,
                             const RiskEnvelope& env, const Policy& policy,
                             const Eigen::VectorXd& x0, int K) {
    if (K < 2) throw ConfigError("estimate_decay needs K >= 2");
    DecayEstimate est;
    est.horizon = K;
    est.r.resize(K);
    for (int k = 1; k <= K; ++k) {
        est.r[k - 1] = risk_of_squared_state(sys, env, policy, x0, k);
    }

    const double x0sq = x0.squaredNorm();
    for (double rk : est.r) {
        if (rk <= 0.0) {
            // reached the origin exactly; exponential fit is degenerate
            est.reached_origin = true;
            est.envelope_bounded = true;
            return est;
        }
    }

    // least squares on (k, log r_k)
    double sk = 0.0, sl = 0.0, skk = 0.0, skl = 0.0;
    for (int k = 1; k <= K; ++k) {
        const double lk = std::log(est.r[k - 1]);
        sk += k;
        sl += lk;
        skk += static_cast<double>(k) * k;
        skl += k * lk;
    }
    const double denom = K * skk - sk * sk;
    const double slope = (K * skl - sk * sl) / denom;
    const double intercept = (sl - slope * sk) / K;
    est.lambda_fit = std::exp(slope);
    est.c_fit = std::exp(intercept) / x0sq;

    double worst = 0.0;
    for (int k = 1; k <= K; ++k) {
        worst = std::max(worst,
                         est.r[k - 1] / (std::pow(est.lambda_fit, k) * x0sq));
    }
    est.envelope_bounded = worst <= est.c_fit * 1.1;
    return est;
}

LyapunovCheckReport check_lyapunov(const UncertainLinearSystem& sys,
                                   const RiskEnvelope& env, const SymMatrix& m,
                                   const Policy& policy, int samples,
                                   std::uint64_t seed) {
    if (m.dim() != sys.nx()) throw ShapeMismatch("Lyapunov matrix dimension");
    if (samples < 1) throw ConfigError("check_lyapunov needs samples >= 1");
    if (!is_pos_def(m, 0.0)) {
        throw InvalidLyapunov("Lyapunov candidate must be positive definite");
    }

    LyapunovCheckReport rep;
    const EigResult eig = sym_eig(m);
    rep.b1 = eig.values.minCoeff();
    rep.b2 = eig.values.maxCoeff();
    rep.samples = samples;

    SphereSampler sampler(seed);
    Eigen::VectorXd successor_v(sys.scenario_count());
    double min_rate = std::numeric_limits<double>::infinity();
    for (int i = 0; i < samples; ++i) {
        const Eigen::VectorXd x = sampler.next(sys.nx());
        const Eigen::VectorXd u = policy(x);
        for (int j = 0; j < sys.scenario_count(); ++j) {
            const Eigen::VectorXd xj = step(sys, x, u, j);
            successor_v(j) = xj.dot(m.mat() * xj);
        }
        const double decrement = eval_static(env, successor_v) - x.dot(m.mat() * x);
        min_rate = std::min(min_rate, -decrement);  // |x|^2 = 1 on the sphere
    }
    rep.b3 = min_rate;
    rep.worst_violation = std::max(0.0, -min_rate);
    rep.valid = rep.b1 > 0.0 && rep.b2 > 0.0 && rep.b3 > 0.0;
    return rep;
}

double lyapunov_decrement_bound(const UncertainLinearSystem& sys,
                                const RiskEnvelope& env, const SymMatrix& m,
                                const Eigen::MatrixXd& f) {
    std::vector<Eigen::MatrixXd> phi_m_phi;
    phi_m_phi.reserve(sys.scenario_count());
    for (int j = 0; j < sys.scenario_count(); ++j) {
        const Eigen::MatrixXd phi = sys.a(j) + sys.b(j) * f;
        phi_m_phi.push_back(phi.transpose() * m.mat() * phi);
    }
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& q : env.vertices()) {
        Eigen::MatrixXd c = -m.mat();
        for (int j = 0; j < sys.scenario_count(); ++j) c += q(j) * phi_m_phi[j];
        worst = std::max(worst,
                         max_eigenvalue(SymMatrix(0.5 * (c + c.transpose()))));
    }
    return -worst;
}

}  // namespace riskmpc
