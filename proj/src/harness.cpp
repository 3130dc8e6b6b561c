#include "riskmpc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace riskmpc {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic uniform stream independent of the standard library.
class RunRng {
public:
    explicit RunRng(std::uint64_t seed) : state_(seed) {}
    double uniform() {
        state_ = splitmix64(state_);
        return static_cast<double>(state_ >> 11) * 0x1.0p-53;
    }

private:
    std::uint64_t state_;
};

int sample_index(const Pmf& pmf, double u) {
    double acc = 0.0;
    for (int j = 0; j < pmf.size(); ++j) {
        acc += pmf(j);
        if (u <= acc) return j;
    }
    return pmf.size() - 1;
}

std::string format_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

std::string setting_slug(const RiskSpec& spec) {
    std::string s = spec.family_name();
    const double p = spec.param();
    if (!std::isnan(p)) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%g", p);
        s += "_";
        s += buf;
    }
    return s;
}

Eigen::VectorXd parse_vector_field(const nlohmann::json& j) {
    Eigen::VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v(i) = j.at(i).get<double>();
    return v;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
    nlohmann::json j = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
    return j;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json j = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        j.push_back(std::move(row));
    }
    return j;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    const std::size_t rows = j.size();
    if (rows == 0) return Eigen::MatrixXd(0, 0);
    const std::size_t cols = j.at(0).size();
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (j.at(r).size() != cols) throw ConfigError("ragged matrix in file");
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
    }
    return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    try {
        ExperimentConfig cfg;
        if (j.contains("system_path")) {
            std::ifstream in(j.at("system_path").get<std::string>());
            if (!in) throw ConfigError("cannot open system_path");
            in >> cfg.system;
        } else {
            cfg.system = j.at("system");
        }
        if (j.contains("risk_sweep")) {
            for (const auto& r : j.at("risk_sweep")) {
                cfg.sweep.push_back(RiskSpec::from_json(r));
            }
        } else {
            cfg.sweep.push_back(RiskSpec::from_json(j.at("risk")));
        }
        cfg.horizon = j.value("N", 3);
        cfg.x0 = parse_vector_field(j.at("x0"));
        cfg.runs = j.value("runs", 100);
        cfg.max_steps = j.value("max_steps", 50);
        cfg.stop_norm = j.value("stop_norm", 1e-6);
        if (!j.contains("seed")) {
            throw ConfigError("experiment config requires an explicit seed");
        }
        cfg.seed = j.at("seed").get<std::uint64_t>();
        cfg.solver_tol = j.value("tol", 1e-7);
        cfg.out_dir = j.value("out_dir", std::string());
        if (cfg.runs < 1) throw ConfigError("runs must be >= 1");
        if (cfg.max_steps < 1) throw ConfigError("max_steps must be >= 1");
        if (cfg.sweep.empty()) throw ConfigError("risk sweep is empty");
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad experiment config: ") + e.what());
    }
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open experiment config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("cannot parse '") + path + "': " + e.what());
    }
    return from_json(j);
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["system"] = system;
    nlohmann::json sweep_json = nlohmann::json::array();
    for (const auto& s : sweep) sweep_json.push_back(s.to_json());
    j["risk_sweep"] = std::move(sweep_json);
    j["N"] = horizon;
    j["x0"] = vector_to_json(x0);
    j["runs"] = runs;
    j["max_steps"] = max_steps;
    j["stop_norm"] = stop_norm;
    j["seed"] = seed;
    j["tol"] = solver_tol;
    return j;
}

std::uint64_t ExperimentConfig::config_hash() const {
    const std::string dump = to_json().dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : dump) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------
// simulation
// ---------------------------------------------------------------------------

SimResult simulate_run(const UncertainLinearSystem& sys, const MpcPolicy& policy,
                       const Eigen::VectorXd& x0, int max_steps,
                       double stop_norm, std::uint64_t run_seed) {
    RunRng rng(run_seed);
    SimResult res;
    Eigen::VectorXd x = x0;
    for (int k = 0; k < max_steps; ++k) {
        if (x.norm() < stop_norm) break;
        const auto t0 = std::chrono::steady_clock::now();
        const Eigen::VectorXd u = policy(x);
        res.solve_seconds +=
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        ++res.solves;
        res.cost += sys.stage_cost(x, u);
        const int j = sample_index(sys.pmf(), rng.uniform());
        x = step(sys, x, u, j);
        ++res.steps;
    }
    return res;
}

std::vector<RunStats> run_monte_carlo(const ExperimentConfig& cfg) {
    const UncertainLinearSystem sys = load_system(cfg.system);
    if (cfg.x0.size() != sys.nx()) throw ConfigError("x0 dimension mismatch");

    std::vector<RunStats> all;
    all.reserve(cfg.sweep.size());

    for (const auto& spec : cfg.sweep) {
        RunStats stats;
        stats.spec = spec;
        const RiskEnvelope env = make_envelope(spec, sys.pmf());

        const auto synth_t0 = std::chrono::steady_clock::now();
        const TerminalCertificate cert = synthesize_terminal(sys, env);
        stats.synth_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          synth_t0)
                .count();
        stats.certificate_margin = cert.margin;

        // 200k cap: a rare straggler solve costs a second or two, while an
        // aborted sweep loses the whole experiment
        const MpcPolicy policy(sys, env, cfg.horizon, cert,
                               MpcOptions{cfg.solver_tol, 200000});

        std::vector<SimResult> results(cfg.runs);
        const int workers = std::max(
            1, std::min<int>(static_cast<int>(
                                 std::thread::hardware_concurrency()),
                             cfg.runs));
        std::vector<std::thread> pool;
        pool.reserve(workers);
        std::atomic<int> next{0};
        for (int t = 0; t < workers; ++t) {
            pool.emplace_back([&]() {
                for (int run = next.fetch_add(1); run < cfg.runs;
                     run = next.fetch_add(1)) {
                    const std::uint64_t run_seed = splitmix64(
                        cfg.seed ^ (0x9e3779b97f4a7c15ULL *
                                    static_cast<std::uint64_t>(run + 1)));
                    results[run] = simulate_run(sys, policy, cfg.x0,
                                                cfg.max_steps, cfg.stop_norm,
                                                run_seed);
                }
            });
        }
        for (auto& th : pool) th.join();

        std::vector<double> costs(cfg.runs);
        std::vector<int> steps(cfg.runs);
        double solve_seconds = 0.0;
        int total_solves = 0;
        for (int run = 0; run < cfg.runs; ++run) {
            costs[run] = results[run].cost;
            steps[run] = results[run].steps;
            solve_seconds += results[run].solve_seconds;
            total_solves += results[run].solves;
        }
        RunStats computed = compute_stats(spec, std::move(costs));
        computed.steps = std::move(steps);
        computed.total_solves = total_solves;
        computed.mean_solve_seconds =
            total_solves > 0 ? solve_seconds / total_solves : 0.0;
        computed.certificate_margin = stats.certificate_margin;
        computed.synth_seconds = stats.synth_seconds;

        all.push_back(std::move(computed));
    }
    return all;
}

RunStats compute_stats(const RiskSpec& spec, std::vector<double> costs) {
    if (costs.empty()) throw ConfigError("compute_stats needs at least one run");
    RunStats stats;
    stats.spec = spec;
    stats.costs = std::move(costs);

    std::vector<double> sorted = stats.costs;
    std::sort(sorted.begin(), sorted.end());
    const int n = static_cast<int>(sorted.size());
    double sum = 0.0;
    for (double v : sorted) sum += v;
    stats.mean = sum / n;
    double dev = 0.0, var = 0.0;
    for (double v : sorted) {
        dev += std::max(v - stats.mean, 0.0);
        var += (v - stats.mean) * (v - stats.mean);
    }
    stats.dispersion = dev / n;
    stats.stddev = n > 1 ? std::sqrt(var / (n - 1)) : 0.0;
    return stats;
}

// ---------------------------------------------------------------------------
// reporting
// ---------------------------------------------------------------------------

Report summarize(const std::vector<RunStats>& stats) {
    if (stats.empty()) throw ConfigError("summarize needs at least one setting");
    Report rep;
    std::ostringstream csv, pretty;
    csv << "risk_family,param,mean,dispersion,std,mean_iter_seconds\n";
    pretty << "risk_family      param    mean        dispersion  std         "
              "mean_iter_s\n";
    for (const auto& s : stats) {
        const double p = s.spec.param();
        csv << s.spec.family_name() << ','
            << (std::isnan(p) ? "" : format_double(p)) << ','
            << format_double(s.mean) << ',' << format_double(s.dispersion)
            << ',' << format_double(s.stddev) << ','
            << format_double(s.mean_solve_seconds) << '\n';
        char line[160];
        std::snprintf(line, sizeof(line),
                      "%-16s %-8s %-11.5g %-11.5g %-11.5g %-11.4g\n",
                      s.spec.family_name().c_str(),
                      std::isnan(p) ? "-" : format_double(p).c_str(), s.mean,
                      s.dispersion, s.stddev, s.mean_solve_seconds);
        pretty << line;
    }
    rep.csv = csv.str();
    rep.pretty = pretty.str();
    return rep;
}

void write_outputs(const ExperimentConfig& cfg,
                   const std::vector<RunStats>& stats) {
    if (cfg.out_dir.empty()) return;
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);

    for (const auto& s : stats) {
        std::ofstream out(fs::path(cfg.out_dir) /
                          ("runs_" + setting_slug(s.spec) + ".csv"));
        out << "run,cost\n";
        for (std::size_t i = 0; i < s.costs.size(); ++i) {
            out << i << ',' << format_double(s.costs[i]) << '\n';
        }
    }

    std::ofstream agg(fs::path(cfg.out_dir) / "aggregate.csv");
    agg << summarize(stats).csv;

    nlohmann::json side;
    side["config_hash"] = cfg.config_hash();
    side["config"] = cfg.to_json();
    nlohmann::json timings = nlohmann::json::array();
    for (const auto& s : stats) {
        timings.push_back({{"setting", s.spec.label()},
                           {"synth_seconds", s.synth_seconds},
                           {"mean_solve_seconds", s.mean_solve_seconds},
                           {"total_solves", s.total_solves},
                           {"certificate_margin", s.certificate_margin}});
    }
    side["timings"] = std::move(timings);
    std::ofstream sidecar(fs::path(cfg.out_dir) / "experiment.json");
    sidecar << side.dump(2) << '\n';
}

ParadoxReport demo_paradox() {
    Eigen::VectorXd v1(2), v2(2);
    v1 << 0.4, 0.6;
    v2 << 0.6, 0.4;
    const RiskEnvelope env =
        make_envelope(RiskSpec::custom_v({v1, v2}),
                      Pmf(Eigen::VectorXd::Constant(2, 0.5)));

    CostTree tree(2, 2);
    tree.set_cost(3, 0.0);
    tree.set_cost(4, 100.0);
    tree.set_cost(5, 100.0);
    tree.set_cost(6, 0.0);

    ParadoxReport rep;
    Eigen::VectorXd up(2), down(2);
    up << tree.cost(3), tree.cost(4);
    down << tree.cost(5), tree.cost(6);
    rep.rho1_up = eval_static(env, up);
    rep.rho1_down = eval_static(env, down);
    rep.nested_value = eval_nested(env, tree);
    rep.rho0_static = eval_static_product(env, tree);

    std::ostringstream text;
    text << "two-stage cost tree, leaf costs (0, 100, 100, 0), envelope "
            "vertices (0.4, 0.6) and (0.6, 0.4)\n"
         << "stage-1 risk, up state:    " << rep.rho1_up << '\n'
         << "stage-1 risk, down state:  " << rep.rho1_down << '\n'
         << "static root evaluation:    " << rep.rho0_static << '\n'
         << "nested (consistent) value: " << rep.nested_value << '\n'
         << "deterministic alternative: " << rep.w_deterministic << '\n'
         << "the static evaluation ranks the tree (" << rep.rho0_static
         << ") below the deterministic cost (" << rep.w_deterministic
         << ") even though every stage-1 state ranks it above ("
         << rep.rho1_up << "); the nested value (" << rep.nested_value
         << ") restores consistency\n";
    rep.text = text.str();
    return rep;
}

// ---------------------------------------------------------------------------
// certificate files
// ---------------------------------------------------------------------------

nlohmann::json certificate_to_json(const TerminalCertificate& cert) {
    nlohmann::json j;
    j["P"] = matrix_to_json(cert.P.mat());
    j["F"] = matrix_to_json(cert.F);
    j["Qbar"] = matrix_to_json(cert.Qbar.mat());
    j["Y"] = matrix_to_json(cert.Y);
    j["G"] = matrix_to_json(cert.G);
    j["margin"] = cert.margin;
    j["stats"] = {{"iterations", cert.stats.iterations},
                  {"solve_seconds", cert.stats.solve_seconds},
                  {"primal_residual", cert.stats.primal_residual},
                  {"dual_residual", cert.stats.dual_residual}};
    return j;
}

TerminalCertificate certificate_from_json(const nlohmann::json& j) {
    try {
        Eigen::MatrixXd p = matrix_from_json(j.at("P"));
        Eigen::MatrixXd f = matrix_from_json(j.at("F"));
        Eigen::MatrixXd qbar = matrix_from_json(j.at("Qbar"));
        Eigen::MatrixXd y = matrix_from_json(j.at("Y"));
        Eigen::MatrixXd g = matrix_from_json(j.at("G"));
        const double margin = j.at("margin").get<double>();

        SymMatrix p_sym{p};
        SymMatrix qbar_sym{qbar};
        // witness identities must survive the round trip
        const double prel = (p_sym.mat() * qbar_sym.mat() -
                             Eigen::MatrixXd::Identity(p.rows(), p.cols()))
                                .norm();
        if (prel > 1e-6 * (1.0 + p_sym.mat().norm())) {
            throw ConfigError("certificate violates P = Qbar^-1");
        }
        if ((f * g - y).norm() > 1e-6 * (1.0 + y.norm())) {
            throw ConfigError("certificate violates F = Y G^-1");
        }
        TerminalCertificate cert{std::move(p_sym), std::move(f),
                                 std::move(qbar_sym), std::move(y),
                                 std::move(g), margin, {}};
        if (j.contains("stats")) {
            cert.stats.iterations = j["stats"].value("iterations", 0);
            cert.stats.solve_seconds = j["stats"].value("solve_seconds", 0.0);
        }
        return cert;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad certificate file: ") + e.what());
    } catch (const InvalidMatrix& e) {
        throw ConfigError(std::string("bad certificate matrix: ") + e.what());
    }
}

}  // namespace riskmpc
