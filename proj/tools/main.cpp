// riskmpc command line: terminal-cost synthesis, single receding-horizon
// solves, closed-loop Monte Carlo sweeps, risk evaluation and stability
// checks over JSON-configured systems.
//
// Exit codes: 0 success, 2 configuration error, 3 infeasible synthesis,
// 4 solver failure, 1 anything else.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "riskmpc/harness.hpp"
#include "riskmpc/stability.hpp"

using namespace riskmpc;

namespace {

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse '" + path + "': " + e.what());
    }
    return j;
}

Eigen::VectorXd parse_csv_vector(const std::string& text) {
    std::vector<double> vals;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            vals.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ConfigError("cannot parse number '" + item + "'");
        }
    }
    if (vals.empty()) throw ConfigError("empty vector argument");
    Eigen::VectorXd v(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) v(i) = vals[i];
    return v;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << text;
}

struct CommonArgs {
    std::string config;
    std::string risk;
    std::string cert;
    std::string out;
    double tol = 1e-7;
    std::uint64_t seed = 0;
};

int run_synth(const CommonArgs& args) {
    const auto sys = load_system(read_json_file(args.config));
    const auto spec = RiskSpec::from_json(read_json_file(args.risk));
    const auto env = make_envelope(spec, sys.pmf());
    SynthesisOptions opts;
    opts.tol = args.tol;
    const auto cert = synthesize_terminal(sys, env, opts);
    const auto j = certificate_to_json(cert);
    if (args.out.empty()) {
        std::cout << j.dump(2) << '\n';
    } else {
        write_text_file(args.out, j.dump(2) + "\n");
        std::cout << "certificate written to " << args.out << " (margin "
                  << cert.margin << ", " << cert.stats.iterations
                  << " iterations)\n";
    }
    return 0;
}

int run_solve(const CommonArgs& args, const std::string& x0_text, int horizon,
              const std::string& dump_tree) {
    const auto sys = load_system(read_json_file(args.config));
    const auto spec = RiskSpec::from_json(read_json_file(args.risk));
    const auto env = make_envelope(spec, sys.pmf());
    const auto cert = certificate_from_json(read_json_file(args.cert));
    const Eigen::VectorXd x0 = parse_csv_vector(x0_text);

    MpcProblem problem(sys, env, horizon, cert, x0);
    const auto sol = solve_mpc(problem, MpcOptions{args.tol, 50000});

    std::cout << "u0 =";
    for (Eigen::Index i = 0; i < sol.u0.size(); ++i) std::cout << ' ' << sol.u0(i);
    std::cout << "\nvalue = " << sol.value << "\niterations = "
              << sol.stats.iterations << "\nsolve_seconds = "
              << sol.stats.solve_seconds << '\n';

    if (!dump_tree.empty()) {
        ScenarioTree tree(sys.scenario_count(), horizon);
        std::ostringstream csv;
        csv << "node,history,state,control,t,s,gamma2\n";
        for (int nd = 0; nd < tree.node_count(); ++nd) {
            csv << nd << ",\"";
            const auto hist = tree.history(nd);
            for (std::size_t i = 0; i < hist.size(); ++i) {
                csv << (i ? " " : "") << hist[i];
            }
            csv << "\",\"";
            for (Eigen::Index i = 0; i < sol.states[nd].size(); ++i) {
                csv << (i ? " " : "") << sol.states[nd](i);
            }
            csv << "\",\"";
            for (Eigen::Index i = 0; i < sol.controls[nd].size(); ++i) {
                csv << (i ? " " : "") << sol.controls[nd](i);
            }
            csv << "\"," << sol.stage_epigraph[nd] << ','
                << sol.risk_epigraph[nd] << ',' << sol.terminal_epigraph[nd]
                << '\n';
        }
        write_text_file(dump_tree, csv.str());
        std::cout << "tree solution written to " << dump_tree << '\n';
    }
    return 0;
}

int run_simulate(const CommonArgs& args, bool seed_given) {
    auto cfg = ExperimentConfig::from_file(args.config);
    if (seed_given) cfg.seed = args.seed;
    if (!args.out.empty()) cfg.out_dir = args.out;
    const auto stats = run_monte_carlo(cfg);
    const auto rep = summarize(stats);
    std::cout << rep.pretty;
    write_outputs(cfg, stats);
    if (!cfg.out_dir.empty()) {
        std::cout << "outputs written to " << cfg.out_dir << '\n';
    }
    return 0;
}

int run_eval_risk(const std::string& risk_path, const std::string& pmf_text,
                  const std::string& z_text) {
    const auto spec = RiskSpec::from_json(read_json_file(risk_path));
    const Pmf pmf(parse_csv_vector(pmf_text));
    const Eigen::VectorXd z = parse_csv_vector(z_text);
    const auto env = make_envelope(spec, pmf);
    std::cout << "family = " << spec.label() << '\n'
              << "vertices = " << env.vertices().size() << '\n'
              << "rho(Z) = " << eval_static(env, z) << '\n';
    return 0;
}

int run_check_stability(const CommonArgs& args, const std::string& x0_text,
                        int horizon_k, const std::string& csv_path) {
    const auto sys = load_system(read_json_file(args.config));
    const auto spec = RiskSpec::from_json(read_json_file(args.risk));
    const auto env = make_envelope(spec, sys.pmf());

    TerminalCertificate cert =
        args.cert.empty()
            ? synthesize_terminal(sys, env)
            : certificate_from_json(read_json_file(args.cert));
    const Eigen::VectorXd x0 = parse_csv_vector(x0_text);

    const auto est = estimate_decay(sys, env, linear_policy(cert.F), x0,
                                    horizon_k);
    std::cout << "k,risk_of_squared_state\n";
    for (std::size_t k = 0; k < est.r.size(); ++k) {
        std::cout << (k + 1) << ',' << est.r[k] << '\n';
    }
    if (est.reached_origin) {
        std::cout << "trajectory reached the origin exactly; stable\n";
    } else {
        std::cout << "lambda_fit = " << est.lambda_fit
                  << "\nc_fit = " << est.c_fit << "\nstable = "
                  << (est.stable() ? "yes" : "no") << '\n';
    }

    const auto rep = check_lyapunov(sys, env, cert.P, linear_policy(cert.F),
                                    1000, args.seed ? args.seed : 1);
    std::cout << "lyapunov b1 = " << rep.b1 << ", b2 = " << rep.b2
              << ", b3 = " << rep.b3 << (rep.valid ? " (valid)" : " (invalid)")
              << '\n';

    if (!csv_path.empty()) {
        std::ostringstream csv;
        csv << "k,risk_of_squared_state\n";
        for (std::size_t k = 0; k < est.r.size(); ++k) {
            csv << (k + 1) << ',' << est.r[k] << '\n';
        }
        write_text_file(csv_path, csv.str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"risk-averse receding-horizon control for uncertain linear "
                 "systems"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string x0_text = "0";
    std::string z_text;
    std::string pmf_text;
    std::string dump_tree;
    std::string csv_path;
    int horizon = 3;
    int horizon_k = 6;

    auto* synth = app.add_subcommand("synth", "synthesize a terminal certificate");
    synth->add_option("--config", args.config, "system JSON")->required();
    synth->add_option("--risk", args.risk, "risk spec JSON")->required();
    synth->add_option("--out", args.out, "certificate output path");
    synth->add_option("--tol", args.tol, "solver tolerance");

    auto* solve_cmd = app.add_subcommand("solve", "solve one receding-horizon step");
    solve_cmd->add_option("--config", args.config, "system JSON")->required();
    solve_cmd->add_option("--risk", args.risk, "risk spec JSON")->required();
    solve_cmd->add_option("--cert", args.cert, "certificate JSON")->required();
    solve_cmd->add_option("--x0", x0_text, "initial state, comma separated")
        ->required();
    solve_cmd->add_option("--horizon", horizon, "lookahead steps");
    solve_cmd->add_option("--tol", args.tol, "solver tolerance");
    solve_cmd->add_option("--dump-tree", dump_tree, "write the tree solution CSV");

    auto* sim = app.add_subcommand("simulate", "closed-loop Monte Carlo sweep");
    sim->add_option("--config", args.config, "experiment JSON")->required();
    auto* seed_opt = sim->add_option("--seed", args.seed, "override master seed");
    sim->add_option("--out", args.out, "output directory");

    auto* eval = app.add_subcommand("eval-risk", "evaluate a static risk value");
    eval->add_option("--risk", args.risk, "risk spec JSON")->required();
    eval->add_option("--pmf", pmf_text, "pmf, comma separated")->required();
    eval->add_option("--z", z_text, "cost vector, comma separated")->required();

    auto* chk = app.add_subcommand("check-stability",
                                   "risk-sensitive decay under the terminal law");
    chk->add_option("--config", args.config, "system JSON")->required();
    chk->add_option("--risk", args.risk, "risk spec JSON")->required();
    chk->add_option("--cert", args.cert, "certificate JSON (synthesized if absent)");
    chk->add_option("--x0", x0_text, "initial state, comma separated")->required();
    chk->add_option("--k", horizon_k, "decay horizon K");
    chk->add_option("--seed", args.seed, "sphere-sampling seed");
    chk->add_option("--csv", csv_path, "write the r_k table as CSV");

    auto* paradox = app.add_subcommand(
        "demo-paradox", "static versus nested risk on the two-stage tree");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return run_synth(args);
        if (solve_cmd->parsed()) return run_solve(args, x0_text, horizon, dump_tree);
        if (sim->parsed()) return run_simulate(args, seed_opt->count() > 0);
        if (eval->parsed()) return run_eval_risk(args.risk, pmf_text, z_text);
        if (chk->parsed()) {
            return run_check_stability(args, x0_text, horizon_k, csv_path);
        }
        if (paradox->parsed()) {
            std::cout << demo_paradox().text;
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const InvalidPmf& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const InvalidRiskParameter& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const SynthesisInfeasible& e) {
        std::cerr << "synthesis infeasible: " << e.what() << '\n';
        return 3;
    } catch (const SolverFailed& e) {
        std::cerr << "solver failure: " << e.what() << '\n';
        return 4;
    } catch (const VerificationFailed& e) {
        std::cerr << "solver failure: " << e.what() << '\n';
        return 4;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
