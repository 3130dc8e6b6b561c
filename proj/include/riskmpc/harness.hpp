#pragma once

/// Closed-loop Monte Carlo experiments and reporting: per-risk-setting
/// simulation sweeps with fully seeded disturbance streams, sample
/// statistics in the reference table's column layout, CSV/JSON emission,
/// and the two-stage risk-inconsistency demonstration.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "riskmpc/mpc.hpp"
#include "riskmpc/riskcore.hpp"
#include "riskmpc/synthesis.hpp"
#include "riskmpc/sysmodel.hpp"

namespace riskmpc {

struct ExperimentConfig {
    nlohmann::json system;        ///< system config (sysmodel schema)
    std::vector<RiskSpec> sweep;  ///< one entry per risk setting
    int horizon = 3;
    Eigen::VectorXd x0;
    int runs = 100;
    int max_steps = 50;
    double stop_norm = 1e-6;
    std::uint64_t seed = 0;
    double solver_tol = 1e-7;
    std::string out_dir;  ///< empty: do not write files

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig from_file(const std::string& path);
    nlohmann::json to_json() const;
    /// FNV-1a hash of the canonical JSON serialization.
    std::uint64_t config_hash() const;
};

struct RunStats {
    RiskSpec spec;
    std::vector<double> costs;  ///< realized cost per run, by run index
    std::vector<int> steps;     ///< steps taken per run
    double mean = 0.0;
    double dispersion = 0.0;  ///< mean of (J_i - mean)^+, the upper semideviation
    double stddev = 0.0;      ///< sample standard deviation (n-1 divisor)
    double mean_solve_seconds = 0.0;  ///< mean wall clock per MPC solve
    int total_solves = 0;
    double certificate_margin = 0.0;
    double synth_seconds = 0.0;
};

/// Simulates `cfg.runs` closed-loop trajectories per sweep entry. Each run
/// draws disturbances from its own generator seeded by (master seed, run
/// index), so results are reproducible and prefix-stable in the run count.
/// Runs execute concurrently; all statistics are computed from the sorted
/// cost vector so aggregation is order-independent.
std::vector<RunStats> run_monte_carlo(const ExperimentConfig& cfg);

/// One simulated trajectory; exposed for tests.
struct SimResult {
    double cost = 0.0;
    int steps = 0;
    double solve_seconds = 0.0;
    int solves = 0;
};
SimResult simulate_run(const UncertainLinearSystem& sys, const MpcPolicy& policy,
                       const Eigen::VectorXd& x0, int max_steps,
                       double stop_norm, std::uint64_t run_seed);

/// Sample statistics of a cost vector: mean, upper semideviation
/// mean((J_i - mean)^+), and standard deviation with the n-1 divisor
/// (zero for a single run). Computed from the sorted vector so the result
/// does not depend on accumulation order.
RunStats compute_stats(const RiskSpec& spec, std::vector<double> costs);

struct Report {
    std::string csv;     ///< aggregate table, one row per sweep entry
    std::string pretty;  ///< aligned text rendering of the same table
};

/// Aggregate table with columns risk_family, param, mean, dispersion, std,
/// mean_iter_seconds.
Report summarize(const std::vector<RunStats>& stats);

/// Writes per-setting run CSVs, the aggregate CSV and a JSON sidecar with
/// the config hash and timings into cfg.out_dir.
void write_outputs(const ExperimentConfig& cfg, const std::vector<RunStats>& stats);

struct ParadoxReport {
    double rho0_static = 0.0;   ///< static root evaluation (48)
    double rho1_up = 0.0;       ///< stage-1 risk in the up state (60)
    double rho1_down = 0.0;     ///< stage-1 risk in the down state (60)
    double nested_value = 0.0;  ///< time-consistent root value (60)
    double w_deterministic = 50.0;
    std::string text;
};

/// Two-stage cost tree on which per-state stage-1 risks (60) exceed a
/// deterministic alternative (50) while the static root evaluation (48)
/// ranks them the other way; the nested evaluation restores consistency.
ParadoxReport demo_paradox();

// certificate (de)serialization used by the CLI
nlohmann::json certificate_to_json(const TerminalCertificate& cert);
TerminalCertificate certificate_from_json(const nlohmann::json& j);

}  // namespace riskmpc
