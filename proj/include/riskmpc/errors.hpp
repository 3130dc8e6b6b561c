#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace riskmpc {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// matlib
struct InvalidMatrix : Error { using Error::Error; };
struct NotPositiveSemidefinite : Error { using Error::Error; };

// riskcore
struct InvalidPmf : Error { using Error::Error; };
struct InvalidRiskParameter : Error { using Error::Error; };
struct EmptyEnvelope : Error { using Error::Error; };
struct InvalidVertex : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };

// sysmodel / harness
struct ConfigError : Error { using Error::Error; };
struct InvalidScenario : Error { using Error::Error; };
struct CapacityExceeded : Error { using Error::Error; };

// conic
struct InvalidProgram : Error { using Error::Error; };

// synthesis / mpc
struct SynthesisInfeasible : Error {
    SynthesisInfeasible(const std::string& msg, Eigen::VectorXd cert)
        : Error(msg), certificate(std::move(cert)) {}
    explicit SynthesisInfeasible(const std::string& msg) : Error(msg) {}
    /// Farkas-type dual certificate of infeasibility (may be empty when the
    /// solver stopped without extracting one).
    Eigen::VectorXd certificate;
};
struct VerificationFailed : Error { using Error::Error; };
struct SolverFailed : Error { using Error::Error; };

// stability
struct InvalidLyapunov : Error { using Error::Error; };

}  // namespace riskmpc
